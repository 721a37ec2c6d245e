#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tokentiming/align.hpp"
#include "tokentiming/lm.hpp"
#include "tokentiming/xfer.hpp"

namespace tokentiming {

enum class Strategy { ar, sd, tli, tokentiming };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

// What the verifier divides by at each proxy position.
//   mapped   the scalar carried over the alignment path, widened to a full distribution
//   induced  the exact conditional law of the proxy token under the whole drafting
//            pipeline, found by enumerating draft sequences (small vocabularies only)
enum class ProposalMode { mapped, induced };

// Reading of f in the candidate-length policy: longest prefix with p >= alpha, or count of all such tokens.
enum class CandidateRule { prefix, count };

// `target_resample` is a deliberately wrong variant: it skips the residual and
// redraws from q after a rejection. It exists to give the oracle something to catch.
enum class CorrectionRule { residual, target_resample };

std::string to_string(ProposalMode m);
ProposalMode parse_proposal_mode(const std::string& s);
std::string to_string(CandidateRule r);
CandidateRule parse_candidate_rule(const std::string& s);
std::string to_string(CorrectionRule r);
CorrectionRule parse_correction_rule(const std::string& s);

struct GenConfig {
  std::size_t k = 4;
  std::size_t cfg_max = 1024;  // absolute sequence length limit, prompt included
  std::size_t cfg_min = 0;
  double alpha = 0.0;
  BandConfig band = BandConfig::bounded(8);
  MappingRule mapping_rule = MappingRule::product_split;
  MassPlacement placement = MassPlacement::uniform;
  ProposalMode proposal = ProposalMode::mapped;
  CandidateRule candidate_rule = CandidateRule::prefix;
  CorrectionRule correction = CorrectionRule::residual;
  std::size_t max_total_tokens = 64;  // generated tokens, prompt excluded
  std::uint64_t seed = 0;
  SamplingParams draft_sampling;
  SamplingParams target_sampling;
  // Draft sequences the induced proposal may enumerate per iteration.
  std::size_t induced_budget = 100000;

  void validate() const;
};

struct CandidateLength {
  std::size_t max_new = 0;
  std::size_t min_new = 0;
  std::size_t f = 0;
  std::size_t length = 0;
};

template <class S>
CandidateLength candidate_length_detail(std::span<const S> p_d, std::size_t prefix_len, std::size_t l_cur,
                                        const GenConfig& cfg) {
  if (l_cur >= cfg.cfg_max) throw InputError("candidate_length: current length must be below cfg_max");
  CandidateLength out;
  out.max_new = std::min(prefix_len, cfg.cfg_max - l_cur - 1);
  const long long room_min = static_cast<long long>(cfg.cfg_min) - static_cast<long long>(l_cur);
  out.min_new = static_cast<std::size_t>(std::max(0LL, std::min(static_cast<long long>(out.max_new), room_min)));
  const S alpha = from_double<S>(cfg.alpha);
  for (const S& p : p_d) {
    if (p >= alpha) {
      ++out.f;
    } else if (cfg.candidate_rule == CandidateRule::prefix) {
      break;
    }
  }
  if (out.f > out.max_new) {
    out.length = out.max_new;
  } else if (out.f < out.min_new) {
    out.length = out.min_new;
  } else {
    out.length = out.f;
  }
  return out;
}

inline std::size_t candidate_length(std::span<const double> p_d, std::size_t prefix_len, std::size_t l_cur,
                                    const GenConfig& cfg) {
  return candidate_length_detail<double>(p_d, prefix_len, l_cur, cfg).length;
}

template <class S>
struct VerifyOutcome {
  bool accepted = false;
  TokenId token = 0;  // the proposed id if accepted, else the correction
  S accept_prob{};
  double r = 0.0;
  bool residual_empty = false;
};

// Accept with probability min(1, q/p) at the proposed id; otherwise draw the
// correction from normalize(max(0, q - p)), or from q when that is identically zero.
template <class S>
VerifyOutcome<S> verify_position(const ProposalDistribution<S>& p, const Distribution<S>& q, Chooser<S>& chooser,
                                 CorrectionRule rule = CorrectionRule::residual);

inline VerifyOutcome<double> verify_position(const ProposalDistribution<double>& p, const Distribution<double>& q,
                                             Rng& rng) {
  RngChooser chooser(rng);
  return verify_position<double>(p, q, chooser);
}

// normalize(max(0, q - p)); nullopt when the residual has no mass.
template <class S>
std::optional<Distribution<S>> residual_distribution(const Distribution<S>& q, const Distribution<S>& p);

struct PositionCheck {
  TokenId proposed = 0;
  double p = 0.0;
  double q = 0.0;
  double r = 0.0;
  bool accepted = false;
};

struct IterationTrace {
  std::size_t drafted = 0;     // draft tokens sampled this iteration
  std::size_t candidates = 0;  // kept by the candidate-length policy
  std::size_t proxy_len = 0;   // positions sent to verification
  std::size_t accepted = 0;
  std::optional<TokenId> bonus_token;  // correction or bonus; absent only after an accepted EOS
  bool corrected = false;
  bool band_infeasible = false;
  bool ar_fallback = false;
  std::size_t empty_retries = 0;
  std::vector<TokenId> draft_ids;
  std::vector<TokenId> proxy_ids;
  std::vector<TokenId> aligned_ids;  // full re-encoded proxy that the path (if any) aligns against
  std::vector<TokenId> emitted;
  std::optional<AlignmentPath> path;
  std::vector<PositionCheck> checks;
};

enum class Termination { eos, cap };

std::string to_string(Termination t);

struct GenerationResult {
  std::vector<TokenId> ids;  // prompt followed by generated tokens, target vocabulary
  std::size_t prompt_len = 0;
  std::vector<IterationTrace> traces;
  Termination terminated_by = Termination::cap;

  std::span<const TokenId> generated() const {
    return std::span<const TokenId>(ids).subspan(prompt_len);
  }
};

template <class S>
using ProxyLaw = std::map<std::vector<TokenId>, S>;

// Runs one strategy over a fixed (draft, target) pair. Holds a small cache for
// the induced proposal, so an instance must not be shared across threads.
class Decoder {
 public:
  // `draft` may be null for Strategy::ar. Throws InterfaceError for sd across
  // different vocabularies and ProjectionError for tli with no shared surface.
  Decoder(Strategy strategy, const TokenModel& target, const TokenModel* draft, GenConfig cfg);

  Strategy strategy() const { return strategy_; }
  const GenConfig& config() const { return cfg_; }
  const TokenModel& target() const { return *target_; }
  const TokenModel* draft() const { return draft_; }

  std::vector<TokenId> encode_prompt(std::string_view text) const { return target_->tokenizer().encode(text); }

  // Advances x by one iteration. `generated` counts tokens emitted so far.
  template <class S>
  IterationTrace step(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const;

  template <class S>
  GenerationResult run(std::vector<TokenId> prompt, Chooser<S>& chooser) const;

  GenerationResult generate(std::string_view prompt, Rng& rng) const;
  GenerationResult generate_ids(std::vector<TokenId> prompt, Rng& rng) const;

  // True when a sequence in this state gets no further iterations.
  bool finished(const std::vector<TokenId>& x, std::size_t generated) const;

  // Law of the verified proxy sequence for one TokenTiming iteration from state x.
  template <class S>
  ProxyLaw<S> proxy_law(const std::vector<TokenId>& x, std::size_t generated) const;

 private:
  template <class S>
  struct Proposal;

  std::size_t room(const std::vector<TokenId>& x, std::size_t generated) const;
  template <class S>
  Distribution<S> target_dist(const std::vector<TokenId>& x) const;
  template <class S>
  Proposal<S> build_proposal(const DraftResult<S>& draft, std::size_t l_cur, std::size_t limit) const;
  template <class S>
  void verify_chain(std::vector<TokenId>& x, const std::vector<TokenId>& proxy,
                    const std::function<ProposalDistribution<S>(std::size_t, const Distribution<S>&)>& proposal_at,
                    Chooser<S>& chooser, IterationTrace& trace) const;
  template <class S>
  const ProxyLaw<S>& cached_law(const std::vector<TokenId>& x, std::size_t generated) const;

  template <class S>
  IterationTrace step_sd(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const;
  template <class S>
  IterationTrace step_tli(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const;
  template <class S>
  IterationTrace step_tokentiming(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const;

  Strategy strategy_;
  const TokenModel* target_;
  const TokenModel* draft_;
  GenConfig cfg_;
  std::optional<VocabIntersection> inter_;
  mutable std::map<std::pair<std::vector<TokenId>, std::size_t>, ProxyLaw<double>> law_cache_d_;
  mutable std::map<std::pair<std::vector<TokenId>, std::size_t>, ProxyLaw<Rational>> law_cache_r_;
};

// Conditional law of position j given the proxy prefix, over a target vocabulary of size v.
template <class S>
Distribution<S> conditional_proposal(const ProxyLaw<S>& law, std::span<const TokenId> prefix, std::size_t v);

// Convenience wrappers, one per strategy.
GenerationResult autoregress(const TokenModel& target, std::vector<TokenId> prefix, const GenConfig& cfg, Rng& rng);
GenerationResult standard_sd_generate(const TokenModel& draft, const TokenModel& target, std::vector<TokenId> prefix,
                                      const GenConfig& cfg, Rng& rng);
GenerationResult tli_generate(const TokenModel& draft, const TokenModel& target, std::string_view prefix_text,
                              const GenConfig& cfg, Rng& rng);
GenerationResult tokentiming_generate(const TokenModel& draft, const TokenModel& target, std::string_view prefix_text,
                                      const GenConfig& cfg, Rng& rng);

}  // namespace tokentiming
