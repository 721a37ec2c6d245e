#pragma once

#include <map>
#include <string>
#include <vector>

#include "tokentiming/engine.hpp"

namespace tokentiming {

// Replays a recorded list of decisions and opens new ones depth-first, so that
// running a randomized procedure once per branch visits every outcome exactly
// once. Every pick/accept becomes a branch weighted by its exact probability.
class BranchChooser final : public Chooser<Rational> {
 public:
  TokenId pick(const Distribution<Rational>& d) override;
  bool accept(const Rational& prob, double* r) override;

  // Call before each replay.
  void rewind() { pos_ = 0; }
  // Moves to the next unexplored branch; false once all have been visited.
  bool advance();
  Rational weight() const;
  std::size_t depth() const { return trail_.size(); }

 private:
  struct Decision {
    std::vector<std::pair<std::uint32_t, Rational>> options;
    std::size_t index = 0;
  };
  std::uint32_t take(std::vector<std::pair<std::uint32_t, Rational>> options);

  std::vector<Decision> trail_;
  std::size_t pos_ = 0;
};

// Calls fn(chooser) once per branch of a procedure driven by the chooser.
// Throws BudgetError after `budget` branches.
template <class Fn>
std::size_t for_each_branch(Fn&& fn, std::size_t budget) {
  BranchChooser chooser;
  std::size_t n = 0;
  do {
    if (++n > budget) throw BudgetError("branch enumeration exceeded " + std::to_string(budget) + " branches");
    chooser.rewind();
    fn(chooser);
  } while (chooser.advance());
  return n;
}

using Sequence = std::vector<TokenId>;

struct OutcomeDistribution {
  std::map<Sequence, Rational> probs;

  Rational total() const;
  Rational operator[](const Sequence& s) const;
  std::map<Sequence, double> to_double() const;
  friend bool operator==(const OutcomeDistribution& a, const OutcomeDistribution& b) { return a.probs == b.probs; }
};

struct OracleOptions {
  std::size_t horizon = 2;
  std::size_t branch_budget = 2'000'000;
};

struct OracleResult {
  OutcomeDistribution dist;
  // Mass of first-iteration branches whose first emitted token came through an
  // accepted proposal, keyed by that token.
  std::map<TokenId, Rational> first_accept_mass;
  std::size_t branches = 0;
  std::size_t states = 0;
};

// Exact law of the first `horizon` generated tokens (fewer if EOS comes first).
// Walks the decoder once per branch of every reachable state, memoised on the
// target prefix, since an iteration depends on nothing else.
OracleResult exact_output_distribution(const Decoder& decoder, const Sequence& prompt, const OracleOptions& options);

OracleResult exact_output_distribution(Strategy strategy, const TokenModel* draft, const TokenModel& target,
                                       const Sequence& prompt, std::size_t horizon, GenConfig cfg = {});

// Independent reference: the target model's own autoregressive law, no decoder involved.
OutcomeDistribution target_ar_distribution(const TokenModel& target, const Sequence& prompt, std::size_t horizon);

// Minimum over every monotone path from (1,1) to (m,n). Requires m*n <= 64.
Cost brute_force_dtw(std::span<const std::string> x, std::span<const std::string> y);

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t cells = 0;  // after pooling
};

// Goodness of fit of observed counts against expected probabilities. Cells are
// pooled (smallest expected first) until each holds >= 5 expected counts.
// Observations outside the support of `expected` give p = 0.
ChiSquare chi_square_match(const std::vector<std::uint64_t>& observed, const std::vector<double>& expected,
                           std::uint64_t outside = 0);

template <class Key>
ChiSquare chi_square_match(const std::map<Key, std::uint64_t>& observed, const std::map<Key, double>& expected) {
  std::vector<std::uint64_t> obs;
  std::vector<double> exp;
  std::uint64_t outside = 0;
  for (const auto& [key, p] : expected) {
    auto it = observed.find(key);
    obs.push_back(it == observed.end() ? 0 : it->second);
    exp.push_back(p);
  }
  for (const auto& [key, c] : observed) {
    if (!expected.count(key)) outside += c;
  }
  return chi_square_match(obs, exp, outside);
}

// ---- toy grid ---------------------------------------------------------------------------------

// A (draft, target) pair small enough for exact enumeration: EOS plus a two or
// three letter alphabet, with different merges on each side, and bigram tables
// of small-denominator rationals. `same_vocab_draft` is a second draft table
// over the target tokenizer, for the strategies that need a shared vocabulary.
struct ToyPair {
  std::string name;
  std::shared_ptr<const Tokenizer> draft_tokenizer;
  std::shared_ptr<const Tokenizer> target_tokenizer;
  TokenModel draft;
  TokenModel target;
  TokenModel same_vocab_draft;
  std::size_t k = 1;
};

std::vector<ToyPair> toy_grid(std::size_t count = 12, std::uint64_t seed = 2024);

struct LosslessnessCheck {
  std::string strategy;
  std::string pair;
  std::size_t horizon = 0;
  bool equal = false;
  double max_abs_error = 0.0;  // over all outcome sequences
  std::size_t outcomes = 0;
  std::size_t branches = 0;
};

// Compares the decoder's exact output law with the target's autoregressive law.
// sd uses `same_vocab_draft`; tli and tokentiming use `draft`. cfg.k is taken from the pair.
LosslessnessCheck check_losslessness(const ToyPair& pair, Strategy strategy, std::size_t horizon, GenConfig cfg);

// Random bigram table over `tok`; every row is a distribution with denominator <= 4 * |V|.
TokenModel random_table_model(std::shared_ptr<const Tokenizer> tok, Rng& rng);

}  // namespace tokentiming
