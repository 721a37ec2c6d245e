#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tokentiming/error.hpp"
#include "tokentiming/rational.hpp"
#include "tokentiming/vocab.hpp"

namespace tokentiming {

// Dense next-token distribution indexed by token id.
template <class S>
struct Distribution {
  std::vector<S> probs;

  Distribution() = default;
  explicit Distribution(std::vector<S> p) : probs(std::move(p)) {}
  static Distribution zeros(std::size_t n) { return Distribution(std::vector<S>(n, S(0))); }

  std::size_t size() const { return probs.size(); }
  const S& operator[](TokenId id) const { return probs[id]; }
  S& operator[](TokenId id) { return probs[id]; }
  std::span<const S> view() const { return probs; }
};

inline constexpr double kSimplexTolerance = 1e-12;

// Non-negative entries summing to one (exactly for Rational, within 1e-12 for double).
bool is_simplex(const Distribution<double>& d, double tolerance = kSimplexTolerance);
bool is_simplex(const Distribution<Rational>& d);
template <class S>
void check_simplex(const Distribution<S>& d, const char* what = "distribution") {
  if (!is_simplex(d)) throw InputError(std::string(what) + " is not a valid probability distribution");
}

Distribution<double> to_double(const Distribution<Rational>& d);

// Seeded uniform draws on [0,1). Same seed and call sequence, same draws, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}
  double uniform() {
    ++draws_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }
  // Independent stream for parallel run `index`.
  Rng split(std::uint64_t index) const { return Rng(seed_ ^ index); }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

// Inverse-CDF over ascending ids; the result always has positive probability.
TokenId sample_at(const Distribution<double>& d, double r);
TokenId sample(const Distribution<double>& d, Rng& rng);

// Every random decision of a decoding strategy goes through a chooser, so the same
// code runs under seeded sampling or exhaustive branch enumeration.
template <class S>
class Chooser {
 public:
  virtual ~Chooser() = default;
  virtual TokenId pick(const Distribution<S>& d) = 0;
  // True with probability `prob`. Writes the uniform draw to *r when there is one, NaN otherwise.
  virtual bool accept(const S& prob, double* r) = 0;
};

class RngChooser final : public Chooser<double> {
 public:
  explicit RngChooser(Rng& rng) : rng_(&rng) {}
  TokenId pick(const Distribution<double>& d) override { return sample(d, *rng_); }
  bool accept(const double& prob, double* r) override {
    double u = rng_->uniform();
    if (r != nullptr) *r = u;
    return u < prob;
  }

 private:
  Rng* rng_;
};

// Temperature / top-k / top-p applied before sampling. Defaults are the identity.
struct SamplingParams {
  double temperature = 1.0;
  std::size_t top_k = 0;
  double top_p = 1.0;
  bool active() const { return temperature != 1.0 || top_k != 0 || top_p < 1.0; }
};

Distribution<double> apply_sampling(Distribution<double> d, const SamplingParams& params);
// Exact mode has no temperature: throws InputError if params are active.
Distribution<Rational> apply_sampling(Distribution<Rational> d, const SamplingParams& params);

enum class ModelKind { ngram, uniform, table };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

class TokenModel {
 public:
  using Context = std::vector<TokenId>;

  static TokenModel uniform(std::shared_ptr<const Tokenizer> tokenizer);
  // Add-k smoothed n-gram trained on the corpus as tokenized by `tokenizer`,
  // each line followed by EOS when the vocabulary has one.
  static TokenModel ngram(std::shared_ptr<const Tokenizer> tokenizer, int order, double smoothing,
                          std::span<const std::string> corpus);
  static TokenModel ngram_from_counts(std::shared_ptr<const Tokenizer> tokenizer, int order, double smoothing,
                                      const std::map<Context, std::map<TokenId, std::uint32_t>>& counts);
  // Explicit conditional rows keyed by the trailing (order-1) tokens; unseen contexts are uniform.
  static TokenModel table(std::shared_ptr<const Tokenizer> tokenizer, int order,
                          std::map<Context, std::vector<Rational>> rows);

  ModelKind kind() const { return kind_; }
  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  std::shared_ptr<const Tokenizer> tokenizer_ptr() const { return tokenizer_; }
  const Vocabulary& vocabulary() const { return tokenizer_->vocabulary(); }
  std::size_t vocab_size() const { return vocabulary().size(); }

  template <class S>
  Distribution<S> next_distribution(std::span<const TokenId> prefix) const;
  Distribution<double> next(std::span<const TokenId> prefix) const { return next_distribution<double>(prefix); }

  // Sparse non-zero counts (ngram) for serialization.
  std::map<Context, std::map<TokenId, std::uint32_t>> sparse_counts() const;
  const std::map<Context, std::vector<Rational>>& table_rows() const { return rows_; }

 private:
  struct CountRow {
    std::vector<std::uint32_t> counts;
    std::uint64_t total = 0;
  };

  TokenModel() = default;
  std::span<const TokenId> context_of(std::span<const TokenId> prefix) const;
  void check_prefix(std::span<const TokenId> prefix) const;

  ModelKind kind_ = ModelKind::uniform;
  int order_ = 1;
  double smoothing_ = 0.0;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::map<Context, CountRow> counts_;
  std::map<Context, std::vector<Rational>> rows_;
};

extern template Distribution<double> TokenModel::next_distribution<double>(std::span<const TokenId>) const;
extern template Distribution<Rational> TokenModel::next_distribution<Rational>(std::span<const TokenId>) const;

template <class S>
struct DraftResult {
  std::vector<TokenId> ids;
  std::vector<S> probs;                    // probability of each sampled token
  std::vector<Distribution<S>> dists;      // distribution it was sampled from
};

// Autoregressively samples up to k tokens, stopping after EOS.
template <class S>
DraftResult<S> generate_draft(const TokenModel& m, std::span<const TokenId> prefix, std::size_t k, Chooser<S>& chooser,
                              const SamplingParams& params = {}) {
  DraftResult<S> out;
  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  const auto eos = m.vocabulary().eos();
  for (std::size_t i = 0; i < k; ++i) {
    Distribution<S> d = apply_sampling(m.next_distribution<S>(ctx), params);
    TokenId t = chooser.pick(d);
    out.ids.push_back(t);
    out.probs.push_back(d[t]);
    out.dists.push_back(std::move(d));
    ctx.push_back(t);
    if (eos && t == *eos) break;
  }
  return out;
}

inline DraftResult<double> generate_draft(const TokenModel& m, std::span<const TokenId> prefix, std::size_t k,
                                          Rng& rng, const SamplingParams& params = {}) {
  if (k == 0) throw InputError("generate_draft: k must be >= 1");
  RngChooser chooser(rng);
  return generate_draft<double>(m, prefix, k, chooser, params);
}

// ---- model files ------------------------------------------------------------------

// `vocab_path`/`merges_path` are written into the header relative to the model file.
void save_model(const TokenModel& model, const std::string& model_path, const std::string& vocab_path,
                const std::string& merges_path);
TokenModel load_model(const std::string& model_path);

}  // namespace tokentiming
