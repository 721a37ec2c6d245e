#include "tokentiming/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokentiming/kernels.hpp"

namespace tokentiming {

bool is_simplex(const Distribution<double>& d, double tolerance) {
  if (d.size() == 0) return false;
  for (double p : d.probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
  }
  return std::abs(kernels::sum(d.probs) - 1.0) <= tolerance;
}

bool is_simplex(const Distribution<Rational>& d) {
  if (d.size() == 0) return false;
  Rational total = 0;
  for (const Rational& p : d.probs) {
    if (sgn(p) < 0) return false;
    total += p;
  }
  return total == 1;
}

Distribution<double> to_double(const Distribution<Rational>& d) {
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d.probs[i].get_d();
  return Distribution<double>(std::move(out));
}

TokenId sample_at(const Distribution<double>& d, double r) {
  double cum = 0.0;
  std::optional<TokenId> last_positive;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d.probs[i] > 0.0)) continue;
    last_positive = static_cast<TokenId>(i);
    cum += d.probs[i];
    if (r < cum) return static_cast<TokenId>(i);
  }
  if (!last_positive) throw InputError("sample: distribution has no positive mass");
  // Rounding left the cumulative sum a hair under r.
  return *last_positive;
}

TokenId sample(const Distribution<double>& d, Rng& rng) { return sample_at(d, rng.uniform()); }

Distribution<double> apply_sampling(Distribution<double> d, const SamplingParams& params) {
  if (!params.active()) return d;
  if (params.temperature <= 0.0) throw InputError("temperature must be positive");
  if (params.top_p <= 0.0 || params.top_p > 1.0) throw InputError("top_p must be in (0, 1]");
  auto renormalize = [&] {
    double s = kernels::sum(d.probs);
    if (!(s > 0.0)) throw InputError("sampling transform removed all probability mass");
    kernels::scale(d.probs, 1.0 / s);
  };
  if (params.temperature != 1.0) {
    const double inv_t = 1.0 / params.temperature;
    for (double& p : d.probs) p = p > 0.0 ? std::pow(p, inv_t) : 0.0;
    renormalize();
  }
  std::vector<TokenId> order(d.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return d.probs[a] > d.probs[b]; });
  if (params.top_k != 0 && params.top_k < d.size()) {
    for (std::size_t i = params.top_k; i < order.size(); ++i) d.probs[order[i]] = 0.0;
    renormalize();
  }
  if (params.top_p < 1.0) {
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < order.size() && cum < params.top_p) cum += d.probs[order[keep++]];
    for (std::size_t i = keep; i < order.size(); ++i) d.probs[order[i]] = 0.0;
    renormalize();
  }
  return d;
}

Distribution<Rational> apply_sampling(Distribution<Rational> d, const SamplingParams& params) {
  if (params.active()) throw InputError("sampling transforms are not available in exact-rational mode");
  return d;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ngram: return "ngram";
    case ModelKind::uniform: return "uniform";
    case ModelKind::table: return "table";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "ngram") return ModelKind::ngram;
  if (s == "uniform") return ModelKind::uniform;
  if (s == "table") return ModelKind::table;
  throw InputError("unknown model kind: " + s);
}

// ---- TokenModel --------------------------------------------------------------------

TokenModel TokenModel::uniform(std::shared_ptr<const Tokenizer> tokenizer) {
  if (!tokenizer || tokenizer->vocabulary().size() == 0) throw InputError("uniform model needs a vocabulary");
  TokenModel m;
  m.kind_ = ModelKind::uniform;
  m.tokenizer_ = std::move(tokenizer);
  return m;
}

TokenModel TokenModel::ngram(std::shared_ptr<const Tokenizer> tokenizer, int order, double smoothing,
                             std::span<const std::string> corpus) {
  if (!tokenizer) throw InputError("ngram model needs a tokenizer");
  if (order < 1 || order > 4) throw InputError("ngram order must be in 1..4");
  const auto eos = tokenizer->vocabulary().eos();
  std::map<Context, std::map<TokenId, std::uint32_t>> counts;
  const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
  for (const auto& line : corpus) {
    std::vector<TokenId> ids = tokenizer->encode(line);
    if (eos) ids.push_back(*eos);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      std::size_t len = std::min(ctx_len, t);
      Context ctx(ids.begin() + static_cast<std::ptrdiff_t>(t - len), ids.begin() + static_cast<std::ptrdiff_t>(t));
      ++counts[ctx][ids[t]];
    }
  }
  return ngram_from_counts(std::move(tokenizer), order, smoothing, counts);
}

TokenModel TokenModel::ngram_from_counts(std::shared_ptr<const Tokenizer> tokenizer, int order, double smoothing,
                                         const std::map<Context, std::map<TokenId, std::uint32_t>>& counts) {
  if (!tokenizer) throw InputError("ngram model needs a tokenizer");
  if (order < 1 || order > 4) throw InputError("ngram order must be in 1..4");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw InputError("smoothing must be >= 0");
  TokenModel m;
  m.kind_ = ModelKind::ngram;
  m.order_ = order;
  m.smoothing_ = smoothing;
  m.tokenizer_ = std::move(tokenizer);
  const std::size_t v = m.vocab_size();
  for (const auto& [ctx, row] : counts) {
    if (ctx.size() >= static_cast<std::size_t>(order)) throw InputError("ngram context longer than order-1");
    for (TokenId c : ctx) {
      if (c >= v) throw InputError("ngram context id out of range");
    }
    CountRow dense;
    dense.counts.assign(v, 0);
    for (const auto& [tok, c] : row) {
      if (tok >= v) throw InputError("ngram token id out of range");
      if (c > 0x7FFFFFFFu) throw InputError("ngram count too large");
      dense.counts[tok] = c;
      dense.total += c;
    }
    m.counts_.emplace(ctx, std::move(dense));
  }
  return m;
}

TokenModel TokenModel::table(std::shared_ptr<const Tokenizer> tokenizer, int order,
                             std::map<Context, std::vector<Rational>> rows) {
  if (!tokenizer) throw InputError("table model needs a tokenizer");
  if (order < 1) throw InputError("table order must be >= 1");
  TokenModel m;
  m.kind_ = ModelKind::table;
  m.order_ = order;
  m.tokenizer_ = std::move(tokenizer);
  const std::size_t v = m.vocab_size();
  for (auto& [ctx, probs] : rows) {
    if (ctx.size() >= static_cast<std::size_t>(order)) throw InputError("table context longer than order-1");
    for (TokenId c : ctx) {
      if (c >= v) throw InputError("table context id out of range");
    }
    if (probs.size() != v) throw InputError("table row size does not match vocabulary");
    for (auto& p : probs) p.canonicalize();
    if (!is_simplex(Distribution<Rational>(probs))) throw InputError("table row is not a distribution");
  }
  m.rows_ = std::move(rows);
  return m;
}

void TokenModel::check_prefix(std::span<const TokenId> prefix) const {
  const std::size_t v = vocab_size();
  for (TokenId t : prefix) {
    if (t >= v) throw InputError("prefix id out of range: " + std::to_string(t));
  }
}

std::span<const TokenId> TokenModel::context_of(std::span<const TokenId> prefix) const {
  std::size_t len = std::min(prefix.size(), static_cast<std::size_t>(std::max(order_ - 1, 0)));
  return prefix.subspan(prefix.size() - len);
}

namespace {

template <class S>
Distribution<S> uniform_dist(std::size_t v) {
  Distribution<S> d = Distribution<S>::zeros(v);
  if constexpr (std::is_same_v<S, double>) {
    kernels::fill(d.probs, 1.0 / static_cast<double>(v));
  } else {
    const S p = from_ratio<S>(1, static_cast<std::int64_t>(v));
    for (auto& x : d.probs) x = p;
  }
  return d;
}

}  // namespace

template <class S>
Distribution<S> TokenModel::next_distribution(std::span<const TokenId> prefix) const {
  check_prefix(prefix);
  const std::size_t v = vocab_size();
  auto ctx = context_of(prefix);
  Context key(ctx.begin(), ctx.end());
  switch (kind_) {
    case ModelKind::uniform: return uniform_dist<S>(v);
    case ModelKind::table: {
      auto it = rows_.find(key);
      if (it == rows_.end()) return uniform_dist<S>(v);
      if constexpr (std::is_same_v<S, double>) {
        std::vector<double> p(v);
        for (std::size_t i = 0; i < v; ++i) p[i] = it->second[i].get_d();
        return Distribution<double>(std::move(p));
      } else {
        return Distribution<S>(it->second);
      }
    }
    case ModelKind::ngram: {
      auto it = counts_.find(key);
      if (it == counts_.end()) return uniform_dist<S>(v);
      const CountRow& row = it->second;
      if (row.total == 0 && smoothing_ == 0.0) return uniform_dist<S>(v);
      Distribution<S> d = Distribution<S>::zeros(v);
      if constexpr (std::is_same_v<S, double>) {
        const double denom = static_cast<double>(row.total) + smoothing_ * static_cast<double>(v);
        kernels::smooth(row.counts, smoothing_, 1.0 / denom, d.probs);
      } else {
        const Rational k = from_double<Rational>(smoothing_);
        const Rational denom = Rational(static_cast<unsigned long>(row.total)) + k * static_cast<unsigned long>(v);
        for (std::size_t i = 0; i < v; ++i) {
          d.probs[i] = (Rational(static_cast<unsigned long>(row.counts[i])) + k) / denom;
          d.probs[i].canonicalize();
        }
      }
      return d;
    }
  }
  return uniform_dist<S>(v);
}

template Distribution<double> TokenModel::next_distribution<double>(std::span<const TokenId>) const;
template Distribution<Rational> TokenModel::next_distribution<Rational>(std::span<const TokenId>) const;

std::map<TokenModel::Context, std::map<TokenId, std::uint32_t>> TokenModel::sparse_counts() const {
  std::map<Context, std::map<TokenId, std::uint32_t>> out;
  for (const auto& [ctx, row] : counts_) {
    auto& dst = out[ctx];
    for (std::size_t i = 0; i < row.counts.size(); ++i) {
      if (row.counts[i] != 0) dst[static_cast<TokenId>(i)] = row.counts[i];
    }
  }
  return out;
}

}  // namespace tokentiming
