#include "tokentiming/verify.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace tokentiming {

// ---- BranchChooser ------------------------------------------------------------------------

std::uint32_t BranchChooser::take(std::vector<std::pair<std::uint32_t, Rational>> options) {
  if (pos_ < trail_.size()) {
    const Decision& d = trail_[pos_++];
    return d.options[d.index].first;
  }
  if (options.empty()) throw InputError("branch enumeration reached a decision with no positive option");
  trail_.push_back(Decision{std::move(options), 0});
  ++pos_;
  return trail_.back().options.front().first;
}

TokenId BranchChooser::pick(const Distribution<Rational>& d) {
  std::vector<std::pair<std::uint32_t, Rational>> options;
  if (pos_ >= trail_.size()) {
    for (std::size_t t = 0; t < d.size(); ++t) {
      if (sgn(d.probs[t]) > 0) options.emplace_back(static_cast<std::uint32_t>(t), d.probs[t]);
    }
  }
  return take(std::move(options));
}

bool BranchChooser::accept(const Rational& prob, double* r) {
  if (r != nullptr) *r = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::uint32_t, Rational>> options;
  if (pos_ >= trail_.size()) {
    if (sgn(prob) > 0) options.emplace_back(1u, prob);
    Rational rest = 1 - prob;
    if (sgn(rest) > 0) options.emplace_back(0u, rest);
  }
  return take(std::move(options)) == 1u;
}

bool BranchChooser::advance() {
  trail_.resize(pos_);
  while (!trail_.empty()) {
    Decision& d = trail_.back();
    if (d.index + 1 < d.options.size()) {
      ++d.index;
      return true;
    }
    trail_.pop_back();
  }
  return false;
}

Rational BranchChooser::weight() const {
  Rational w = 1;
  for (const auto& d : trail_) w *= d.options[d.index].second;
  return w;
}

// ---- OutcomeDistribution ----------------------------------------------------------------

Rational OutcomeDistribution::total() const {
  Rational t = 0;
  for (const auto& [seq, p] : probs) t += p;
  return t;
}

Rational OutcomeDistribution::operator[](const Sequence& s) const {
  auto it = probs.find(s);
  return it == probs.end() ? Rational(0) : it->second;
}

std::map<Sequence, double> OutcomeDistribution::to_double() const {
  std::map<Sequence, double> out;
  for (const auto& [seq, p] : probs) out[seq] = p.get_d();
  return out;
}

// ---- exact enumeration ----------------------------------------------------------------------

namespace {

void check_oracle_size(const TokenModel& m, std::size_t horizon) {
  if (horizon == 0 || horizon > 3) throw InputError("exact enumeration supports horizon 1..3");
  if (m.vocab_size() > 6) throw InputError("exact enumeration supports vocabularies of at most 6 tokens");
}

}  // namespace

OracleResult exact_output_distribution(const Decoder& decoder, const Sequence& prompt, const OracleOptions& options) {
  check_oracle_size(decoder.target(), options.horizon);
  if (decoder.draft() != nullptr) check_oracle_size(*decoder.draft(), options.horizon);
  const std::size_t horizon = options.horizon;
  OracleResult result;
  std::map<Sequence, std::map<Sequence, Rational>> memo;

  std::function<const std::map<Sequence, Rational>&(const Sequence&, std::size_t)> rec =
      [&](const Sequence& x, std::size_t gen) -> const std::map<Sequence, Rational>& {
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    std::map<Sequence, Rational> out;
    if (gen >= horizon || decoder.finished(x, gen)) {
      out[{}] = 1;
      return memo.emplace(x, std::move(out)).first->second;
    }
    ++result.states;
    const std::size_t budget = options.branch_budget > result.branches ? options.branch_budget - result.branches : 0;
    result.branches += for_each_branch(
        [&](BranchChooser& chooser) {
          Sequence next = x;
          IterationTrace tr = decoder.step<Rational>(next, gen, chooser);
          const Rational w = chooser.weight();
          Sequence emitted = tr.emitted;
          if (emitted.size() > horizon - gen) emitted.resize(horizon - gen);
          if (gen == 0 && tr.accepted >= 1 && !emitted.empty()) result.first_accept_mass[emitted.front()] += w;
          if (emitted.size() == horizon - gen) {
            out[emitted] += w;
            return;
          }
          for (const auto& [suffix, p] : rec(next, gen + tr.emitted.size())) {
            Sequence key = emitted;
            key.insert(key.end(), suffix.begin(), suffix.end());
            out[key] += w * p;
          }
        },
        budget);
    return memo.emplace(x, std::move(out)).first->second;
  };

  result.dist.probs = rec(prompt, 0);
  return result;
}

OracleResult exact_output_distribution(Strategy strategy, const TokenModel* draft, const TokenModel& target,
                                       const Sequence& prompt, std::size_t horizon, GenConfig cfg) {
  // The decoder keeps its own cap so the last iterations still speculate; outcomes are cut at the horizon.
  cfg.max_total_tokens = std::max(cfg.max_total_tokens, horizon);
  Decoder decoder(strategy, target, draft, cfg);
  OracleOptions options;
  options.horizon = horizon;
  return exact_output_distribution(decoder, prompt, options);
}

OutcomeDistribution target_ar_distribution(const TokenModel& target, const Sequence& prompt, std::size_t horizon) {
  check_oracle_size(target, horizon);
  const auto eos = target.vocabulary().eos();
  OutcomeDistribution out;
  Sequence x = prompt;
  Sequence gen;
  std::function<void(const Rational&)> walk = [&](const Rational& w) {
    if (gen.size() == horizon || (!gen.empty() && eos && gen.back() == *eos)) {
      out.probs[gen] += w;
      return;
    }
    const Distribution<Rational> q = target.next_distribution<Rational>(x);
    for (TokenId t = 0; t < q.size(); ++t) {
      if (sgn(q[t]) <= 0) continue;
      x.push_back(t);
      gen.push_back(t);
      walk(w * q[t]);
      gen.pop_back();
      x.pop_back();
    }
  };
  walk(Rational(1));
  return out;
}

// ---- brute-force alignment -------------------------------------------------------------------

Cost brute_force_dtw(std::span<const std::string> x, std::span<const std::string> y) {
  const std::size_t m = x.size(), n = y.size();
  if (m == 0 || n == 0) throw InputError("brute_force_dtw: sequences must be non-empty");
  if (m * n > 64) throw BudgetError("brute_force_dtw: m*n must be <= 64");
  std::vector<std::vector<Cost>> d(m, std::vector<Cost>(n));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) d[i][j] = static_cast<Cost>(token_distance(x[i], y[j]));
  }
  Cost best = kUnreachable;
  std::function<void(std::size_t, std::size_t, Cost)> walk = [&](std::size_t i, std::size_t j, Cost acc) {
    if (i == m - 1 && j == n - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < m && j + 1 < n) walk(i + 1, j + 1, acc + d[i + 1][j + 1]);
    if (i + 1 < m) walk(i + 1, j, acc + d[i + 1][j]);
    if (j + 1 < n) walk(i, j + 1, acc + d[i][j + 1]);
  };
  walk(0, 0, d[0][0]);
  return best;
}

// ---- chi-square -------------------------------------------------------------------------------

ChiSquare chi_square_match(const std::vector<std::uint64_t>& observed, const std::vector<double>& expected,
                           std::uint64_t outside) {
  if (observed.size() != expected.size()) throw InputError("chi_square_match: size mismatch");
  std::uint64_t n = outside;
  double mass = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    n += observed[i];
    if (expected[i] < 0.0) throw InputError("chi_square_match: negative expected probability");
    mass += expected[i];
    if (expected[i] == 0.0) outside += observed[i];
  }
  if (n == 0 || !(mass > 0.0)) throw InputError("chi_square_match: no samples");
  ChiSquare out;
  if (outside > 0) {
    out.statistic = std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    return out;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return expected[a] < expected[b]; });
  const double scale = static_cast<double>(n) / mass;
  std::vector<std::pair<double, double>> cells;  // (expected count, observed count)
  double e_acc = 0.0, o_acc = 0.0;
  for (std::size_t i : order) {
    e_acc += expected[i] * scale;
    o_acc += static_cast<double>(observed[i]);
    if (e_acc >= 5.0) {
      cells.emplace_back(e_acc, o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (cells.empty()) throw InputError("chi_square_match: fewer than 5 expected counts even after pooling");
  if (e_acc > 0.0 || o_acc > 0.0) {
    cells.back().first += e_acc;
    cells.back().second += o_acc;
  }
  out.cells = cells.size();
  for (const auto& [e, o] : cells) out.statistic += (o - e) * (o - e) / e;
  if (cells.size() < 2) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.dof = cells.size() - 1;
  boost::math::chi_squared dist(static_cast<double>(out.dof));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

}  // namespace tokentiming
