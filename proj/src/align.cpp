#include "tokentiming/align.hpp"

#include <algorithm>
#include <charconv>

#include "tokentiming/error.hpp"
#include "tokentiming/vocab.hpp"

namespace tokentiming {

namespace {

std::vector<std::string> code_points(std::string_view s) {
  bool ascii = std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
  if (!ascii) return utf8_chars(s);
  std::vector<std::string> out;
  out.reserve(s.size());
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::size_t token_distance(std::string_view a, std::string_view b) {
  if (a == b) return 0;
  return levenshtein(code_points(a), code_points(b));
}

// ---- BandConfig ----------------------------------------------------------------

BandConfig BandConfig::bounded(std::size_t w) {
  if (w < 1) throw InputError("band width must be >= 1");
  BandConfig b;
  b.w_ = w;
  return b;
}

BandConfig BandConfig::parse(std::string_view text) {
  if (text == "inf" || text == "unbounded" || text == "none") return unbounded();
  std::size_t w = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), w);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError("band must be a positive integer or 'inf': " + std::string(text));
  }
  return bounded(w);
}

std::string BandConfig::to_string() const { return w_ ? std::to_string(*w_) : std::string("inf"); }

// ---- CostMatrix -------------------------------------------------------------------

CostMatrix::CostMatrix(std::size_t m, std::size_t n, BandConfig band)
    : m_(m), n_(n), w_(band.is_bounded() ? band.width() : std::max(m, n)) {
  offset_.assign(m_ + 2, 0);
  for (std::size_t i = 1; i <= m_; ++i) {
    std::size_t width = lo(i) <= hi(i) ? hi(i) - lo(i) + 1 : 0;
    offset_[i + 1] = offset_[i] + width;
  }
  cells_.assign(offset_[m_ + 1], kUnreachable);
}

std::size_t CostMatrix::lo(std::size_t i) const { return i > w_ ? std::max<std::size_t>(1, i - w_) : 1; }
std::size_t CostMatrix::hi(std::size_t i) const { return std::min(n_, i + w_); }

bool CostMatrix::in_band(std::size_t i, std::size_t j) const {
  return i >= 1 && i <= m_ && j >= lo(i) && j <= hi(i);
}

Cost& CostMatrix::slot(std::size_t i, std::size_t j) { return cells_[offset_[i] + (j - lo(i))]; }

Cost CostMatrix::at(std::size_t i, std::size_t j) const {
  if (i == 0 && j == 0) return 0;
  if (!in_band(i, j)) return kUnreachable;
  return cells_[offset_[i] + (j - lo(i))];
}

// ---- DTW --------------------------------------------------------------------------------

struct DtwSolver {
  static void fill(CostMatrix& c, std::span<const std::string> x, std::span<const std::string> y) {
    std::vector<std::vector<std::string>> ys;
    ys.reserve(y.size());
    for (const auto& s : y) ys.push_back(code_points(s));
    for (std::size_t i = 1; i <= c.m_; ++i) {
      const auto xi = code_points(x[i - 1]);
      for (std::size_t j = c.lo(i); j <= c.hi(i); ++j) {
        Cost best = std::min({c.at(i - 1, j), c.at(i, j - 1), c.at(i - 1, j - 1)});
        Cost d = x[i - 1] == y[j - 1] ? 0 : static_cast<Cost>(levenshtein(xi, ys[j - 1]));
        c.slot(i, j) = best >= kUnreachable ? kUnreachable : best + d;
        ++c.evaluated_;
      }
    }
  }
};

DtwResult dtw_with_matrix(std::span<const std::string> x, std::span<const std::string> y, BandConfig band) {
  if (x.empty() || y.empty()) throw InputError("dtw: sequences must be non-empty");
  const std::size_t m = x.size(), n = y.size();
  const std::size_t gap = m > n ? m - n : n - m;
  if (band.is_bounded() && band.width() < gap) {
    throw BandError("dtw: band w=" + std::to_string(band.width()) + " cannot align lengths " + std::to_string(m) +
                    " and " + std::to_string(n) + "; widen the band to at least " + std::to_string(gap));
  }
  CostMatrix c(m, n, band);
  DtwSolver::fill(c, x, y);

  AlignmentPath path;
  path.total_cost = c.at(m, n);
  std::size_t i = m, j = n;
  while (i != 0 || j != 0) {
    path.pairs.emplace_back(i, j);
    Cost diag = (i > 0 && j > 0) ? c.at(i - 1, j - 1) : kUnreachable;
    Cost up = i > 0 ? c.at(i - 1, j) : kUnreachable;
    Cost left = j > 0 ? c.at(i, j - 1) : kUnreachable;
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
    // (0,j) or (i,0) with a non-zero other index is unreachable; the min above never picks it.
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return DtwResult{std::move(path), std::move(c)};
}

AlignmentPath dtw(std::span<const std::string> x, std::span<const std::string> y, BandConfig band) {
  return dtw_with_matrix(x, y, band).path;
}

// ---- delta id ----------------------------------------------------------------------------

DeltaIdStats delta_id_stats(const AlignmentPath& path) {
  DeltaIdStats st;
  for (const auto& [i, j] : path.pairs) {
    std::size_t d = i > j ? i - j : j - i;
    ++st.histogram[d];
    st.max_delta = std::max(st.max_delta, d);
    ++st.total;
  }
  return st;
}

void DeltaIdStats::merge(const DeltaIdStats& other) {
  for (const auto& [d, c] : other.histogram) histogram[d] += c;
  max_delta = std::max(max_delta, other.max_delta);
  total += other.total;
}

std::vector<std::pair<std::size_t, double>> DeltaIdStats::cdf() const {
  std::vector<std::pair<std::size_t, double>> out;
  std::size_t cum = 0;
  for (const auto& [d, c] : histogram) {
    cum += c;
    out.emplace_back(d, total == 0 ? 0.0 : static_cast<double>(cum) / static_cast<double>(total));
  }
  return out;
}

}  // namespace tokentiming
