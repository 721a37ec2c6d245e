#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tokentiming {

// Levenshtein distance over Unicode code points, unit insert/delete/substitute.
std::size_t token_distance(std::string_view a, std::string_view b);

// Sakoe-Chiba half-width; empty means unbounded.
class BandConfig {
 public:
  static BandConfig bounded(std::size_t w);
  static BandConfig unbounded() { return BandConfig(); }
  // "inf", "unbounded" or a positive integer.
  static BandConfig parse(std::string_view text);

  bool is_bounded() const { return w_.has_value(); }
  std::size_t width() const { return *w_; }
  std::optional<std::size_t> width_opt() const { return w_; }
  std::string to_string() const;
  friend bool operator==(const BandConfig&, const BandConfig&) = default;

 private:
  std::optional<std::size_t> w_;
};

using Cost = std::int64_t;
inline constexpr Cost kUnreachable = std::numeric_limits<Cost>::max() / 4;

// Cumulative DTW costs stored row by row, only for the in-band columns.
class CostMatrix {
 public:
  CostMatrix(std::size_t m, std::size_t n, BandConfig band);

  std::size_t rows() const { return m_ + 1; }
  std::size_t cols() const { return n_ + 1; }
  // Returns kUnreachable for the border and off-band cells.
  Cost at(std::size_t i, std::size_t j) const;
  bool in_band(std::size_t i, std::size_t j) const;
  std::size_t evaluated_cells() const { return evaluated_; }

 private:
  friend struct DtwSolver;
  std::size_t lo(std::size_t i) const;
  std::size_t hi(std::size_t i) const;
  Cost& slot(std::size_t i, std::size_t j);

  std::size_t m_, n_, w_;
  std::vector<std::size_t> offset_;  // start of row i in cells_
  std::vector<Cost> cells_;
  std::size_t evaluated_ = 0;
};

// 1-indexed (draft index, proxy index) pairs from (1,1) to (m,n).
struct AlignmentPath {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Cost total_cost = 0;
};

struct DtwResult {
  AlignmentPath path;
  CostMatrix matrix;
};

// Throws InputError on empty input and BandError when w < |m - n|.
// Backtracking breaks ties diagonal, then (i-1,j), then (i,j-1).
DtwResult dtw_with_matrix(std::span<const std::string> x, std::span<const std::string> y, BandConfig band);
AlignmentPath dtw(std::span<const std::string> x, std::span<const std::string> y, BandConfig band);

struct DeltaIdStats {
  std::map<std::size_t, std::size_t> histogram;  // |i - j| -> count
  std::size_t max_delta = 0;
  std::size_t total = 0;
  // (delta, fraction of pairs with |i - j| <= delta), ascending in delta.
  std::vector<std::pair<std::size_t, double>> cdf() const;
  void merge(const DeltaIdStats& other);
};

DeltaIdStats delta_id_stats(const AlignmentPath& path);

}  // namespace tokentiming
