#include "kernels_internal.hpp"

#include <algorithm>

namespace tokentiming::kernels::scalar {

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double residual(const double* q, const double* p, double* out, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(0.0, q[i] - p[i]);
    s += out[i];
  }
  return s;
}

double overlap(const double* p, const double* q, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::min(p[i], q[i]);
  return s;
}

void scale(double* x, std::size_t n, double factor) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= factor;
}

void fill(double* x, std::size_t n, double value) { std::fill(x, x + n, value); }

void smooth(const std::uint32_t* counts, std::size_t n, double k, double inv_total, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (static_cast<double>(counts[i]) + k) * inv_total;
}

}  // namespace tokentiming::kernels::scalar
