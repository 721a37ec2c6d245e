#pragma once

#include <cstddef>
#include <cstdint>

namespace tokentiming::kernels {

namespace scalar {
double sum(const double* x, std::size_t n);
double residual(const double* q, const double* p, double* out, std::size_t n);
double overlap(const double* p, const double* q, std::size_t n);
void scale(double* x, std::size_t n, double factor);
void fill(double* x, std::size_t n, double value);
void smooth(const std::uint32_t* counts, std::size_t n, double k, double inv_total, double* out);
}  // namespace scalar

#ifdef TOKENTIMING_HAVE_AVX2
namespace avx2 {
double sum(const double* x, std::size_t n);
double residual(const double* q, const double* p, double* out, std::size_t n);
double overlap(const double* p, const double* q, std::size_t n);
void scale(double* x, std::size_t n, double factor);
void fill(double* x, std::size_t n, double value);
void smooth(const std::uint32_t* counts, std::size_t n, double k, double inv_total, double* out);
}  // namespace avx2
#endif

}  // namespace tokentiming::kernels
