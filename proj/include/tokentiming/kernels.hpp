#pragma once

// Dense probability-vector kernels used on the double-precision decoding path.
// A scalar reference table is always present; an AVX2 table is compiled on
// x86-64 and chosen at runtime when the CPU reports support. The exact
// (Rational) path never goes through here.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace tokentiming::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*sum)(const double* x, std::size_t n);
  // out[i] = max(0, q[i] - p[i]); returns sum(out).
  double (*residual)(const double* q, const double* p, double* out, std::size_t n);
  // sum_i min(p[i], q[i])
  double (*overlap)(const double* p, const double* q, std::size_t n);
  void (*scale)(double* x, std::size_t n, double factor);
  void (*fill)(double* x, std::size_t n, double value);
  // out[i] = (counts[i] + k) * inv_total
  void (*smooth)(const std::uint32_t* counts, std::size_t n, double k, double inv_total, double* out);
};

const KernelTable& scalar_table();
// nullptr when not compiled in or not supported by the running CPU.
const KernelTable* avx2_table();

// Table used by the library. Defaults to the widest supported ISA; the
// TOKENTIMING_KERNELS environment variable ("scalar" or "avx2") overrides it.
const KernelTable& active();
void force(Isa isa);
std::string_view isa_name(Isa isa);

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

inline double residual(std::span<const double> q, std::span<const double> p, std::span<double> out) {
  return active().residual(q.data(), p.data(), out.data(), out.size());
}

inline double overlap(std::span<const double> p, std::span<const double> q) {
  return active().overlap(p.data(), q.data(), p.size());
}

inline void scale(std::span<double> x, double factor) { active().scale(x.data(), x.size(), factor); }

inline void fill(std::span<double> x, double value) { active().fill(x.data(), x.size(), value); }

inline void smooth(std::span<const std::uint32_t> counts, double k, double inv_total, std::span<double> out) {
  active().smooth(counts.data(), out.size(), k, inv_total, out.data());
}

}  // namespace tokentiming::kernels
