#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <string>

namespace tokentiming {

// Exact arithmetic for the losslessness oracle. Every probability path in the
// engine is templated on the scalar type and instantiated for double and Rational.
using Rational = mpq_class;

inline double to_double(double x) { return x; }
inline double to_double(const Rational& x) { return x.get_d(); }

template <class S>
S from_double(double x);

template <>
inline double from_double<double>(double x) {
  return x;
}

// Every finite double is a dyadic rational, so this conversion is exact.
template <>
inline Rational from_double<Rational>(double x) {
  Rational r;
  mpq_set_d(r.get_mpq_t(), x);
  return r;
}

template <class S>
S from_ratio(std::int64_t num, std::int64_t den);

template <>
inline double from_ratio<double>(std::int64_t num, std::int64_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

template <>
inline Rational from_ratio<Rational>(std::int64_t num, std::int64_t den) {
  Rational r(static_cast<long>(num), static_cast<long>(den));
  r.canonicalize();
  return r;
}

// x^(1/a). Irrational in general; the Rational instantiation rounds through
// double and then stores that double exactly, which keeps enumeration deterministic.
inline double nth_root(double x, unsigned a) {
  return a == 1 ? x : std::pow(x, 1.0 / static_cast<double>(a));
}

inline Rational nth_root(const Rational& x, unsigned a) {
  if (a == 1) return x;
  return from_double<Rational>(std::pow(x.get_d(), 1.0 / static_cast<double>(a)));
}

inline std::string to_string(const Rational& x) { return x.get_str(); }

// Parses "n", "n/d" or a decimal literal.
Rational parse_rational(const std::string& text);

}  // namespace tokentiming
