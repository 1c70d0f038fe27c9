#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <sstream>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace rankone {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Pair counts. Bounded by tower heights; overflow raises std::overflow_error.
using Count = boost::multiprecision::checked_int128_t;

inline std::string to_string(const BigInt& v) { return v.str(); }

/// Exact "p/q" (or "p" when q == 1).
inline std::string to_string(const Rational& v) {
  std::ostringstream os;
  os << boost::multiprecision::numerator(v);
  if (boost::multiprecision::denominator(v) != 1) {
    os << '/' << boost::multiprecision::denominator(v);
  }
  return os.str();
}

inline double to_double(const Rational& v) { return v.convert_to<double>(); }

inline Rational to_rational(const Count& c) { return Rational(BigInt(c)); }

inline std::int64_t to_i64(const BigInt& v) {
  if (v > std::numeric_limits<std::int64_t>::max() ||
      v < std::numeric_limits<std::int64_t>::min()) {
    throw std::overflow_error("integer does not fit in 64 bits: " + v.str());
  }
  return v.convert_to<std::int64_t>();
}

/// Round-trippable decimal rendering of a double.
inline std::string decimal(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string decimal(const Rational& v) { return decimal(to_double(v)); }

}  // namespace rankone
