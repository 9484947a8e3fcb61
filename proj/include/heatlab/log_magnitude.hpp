#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace heatlab {

/// A positive magnitude carried as (log, loglog).
///
/// Quantities such as exp(exp(c / rho^n)) overflow a double long before the
/// inequalities that contain them stop being meaningful. `log` is the natural
/// log of the value and may be +inf; `loglog` = log(log) is finite whenever
/// the value exceeds 1 and is authoritative once `log` overflows. Zero is
/// log = -inf.
struct LogMagnitude {
  double log = -std::numeric_limits<double>::infinity();
  double loglog = -std::numeric_limits<double>::infinity();

  static LogMagnitude zero() { return {}; }

  static LogMagnitude from_log(double l) {
    return {l, l > 0 ? std::log(l) : -std::numeric_limits<double>::infinity()};
  }

  /// exp(exp(ll)).
  static LogMagnitude from_loglog(double ll) { return {std::exp(ll), ll}; }

  static LogMagnitude from_value(double v) {
    return v > 0 ? from_log(std::log(v)) : zero();
  }

  bool is_zero() const { return log == -std::numeric_limits<double>::infinity(); }
  bool overflowed() const { return std::isinf(log) && log > 0; }

  /// The value when representable, +inf otherwise.
  double value() const { return std::exp(log); }

  friend bool operator<(const LogMagnitude& a, const LogMagnitude& b) {
    if (a.overflowed() && b.overflowed()) return a.loglog < b.loglog;
    return a.log < b.log;
  }
  friend bool operator>(const LogMagnitude& a, const LogMagnitude& b) { return b < a; }

  friend LogMagnitude operator*(const LogMagnitude& a, const LogMagnitude& b) {
    if (a.is_zero() || b.is_zero()) return zero();
    if (!a.overflowed() && !b.overflowed()) return from_log(a.log + b.log);
    // log(ab) = la + lb; in loglog form, the overflowed factor dominates.
    const LogMagnitude& big = a.loglog >= b.loglog ? a : b;
    const LogMagnitude& other = a.loglog >= b.loglog ? b : a;
    const double other_log = other.overflowed() ? std::exp(other.loglog) : other.log;
    return {std::numeric_limits<double>::infinity(),
            big.loglog + std::log1p(other_log * std::exp(-big.loglog))};
  }

  friend LogMagnitude operator+(const LogMagnitude& a, const LogMagnitude& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.overflowed() || b.overflowed()) {
      // log(a + b) = log(max) + log1p(min/max), and the correction is below
      // the resolution of loglog once log(max) overflows.
      return a < b ? b : a;
    }
    const double hi = std::max(a.log, b.log);
    const double lo = std::min(a.log, b.log);
    return from_log(hi + std::log1p(std::exp(lo - hi)));
  }

  /// Division by an ordinary positive magnitude.
  friend LogMagnitude operator/(const LogMagnitude& a, const LogMagnitude& b) {
    if (a.is_zero()) return zero();
    if (!a.overflowed()) return from_log(a.log - b.log);
    return {a.log, a.loglog + std::log1p(-b.log * std::exp(-a.loglog))};
  }
};

}  // namespace heatlab
