#pragma once

// Independent reference computations used to freeze expected values. Nothing
// here calls into the library.

#include <cmath>
#include <cstddef>
#include <functional>

namespace testoracle {

inline double direct_power_sum(double alpha, int L) {
  long double s = 0.0L;
  for (int l = 0; l <= L; ++l) s += std::pow(2.0L, static_cast<long double>(alpha) * l);
  return static_cast<double>(s);
}

// Composite Simpson on [lo, hi] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n = 20000) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// Quadrature over z in [-12, 12], split at the kink z = -m / sqrt(v).
inline double split_simpson(const std::function<double(double)>& f, double kink) {
  if (kink <= -12.0 || kink >= 12.0) return simpson(f, -12.0, 12.0, 400000);
  return simpson(f, -12.0, kink, 200000) + simpson(f, kink, 12.0, 200000);
}

// E|m + sqrt(v) Z|^{3/2}.
inline double abs_power_moment(double m, double v) {
  const double s = std::sqrt(v);
  return split_simpson([&](double z) { return std::pow(std::abs(m + s * z), 1.5) * normal_pdf(z); }, -m / s);
}

// d/dm of the same moment: E[1.5 sign(u) |u|^{1/2}], u = m + sqrt(v) Z.
inline double abs_power_moment_dm(double m, double v) {
  const double s = std::sqrt(v);
  return split_simpson(
      [&](double z) {
        const double u = m + s * z;
        return 1.5 * std::copysign(std::sqrt(std::abs(u)), u) * normal_pdf(z);
      },
      -m / s);
}

}  // namespace testoracle
