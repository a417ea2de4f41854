#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "oracle.hpp"

namespace mlmcgrad {

enum class ConvexityClass { strongly_convex, convex, nonconvex };

inline std::string_view to_string(ConvexityClass c) {
  switch (c) {
    case ConvexityClass::strongly_convex: return "strongly-convex";
    case ConvexityClass::convex: return "convex";
    case ConvexityClass::nonconvex: return "nonconvex";
  }
  return "?";
}

inline ConvexityClass parse_convexity(std::string_view s) {
  for (auto c : {ConvexityClass::strongly_convex, ConvexityClass::convex, ConvexityClass::nonconvex})
    if (s == to_string(c)) return c;
  fail(ErrorKind::invalid_input, "unknown convexity class '" + std::string(s) + "'");
}

// gamma_t for t = 1, 2, ...
class StepSchedule {
 public:
  enum class Kind { constant, decay };

  static StepSchedule constant(double gamma) {
    require(std::isfinite(gamma) && gamma >= 0.0, ErrorKind::invalid_input, "constant step must be >= 0");
    StepSchedule s;
    s.kind_ = Kind::constant;
    s.scale_ = gamma;
    return s;
  }

  // gamma_t = scale / (mu (t + offset)).
  static StepSchedule decay(double mu, double scale, double offset) {
    require(std::isfinite(mu) && mu > 0.0, ErrorKind::invalid_input, "decay schedule needs mu > 0");
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::invalid_input, "decay schedule needs scale > 0");
    require(std::isfinite(offset) && offset > -1.0, ErrorKind::invalid_input, "decay offset must exceed -1");
    StepSchedule s;
    s.kind_ = Kind::decay;
    s.mu_ = mu;
    s.scale_ = scale;
    s.offset_ = offset;
    return s;
  }

  // 1 / (mu (t + S_F^2 / mu^2)).
  static StepSchedule strongly_convex(double mu, double smoothness) {
    return decay(mu, 1.0, (smoothness / mu) * (smoothness / mu));
  }

  // 2 / (mu (t + 2 S_F / mu - 1)).
  static StepSchedule strongly_convex_alt(double mu, double smoothness) {
    return decay(mu, 2.0, 2.0 * smoothness / mu - 1.0);
  }

  // 1 / (mu (t + 2 S_F / mu^2)), used with the unbiased estimators.
  static StepSchedule strongly_convex_unbiased(double mu, double smoothness) {
    return decay(mu, 1.0, 2.0 * smoothness / (mu * mu));
  }

  // 1 / sqrt((V + L_F^2) T); L_F = 0 gives 1 / sqrt(V T).
  static StepSchedule inverse_sqrt(double variance, std::size_t T, double lipschitz = 0.0) {
    require(T >= 1, ErrorKind::invalid_input, "inverse-sqrt schedule needs T >= 1");
    const double v = variance + lipschitz * lipschitz;
    require(std::isfinite(v) && v > 0.0, ErrorKind::invalid_input, "inverse-sqrt schedule needs V + L_F^2 > 0");
    return constant(1.0 / std::sqrt(v * static_cast<double>(T)));
  }

  Kind kind() const { return kind_; }

  double operator()(std::size_t t) const {
    if (kind_ == Kind::constant) return scale_;
    return scale_ / (mu_ * (static_cast<double>(t) + offset_));
  }

  std::string describe() const {
    if (kind_ == Kind::constant) return "constant(" + std::to_string(scale_) + ")";
    return "decay(mu=" + std::to_string(mu_) + ", scale=" + std::to_string(scale_) +
           ", offset=" + std::to_string(offset_) + ")";
  }

 private:
  Kind kind_ = Kind::constant;
  double mu_ = 1.0;
  double scale_ = 0.0;
  double offset_ = 0.0;
};

// Smallest L with 2 B_L <= eps / 2 (convex classes) or 2 B_L <= eps^2 / 2
// (nonconvex), base 2 throughout.
inline int select_level(const OracleMeta& meta, double eps, ConvexityClass cls) {
  require(std::isfinite(eps) && eps > 0.0, ErrorKind::invalid_input, "epsilon must be positive");
  const double target = cls == ConvexityClass::nonconvex ? eps * eps : eps;
  const double raw = std::log2(4.0 * meta.M_a / target) / meta.a;
  const int L = raw <= 0.0 ? 0 : static_cast<int>(std::ceil(raw - 1e-12));
  if (L > meta.level_cap)
    fail(ErrorKind::level_overflow,
         "epsilon " + std::to_string(eps) + " needs level " + std::to_string(L) + " above cap " +
             std::to_string(meta.level_cap));
  return L;
}

}  // namespace mlmcgrad
