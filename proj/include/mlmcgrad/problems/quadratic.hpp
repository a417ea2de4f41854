#pragma once

#include <algorithm>
#include <cmath>

#include "../errors.hpp"
#include "../oracle.hpp"
#include "../rng.hpp"

namespace mlmcgrad {

// F(x) = (curvature/2)|x|^2 with an unbiased level-independent oracle
// h = curvature x + noise Z. F^l = F at every level, so H^l = 0 for l >= 1.
class QuadraticProblem {
 public:
  explicit QuadraticProblem(int dim = 1, double curvature = 1.0, double noise_sd = 0.0)
      : curvature_(curvature), noise_sd_(noise_sd) {
    require(dim >= 1, ErrorKind::invalid_input, "dimension must be at least 1");
    require(curvature > 0.0, ErrorKind::invalid_input, "curvature must be positive");
    require(noise_sd >= 0.0, ErrorKind::invalid_input, "noise sd must be nonnegative");
    meta_.dim = dim;
    meta_.sigma_sq = std::max(dim * noise_sd * noise_sd, 1e-300);
    meta_.M_b = meta_.sigma_sq;
  }

  const OracleMeta& meta() const { return meta_; }
  double curvature() const { return curvature_; }
  double noise_sd() const { return noise_sd_; }

  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    OracleOutput out;
    out.h = curvature_ * x;
    if (noise_sd_ > 0.0) {
      std::normal_distribution<double> z(0.0, noise_sd_);
      for (Eigen::Index i = 0; i < x.size(); ++i) out.h[i] += z(rng);
    }
    out.H = level == 0 ? out.h : Vector::Zero(x.size());
    out.cost = meta_.cost_bound(level);
    return out;
  }

  double objective(const Vector& x) const { return 0.5 * curvature_ * x.squaredNorm(); }
  Vector gradient(const Vector& x) const { return curvature_ * x; }
  Vector level_gradient(const Vector& x, int) const { return gradient(x); }
  double strong_convexity() const { return curvature_; }
  double smoothness() const { return curvature_; }
  bool supports_coupled_evaluation() const { return true; }

 private:
  OracleMeta meta_;
  double curvature_;
  double noise_sd_;
};

}  // namespace mlmcgrad
