#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "oracle.hpp"
#include "rng.hpp"

namespace mlmcgrad {

// sum_{l=0}^{L} 2^{alpha l} in closed form. expm1 keeps full relative accuracy
// for small |alpha| where 1 - 2^alpha cancels.
inline double r_sum(double alpha, int L) {
  require(alpha != 0.0, ErrorKind::invalid_input, "r_sum needs alpha != 0; use L + 1");
  require(L >= 0, ErrorKind::invalid_input, "r_sum needs L >= 0");
  const double ln2 = std::log(2.0);
  return std::expm1(alpha * (L + 1) * ln2) / std::expm1(alpha * ln2);
}

enum class LevelLaw { truncated, geometric };

// Level law {q_l} with survival weights p_l = 1 / P(level >= l).
class LevelDistribution {
 public:
  // q_l proportional to 2^{-(b+c)l/2} on 0..L.
  static LevelDistribution truncated(const OracleMeta& meta, int L) {
    require(L >= 0, ErrorKind::invalid_input, "truncation level must be nonnegative");
    LevelDistribution d;
    d.law_ = LevelLaw::truncated;
    d.rate_ = 0.5 * (meta.b + meta.c);
    d.max_level_ = L;
    const double norm = r_sum(-d.rate_, L);
    d.q_.resize(L + 1);
    for (int l = 0; l <= L; ++l) d.q_[l] = std::exp2(-d.rate_ * l) / norm;
    d.tail_.assign(L + 2, 0.0);
    for (int l = L; l >= 0; --l) d.tail_[l] = d.tail_[l + 1] + d.q_[l];
    d.tail_[0] = 1.0;
    d.cdf_.resize(L + 1);
    for (int l = 0; l < L; ++l) d.cdf_[l] = 1.0 - d.tail_[l + 1];
    d.cdf_[L] = 1.0;
    return d;
  }

  // q_l = 2^{-(b+c)l/2} (1 - 2^{-(b+c)/2}) on all l >= 0. Needs b > c for a
  // finite expected cost and variance; `force` builds it anyway.
  static LevelDistribution geometric(const OracleMeta& meta, bool force = false) {
    if (!(meta.b > meta.c) && !force)
      fail(ErrorKind::inapplicable_estimator,
           "geometric level law needs b > c (b=" + std::to_string(meta.b) + ", c=" + std::to_string(meta.c) + ")");
    LevelDistribution d;
    d.law_ = LevelLaw::geometric;
    d.rate_ = 0.5 * (meta.b + meta.c);
    d.max_level_ = -1;
    return d;
  }

  LevelLaw law() const { return law_; }
  double rate() const { return rate_; }
  // Truncation level, or -1 for the unbounded geometric law.
  int max_level() const { return max_level_; }

  double q(int l) const {
    if (l < 0) return 0.0;
    if (law_ == LevelLaw::truncated) return l <= max_level_ ? q_[l] : 0.0;
    return std::exp2(-rate_ * l) * -std::expm1(-rate_ * std::log(2.0));
  }

  // P(level >= l).
  double tail(int l) const {
    if (l <= 0) return 1.0;
    if (law_ == LevelLaw::truncated) return l <= max_level_ ? tail_[l] : 0.0;
    return std::exp2(-rate_ * l);
  }

  double p(int l) const {
    const double t = tail(l);
    require(t > 0.0, ErrorKind::invalid_input, "roulette weight requested past the support");
    return 1.0 / t;
  }

  int sample(Rng& rng) const {
    const double u = uniform01(rng);
    if (law_ == LevelLaw::truncated)
      return static_cast<int>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    // P(level >= l) = 2^{-rate l} inverted on 1 - u in (0, 1].
    const double v = 1.0 - u;
    return static_cast<int>(std::floor(-std::log2(v) / rate_));
  }

  // E[C_level] for one draw; infinite when the geometric tail outweighs the cost.
  double expected_cost(const OracleMeta& meta) const {
    if (law_ == LevelLaw::truncated) {
      double s = 0.0;
      for (int l = 0; l <= max_level_; ++l) s += q_[l] * meta.cost_bound(l);
      return s;
    }
    if (meta.c >= rate_) return std::numeric_limits<double>::infinity();
    return meta.M_c * q(0) / -std::expm1((meta.c - rate_) * std::log(2.0));
  }

  // E[sum_{l <= level} C_l], the cost of one Russian-roulette estimate.
  double expected_prefix_cost(const OracleMeta& meta) const {
    if (law_ == LevelLaw::truncated) {
      double s = 0.0;
      for (int l = 0; l <= max_level_; ++l) s += tail(l) * meta.cost_bound(l);
      return s;
    }
    if (meta.c >= rate_) return std::numeric_limits<double>::infinity();
    return meta.M_c / -std::expm1((meta.c - rate_) * std::log(2.0));
  }

 private:
  LevelLaw law_ = LevelLaw::truncated;
  double rate_ = 1.0;
  int max_level_ = 0;
  std::vector<double> q_;
  std::vector<double> tail_;
  std::vector<double> cdf_;
};

}  // namespace mlmcgrad
