#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "levels.hpp"
#include "oracle.hpp"
#include "rng.hpp"

namespace mlmcgrad {

enum class EstimatorKind { lsgd, vmlmc, rtmlmc, rumlmc, rrmlmc };

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::lsgd: return "l-sgd";
    case EstimatorKind::vmlmc: return "v-mlmc";
    case EstimatorKind::rtmlmc: return "rt-mlmc";
    case EstimatorKind::rumlmc: return "ru-mlmc";
    case EstimatorKind::rrmlmc: return "rr-mlmc";
  }
  return "?";
}

inline EstimatorKind parse_estimator_kind(std::string_view s) {
  for (auto k : {EstimatorKind::lsgd, EstimatorKind::vmlmc, EstimatorKind::rtmlmc, EstimatorKind::rumlmc,
                 EstimatorKind::rrmlmc})
    if (s == to_string(k)) return k;
  fail(ErrorKind::invalid_input, "unknown estimator '" + std::string(s) + "'");
}

// True for the estimators whose mean is grad F rather than grad F^L.
inline bool is_unbiased_kind(EstimatorKind k) { return k == EstimatorKind::rumlmc || k == EstimatorKind::rrmlmc; }

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::rtmlmc;
  int L = 0;         // truncation level; ignored by RU/RR
  int n_L = 1;       // L-SGD batch
  double N = 1.0;    // V-MLMC batch multiplier
  bool force = false;  // build RU/RR even when b <= c

  bool operator==(const EstimatorConfig&) const = default;
};

struct GradientSample {
  Vector g;
  double cost = 0.0;
  std::vector<int> levels;
};

// n_l = ceil(2^{-(b+c)l/2} N). The small relative slack keeps exact products
// such as 2^{-1} * 8 from rounding up to the next integer.
inline std::vector<int> vmlmc_batch_sizes(const OracleMeta& meta, int L, double N) {
  require(L >= 0, ErrorKind::invalid_input, "V-MLMC needs L >= 0");
  require(std::isfinite(N) && N > 0.0, ErrorKind::invalid_input, "V-MLMC needs N > 0");
  std::vector<int> n(L + 1);
  const double rate = 0.5 * (meta.b + meta.c);
  for (int l = 0; l <= L; ++l) {
    const double v = std::exp2(-rate * l) * N;
    n[l] = std::max(1, static_cast<int>(std::ceil(v * (1.0 - 1e-12))));
  }
  return n;
}

template <BiasedOracle P>
GradientSample estimate_lsgd(const P& problem, const Vector& x, int L, int n_L, Rng& rng, CostMeter* meter = nullptr) {
  require(n_L >= 1, ErrorKind::invalid_input, "L-SGD batch must be at least 1");
  GradientSample s;
  s.g = Vector::Zero(x.size());
  for (int i = 0; i < n_L; ++i) {
    OracleOutput o = query(problem, L, x, rng, meter);
    s.g += o.h;
    s.cost += o.cost;
    s.levels.push_back(L);
  }
  s.g /= n_L;
  return s;
}

template <BiasedOracle P>
GradientSample estimate_vmlmc(const P& problem, const Vector& x, const std::vector<int>& batches, Rng& rng,
                              CostMeter* meter = nullptr) {
  GradientSample s;
  s.g = Vector::Zero(x.size());
  for (int l = 0; l < static_cast<int>(batches.size()); ++l) {
    Vector level_sum = Vector::Zero(x.size());
    for (int i = 0; i < batches[l]; ++i) {
      OracleOutput o = query(problem, l, x, rng, meter);
      level_sum += o.H;
      s.cost += o.cost;
    }
    s.g += level_sum / batches[l];
    s.levels.push_back(l);
  }
  return s;
}

// H^iota / q_iota with iota drawn from `dist` (truncated for RT, geometric for RU).
template <BiasedOracle P>
GradientSample estimate_single_level(const P& problem, const Vector& x, const LevelDistribution& dist, Rng& rng,
                                     CostMeter* meter = nullptr) {
  const int level = dist.sample(rng);
  OracleOutput o = query(problem, level, x, rng, meter);
  GradientSample s;
  s.g = o.H / dist.q(level);
  s.cost = o.cost;
  s.levels.push_back(level);
  return s;
}

template <BiasedOracle P>
GradientSample estimate_rtmlmc(const P& problem, const Vector& x, const LevelDistribution& dist, Rng& rng,
                               CostMeter* meter = nullptr) {
  require(dist.law() == LevelLaw::truncated, ErrorKind::invalid_input, "RT-MLMC needs a truncated level law");
  return estimate_single_level(problem, x, dist, rng, meter);
}

template <BiasedOracle P>
GradientSample estimate_rumlmc(const P& problem, const Vector& x, const LevelDistribution& dist, Rng& rng,
                               CostMeter* meter = nullptr) {
  require(dist.law() == LevelLaw::geometric, ErrorKind::invalid_input, "RU-MLMC needs the geometric level law");
  return estimate_single_level(problem, x, dist, rng, meter);
}

// Random truncation level L, then sum_{l <= L} p_l H^l with a fresh
// realization per level.
template <BiasedOracle P>
GradientSample estimate_rrmlmc(const P& problem, const Vector& x, const LevelDistribution& dist, Rng& rng,
                               CostMeter* meter = nullptr) {
  require(dist.law() == LevelLaw::geometric, ErrorKind::invalid_input, "RR-MLMC needs the geometric level law");
  const int top = dist.sample(rng);
  GradientSample s;
  s.g = Vector::Zero(x.size());
  for (int l = 0; l <= top; ++l) {
    OracleOutput o = query(problem, l, x, rng, meter);
    s.g += dist.p(l) * o.H;
    s.cost += o.cost;
    s.levels.push_back(l);
  }
  return s;
}

// A configured estimator bound to one oracle law. Stateless after construction.
class Estimator {
 public:
  Estimator(EstimatorConfig config, const OracleMeta& meta) : config_(config), meta_(meta) {
    meta.validate();
    switch (config_.kind) {
      case EstimatorKind::lsgd:
        require(config_.n_L >= 1, ErrorKind::invalid_input, "n_L must be at least 1");
        require(config_.L >= 0, ErrorKind::invalid_input, "L must be nonnegative");
        break;
      case EstimatorKind::vmlmc:
        batches_ = vmlmc_batch_sizes(meta, config_.L, config_.N);
        break;
      case EstimatorKind::rtmlmc:
        dist_ = LevelDistribution::truncated(meta, config_.L);
        break;
      case EstimatorKind::rumlmc:
      case EstimatorKind::rrmlmc:
        dist_ = LevelDistribution::geometric(meta, config_.force);
        break;
    }
  }

  const EstimatorConfig& config() const { return config_; }
  EstimatorKind kind() const { return config_.kind; }
  const std::optional<LevelDistribution>& distribution() const { return dist_; }
  const std::vector<int>& batch_sizes() const { return batches_; }

  // Expected cost of one estimate under the declared cost law.
  double expected_cost() const {
    switch (config_.kind) {
      case EstimatorKind::lsgd: return config_.n_L * meta_.cost_bound(config_.L);
      case EstimatorKind::vmlmc: {
        double s = 0.0;
        for (int l = 0; l < static_cast<int>(batches_.size()); ++l) s += batches_[l] * meta_.cost_bound(l);
        return s;
      }
      case EstimatorKind::rtmlmc:
      case EstimatorKind::rumlmc: return dist_->expected_cost(meta_);
      case EstimatorKind::rrmlmc: return dist_->expected_prefix_cost(meta_);
    }
    return 0.0;
  }

  template <BiasedOracle P>
  GradientSample operator()(const P& problem, const Vector& x, Rng& rng, CostMeter* meter = nullptr) const {
    switch (config_.kind) {
      case EstimatorKind::lsgd: return estimate_lsgd(problem, x, config_.L, config_.n_L, rng, meter);
      case EstimatorKind::vmlmc: return estimate_vmlmc(problem, x, batches_, rng, meter);
      case EstimatorKind::rtmlmc: return estimate_rtmlmc(problem, x, *dist_, rng, meter);
      case EstimatorKind::rumlmc: return estimate_rumlmc(problem, x, *dist_, rng, meter);
      case EstimatorKind::rrmlmc: return estimate_rrmlmc(problem, x, *dist_, rng, meter);
    }
    fail(ErrorKind::invalid_input, "unknown estimator kind");
  }

 private:
  EstimatorConfig config_;
  OracleMeta meta_;
  std::optional<LevelDistribution> dist_;
  std::vector<int> batches_;
};

}  // namespace mlmcgrad
