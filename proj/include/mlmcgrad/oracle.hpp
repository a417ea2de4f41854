#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "errors.hpp"
#include "rng.hpp"

namespace mlmcgrad {

using Vector = Eigen::VectorXd;

// Rate law of a biased oracle family: bias M_a 2^{-al}, H-variance M_b 2^{-bl},
// cost M_c 2^{cl}. Values shipped with an instance are advisory; bench probes
// measure them.
struct OracleMeta {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  double M_a = 1.0;
  double M_b = 1.0;
  double M_c = 1.0;
  double sigma_sq = 1.0;
  int dim = 1;
  int level_cap = 30;

  double bias_bound(int l) const { return M_a * std::exp2(-a * l); }
  double variance_bound(int l) const { return M_b * std::exp2(-b * l); }
  double cost_bound(int l) const { return M_c * std::exp2(c * l); }

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    require(positive(a) && positive(b) && positive(c), ErrorKind::invalid_input,
            "rate exponents a, b, c must be positive");
    require(positive(M_a) && positive(M_b) && positive(M_c), ErrorKind::invalid_input,
            "scale constants must be positive");
    require(positive(sigma_sq), ErrorKind::invalid_input, "sigma_sq must be positive");
    require(dim >= 1, ErrorKind::invalid_input, "dimension must be at least 1");
    require(level_cap >= 0 && level_cap < 63, ErrorKind::invalid_input, "level cap out of range");
  }
};

// Declared cost M_c 2^{c l} of one level-l query.
inline double cost_of_level(const OracleMeta& meta, int level) {
  require(level >= 0, ErrorKind::invalid_input, "level must be nonnegative");
  const double cost = meta.cost_bound(level);
  // Costs are summed in doubles; past 2^53 unit increments are no longer exact.
  require(std::isfinite(cost) && cost <= 9007199254740992.0, ErrorKind::budget_overflow,
          "cost of level " + std::to_string(level) + " is not representable");
  return cost;
}

// h estimates grad F^l(x); H estimates grad F^l(x) - grad F^{l-1}(x) from the
// same realization, with H = h at level 0.
struct OracleOutput {
  Vector h;
  Vector H;
  double cost = 0.0;
};

class CostMeter {
 public:
  static constexpr int kMaxLevels = 64;

  void charge(int level, double cost) {
    total_cost_.fetch_add(cost, std::memory_order_relaxed);
    total_queries_.fetch_add(1, std::memory_order_relaxed);
    if (level >= 0 && level < kMaxLevels) per_level_[level].fetch_add(1, std::memory_order_relaxed);
  }

  double total_cost() const { return total_cost_.load(std::memory_order_relaxed); }
  std::uint64_t total_queries() const { return total_queries_.load(std::memory_order_relaxed); }
  std::uint64_t queries_at(int level) const {
    return (level >= 0 && level < kMaxLevels) ? per_level_[level].load(std::memory_order_relaxed) : 0;
  }

  void reset() {
    total_cost_.store(0.0);
    total_queries_.store(0);
    for (auto& q : per_level_) q.store(0);
  }

 private:
  std::atomic<double> total_cost_{0.0};
  std::atomic<std::uint64_t> total_queries_{0};
  std::array<std::atomic<std::uint64_t>, kMaxLevels> per_level_{};
};

template <class P>
concept BiasedOracle = requires(const P& p, int level, const Vector& x, Rng& rng) {
  { p.meta() } -> std::convertible_to<OracleMeta>;
  { p.sample(level, x, rng) } -> std::same_as<OracleOutput>;
};

// Checked entry point for a single oracle call; charges the meter if given.
template <BiasedOracle P>
OracleOutput query(const P& problem, int level, const Vector& x, Rng& rng, CostMeter* meter = nullptr) {
  const OracleMeta& meta = problem.meta();
  require(level >= 0, ErrorKind::invalid_input, "level must be nonnegative");
  if (level > meta.level_cap)
    fail(ErrorKind::level_overflow,
         "level " + std::to_string(level) + " exceeds cap " + std::to_string(meta.level_cap));
  require(x.size() == meta.dim, ErrorKind::invalid_input, "decision vector has wrong dimension");
  require(x.allFinite(), ErrorKind::invalid_input, "decision vector is not finite");
  OracleOutput out = problem.sample(level, x, rng);
  if (meter) meter->charge(level, out.cost);
  return out;
}

// Optional ground-truth capabilities. Concrete instances expose plain members;
// type-erased wrappers return std::optional.
namespace truth {

template <class T>
std::optional<T> lift(T v) { return v; }
template <class T>
std::optional<T> lift(std::optional<T> v) { return v; }

template <class P>
std::optional<double> objective(const P& p, const Vector& x) {
  if constexpr (requires { p.objective(x); }) return lift<double>(p.objective(x));
  else return std::nullopt;
}

template <class P>
std::optional<Vector> gradient(const P& p, const Vector& x) {
  if constexpr (requires { p.gradient(x); }) return lift<Vector>(p.gradient(x));
  else return std::nullopt;
}

template <class P>
std::optional<Vector> level_gradient(const P& p, const Vector& x, int level) {
  if constexpr (requires { p.level_gradient(x, level); }) return lift<Vector>(p.level_gradient(x, level));
  else return std::nullopt;
}

template <class P>
Vector project(const P& p, const Vector& x) {
  if constexpr (requires { p.project(x); }) return p.project(x);
  else return x;
}

// Coupled two-point evaluation replays one random stream at both points, which
// is only valid when the number of draws a query makes does not depend on x.
template <class P>
bool supports_coupled_evaluation(const P& p) {
  if constexpr (requires { p.supports_coupled_evaluation(); }) return p.supports_coupled_evaluation();
  else return false;
}

}  // namespace truth

}  // namespace mlmcgrad
