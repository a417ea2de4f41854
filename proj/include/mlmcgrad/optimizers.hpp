#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "estimators.hpp"
#include "oracle.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace mlmcgrad {

inline constexpr double kDivergenceNorm = 1e8;

struct TrajectoryPoint {
  std::size_t t = 0;
  double cum_cost = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double grad_sq = std::numeric_limits<double>::quiet_NaN();
};

struct RunOptions {
  ConvexityClass convexity = ConvexityClass::strongly_convex;
  std::optional<double> budget;
  // Evaluate closed-form F and |grad F|^2 along the path when the instance has them.
  bool record_truth = true;
  // Checked after every recorded point (including t = 0); true ends the run.
  std::function<bool(const Vector& x, const TrajectoryPoint& point)> stop;
  CostMeter* meter = nullptr;
};

struct RunRecord {
  std::vector<TrajectoryPoint> trajectory;
  std::vector<Vector> iterates;  // x_1, ..., x_{T+1}
  Vector output;
  std::size_t output_index = 0;  // 1-based index into x_1..x_T, or T+1 for the last iterate
  std::size_t iterations = 0;
  double total_cost = 0.0;
  double max_estimate_cost = 0.0;
  double discarded_cost = 0.0;  // cost of the estimate that would have crossed the budget
  bool budget_exhausted = false;
  bool stopped = false;
  std::uint64_t seed = 0;

  const Vector& last() const { return iterates.back(); }
};

namespace detail {

template <class P>
TrajectoryPoint make_point(const P& problem, const Vector& x, std::size_t t, double cost, bool truth_on) {
  TrajectoryPoint pt;
  pt.t = t;
  pt.cum_cost = cost;
  if (truth_on) {
    if (auto f = truth::objective(problem, x)) pt.objective = *f;
    if (auto g = truth::gradient(problem, x)) pt.grad_sq = g->squaredNorm();
  }
  return pt;
}

inline bool diverged(const Vector& x) { return !x.allFinite() || x.norm() > kDivergenceNorm; }

template <BiasedOracle P>
void check_start(const P& problem, const Vector& x1) {
  require(x1.size() == problem.meta().dim, ErrorKind::invalid_input, "start point has wrong dimension");
  require(x1.allFinite(), ErrorKind::invalid_input, "start point is not finite");
}

// Budget gate applied after a full estimate is built: returns false when the
// estimate must be discarded because it would overshoot the budget.
inline bool admit(RunRecord& rec, const RunOptions& opt, double cost) {
  rec.max_estimate_cost = std::max(rec.max_estimate_cost, cost);
  if (opt.budget && rec.total_cost + cost > *opt.budget) {
    rec.discarded_cost = cost;
    rec.budget_exhausted = true;
    if (rec.iterations == 0)
      fail(ErrorKind::budget_overflow, "budget " + std::to_string(*opt.budget) +
                                           " is below the cost of a single estimate (" + std::to_string(cost) + ")");
    return false;
  }
  rec.total_cost += cost;
  return true;
}

inline void select_output(RunRecord& rec, ConvexityClass cls, Rng& rng) {
  if (cls == ConvexityClass::strongly_convex || rec.iterations == 0) {
    rec.output = rec.iterates.back();
    rec.output_index = rec.iterates.size();
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(1, rec.iterations);
  rec.output_index = pick(rng);
  rec.output = rec.iterates[rec.output_index - 1];
}

}  // namespace detail

// Plain stochastic gradient framework: x_{t+1} = x_t - gamma_t v(x_t).
template <BiasedOracle P>
RunRecord run_sgd(const P& problem, const Estimator& estimator, const StepSchedule& schedule, std::size_t T,
                  Vector x1, Rng& rng, const RunOptions& opt = {}) {
  require(T >= 1, ErrorKind::invalid_input, "T must be at least 1");
  detail::check_start(problem, x1);
  RunRecord rec;
  Vector x = truth::project(problem, x1);
  rec.iterates.push_back(x);
  rec.trajectory.push_back(detail::make_point(problem, x, 0, 0.0, opt.record_truth));
  rec.stopped = opt.stop && opt.stop(x, rec.trajectory.back());

  for (std::size_t t = 1; t <= T && !rec.stopped; ++t) {
    GradientSample v = estimator(problem, x, rng, opt.meter);
    if (!detail::admit(rec, opt, v.cost)) break;
    Vector next = truth::project(problem, Vector(x - schedule(t) * v.g));
    if (detail::diverged(next)) throw DivergenceError(t, x);
    x = std::move(next);
    rec.iterations = t;
    rec.iterates.push_back(x);
    rec.trajectory.push_back(detail::make_point(problem, x, t, rec.total_cost, opt.record_truth));
    rec.stopped = opt.stop && opt.stop(x, rec.trajectory.back());
  }
  detail::select_output(rec, opt.convexity, rng);
  return rec;
}

struct VRConfig {
  std::size_t D1 = 1;
  std::size_t D2 = 1;
  std::size_t Q_E = 1;
  double gamma = 0.1;

  bool operator==(const VRConfig&) const = default;

  // smoothness <= 0 skips the gamma <= 1/(3 S_F) check.
  void validate(double smoothness = 0.0) const {
    require(D2 >= 1 && D1 >= D2, ErrorKind::invalid_input, "VR needs D1 >= D2 >= 1");
    require(Q_E >= 1, ErrorKind::invalid_input, "VR needs Q_E >= 1");
    require(std::isfinite(gamma) && gamma > 0.0, ErrorKind::invalid_input, "VR needs gamma > 0");
    if (smoothness > 0.0)
      require(gamma <= 1.0 / (3.0 * smoothness) * (1.0 + 1e-12), ErrorKind::invalid_input,
              "VR step exceeds 1/(3 S_F)");
  }
};

// Recursive gradient framework. Every Q_E iterations m_t is reset to a
// D1-batch mean; otherwise
//   m_t = m_{t-1} + (1/D2) sum_k [v_k(x_t) - v_k(x_{t-1})],
// where both evaluations of v_k replay one child stream, so they share the
// sampled level and the oracle realization.
template <BiasedOracle P>
RunRecord run_vr(const P& problem, const Estimator& estimator, const VRConfig& vr, std::size_t T, Vector x1, Rng& rng,
                 const RunOptions& opt = {}) {
  require(T >= 1, ErrorKind::invalid_input, "T must be at least 1");
  vr.validate();
  detail::check_start(problem, x1);
  require(truth::supports_coupled_evaluation(problem), ErrorKind::contract,
          "instance does not support coupled two-point evaluation");
  RunRecord rec;
  Vector x = truth::project(problem, x1);
  Vector x_prev = x;
  Vector m = Vector::Zero(x.size());
  rec.iterates.push_back(x);
  rec.trajectory.push_back(detail::make_point(problem, x, 0, 0.0, opt.record_truth));
  rec.stopped = opt.stop && opt.stop(x, rec.trajectory.back());

  for (std::size_t t = 1; t <= T && !rec.stopped; ++t) {
    double cost = 0.0;
    Vector next_m;
    if ((t - 1) % vr.Q_E == 0) {
      next_m = Vector::Zero(x.size());
      for (std::size_t k = 0; k < vr.D1; ++k) {
        GradientSample v = estimator(problem, x, rng, opt.meter);
        next_m += v.g;
        cost += v.cost;
      }
      next_m /= static_cast<double>(vr.D1);
    } else {
      Vector correction = Vector::Zero(x.size());
      for (std::size_t k = 0; k < vr.D2; ++k) {
        const std::uint64_t seed = rng();
        Rng at_current(seed);
        Rng at_previous(seed);
        GradientSample now = estimator(problem, x, at_current, opt.meter);
        GradientSample before = estimator(problem, x_prev, at_previous, opt.meter);
        correction += now.g - before.g;
        cost += now.cost + before.cost;
      }
      next_m = m + correction / static_cast<double>(vr.D2);
    }
    if (!detail::admit(rec, opt, cost)) break;
    m = std::move(next_m);
    Vector next = truth::project(problem, Vector(x - vr.gamma * m));
    if (detail::diverged(next)) throw DivergenceError(t, x);
    x_prev = x;
    x = std::move(next);
    rec.iterations = t;
    rec.iterates.push_back(x);
    rec.trajectory.push_back(detail::make_point(problem, x, t, rec.total_cost, opt.record_truth));
    rec.stopped = opt.stop && opt.stop(x, rec.trajectory.back());
  }
  // The recursive framework always returns a uniformly drawn iterate.
  detail::select_output(rec, ConvexityClass::nonconvex, rng);
  return rec;
}

struct GradNormEstimate {
  double value = 0.0;
  double se = 0.0;
  bool exact = false;
};

// |grad F(x)|^2 from the closed form when available; otherwise the mean of
// independent-batch products a_b . c_b, each unbiased for |grad F^level|^2.
template <BiasedOracle P>
GradNormEstimate grad_norm_probe(const P& problem, const Vector& x, std::size_t replications, Rng& rng,
                                 int level = -1) {
  require(replications >= 1, ErrorKind::invalid_input, "grad_norm_probe needs at least one replication");
  if (auto g = truth::gradient(problem, x)) return {g->squaredNorm(), 0.0, true};
  const int l = level >= 0 ? level : std::min(problem.meta().level_cap, 12);
  if (replications < 2) {
    const double v = query(problem, l, x, rng).h.squaredNorm();
    return {v, std::numeric_limits<double>::infinity(), false};
  }
  const std::size_t batches = std::min<std::size_t>(10, replications / 2);
  const std::size_t half = replications / (2 * batches);
  std::vector<double> est(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    Vector a = Vector::Zero(x.size());
    Vector c = Vector::Zero(x.size());
    for (std::size_t i = 0; i < half; ++i) a += query(problem, l, x, rng).h;
    for (std::size_t i = 0; i < half; ++i) c += query(problem, l, x, rng).h;
    est[b] = a.dot(c) / (static_cast<double>(half) * half);
  }
  double mean = 0.0;
  for (double e : est) mean += e;
  mean /= batches;
  double var = 0.0;
  for (double e : est) var += (e - mean) * (e - mean);
  const double se = batches > 1 ? std::sqrt(var / (batches - 1) / batches) : std::numeric_limits<double>::infinity();
  return {mean, se, false};
}

// Trace of the covariance of `replications` estimator draws at x; the pilot
// probe used to set V in 1/sqrt(V T) when the caller does not supply it.
template <BiasedOracle P>
double pilot_variance(const P& problem, const Estimator& estimator, const Vector& x, Rng& rng,
                      std::size_t replications = 1000) {
  require(replications >= 2, ErrorKind::invalid_input, "pilot probe needs at least two draws");
  Vector mean = Vector::Zero(x.size());
  Vector m2 = Vector::Zero(x.size());
  for (std::size_t i = 1; i <= replications; ++i) {
    const Vector g = estimator(problem, x, rng).g;
    const Vector delta = g - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta.cwiseProduct(g - mean);
  }
  return m2.sum() / static_cast<double>(replications - 1);
}

}  // namespace mlmcgrad
