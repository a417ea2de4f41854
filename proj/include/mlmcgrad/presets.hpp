#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bench.hpp"
#include "problems/cso.hpp"
#include "problems/queue.hpp"

// Fixed experiment setups shared by `mlmc_bench --preset` and the acceptance
// binary, so both run exactly the same configuration.
namespace mlmcgrad::presets {

// `points` log-spaced values from hi down to lo, endpoints exact.
inline std::vector<double> log_grid(double hi, double lo, int points) {
  require(hi > lo && lo > 0.0 && points >= 2, ErrorKind::invalid_input, "log grid needs hi > lo > 0, points >= 2");
  std::vector<double> g(static_cast<std::size_t>(points));
  const double a = std::log10(hi), b = std::log10(lo);
  for (int i = 0; i < points; ++i) g[i] = std::pow(10.0, a + (b - a) * i / (points - 1));
  g.front() = hi;
  g.back() = lo;
  return g;
}

inline SweepSpec strongly_convex_base(const HolderCso& p, std::uint64_t root_seed) {
  SweepSpec s;
  s.instance = "cso_toy";
  s.epsilons = log_grid(1e-1, 1e-3, 5);
  s.budget = 1e9;
  s.root_seed = root_seed;
  s.convexity = ConvexityClass::strongly_convex;
  s.mu = p.strong_convexity();
  s.smoothness = p.smoothness();
  s.optimum = p.objective(p.minimizer());
  return s;
}

// RT-MLMC against L-SGD on the strongly convex toy: origin start, the
// 1/(mu(t + S_F^2/mu^2)) schedule, tail-averaged crossing.
inline SweepSpec table1_sweep(const HolderCso& p, std::uint64_t root_seed = 0) {
  SweepSpec s = strongly_convex_base(p, root_seed);
  s.estimators = {EstimatorKind::rtmlmc, EstimatorKind::lsgd};
  s.seeds = 25;
  s.x1 = Vector::Zero(p.meta().dim);
  return s;
}

// V-MLMC with N = 1/eps and step 1/S_F. Its batches make the path nearly
// deterministic, so the crossing uses the latest gap.
inline SweepSpec vmlmc_sweep(const HolderCso& p, std::uint64_t root_seed = 0) {
  SweepSpec s = strongly_convex_base(p, root_seed);
  s.estimators = {EstimatorKind::vmlmc};
  s.seeds = 5;
  s.x1 = Vector::Constant(p.meta().dim, 10.0);
  s.vmlmc_scale = 1.0;
  s.tail_average = false;
  return s;
}

struct QueueF2Setup {
  QueuePricing problem;
  Vector x1 = (Vector(2) << 9.0, 9.0).finished();
  int level = 12;
  double vr_budget = 1e7;
  double paired_budget = 1e9;
  double step = 0.1;        // below 1/(3 S_F) with S_F ~ 2.9 at the optimum
  double box = 0.25;        // per-coordinate distance to the grid optimum
  double gap = 0.05;        // matched objective gap for the paired runs
  double resolution = 0.01;
  int seeds = 10;
};

struct QueueF2Result {
  GridResult grid;
  std::vector<double> vr_cost;  // first cost inside the box, +inf if never
  std::vector<Vector> vr_hit;   // iterate at that point, or the last iterate
  int vr_hits = 0;
  PairedSummary paired;  // a = RT-MLMC, b = L-SGD
};

inline QueueF2Result run_queue_f2(const QueueF2Setup& setup = {}, std::uint64_t root_seed = 0) {
  const QueuePricing& q = setup.problem;
  const OracleMeta& meta = q.meta();
  QueueF2Result res;
  res.grid = grid_search(q, setup.resolution);
  const Vector xs = (Vector(2) << res.grid.mu, res.grid.price).finished();

  const Estimator rt({EstimatorKind::rtmlmc, setup.level, 1, 1.0, false}, meta);
  const Estimator lsgd({EstimatorKind::lsgd, setup.level, 1, 1.0, false}, meta);

  const Arm vr{rt, std::nullopt, VRConfig{8, 1, 8, setup.step}, 10'000'000, setup.vr_budget,
               ConvexityClass::nonconvex};
  auto in_box = [&](const Vector& x) { return (x - xs).cwiseAbs().maxCoeff() <= setup.box; };
  for (int i = 0; i < setup.seeds; ++i) {
    Rng rng = make_stream(root_seed, {0, static_cast<std::uint64_t>(i)});
    const ArmOutcome o = run_arm(q, vr, setup.x1, in_box, rng);
    res.vr_cost.push_back(o.crossed ? o.cost : kInf);
    res.vr_hit.push_back(o.record.iterates.empty() ? setup.x1 : o.record.last());
    res.vr_hits += o.crossed;
  }

  const Arm a{rt, StepSchedule::constant(setup.step), std::nullopt, 10'000'000, setup.paired_budget,
              ConvexityClass::nonconvex};
  const Arm b{lsgd, StepSchedule::constant(setup.step), std::nullopt, 10'000'000, setup.paired_budget,
              ConvexityClass::nonconvex};
  auto near_optimal = [&](const Vector& x) { return q.objective(x) - res.grid.value <= setup.gap; };
  res.paired = paired_compare(q, a, b, setup.x1, near_optimal, setup.seeds, derive_seed(root_seed, {1}));
  return res;
}

struct NonconvexVrSetup {
  LinearCso problem{LinearCsoParams::nonconvex_defaults()};
  Vector x1 = (Vector(2) << 2.0, 2.0).finished();
  double eps = 0.1;  // target |grad F|^2 <= eps^2
  int seeds = 10;
  double budget = 1e9;
  std::size_t pilot_draws = 1000;
};

struct NonconvexVrResult {
  int level = 0;
  double variance = 0.0;   // pilot V at x1
  std::size_t plain_T = 0;  // V (2 Delta + S_F)^2 / eps^4
  VRConfig vr;
  PairedSummary paired;  // a = VR RT-MLMC, b = plain RT-MLMC
};

// Each arm uses its own prescription. Plain: gamma = 1/sqrt(V T) with T from
// the bound (2 Delta + S_F) sqrt(V / T) <= eps^2, where Delta = F(x1) minus
// the minimum of the convex part (a lower bound on F). VR: D1 = V / eps^2,
// D2 = Q_E = sqrt(D1), gamma = 1/(3 S_F).
inline NonconvexVrResult run_nonconvex_vr(const NonconvexVrSetup& setup = {}, std::uint64_t root_seed = 0) {
  const LinearCso& p = setup.problem;
  const OracleMeta& meta = p.meta();
  NonconvexVrResult res;
  res.level = select_level(meta, setup.eps, ConvexityClass::nonconvex);
  const Estimator rt({EstimatorKind::rtmlmc, res.level, 1, 1.0, false}, meta);
  Rng pilot = make_stream(root_seed, {0});
  res.variance = pilot_variance(p, rt, setup.x1, pilot, setup.pilot_draws);

  const LinearCso convex_part;
  const double delta = p.objective(setup.x1) - convex_part.objective(convex_part.minimizer());
  const double S = p.smoothness();
  const double e4 = std::pow(setup.eps, 4);
  res.plain_T = static_cast<std::size_t>(std::ceil(res.variance * (2 * delta + S) * (2 * delta + S) / e4));
  const auto D1 = static_cast<std::size_t>(std::ceil(res.variance / (setup.eps * setup.eps)));
  const auto D2 = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(D1))));
  res.vr = VRConfig{D1, D2, D2, 1.0 / (3.0 * S)};

  const Arm a{rt, std::nullopt, res.vr, 10'000'000, setup.budget, ConvexityClass::nonconvex};
  const Arm b{rt, StepSchedule::inverse_sqrt(res.variance, res.plain_T), std::nullopt, res.plain_T, setup.budget,
              ConvexityClass::nonconvex};
  const double target = setup.eps * setup.eps;
  auto stationary = [&](const Vector& x) { return p.gradient(x).squaredNorm() <= target; };
  res.paired = paired_compare(p, a, b, setup.x1, stationary, setup.seeds, derive_seed(root_seed, {1}));
  return res;
}

}  // namespace mlmcgrad::presets
