#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mlmcgrad/bench.hpp"
#include "mlmcgrad/problems/cso.hpp"
#include "mlmcgrad/problems/quadratic.hpp"

using namespace mlmcgrad;
using Catch::Approx;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an mlmcgrad::Error");
  return ErrorKind::contract;
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> v;
  for (int l = lo; l <= hi; ++l) v.push_back(l);
  return v;
}

SweepSpec small_linear_sweep() {
  const LinearCso p;
  SweepSpec s;
  s.instance = "cso_linear";
  s.estimators = {EstimatorKind::rumlmc, EstimatorKind::lsgd};
  s.epsilons = {1e-1, 3e-2, 1e-2};
  s.seeds = 5;
  s.budget = 1e6;
  s.x1 = Vector::Constant(2, 1.0);
  s.mu = p.strong_convexity();
  s.smoothness = p.smoothness();
  s.optimum = p.objective(p.minimizer());
  s.root_seed = 17;
  return s;
}

}  // namespace

TEST_CASE("rate fit on exact geometric data") {
  const auto fit = fit_rate("bias", range(0, 5), {1, 0.5, 0.25, 0.125, 0.0625, 0.03125});
  CHECK(fit.slope == Approx(-1.0).margin(1e-12));
  CHECK(fit.intercept == Approx(0.0).margin(1e-12));
  CHECK(fit.residual < 1e-12);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.in_band({-1.3, -0.7}));
  CHECK_FALSE(fit.in_band({-2.3, -1.7}));
  const auto again = fit_rate("bias", range(0, 5), {1, 0.5, 0.25, 0.125, 0.0625, 0.03125});
  CHECK(again.slope == fit.slope);
  CHECK(fit.table().rows().size() == 6);
}

TEST_CASE("rate fit edge cases") {
  CHECK(kind_of([] { fit_rate("variance", {1, 2, 3}, {1, 1, 1}); }) == ErrorKind::insufficient_data);
  const auto zero = fit_rate("bias", range(0, 4), {0, 0, 0, 0, 0});
  CHECK(zero.degenerate);
  CHECK_FALSE(zero.in_band({-kInf, kInf}));
  const auto partial = fit_rate("bias", range(0, 4), {1, 0.5, 0, 0.125, 0.0625});
  CHECK_FALSE(partial.degenerate);
  CHECK(partial.slope == Approx(-1.0).margin(1e-12));
}

TEST_CASE("bias probes from closed forms") {
  const LinearCso lin;
  const Vector x = (Vector(2) << 0.5, 1.0).finished();
  const auto fl = probe_bias(lin, x, range(1, 8));
  CHECK(fl.slope == Approx(-1.0).margin(1e-10));

  // a^T x = c0 would make the gap vanish by symmetry; probe off that line.
  const HolderCso toy;
  const auto ft = probe_bias(toy, (Vector(2) << 0.3, -0.2).finished(), range(2, 9));
  CHECK(ft.in_band({-1.3, -0.7}));

  const QuadraticProblem q(2, 1.0, 1.0);
  const auto fq = probe_bias(q, x, range(0, 5));
  CHECK(fq.degenerate);
}

TEST_CASE("variance probe") {
  const LinearCso lin;
  Rng rng = make_stream(3);
  const Vector x = (Vector(2) << 0.5, 1.0).finished();
  const auto f = probe_variance(lin, x, range(2, 6), 4000, rng);
  CHECK(f.in_band({-2.3, -1.7}));
  REQUIRE(f.h_variance.size() == 5);
  for (double v : f.h_variance) CHECK(v <= f.declared_sigma_sq);

  const QuadraticProblem q(2, 1.0, 1.0);
  CHECK(probe_variance(q, x, range(1, 5), 100, rng).degenerate);
  CHECK(kind_of([&] { probe_variance(q, x, range(1, 5), 1, rng); }) == ErrorKind::invalid_input);
}

TEST_CASE("sweep invariants") {
  const LinearCso p;
  const SweepSpec spec = small_linear_sweep();
  const SweepResult r = run_sweep(p, spec);
  REQUIRE(r.cells.size() == 2 * 3 * 5);

  // Crossing cost is nonincreasing in epsilon within one seed and estimator.
  for (auto e : spec.estimators)
    for (int s = 0; s < spec.seeds; ++s) {
      double prev = 0.0;
      for (double eps : spec.epsilons)
        for (const auto& c : r.cells)
          if (c.estimator == e && c.seed == s && c.epsilon == eps) {
            CHECK(c.cost >= prev * (1 - 1e-15));  // epsilons are decreasing
            prev = c.cost;
          }
    }
  for (const auto& c : r.cells) CHECK(c.status == CellStatus::crossed);
  REQUIRE(r.slopes.at(EstimatorKind::rumlmc).has_value());

  SweepSpec threaded = spec;
  threaded.jobs = 2;
  const SweepResult r2 = run_sweep(p, threaded);
  for (std::size_t i = 0; i < r.cells.size(); ++i) CHECK(r.cells[i].cost == r2.cells[i].cost);
  CHECK(r.slopes.at(EstimatorKind::lsgd)->slope == r2.slopes.at(EstimatorKind::lsgd)->slope);

  const auto table = r.table();
  CHECK(table.header() == std::vector<std::string>{"instance", "estimator", "epsilon", "seed", "cost_at_crossing",
                                                   "censored", "final_gap", "wall_ms"});
  CHECK(table.rows().size() == r.cells.size());
}

TEST_CASE("sweep edge cases") {
  const LinearCso p;
  SweepSpec one = small_linear_sweep();
  one.epsilons = {1e-1};
  const auto r = run_sweep(p, one);
  CHECK_FALSE(r.slopes.at(EstimatorKind::rumlmc).has_value());
  CHECK(std::isfinite(r.median_cost.at(EstimatorKind::rumlmc)[0]));

  SweepSpec empty = small_linear_sweep();
  empty.estimators.clear();
  CHECK(kind_of([&] { run_sweep(p, empty); }) == ErrorKind::invalid_input);
  SweepSpec unsorted = small_linear_sweep();
  unsorted.epsilons = {1e-2, 1e-1};
  CHECK(kind_of([&] { run_sweep(p, unsorted); }) == ErrorKind::invalid_input);

  // b = c: unbiased cells are recorded as inapplicable, never run.
  const HolderCso toy;
  SweepSpec ru = small_linear_sweep();
  ru.estimators = {EstimatorKind::rrmlmc};
  ru.epsilons = {1e-1, 3e-2};
  const auto rr = run_sweep(toy, ru);
  for (const auto& c : rr.cells) {
    CHECK(c.status == CellStatus::inapplicable);
    CHECK(c.censored());
  }

  // A budget too small to cross gives censored cells at the budget value.
  SweepSpec poor = small_linear_sweep();
  poor.estimators = {EstimatorKind::lsgd};
  poor.epsilons = {1e-3};
  poor.budget = 5000;
  for (const auto& c : run_sweep(p, poor).cells) {
    CHECK(c.status == CellStatus::censored);
    CHECK(c.cost == 5000);
  }
}

TEST_CASE("paired comparison") {
  const LinearCso p;
  const Estimator rt({EstimatorKind::rtmlmc, 8, 1, 1.0, false}, p.meta());
  const Arm a{rt, StepSchedule::strongly_convex(p.strong_convexity(), p.smoothness()), std::nullopt, 100000, 1e6};
  const double fstar = p.objective(p.minimizer());
  auto target = [&](const Vector& x) { return p.objective(x) - fstar <= 1e-2; };
  const auto self = paired_compare(p, a, a, Vector::Ones(2), target, 5, 3);
  for (double r : self.ratio) CHECK(r == 1.0);
  CHECK(self.median_ratio == 1.0);
  CHECK(self.wins_a == 0);

  const Estimator lsgd({EstimatorKind::lsgd, 8, 1, 1.0, false}, p.meta());
  const Arm b{lsgd, a.schedule, std::nullopt, 100000, 1e6};
  const auto cmp = paired_compare(p, a, b, Vector::Ones(2), target, 5, 3);
  CHECK(cmp.median_ratio > 1.0);
  CHECK(cmp.table().rows().size() == 5);
}

TEST_CASE("grid search") {
  QueueParams zero;
  zero.staffing_cost = 0.0;
  zero.revenue_weight = 0.0;
  const auto g = grid_search(QueuePricing(zero), 0.05);
  CHECK(g.mu == Approx(10.0));
  CHECK(g.price == Approx(10.0));
  CHECK(kind_of([] { grid_search(QueuePricing{}, 0.0); }) == ErrorKind::invalid_input);

  const QueuePricing q;
  const auto fine = grid_search(q, 0.01);
  const auto coarse = grid_search(q, 0.02);
  CHECK(std::abs(fine.value - coarse.value) < 1e-3);
  CHECK(fine.skipped == 0);
  const Vector xs = (Vector(2) << fine.mu, fine.price).finished();
  CHECK(q.gradient(xs).norm() < 0.05);
}
