#include <catch_amalgamated.hpp>

#include <cmath>

#include "mlmcgrad/optimizers.hpp"
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

// Gaussian-noise gradient oracle with no closed forms and no coupling support.
struct OpaqueNoise {
  OracleMeta m;
  OpaqueNoise() { m.dim = 2; }
  const OracleMeta& meta() const { return m; }
  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    std::normal_distribution<double> z(0.0, 1.0);
    OracleOutput o;
    o.h = x + Vector::NullaryExpr(2, [&](Eigen::Index) { return z(rng); });
    o.H = level == 0 ? o.h : Vector::Zero(2);
    o.cost = 1.0;
    return o;
  }
};

Estimator lsgd(const OracleMeta& meta, int L = 0, int n = 1) {
  return Estimator({EstimatorKind::lsgd, L, n, 1.0, false}, meta);
}

}  // namespace

TEST_CASE("plain framework on a noiseless quadratic is gradient descent") {
  const QuadraticProblem q(2, 2.0, 0.0);
  const Vector x1 = (Vector(2) << 1.0, -1.0).finished();
  Rng rng = make_stream(1);
  const auto rec = run_sgd(q, lsgd(q.meta()), StepSchedule::constant(0.25), 4, x1, rng);
  REQUIRE(rec.iterates.size() == 5);
  REQUIRE(rec.trajectory.size() == 5);
  CHECK((rec.iterates.back() - std::pow(0.5, 4) * x1).norm() < 1e-15);
  CHECK(rec.trajectory.front().t == 0);
  CHECK(rec.trajectory.front().cum_cost == 0.0);
  CHECK(rec.trajectory.back().objective == Approx(q.objective(rec.iterates.back())));
  CHECK(rec.trajectory.back().grad_sq == Approx(q.gradient(rec.iterates.back()).squaredNorm()));
  CHECK(rec.total_cost == 4.0);
  CHECK(rec.output_index == 5);
  CHECK(rec.output == rec.iterates.back());
}

TEST_CASE("non-strongly-convex output is a uniform iterate among x_1..x_T") {
  const QuadraticProblem q(1, 1.0, 0.0);
  std::vector<int> hits(6, 0);
  for (std::uint64_t s = 0; s < 3000; ++s) {
    Rng rng = make_stream(s);
    RunOptions opt;
    opt.convexity = ConvexityClass::convex;
    const auto rec = run_sgd(q, lsgd(q.meta()), StepSchedule::constant(0.1), 5, Vector::Ones(1), rng, opt);
    REQUIRE(rec.output_index >= 1);
    REQUIRE(rec.output_index <= 5);
    CHECK(rec.output == rec.iterates[rec.output_index - 1]);
    ++hits[rec.output_index];
  }
  for (int i = 1; i <= 5; ++i) CHECK(std::abs(hits[i] - 600) < 120);
}

TEST_CASE("budget law") {
  const LinearCso p;
  const Estimator rt({EstimatorKind::rtmlmc, 8, 1, 1.0, false}, p.meta());
  for (double budget : {50.0, 1000.0, 12345.0}) {
    Rng rng = make_stream(3);
    RunOptions opt;
    opt.budget = budget;
    const auto rec = run_sgd(p, rt, StepSchedule::constant(0.05), 1'000'000, Vector::Zero(2), rng, opt);
    CHECK(rec.budget_exhausted);
    CHECK(rec.total_cost <= budget);
    CHECK(rec.total_cost >= budget - rec.max_estimate_cost);
    CHECK(rec.total_cost + rec.discarded_cost > budget);
  }
  Rng rng = make_stream(3);
  RunOptions tiny;
  tiny.budget = 10.0;
  CHECK(kind_of([&] {
          run_sgd(p, lsgd(p.meta(), 6), StepSchedule::constant(0.1), 10, Vector::Zero(2), rng, tiny);
        }) == ErrorKind::budget_overflow);
}

TEST_CASE("divergence is reported with the last finite iterate") {
  const QuadraticProblem q(1, 1.0, 0.0);
  Rng rng = make_stream(1);
  try {
    run_sgd(q, lsgd(q.meta()), StepSchedule::constant(10.0), 100, Vector::Ones(1), rng);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.kind() == ErrorKind::divergence);
    CHECK(e.last_finite().norm() <= kDivergenceNorm);
    CHECK(e.iteration() == 9);  // |x_t| = 9^{t-1}; 9^9 > 1e8
  }
}

TEST_CASE("seeded runs are reproducible and stop callbacks end runs") {
  const HolderCso p;
  const Estimator rt({EstimatorKind::rtmlmc, 6, 1, 1.0, false}, p.meta());
  Rng a = make_stream(42), b = make_stream(42);
  const auto ra = run_sgd(p, rt, StepSchedule::strongly_convex(1.0, p.smoothness()), 200, Vector::Zero(2), a);
  const auto rb = run_sgd(p, rt, StepSchedule::strongly_convex(1.0, p.smoothness()), 200, Vector::Zero(2), b);
  REQUIRE(ra.iterates.size() == rb.iterates.size());
  for (std::size_t i = 0; i < ra.iterates.size(); ++i) CHECK(ra.iterates[i] == rb.iterates[i]);
  CHECK(ra.total_cost == rb.total_cost);

  RunOptions opt;
  opt.stop = [](const Vector&, const TrajectoryPoint& pt) { return pt.t == 7; };
  Rng c = make_stream(1);
  const auto rc = run_sgd(p, rt, StepSchedule::constant(0.1), 100, Vector::Zero(2), c, opt);
  CHECK(rc.stopped);
  CHECK(rc.iterations == 7);
}

TEST_CASE("recursive framework") {
  const QuadraticProblem q(2, 2.0, 0.0);
  const Vector x1 = (Vector(2) << 1.0, 2.0).finished();
  SECTION("noiseless linear gradients reduce it to gradient descent") {
    Rng rng = make_stream(2);
    const VRConfig vr{1, 1, 3, 0.25};
    const auto rec = run_vr(q, lsgd(q.meta()), vr, 6, x1, rng);
    CHECK((rec.iterates.back() - std::pow(0.5, 6) * x1).norm() < 1e-14);
    // Resets at t = 1, 4 cost 1; the other four steps cost 2 each.
    CHECK(rec.total_cost == 2 * 1 + 4 * 2);
    CHECK(rec.output_index >= 1);
    CHECK(rec.output_index <= 6);
  }
  SECTION("reset cadence") {
    Rng rng = make_stream(2);
    CostMeter meter;
    RunOptions opt;
    opt.meter = &meter;
    const auto rec = run_vr(q, lsgd(q.meta()), VRConfig{4, 2, 2, 0.1}, 5, x1, rng, opt);
    // Resets at t = 1, 3, 5 (4 queries each), corrections at t = 2, 4 (2 x 2 queries each).
    CHECK(meter.total_queries() == 3 * 4 + 2 * 4);
    CHECK(rec.total_cost == meter.total_cost());
  }
  SECTION("configuration checks") {
    CHECK(kind_of([] { VRConfig{1, 2, 1, 0.1}.validate(); }) == ErrorKind::invalid_input);
    CHECK(kind_of([] { VRConfig{1, 1, 0, 0.1}.validate(); }) == ErrorKind::invalid_input);
    CHECK(kind_of([] { VRConfig{1, 1, 1, 1.0}.validate(1.0); }) == ErrorKind::invalid_input);
    const OpaqueNoise o;
    Rng rng = make_stream(1);
    CHECK(kind_of([&] { run_vr(o, lsgd(o.meta()), VRConfig{}, 3, Vector::Zero(2), rng); }) == ErrorKind::contract);
  }
}

TEST_CASE("coupled corrections share the oracle realization") {
  // h = c x + noise: a shared realization cancels the noise in every correction,
  // so m_t - c x_t stays equal to the noise drawn at the reset.
  const QuadraticProblem q(2, 2.0, 1.0);
  const Vector x1 = (Vector(2) << 1.0, -1.0).finished();
  const double gamma = 0.1, c = 2.0;
  Rng rng = make_stream(9);
  const auto rec = run_vr(q, lsgd(q.meta()), VRConfig{1, 1, 1000, gamma}, 20, x1, rng);
  const Vector noise = (x1 - rec.iterates[1]) / gamma - c * x1;
  CHECK(noise.norm() > 1e-3);
  for (std::size_t t = 1; t + 1 < rec.iterates.size(); ++t) {
    const Vector shifted = rec.iterates[t] + noise / c;
    CHECK((rec.iterates[t + 1] + noise / c - (1 - gamma * c) * shifted).norm() < 1e-12);
  }
}

TEST_CASE("gradient-norm probe and pilot variance") {
  const QuadraticProblem q(2, 1.0, 1.0);
  Rng rng = make_stream(5);
  const Vector x = (Vector(2) << 3.0, 4.0).finished();
  const auto exact = grad_norm_probe(q, x, 10, rng);
  CHECK(exact.exact);
  CHECK(exact.value == 25.0);

  const OpaqueNoise o;
  const auto est = grad_norm_probe(o, x, 20000, rng, 0);
  CHECK_FALSE(est.exact);
  CHECK(est.value == Approx(25.0).margin(5 * est.se + 1e-9));

  const double v = pilot_variance(q, lsgd(q.meta()), x, rng, 20000);
  CHECK(v == Approx(2.0).epsilon(0.05));
}
