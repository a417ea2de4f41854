#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "optimizers.hpp"
#include "oracle.hpp"
#include "problems/queue.hpp"
#include "problems/sinkhorn.hpp"
#include "problems/ubsr.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace mlmcgrad {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Accepted slope range; use -inf or +inf for one-sided bounds.
struct Band {
  double lo = -kInf;
  double hi = kInf;
  bool contains(double v) const { return std::isfinite(v) && v >= lo && v <= hi; }
};

struct RateFit {
  std::string statistic;
  std::vector<int> levels;
  std::vector<double> values;
  std::vector<double> log2_values;
  double slope = kNaN;
  double intercept = kNaN;
  double residual = kNaN;  // root-mean-square residual of the log2 fit
  bool degenerate = false;  // fewer than four positive finite values
  std::vector<double> h_variance;  // variance probes: trace Var(h^l) per level
  double declared_sigma_sq = kNaN;

  bool in_band(const Band& band) const { return !degenerate && band.contains(slope); }

  CsvTable table() const {
    CsvTable t({"level", "statistic", "log2_value"});
    for (std::size_t i = 0; i < levels.size(); ++i)
      t.add_row({std::to_string(levels[i]), statistic, format_double(log2_values[i])});
    return t;
  }
};

// Least-squares slope of log2(value) on level over the positive finite values.
inline RateFit fit_rate(std::string statistic, std::vector<int> levels, std::vector<double> values) {
  require(levels.size() == values.size(), ErrorKind::contract, "levels and values differ in length");
  if (levels.size() < 4) fail(ErrorKind::insufficient_data, "a rate fit needs at least four levels");
  RateFit fit;
  fit.statistic = std::move(statistic);
  fit.levels = std::move(levels);
  fit.values = std::move(values);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < fit.values.size(); ++i) {
    const double v = fit.values[i];
    fit.log2_values.push_back(v > 0.0 ? std::log2(v) : -kInf);
    if (std::isfinite(v) && v > 0.0) {
      xs.push_back(fit.levels[i]);
      ys.push_back(std::log2(v));
    }
  }
  if (xs.size() < 4) {
    fit.degenerate = true;
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// |grad F^l(x) - grad F(x)| per level from the instance's closed forms.
template <BiasedOracle P>
RateFit probe_bias(const P& problem, const Vector& x, const std::vector<int>& levels) {
  std::vector<double> v;
  const auto full = truth::gradient(problem, x);
  require(full.has_value(), ErrorKind::unsupported, "bias probe needs a closed-form gradient");
  for (int l : levels) {
    const auto g = truth::level_gradient(problem, x, l);
    require(g.has_value(), ErrorKind::unsupported, "bias probe needs closed-form level gradients");
    v.push_back((*g - *full).norm());
  }
  return fit_rate("bias", levels, v);
}

// Trace of the covariance of H^l (and of h^l) per level.
template <BiasedOracle P>
RateFit probe_variance(const P& problem, const Vector& x, const std::vector<int>& levels, std::size_t replications,
                       Rng& rng) {
  require(replications >= 2, ErrorKind::invalid_input, "variance probe needs at least two replications");
  std::vector<double> vH, vh;
  for (int l : levels) {
    Vector mH = Vector::Zero(x.size()), sH = Vector::Zero(x.size());
    Vector mh = Vector::Zero(x.size()), sh = Vector::Zero(x.size());
    for (std::size_t i = 1; i <= replications; ++i) {
      const OracleOutput o = query(problem, l, x, rng);
      const Vector dH = o.H - mH;
      mH += dH / static_cast<double>(i);
      sH += dH.cwiseProduct(o.H - mH);
      const Vector dh = o.h - mh;
      mh += dh / static_cast<double>(i);
      sh += dh.cwiseProduct(o.h - mh);
    }
    vH.push_back(sH.sum() / static_cast<double>(replications - 1));
    vh.push_back(sh.sum() / static_cast<double>(replications - 1));
  }
  RateFit fit = fit_rate("variance", levels, vH);
  fit.h_variance = std::move(vh);
  fit.declared_sigma_sq = problem.meta().sigma_sq;
  return fit;
}

// |E t_l - SR| for the n = 2^l shortfall estimator; level l uses
// reps_per_unit * 2^l replications so the standard error shrinks with the bias.
inline RateFit probe_shortfall_bias(const ShortfallRisk& problem, const Vector& theta, const std::vector<int>& levels,
                                    std::size_t reps_per_unit, Rng& rng) {
  const double truth = problem.objective(theta);
  std::vector<double> v;
  for (int l : levels) {
    const std::size_t n = std::size_t{1} << l;
    const std::size_t reps = reps_per_unit << l;
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const std::vector<double> pos = problem.draw_positions(theta, n, rng);
      sum += problem.sr_estimate(pos);
    }
    v.push_back(std::abs(sum / static_cast<double>(reps) - truth));
  }
  return fit_rate("bias", levels, v);
}

// |E F^l_i - F_i| on random data points, with the sample-mean loss as a
// control variate (its expectation is known in closed form).
inline RateFit probe_sinkhorn_bias(const SinkhornDro& problem, const Vector& x, const std::vector<int>& levels,
                                   std::size_t reps_per_unit, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, static_cast<Eigen::Index>(problem.size()) - 1);
  std::vector<double> v;
  for (int l : levels) {
    const std::size_t n = std::size_t{1} << l;
    const std::size_t reps = reps_per_unit << l;
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const Eigen::Index i = pick(rng);
      const auto s = problem.inner_stats(i, n, x, rng);
      sum += (s.smoothed - s.mean_loss) - (problem.datum_objective(i, x) - problem.datum_mean_loss(i, x));
    }
    v.push_back(std::abs(sum / static_cast<double>(reps)));
  }
  return fit_rate("bias", levels, v);
}

// Slope of log(cost) on log(epsilon).
struct SlopeFit {
  double slope = kNaN;
  double intercept = kNaN;
  std::size_t points = 0;
};

inline std::optional<SlopeFit> fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0 && y[i] > 0 && std::isfinite(x[i]) && std::isfinite(y[i]))
      lx.push_back(std::log(x[i])), ly.push_back(std::log(y[i]));
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  if (sxx == 0.0) return std::nullopt;
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = lx.size();
  return f;
}

// Mean of the most recent ceil(n/2) of n pushed values. Crossing tests on this
// mean instead of the latest value, so a noisy path that brushes the target
// once does not count as having reached it.
class TailAverage {
 public:
  void push(double v) { prefix_.push_back(prefix_.back() + v); }
  std::size_t size() const { return prefix_.size() - 1; }
  double mean() const {
    const std::size_t n = size();
    if (n == 0) return kNaN;
    const std::size_t skip = n / 2;
    return (prefix_[n] - prefix_[skip]) / static_cast<double>(n - skip);
  }

 private:
  std::vector<double> prefix_{0.0};
};

struct SweepSpec {
  std::string instance = "instance";
  std::vector<EstimatorKind> estimators;
  std::vector<double> epsilons;  // strictly decreasing
  int seeds = 5;
  double budget = 1e8;
  std::size_t max_iterations = 10'000'000;
  std::uint64_t root_seed = 0;
  ConvexityClass convexity = ConvexityClass::strongly_convex;
  Vector x1;
  double mu = 1.0;          // strong convexity constant for the schedules
  double smoothness = 1.0;  // S_F
  double optimum = 0.0;     // F(x*) for gap-based crossing
  bool alt_schedule = false;  // 2/(mu(t + 2S_F/mu - 1)) instead of 1/(mu(t + S_F^2/mu^2))
  double vmlmc_scale = 1.0;   // N = vmlmc_scale / epsilon
  std::optional<double> constant_step;  // overrides every schedule
  bool tail_average = true;  // cross on TailAverage of the gap rather than the latest gap
  int jobs = 1;

  void validate() const {
    require(!estimators.empty(), ErrorKind::invalid_input, "sweep needs at least one estimator");
    require(!epsilons.empty(), ErrorKind::invalid_input, "sweep needs at least one epsilon");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      require(epsilons[i] > 0.0, ErrorKind::invalid_input, "epsilons must be positive");
      require(i == 0 || epsilons[i] < epsilons[i - 1], ErrorKind::invalid_input,
              "epsilon grid must be strictly decreasing");
    }
    require(seeds >= 5, ErrorKind::invalid_input, "sweep needs at least five seeds per cell");
    require(budget > 0.0, ErrorKind::invalid_input, "budget must be positive");
    require(x1.size() >= 1, ErrorKind::invalid_input, "sweep needs a start point");
  }
};

enum class CellStatus { crossed, censored, inapplicable, diverged };

struct SweepCell {
  EstimatorKind estimator = EstimatorKind::rtmlmc;
  double epsilon = 0.0;
  int seed = 0;
  CellStatus status = CellStatus::censored;
  double cost = kNaN;      // reported crossing cost, or the budget when censored
  double raw_cost = kNaN;  // the cell's own first-crossing cost
  std::size_t iterations = 0;  // iterations of the cell's own run at its crossing
  double final_gap = kNaN;
  double wall_ms = 0.0;
  int level = -1;

  bool censored() const { return status != CellStatus::crossed; }
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepCell> cells;
  std::map<EstimatorKind, std::vector<double>> median_cost;  // per epsilon, NaN if censored
  std::map<EstimatorKind, std::vector<double>> median_iterations;
  std::map<EstimatorKind, std::optional<SlopeFit>> slopes;

  CsvTable table() const {
    CsvTable t({"instance", "estimator", "epsilon", "seed", "cost_at_crossing", "censored", "final_gap", "wall_ms"});
    for (const auto& c : cells)
      t.add_row({spec.instance, std::string(to_string(c.estimator)), format_double(c.epsilon), std::to_string(c.seed),
                 format_double(c.cost), c.censored() ? "1" : "0", format_double(c.final_gap),
                 format_double(c.wall_ms)});
    return t;
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end(), [](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return a < b;
  });
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs `count` independent jobs on `jobs` threads; job i writes only slot i.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(jobs, static_cast<int>(count)); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Executes every (estimator, epsilon, seed) cell with the step sizes, levels
// and batch sizes prescribed for the convexity class, and records the cost at
// which ground truth first certifies the target (gap <= eps, or
// |grad F|^2 <= eps^2 for nonconvex; tail-averaged unless disabled). Within one
// estimator and seed, a cell's reported cost is the running maximum of the
// crossed costs from the coarsest epsilon down to its own, so the reported cost
// is nonincreasing in epsilon; raw_cost keeps the run's own value.
template <BiasedOracle P>
SweepResult run_sweep(const P& problem, const SweepSpec& spec) {
  spec.validate();
  const OracleMeta& meta = problem.meta();
  const std::size_t E = spec.estimators.size(), K = spec.epsilons.size(), S = static_cast<std::size_t>(spec.seeds);

  struct RunOut {
    double crossing = kInf;
    std::size_t iterations = 0;
    double final_gap = kNaN;
    double wall_ms = 0.0;
    CellStatus status = CellStatus::censored;
    int level = -1;
  };
  std::vector<RunOut> runs(E * K * S);

  auto gap_of = [&](const TrajectoryPoint& pt) {
    return spec.convexity == ConvexityClass::nonconvex ? pt.grad_sq : pt.objective - spec.optimum;
  };
  auto threshold = [&](double eps) { return spec.convexity == ConvexityClass::nonconvex ? eps * eps : eps; };

  detail::parallel_for(runs.size(), spec.jobs, [&](std::size_t idx) {
    const std::size_t e = idx / (K * S), k = (idx / S) % K, s = idx % S;
    RunOut& out = runs[idx];
    const auto start = std::chrono::steady_clock::now();
    const EstimatorKind kind = spec.estimators[e];
    const double eps = spec.epsilons[k];
    try {
      EstimatorConfig cfg;
      cfg.kind = kind;
      if (!is_unbiased_kind(kind)) cfg.L = select_level(meta, eps, spec.convexity);
      if (kind == EstimatorKind::vmlmc) cfg.N = spec.vmlmc_scale / eps;
      const Estimator est(cfg, meta);
      out.level = is_unbiased_kind(kind) ? -1 : cfg.L;

      StepSchedule schedule = StepSchedule::constant(1.0 / spec.smoothness);
      if (spec.constant_step) {
        schedule = StepSchedule::constant(*spec.constant_step);
      } else if (spec.convexity != ConvexityClass::nonconvex && kind != EstimatorKind::vmlmc) {
        if (is_unbiased_kind(kind))
          schedule = StepSchedule::strongly_convex_unbiased(spec.mu, spec.smoothness);
        else if (spec.alt_schedule)
          schedule = StepSchedule::strongly_convex_alt(spec.mu, spec.smoothness);
        else
          schedule = StepSchedule::strongly_convex(spec.mu, spec.smoothness);
      }

      RunOptions opt;
      opt.convexity = spec.convexity;
      opt.budget = spec.budget;
      TailAverage tail;
      opt.stop = [&](const Vector&, const TrajectoryPoint& pt) {
        tail.push(gap_of(pt));
        const double g = spec.tail_average ? tail.mean() : gap_of(pt);
        if (g > threshold(eps)) return false;
        out.crossing = pt.cum_cost;
        out.iterations = pt.t;
        return true;
      };
      Rng rng = make_stream(spec.root_seed, {e, k, s});
      const RunRecord rec = run_sgd(problem, est, schedule, spec.max_iterations, spec.x1, rng, opt);
      out.final_gap = gap_of(rec.trajectory.back());
      out.status = out.crossing < kInf ? CellStatus::crossed : CellStatus::censored;
    } catch (const DivergenceError&) {
      out.status = CellStatus::diverged;
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::inapplicable_estimator) out.status = CellStatus::inapplicable;
      else if (err.kind() == ErrorKind::budget_overflow) out.status = CellStatus::censored;
      else throw;
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });

  SweepResult res;
  res.spec = spec;
  std::vector<SweepCell> cells(E * K * S);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t s = 0; s < S; ++s) {
      double running = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const RunOut& own = runs[(e * K + k) * S + s];
        SweepCell& cell = cells[(e * K + k) * S + s];
        cell.estimator = spec.estimators[e];
        cell.epsilon = spec.epsilons[k];
        cell.seed = static_cast<int>(s);
        cell.status = own.status;
        cell.final_gap = own.final_gap;
        cell.wall_ms = own.wall_ms;
        cell.level = own.level;
        cell.iterations = own.iterations;
        if (own.status == CellStatus::crossed) {
          cell.raw_cost = own.crossing;
          running = std::max(running, own.crossing);
          cell.cost = running;
        } else if (own.status == CellStatus::censored) {
          cell.cost = cell.raw_cost = spec.budget;
        }
      }
    }

  for (std::size_t e = 0; e < E; ++e) {
    std::vector<double> med(K, kNaN), med_it(K, kNaN);
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> costs, iters;
      for (std::size_t s = 0; s < S; ++s) {
        const SweepCell& cell = cells[(e * K + k) * S + s];
        const bool crossed = cell.status == CellStatus::crossed;
        costs.push_back(crossed ? cell.cost : kInf);
        iters.push_back(crossed ? static_cast<double>(cell.iterations) : kInf);
        res.cells.push_back(cell);
      }
      const double m = detail::median(costs);
      med[k] = std::isfinite(m) ? m : kNaN;
      const double mi = detail::median(iters);
      med_it[k] = std::isfinite(mi) ? mi : kNaN;
    }
    res.median_cost[spec.estimators[e]] = med;
    res.median_iterations[spec.estimators[e]] = med_it;
    res.slopes[spec.estimators[e]] = fit_loglog(spec.epsilons, med);
  }
  return res;
}

// One arm of a paired comparison: an estimator plus either a step schedule
// (plain framework) or a recursive-gradient configuration.
struct Arm {
  Estimator estimator;
  std::optional<StepSchedule> schedule;
  std::optional<VRConfig> vr;
  std::size_t T = 1'000'000;
  double budget = 1e8;
  ConvexityClass convexity = ConvexityClass::strongly_convex;
};

struct ArmOutcome {
  double cost = kInf;  // first-crossing cost
  bool crossed = false;
  RunRecord record;
};

template <BiasedOracle P>
ArmOutcome run_arm(const P& problem, const Arm& arm, const Vector& x1, const std::function<bool(const Vector&)>& target,
                   Rng& rng, std::optional<double> budget_override = std::nullopt) {
  ArmOutcome out;
  RunOptions opt;
  opt.convexity = arm.convexity;
  opt.budget = budget_override ? *budget_override : arm.budget;
  opt.stop = [&](const Vector& x, const TrajectoryPoint& pt) {
    if (target(x)) {
      out.cost = pt.cum_cost;
      out.crossed = true;
      return true;
    }
    return false;
  };
  try {
    if (arm.vr) out.record = run_vr(problem, arm.estimator, *arm.vr, arm.T, x1, rng, opt);
    else out.record = run_sgd(problem, arm.estimator, *arm.schedule, arm.T, x1, rng, opt);
  } catch (const DivergenceError&) {
    out.crossed = false;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::budget_overflow) throw;
  }
  return out;
}

struct PairedSummary {
  std::vector<double> cost_a, cost_b;  // +inf when the arm did not cross
  std::vector<double> ratio;           // cost_b / cost_a, budget-capped
  double median_ratio = kNaN;
  int wins_a = 0;
  double win_rate_a = kNaN;

  CsvTable table() const {
    CsvTable t({"seed", "cost_a", "cost_b", "ratio", "a_wins"});
    for (std::size_t i = 0; i < ratio.size(); ++i)
      t.add_row({std::to_string(i), format_double(cost_a[i]), format_double(cost_b[i]), format_double(ratio[i]),
                 cost_a[i] < cost_b[i] ? "1" : "0"});
    return t;
  }
};

// Runs both arms from x1 on the same per-seed stream until `target` holds.
// A censored arm b contributes the ratio budget_b / cost_a, a lower bound; a
// censored arm a contributes 0 (or 1 when both are censored).
template <BiasedOracle P>
PairedSummary paired_compare(const P& problem, const Arm& a, const Arm& b, const Vector& x1,
                             const std::function<bool(const Vector&)>& target, int seeds, std::uint64_t root_seed) {
  require(seeds >= 1, ErrorKind::invalid_input, "paired comparison needs at least one seed");
  PairedSummary s;
  for (int i = 0; i < seeds; ++i) {
    Rng ra = make_stream(root_seed, {static_cast<std::uint64_t>(i)});
    Rng rb = make_stream(root_seed, {static_cast<std::uint64_t>(i)});
    const ArmOutcome oa = run_arm(problem, a, x1, target, ra);
    const ArmOutcome ob = run_arm(problem, b, x1, target, rb);
    s.cost_a.push_back(oa.crossed ? oa.cost : kInf);
    s.cost_b.push_back(ob.crossed ? ob.cost : kInf);
    double r;
    if (oa.crossed && ob.crossed) r = oa.cost > 0 ? ob.cost / oa.cost : (ob.cost > 0 ? kInf : 1.0);
    else if (oa.crossed) r = oa.cost > 0 ? b.budget / oa.cost : kInf;
    else r = ob.crossed ? 0.0 : 1.0;
    s.ratio.push_back(r);
    if (s.cost_a.back() < s.cost_b.back()) ++s.wins_a;
  }
  s.median_ratio = detail::median(s.ratio);
  s.win_rate_a = static_cast<double>(s.wins_a) / seeds;
  return s;
}

struct GridResult {
  double mu = kNaN;
  double price = kNaN;
  double value = kInf;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Exhaustive minimum of the closed-form queue objective over the box grid.
inline GridResult grid_search(const QueuePricing& q, double resolution) {
  require(resolution > 0.0 && std::isfinite(resolution), ErrorKind::invalid_input, "resolution must be positive");
  const QueueParams& p = q.params();
  const auto nm = static_cast<std::size_t>(std::floor((p.mu_hi - p.mu_lo) / resolution + 1e-9));
  const auto np = static_cast<std::size_t>(std::floor((p.p_hi - p.p_lo) / resolution + 1e-9));
  GridResult best;
  Vector x(2);
  for (std::size_t i = 0; i <= nm; ++i) {
    x[0] = p.mu_lo + static_cast<double>(i) * resolution;
    for (std::size_t j = 0; j <= np; ++j) {
      x[1] = p.p_lo + static_cast<double>(j) * resolution;
      if (!(q.traffic(x) < 1.0)) {
        ++best.skipped;
        continue;
      }
      const double v = q.objective(x);
      ++best.evaluated;
      if (v < best.value) {
        best.value = v;
        best.mu = x[0];
        best.price = x[1];
      }
    }
  }
  return best;
}

}  // namespace mlmcgrad
