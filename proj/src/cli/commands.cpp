#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mlmcgrad/csv.hpp"
#include "mlmcgrad/optimizers.hpp"
#include "mlmcgrad/presets.hpp"
#include "mlmcgrad/problems/cso.hpp"
#include "mlmcgrad/problems/quadratic.hpp"
#include "mlmcgrad/problems/queue.hpp"
#include "mlmcgrad/problems/sinkhorn.hpp"
#include "mlmcgrad/problems/ubsr.hpp"

namespace mlmcgrad::cli {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return kExitParse;
    case ErrorKind::divergence: return kExitDivergence;
    case ErrorKind::inapplicable_estimator: return kExitInapplicable;
    case ErrorKind::budget_overflow: return kExitBudgetOverflow;
    case ErrorKind::level_overflow: return kExitLevelOverflow;
    default: return kExitDomain;
  }
}

namespace {

Vector to_vector(const std::vector<double>& v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
  return x;
}

Vector point_or(const std::optional<std::vector<double>>& v, const Vector& fallback, int dim, const char* what) {
  if (!v) return fallback;
  require(static_cast<int>(v->size()) == dim, ErrorKind::invalid_input,
          std::string(what) + " has " + std::to_string(v->size()) + " entries, instance dimension is " +
              std::to_string(dim));
  return to_vector(*v);
}

std::vector<int> level_range(int lo, int hi) {
  std::vector<int> v;
  for (int l = lo; l <= hi; ++l) v.push_back(l);
  return v;
}

struct CheckRow {
  std::string check;
  double value;
  std::optional<Band> band;
  bool pass;
};

CsvTable summary_table(const std::vector<CheckRow>& rows) {
  CsvTable t({"check", "value", "band_lo", "band_hi", "pass"});
  for (const auto& r : rows)
    t.add_row({r.check, format_double(r.value), r.band ? format_double(r.band->lo) : "",
               r.band ? format_double(r.band->hi) : "", r.pass ? "1" : "0"});
  return t;
}

bool all_pass(const std::vector<CheckRow>& rows) {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

void write_echo(const Config& cfg, const std::filesystem::path& dir) {
  write_file_atomic(dir / "config.yaml", echo_config(cfg));
}

}  // namespace

InstanceInfo make_instance(const InstanceBlock& b) {
  if (b.kind == "cso_toy") {
    HolderCso p;
    InstanceInfo info{AnyProblem("cso_toy", p), p.strong_convexity(), p.smoothness(), p.objective(p.minimizer()),
                      Vector::Zero(2), (Vector(2) << 0.3, -0.2).finished()};
    return info;
  }
  if (b.kind == "cso_linear") {
    LinearCso p;
    return {AnyProblem("cso_linear", p), p.strong_convexity(), p.smoothness(), p.objective(p.minimizer()),
            Vector::Zero(2), (Vector(2) << 0.5, 1.0).finished()};
  }
  if (b.kind == "cso_nonconvex") {
    LinearCso p(LinearCsoParams::nonconvex_defaults());
    return {AnyProblem("cso_nonconvex", p), std::nullopt, p.smoothness(), std::nullopt,
            (Vector(2) << 2.0, 2.0).finished(), (Vector(2) << 0.5, 1.0).finished()};
  }
  if (b.kind == "sinkhorn") {
    RegressionData data = b.data.empty() ? synthetic_regression_data() : load_regression_table(b.data);
    SinkhornDro p(std::move(data), SinkhornParams{b.tau_sq, b.lambda});
    const auto d = p.meta().dim;
    return {AnyProblem("sinkhorn", std::move(p)), std::nullopt, std::nullopt, std::nullopt, Vector::Zero(d),
            Vector::Constant(d, 0.1)};
  }
  if (b.kind == "queue") {
    QueueParams qp;
    qp.service = parse_service_law(b.service);
    qp.window = parse_window_mode(b.window);
    qp.warmup = b.warmup;
    QueuePricing q(qp);
    const GridResult g = grid_search(q, 0.01);
    const Vector x1 = (Vector(2) << 9.0, 9.0).finished();
    const Vector probe = (Vector(2) << g.mu, g.price).finished();
    return {AnyProblem("queue", q), std::nullopt, std::nullopt, g.value, x1, probe};
  }
  if (b.kind == "ubsr") {
    UbsrParams up;
    up.beta = b.beta;
    up.risk_level = b.risk_level;
    ShortfallRisk p(up);
    const auto d = p.meta().dim;
    return {AnyProblem("ubsr", p), p.strong_convexity(), p.smoothness(), p.objective(p.minimizer()), Vector::Zero(d),
            (Vector(2) << 0.5, 0.5).finished()};
  }
  if (b.kind == "quadratic") {
    QuadraticProblem p(b.dim, b.curvature, b.noise_sd);
    return {AnyProblem("quadratic", p), p.strong_convexity(), p.smoothness(), 0.0, Vector::Ones(b.dim),
            Vector::Ones(b.dim)};
  }
  fail(ErrorKind::invalid_input, "unknown instance '" + b.kind + "'");
}

std::optional<Band> probe_band(const std::string& statistic, const std::string& instance) {
  if (statistic == "bias") {
    if (instance == "cso_toy" || instance == "cso_linear" || instance == "ubsr") return Band{-1.3, -0.7};
  } else if (statistic == "variance") {
    if (instance == "cso_toy" || instance == "ubsr" || instance == "queue") return Band{-1.3, -0.7};
    if (instance == "cso_linear") return Band{-2.3, -1.7};
  }
  return std::nullopt;
}

std::optional<Band> sweep_band(const std::string& instance, EstimatorKind kind) {
  if (instance == "cso_toy") {
    if (kind == EstimatorKind::rtmlmc || kind == EstimatorKind::vmlmc) return Band{-1.3, -0.7};
    if (kind == EstimatorKind::lsgd) return Band{-2.3, -1.7};
  }
  if (instance == "cso_linear" && kind == EstimatorKind::rumlmc) return Band{-1.3, -0.7};
  return std::nullopt;
}

std::filesystem::path resolve_output_dir(const Options& opt, const Config& cfg) {
  if (opt.out) return *opt.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("MLMC_GRAD_OUT"); env && *env) return env;
  return "mlmc_out";
}

int cmd_run(const Config& cfg, const Options& opt, std::ostream& log) {
  const InstanceInfo info = make_instance(cfg.instance);
  const AnyProblem& problem = info.problem;
  const OracleMeta& meta = problem.meta();
  const auto& eb = cfg.estimator;
  const auto& ob = cfg.optimizer;
  const ConvexityClass cls = parse_convexity(ob.convexity);

  EstimatorConfig ec;
  ec.kind = parse_estimator_kind(eb.kind);
  ec.force = eb.force || opt.force;
  ec.n_L = eb.n_L;
  if (!is_unbiased_kind(ec.kind)) {
    require(eb.L || eb.epsilon, ErrorKind::invalid_input, "estimator needs L or epsilon");
    ec.L = eb.L ? *eb.L : select_level(meta, *eb.epsilon, cls);
  }
  if (ec.kind == EstimatorKind::vmlmc) {
    require(eb.N || eb.epsilon, ErrorKind::invalid_input, "V-MLMC needs N or epsilon");
    ec.N = eb.N ? *eb.N : 1.0 / *eb.epsilon;
  }
  const Estimator est(ec, meta);
  const Vector x1 = point_or(ob.x1, info.default_x1, meta.dim, "optimizer.x1");

  RunOptions ro;
  ro.convexity = cls;
  ro.budget = ob.budget;
  Rng rng = make_stream(opt.seed.value_or(cfg.seed));

  const std::filesystem::path dir = resolve_output_dir(opt, cfg);
  write_echo(cfg, dir);

  RunRecord rec;
  if (ob.framework == "vr") {
    const double gamma = ob.gamma ? *ob.gamma : (info.smoothness ? 1.0 / (3.0 * *info.smoothness) : 0.0);
    require(gamma > 0.0, ErrorKind::invalid_input, "VR needs optimizer.gamma for an instance without S_F");
    const VRConfig vr{ob.D1, ob.D2, ob.Q_E, gamma};
    vr.validate(info.smoothness.value_or(0.0));
    rec = run_vr(problem, est, vr, ob.T, x1, rng, ro);
  } else {
    auto need = [](const std::optional<double>& v, const char* what) {
      require(v.has_value(), ErrorKind::invalid_input, std::string("schedule needs ") + what +
                                                           ", which this instance does not declare");
      return *v;
    };
    StepSchedule schedule = StepSchedule::constant(1.0);
    if (ob.schedule == "constant") {
      schedule = StepSchedule::constant(*ob.step);
    } else if (ob.schedule == "inverse-sqrt") {
      Rng pilot = make_stream(opt.seed.value_or(cfg.seed), {1});
      schedule = StepSchedule::inverse_sqrt(pilot_variance(problem, est, x1, pilot), ob.T);
    } else {
      const double mu = need(info.mu, "mu"), S = need(info.smoothness, "S_F");
      if (ob.schedule == "strongly-convex") schedule = StepSchedule::strongly_convex(mu, S);
      else if (ob.schedule == "strongly-convex-alt") schedule = StepSchedule::strongly_convex_alt(mu, S);
      else schedule = StepSchedule::strongly_convex_unbiased(mu, S);
    }
    rec = run_sgd(problem, est, schedule, ob.T, x1, rng, ro);
  }

  CsvTable traj({"t", "cum_cost", "objective", "grad_sq"});
  for (const auto& pt : rec.trajectory)
    traj.add_row({std::to_string(pt.t), format_double(pt.cum_cost), format_double(pt.objective),
                  format_double(pt.grad_sq)});
  traj.write(dir / "trajectory.csv");

  log << "iterations " << rec.iterations << ", total cost " << format_double(rec.total_cost)
      << (rec.budget_exhausted ? " (budget reached)" : "") << "\n";
  log << "output x = [";
  for (Eigen::Index i = 0; i < rec.output.size(); ++i) log << (i ? ", " : "") << format_double(rec.output[i]);
  log << "]\n";
  return kExitOk;
}

int cmd_probe(const Config& cfg, const Options& opt, std::ostream& log) {
  InstanceBlock ib = cfg.instance;
  if (opt.instance) ib.kind = *opt.instance;
  const InstanceInfo info = make_instance(ib);
  const std::string kind = opt.probe_kind.value_or(cfg.probe.kind);
  require(kind == "bias" || kind == "variance", ErrorKind::invalid_input, "probe kind must be bias or variance");
  const Vector x = point_or(cfg.probe.x, info.probe_point, info.problem.meta().dim, "probe.x");
  const std::vector<int> levels = level_range(cfg.probe.level_lo, cfg.probe.level_hi);
  Rng rng = make_stream(opt.seed.value_or(cfg.seed));

  RateFit fit;
  if (kind == "variance") {
    fit = probe_variance(info.problem, x, levels, cfg.probe.replications, rng);
  } else if (const auto* sr = info.problem.as<ShortfallRisk>()) {
    fit = probe_shortfall_bias(*sr, x, levels, 400, rng);
  } else if (const auto* dro = info.problem.as<SinkhornDro>()) {
    fit = probe_sinkhorn_bias(*dro, x, levels, 50, rng);
  } else {
    fit = probe_bias(info.problem, x, levels);
  }

  const std::filesystem::path dir = resolve_output_dir(opt, cfg);
  write_echo(cfg, dir);
  fit.table().write(dir / ("probe_" + kind + ".csv"));
  const auto band = probe_band(kind, ib.kind);
  const bool ok = !fit.degenerate && (!band || fit.in_band(*band));
  summary_table({{kind + "_slope", fit.degenerate ? kNaN : fit.slope, band, ok}}).write(dir / "summary.csv");

  log << kind << " slope " << (fit.degenerate ? std::string("degenerate") : format_double(fit.slope));
  if (band) log << " band [" << format_double(band->lo) << ", " << format_double(band->hi) << "]";
  log << "\n";
  if (opt.assert_bands && band && !ok) return kExitAssertion;
  return kExitOk;
}

namespace {

SweepSpec spec_from_config(const Config& cfg, const InstanceInfo& info, const Options& opt) {
  const auto& sb = cfg.sweep;
  SweepSpec s;
  s.instance = cfg.instance.kind;
  for (const auto& e : sb.estimators) s.estimators.push_back(parse_estimator_kind(e));
  s.epsilons = sb.epsilons;
  s.seeds = sb.seeds;
  s.budget = sb.budget;
  s.root_seed = opt.seed.value_or(cfg.seed);
  s.convexity = parse_convexity(cfg.optimizer.convexity);
  s.x1 = point_or(sb.x1, info.default_x1, info.problem.meta().dim, "sweep.x1");
  if (s.convexity != ConvexityClass::nonconvex) {
    require(info.mu && info.smoothness && info.optimum, ErrorKind::unsupported,
            "a gap-based sweep needs mu, S_F and F(x*) for instance " + cfg.instance.kind);
    s.mu = *info.mu;
    s.optimum = *info.optimum;
  }
  require(info.smoothness.has_value() || sb.constant_step, ErrorKind::unsupported,
          "sweep needs S_F or sweep.constant_step");
  s.smoothness = info.smoothness.value_or(1.0);
  s.alt_schedule = sb.alt_schedule;
  s.tail_average = sb.tail_average;
  s.vmlmc_scale = sb.vmlmc_scale;
  s.constant_step = sb.constant_step;
  s.jobs = opt.jobs;
  return s;
}

void slope_rows(const SweepResult& r, std::vector<CheckRow>& rows) {
  for (auto kind : r.spec.estimators) {
    const auto& fit = r.slopes.at(kind);
    const auto band = sweep_band(r.spec.instance, kind);
    const double v = fit ? fit->slope : kNaN;
    rows.push_back({std::string(to_string(kind)) + "_slope", v, band, fit && (!band || band->contains(v))});
  }
}

CsvTable join_cells(const std::vector<const SweepResult*>& parts) {
  CsvTable all = parts.front()->table();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const CsvTable t = parts[i]->table();
    for (const auto& row : t.rows()) all.add_row(row);
  }
  return all;
}

int sweep_table1(const Options& opt, const std::filesystem::path& dir, std::ostream& log) {
  const HolderCso p;
  const std::uint64_t seed = opt.seed.value_or(0);
  SweepSpec main = presets::table1_sweep(p, seed);
  SweepSpec vm = presets::vmlmc_sweep(p, seed);
  main.jobs = vm.jobs = opt.jobs;
  const SweepResult r = run_sweep(p, main);
  const SweepResult v = run_sweep(p, vm);
  join_cells({&r, &v}).write(dir / "sweep.csv");

  std::vector<CheckRow> rows;
  slope_rows(r, rows);
  slope_rows(v, rows);
  const auto& rt = r.median_cost.at(EstimatorKind::rtmlmc);
  const auto& ls = r.median_cost.at(EstimatorKind::lsgd);
  for (std::size_t k = 0; k < main.epsilons.size(); ++k) {
    if (main.epsilons[k] > 1e-2 * (1 + 1e-12)) continue;
    rows.push_back({"rt_below_lsgd_eps_" + format_double(main.epsilons[k]), ls[k] / rt[k], Band{1.0, kInf},
                    rt[k] < ls[k]});
  }
  const auto& it = v.median_iterations.at(EstimatorKind::vmlmc);
  const double growth = it.back() / it.front();
  rows.push_back({"vmlmc_iteration_growth", growth, Band{0.0, 5.0}, growth <= 5.0});
  summary_table(rows).write(dir / "summary.csv");
  for (const auto& row : rows) log << row.check << " " << format_double(row.value) << (row.pass ? " pass" : " FAIL") << "\n";
  return opt.assert_bands && !all_pass(rows) ? kExitAssertion : kExitOk;
}

int sweep_queue(const Options& opt, const std::filesystem::path& dir, std::ostream& log) {
  const presets::QueueF2Result r = presets::run_queue_f2({}, opt.seed.value_or(0));
  CsvTable grid({"mu", "price", "value", "evaluated", "skipped"});
  grid.add_row({format_double(r.grid.mu), format_double(r.grid.price), format_double(r.grid.value),
                std::to_string(r.grid.evaluated), std::to_string(r.grid.skipped)});
  grid.write(dir / "grid.csv");
  CsvTable vr({"seed", "cost", "mu", "price", "hit"});
  for (std::size_t i = 0; i < r.vr_cost.size(); ++i)
    vr.add_row({std::to_string(i), format_double(r.vr_cost[i]), format_double(r.vr_hit[i][0]),
                format_double(r.vr_hit[i][1]), std::isfinite(r.vr_cost[i]) ? "1" : "0"});
  vr.write(dir / "vr_runs.csv");
  r.paired.table().write(dir / "paired.csv");

  const std::vector<CheckRow> rows{
      {"vr_hits_of_10", static_cast<double>(r.vr_hits), Band{8, 10}, r.vr_hits >= 8},
      {"rt_vs_lsgd_median_ratio", r.paired.median_ratio, Band{3.0, kInf}, r.paired.median_ratio >= 3.0},
  };
  summary_table(rows).write(dir / "summary.csv");
  log << "grid optimum (" << format_double(r.grid.mu) << ", " << format_double(r.grid.price) << ")\n";
  for (const auto& row : rows) log << row.check << " " << format_double(row.value) << (row.pass ? " pass" : " FAIL") << "\n";
  return opt.assert_bands && !all_pass(rows) ? kExitAssertion : kExitOk;
}

}  // namespace

int cmd_sweep(const Config& cfg, const Options& opt, std::ostream& log) {
  const std::filesystem::path dir = resolve_output_dir(opt, cfg);
  if (opt.preset == "table1-sc") return sweep_table1(opt, dir, log);
  if (opt.preset == "queue-f2") return sweep_queue(opt, dir, log);
  require(opt.preset.empty(), ErrorKind::invalid_input, "unknown preset '" + opt.preset + "'");

  const InstanceInfo info = make_instance(cfg.instance);
  const SweepSpec spec = spec_from_config(cfg, info, opt);
  write_echo(cfg, dir);
  const SweepResult r = run_sweep(info.problem, spec);
  r.table().write(dir / "sweep.csv");
  std::vector<CheckRow> rows;
  slope_rows(r, rows);
  summary_table(rows).write(dir / "summary.csv");
  for (const auto& row : rows) log << row.check << " " << format_double(row.value) << (row.pass ? " pass" : " FAIL") << "\n";
  return opt.assert_bands && !all_pass(rows) ? kExitAssertion : kExitOk;
}

int cmd_grid(const Config& cfg, const Options& opt, std::ostream& log) {
  require(cfg.instance.kind == "queue", ErrorKind::invalid_input, "grid search needs the queue instance");
  const InstanceInfo info = make_instance(cfg.instance);
  const GridResult g = grid_search(*info.problem.as<QueuePricing>(), cfg.grid.resolution);
  const std::filesystem::path dir = resolve_output_dir(opt, cfg);
  write_echo(cfg, dir);
  CsvTable t({"mu", "price", "value", "evaluated", "skipped"});
  t.add_row({format_double(g.mu), format_double(g.price), format_double(g.value), std::to_string(g.evaluated),
             std::to_string(g.skipped)});
  t.write(dir / "grid.csv");
  log << "optimum mu " << format_double(g.mu) << " price " << format_double(g.price) << " value "
      << format_double(g.value) << "\n";
  return kExitOk;
}

int dispatch(const Options& opt, std::ostream& log, std::ostream& err) {
  try {
    Config cfg;
    if (opt.config) cfg = load_config(*opt.config);
    if (!opt.preset.empty() && opt.command != "sweep") {
      err << "error: --preset applies to the sweep command\n";
      return kExitParse;
    }
    if (opt.command == "run") return cmd_run(cfg, opt, log);
    if (opt.command == "probe") return cmd_probe(cfg, opt, log);
    if (opt.command == "sweep") return cmd_sweep(cfg, opt, log);
    if (opt.command == "grid") return cmd_grid(cfg, opt, log);
    err << "error: unknown command '" << opt.command << "'\n";
    return kExitParse;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Biased-oracle stochastic optimization with multilevel Monte Carlo gradients"};
  app.require_subcommand(1, 1);
  Options opt;
  std::string config, out;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "YAML config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed (overrides the config)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", opt.jobs, "worker threads for sweep cells")->check(CLI::PositiveNumber);
    sub->add_flag("--assert", opt.assert_bands, "exit 7 when an encoded slope band fails");
    sub->add_flag("--force", opt.force, "allow RU/RR-MLMC on instances with b <= c");
  };
  std::string probe_kind, instance;
  auto* run = app.add_subcommand("run", "one optimization run; writes trajectory.csv");
  auto* probe = app.add_subcommand("probe", "bias or variance rate probe");
  auto* sweep = app.add_subcommand("sweep", "cost-to-accuracy sweep or a named preset");
  auto* grid = app.add_subcommand("grid", "exhaustive queue grid search");
  for (auto* s : {run, probe, sweep, grid}) common(s);
  probe->add_option("--kind", probe_kind, "bias | variance");
  probe->add_option("--instance", instance, "instance kind (overrides the config)");
  sweep->add_option("--preset", opt.preset, "table1-sc | queue-f2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParse;
  }
  for (auto* s : {run, probe, sweep, grid})
    if (*s) opt.command = s->get_name();
  auto* sub = app.get_subcommands().front();
  if (sub->count("--config")) opt.config = config;
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--out")) opt.out = out;
  if (!probe_kind.empty()) opt.probe_kind = probe_kind;
  if (!instance.empty()) {
    const auto& kinds = instance_kinds();
    if (std::find(kinds.begin(), kinds.end(), instance) == kinds.end()) {
      std::cerr << "parse error: --instance: unknown instance '" << instance << "'\n";
      return kExitParse;
    }
    opt.instance = instance;
  }
  return dispatch(opt, std::cout, std::cerr);
}

}  // namespace mlmcgrad::cli
