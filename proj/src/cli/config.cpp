#include "cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace mlmcgrad::cli {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& why) const {
    std::ostringstream os;
    os << source_;
    if (node.IsDefined() && node.Mark().line >= 0) os << ':' << node.Mark().line + 1 << ':' << node.Mark().column + 1;
    os << ": " << field << ": " << why;
    throw ParseError(os.str());
  }

  void only_keys(const YAML::Node& map, const std::string& where, std::initializer_list<const char*> allowed) const {
    if (!map.IsMap()) fail(map, where, "expected a mapping");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, where + "." + key, "unknown key");
    }
  }

  template <class T>
  void get(const YAML::Node& map, const char* key, const std::string& where, T& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    out = as<T>(n, where + "." + key);
  }

  template <class T>
  void get(const YAML::Node& map, const char* key, const std::string& where, std::optional<T>& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    if (n.IsNull()) {
      out.reset();
      return;
    }
    out = as<T>(n, where + "." + key);
  }

  template <class T>
  T as(const YAML::Node& n, const std::string& field) const {
    if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::string>>) {
      if (!n.IsSequence()) fail(n, field, "expected a list");
      T v;
      for (const auto& e : n) v.push_back(as<typename T::value_type>(e, field));
      return v;
    } else {
      if (!n.IsScalar()) fail(n, field, "expected a scalar");
      try {
        return n.as<T>();
      } catch (const YAML::Exception&) {
        fail(n, field, "cannot read '" + n.Scalar() + "'");
      }
    }
  }

 private:
  std::string source_;
};

void positive(const Reader& r, const YAML::Node& at, const std::string& field, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) r.fail(at, field, "must be positive");
}

}  // namespace

Config parse_config(const std::string& text, const std::string& source) {
  const Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": syntax: " << e.msg;
    throw ParseError(os.str());
  }
  Config c;
  if (root.IsNull()) return c;
  r.only_keys(root, "config", {"seed", "instance", "estimator", "optimizer", "probe", "sweep", "grid", "output"});
  r.get(root, "seed", "config", c.seed);

  if (const YAML::Node n = root["instance"]) {
    r.only_keys(n, "instance", {"kind", "service", "window", "warmup", "data", "tau_sq", "lambda", "beta",
                                "risk_level", "dim", "curvature", "noise_sd"});
    auto& b = c.instance;
    r.get(n, "kind", "instance", b.kind);
    const auto& kinds = instance_kinds();
    if (std::find(kinds.begin(), kinds.end(), b.kind) == kinds.end())
      r.fail(n["kind"], "instance.kind", "unknown instance '" + b.kind + "'");
    r.get(n, "service", "instance", b.service);
    r.get(n, "window", "instance", b.window);
    r.get(n, "warmup", "instance", b.warmup);
    r.get(n, "data", "instance", b.data);
    r.get(n, "tau_sq", "instance", b.tau_sq);
    r.get(n, "lambda", "instance", b.lambda);
    r.get(n, "beta", "instance", b.beta);
    r.get(n, "risk_level", "instance", b.risk_level);
    r.get(n, "dim", "instance", b.dim);
    r.get(n, "curvature", "instance", b.curvature);
    r.get(n, "noise_sd", "instance", b.noise_sd);
    for (const char* k : {"tau_sq", "lambda", "beta", "risk_level", "curvature"})
      if (n[k]) positive(r, n[k], std::string("instance.") + k, n[k].as<double>());
    if (b.warmup < 2) r.fail(n["warmup"], "instance.warmup", "must be at least 2");
    if (b.dim < 1) r.fail(n["dim"], "instance.dim", "must be at least 1");
  }

  if (const YAML::Node n = root["estimator"]) {
    r.only_keys(n, "estimator", {"kind", "L", "epsilon", "n_L", "N", "force"});
    auto& b = c.estimator;
    r.get(n, "kind", "estimator", b.kind);
    r.get(n, "L", "estimator", b.L);
    r.get(n, "epsilon", "estimator", b.epsilon);
    r.get(n, "n_L", "estimator", b.n_L);
    r.get(n, "N", "estimator", b.N);
    r.get(n, "force", "estimator", b.force);
    if (b.L && *b.L < 0) r.fail(n["L"], "estimator.L", "must be nonnegative");
    if (b.epsilon) positive(r, n["epsilon"], "estimator.epsilon", *b.epsilon);
    if (b.N) positive(r, n["N"], "estimator.N", *b.N);
    if (b.n_L < 1) r.fail(n["n_L"], "estimator.n_L", "must be at least 1");
  }

  if (const YAML::Node n = root["optimizer"]) {
    r.only_keys(n, "optimizer", {"framework", "convexity", "schedule", "step", "T", "budget", "x1", "D1", "D2",
                                 "Q_E", "gamma"});
    auto& b = c.optimizer;
    r.get(n, "framework", "optimizer", b.framework);
    if (b.framework != "sgd" && b.framework != "vr")
      r.fail(n["framework"], "optimizer.framework", "expected sgd or vr");
    r.get(n, "convexity", "optimizer", b.convexity);
    r.get(n, "schedule", "optimizer", b.schedule);
    static const std::set<std::string> schedules{"strongly-convex", "strongly-convex-alt", "unbiased", "constant",
                                                 "inverse-sqrt"};
    if (!schedules.count(b.schedule)) r.fail(n["schedule"], "optimizer.schedule", "unknown schedule");
    r.get(n, "step", "optimizer", b.step);
    r.get(n, "T", "optimizer", b.T);
    r.get(n, "budget", "optimizer", b.budget);
    r.get(n, "x1", "optimizer", b.x1);
    r.get(n, "D1", "optimizer", b.D1);
    r.get(n, "D2", "optimizer", b.D2);
    r.get(n, "Q_E", "optimizer", b.Q_E);
    r.get(n, "gamma", "optimizer", b.gamma);
    if (b.step) positive(r, n["step"], "optimizer.step", *b.step);
    if (b.budget) positive(r, n["budget"], "optimizer.budget", *b.budget);
    if (b.gamma) positive(r, n["gamma"], "optimizer.gamma", *b.gamma);
    if (b.T < 1) r.fail(n["T"], "optimizer.T", "must be at least 1");
    if (b.schedule == "constant" && !b.step) r.fail(n, "optimizer.step", "required by the constant schedule");
  }

  if (const YAML::Node n = root["probe"]) {
    r.only_keys(n, "probe", {"kind", "x", "levels", "replications"});
    auto& b = c.probe;
    r.get(n, "kind", "probe", b.kind);
    if (b.kind != "bias" && b.kind != "variance") r.fail(n["kind"], "probe.kind", "expected bias or variance");
    r.get(n, "x", "probe", b.x);
    if (const YAML::Node lv = n["levels"]) {
      const auto v = r.as<std::vector<double>>(lv, "probe.levels");
      if (v.size() != 2 || v[0] < 0 || v[1] < v[0] + 3)
        r.fail(lv, "probe.levels", "expected [lo, hi] with 0 <= lo and hi >= lo + 3");
      b.level_lo = static_cast<int>(v[0]);
      b.level_hi = static_cast<int>(v[1]);
    }
    r.get(n, "replications", "probe", b.replications);
    if (b.replications < 2) r.fail(n["replications"], "probe.replications", "must be at least 2");
  }

  if (const YAML::Node n = root["sweep"]) {
    r.only_keys(n, "sweep", {"estimators", "epsilons", "seeds", "budget", "x1", "alt_schedule", "tail_average",
                             "vmlmc_scale", "constant_step"});
    auto& b = c.sweep;
    r.get(n, "estimators", "sweep", b.estimators);
    if (b.estimators.empty()) r.fail(n["estimators"], "sweep.estimators", "must list at least one estimator");
    r.get(n, "epsilons", "sweep", b.epsilons);
    if (b.epsilons.empty()) r.fail(n["epsilons"], "sweep.epsilons", "must list at least one epsilon");
    for (std::size_t i = 0; i < b.epsilons.size(); ++i)
      if (!(b.epsilons[i] > 0.0) || (i && b.epsilons[i] >= b.epsilons[i - 1]))
        r.fail(n["epsilons"], "sweep.epsilons", "must be positive and strictly decreasing");
    r.get(n, "seeds", "sweep", b.seeds);
    if (b.seeds < 5) r.fail(n["seeds"], "sweep.seeds", "must be at least 5");
    r.get(n, "budget", "sweep", b.budget);
    positive(r, n, "sweep.budget", b.budget);
    r.get(n, "x1", "sweep", b.x1);
    r.get(n, "alt_schedule", "sweep", b.alt_schedule);
    r.get(n, "tail_average", "sweep", b.tail_average);
    r.get(n, "vmlmc_scale", "sweep", b.vmlmc_scale);
    positive(r, n, "sweep.vmlmc_scale", b.vmlmc_scale);
    r.get(n, "constant_step", "sweep", b.constant_step);
  }

  if (const YAML::Node n = root["grid"]) {
    r.only_keys(n, "grid", {"resolution"});
    r.get(n, "resolution", "grid", c.grid.resolution);
    positive(r, n, "grid.resolution", c.grid.resolution);
  }

  if (const YAML::Node n = root["output"]) {
    r.only_keys(n, "output", {"dir"});
    r.get(n, "dir", "output", c.output_dir);
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

namespace {

void emit_double(YAML::Emitter& out, double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  out << os.str();
}

void emit_list(YAML::Emitter& out, const std::vector<double>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double d : v) emit_double(out, d);
  out << YAML::EndSeq;
}

}  // namespace

std::string echo_config(const Config& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;

  const auto& i = c.instance;
  out << YAML::Key << "instance" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << i.kind;
  out << YAML::Key << "service" << YAML::Value << i.service;
  out << YAML::Key << "window" << YAML::Value << i.window;
  out << YAML::Key << "warmup" << YAML::Value << i.warmup;
  out << YAML::Key << "data" << YAML::Value << YAML::DoubleQuoted << i.data;
  out << YAML::Key << "tau_sq" << YAML::Value;
  emit_double(out, i.tau_sq);
  out << YAML::Key << "lambda" << YAML::Value;
  emit_double(out, i.lambda);
  out << YAML::Key << "beta" << YAML::Value;
  emit_double(out, i.beta);
  out << YAML::Key << "risk_level" << YAML::Value;
  emit_double(out, i.risk_level);
  out << YAML::Key << "dim" << YAML::Value << i.dim;
  out << YAML::Key << "curvature" << YAML::Value;
  emit_double(out, i.curvature);
  out << YAML::Key << "noise_sd" << YAML::Value;
  emit_double(out, i.noise_sd);
  out << YAML::EndMap;

  const auto& e = c.estimator;
  out << YAML::Key << "estimator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << e.kind;
  if (e.L) out << YAML::Key << "L" << YAML::Value << *e.L;
  if (e.epsilon) {
    out << YAML::Key << "epsilon" << YAML::Value;
    emit_double(out, *e.epsilon);
  }
  out << YAML::Key << "n_L" << YAML::Value << e.n_L;
  if (e.N) {
    out << YAML::Key << "N" << YAML::Value;
    emit_double(out, *e.N);
  }
  out << YAML::Key << "force" << YAML::Value << e.force;
  out << YAML::EndMap;

  const auto& o = c.optimizer;
  out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "framework" << YAML::Value << o.framework;
  out << YAML::Key << "convexity" << YAML::Value << o.convexity;
  out << YAML::Key << "schedule" << YAML::Value << o.schedule;
  if (o.step) {
    out << YAML::Key << "step" << YAML::Value;
    emit_double(out, *o.step);
  }
  out << YAML::Key << "T" << YAML::Value << o.T;
  if (o.budget) {
    out << YAML::Key << "budget" << YAML::Value;
    emit_double(out, *o.budget);
  }
  if (o.x1) {
    out << YAML::Key << "x1" << YAML::Value;
    emit_list(out, *o.x1);
  }
  out << YAML::Key << "D1" << YAML::Value << o.D1;
  out << YAML::Key << "D2" << YAML::Value << o.D2;
  out << YAML::Key << "Q_E" << YAML::Value << o.Q_E;
  if (o.gamma) {
    out << YAML::Key << "gamma" << YAML::Value;
    emit_double(out, *o.gamma);
  }
  out << YAML::EndMap;

  const auto& p = c.probe;
  out << YAML::Key << "probe" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << p.kind;
  if (p.x) {
    out << YAML::Key << "x" << YAML::Value;
    emit_list(out, *p.x);
  }
  out << YAML::Key << "levels" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.level_lo << p.level_hi
      << YAML::EndSeq;
  out << YAML::Key << "replications" << YAML::Value << p.replications;
  out << YAML::EndMap;

  const auto& s = c.sweep;
  out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "estimators" << YAML::Value << YAML::Flow << s.estimators;
  out << YAML::Key << "epsilons" << YAML::Value;
  emit_list(out, s.epsilons);
  out << YAML::Key << "seeds" << YAML::Value << s.seeds;
  out << YAML::Key << "budget" << YAML::Value;
  emit_double(out, s.budget);
  if (s.x1) {
    out << YAML::Key << "x1" << YAML::Value;
    emit_list(out, *s.x1);
  }
  out << YAML::Key << "alt_schedule" << YAML::Value << s.alt_schedule;
  out << YAML::Key << "tail_average" << YAML::Value << s.tail_average;
  out << YAML::Key << "vmlmc_scale" << YAML::Value;
  emit_double(out, s.vmlmc_scale);
  if (s.constant_step) {
    out << YAML::Key << "constant_step" << YAML::Value;
    emit_double(out, *s.constant_step);
  }
  out << YAML::EndMap;

  out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "resolution" << YAML::Value;
  emit_double(out, c.grid.resolution);
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dir" << YAML::Value << YAML::DoubleQuoted << c.output_dir;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace mlmcgrad::cli
