#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlmcgrad::cli {

// Malformed config; what() carries "source:line:column: field: reason".
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& instance_kinds() {
  static const std::vector<std::string> kinds{"cso_toy", "cso_linear", "cso_nonconvex", "sinkhorn",
                                              "queue",   "ubsr",       "quadratic"};
  return kinds;
}

struct InstanceBlock {
  std::string kind = "cso_toy";
  // queue
  std::string service = "exponential";
  std::string window = "half";
  int warmup = 64;
  // sinkhorn; an empty path uses the built-in synthetic table
  std::string data;
  double tau_sq = 0.1;
  double lambda = 20.0;
  // ubsr
  double beta = 1.0;
  double risk_level = 0.5;
  // quadratic
  int dim = 2;
  double curvature = 1.0;
  double noise_sd = 1.0;

  bool operator==(const InstanceBlock&) const = default;
};

struct EstimatorBlock {
  std::string kind = "rt-mlmc";
  std::optional<int> L;           // explicit level; otherwise the level rule on epsilon
  std::optional<double> epsilon;  // target accuracy for the level rule and V-MLMC's N
  int n_L = 1;
  std::optional<double> N;  // V-MLMC multiplier; defaults to 1/epsilon
  bool force = false;

  bool operator==(const EstimatorBlock&) const = default;
};

struct OptimizerBlock {
  std::string framework = "sgd";  // sgd | vr
  std::string convexity = "strongly-convex";
  // strongly-convex | strongly-convex-alt | unbiased | constant | inverse-sqrt
  std::string schedule = "strongly-convex";
  std::optional<double> step;  // constant schedule
  std::size_t T = 1000;
  std::optional<double> budget;
  std::optional<std::vector<double>> x1;  // defaults to the origin, or (9, 9) for the queue
  std::size_t D1 = 8, D2 = 1, Q_E = 8;
  std::optional<double> gamma;  // defaults to 1/(3 S_F) when the instance declares S_F

  bool operator==(const OptimizerBlock&) const = default;
};

struct ProbeBlock {
  std::string kind = "variance";  // bias | variance
  std::optional<std::vector<double>> x;
  int level_lo = 2;
  int level_hi = 9;
  std::size_t replications = 10000;

  bool operator==(const ProbeBlock&) const = default;
};

struct SweepBlock {
  std::vector<std::string> estimators{"rt-mlmc", "l-sgd"};
  std::vector<double> epsilons{1e-1, 1e-2};
  int seeds = 5;
  double budget = 1e8;
  std::optional<std::vector<double>> x1;
  bool alt_schedule = false;
  bool tail_average = true;
  double vmlmc_scale = 1.0;
  std::optional<double> constant_step;

  bool operator==(const SweepBlock&) const = default;
};

struct GridBlock {
  double resolution = 0.01;

  bool operator==(const GridBlock&) const = default;
};

struct Config {
  std::uint64_t seed = 0;
  InstanceBlock instance;
  EstimatorBlock estimator;
  OptimizerBlock optimizer;
  ProbeBlock probe;
  SweepBlock sweep;
  GridBlock grid;
  std::string output_dir;

  bool operator==(const Config&) const = default;
};

Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::filesystem::path& path);

// YAML that parse_config maps back to an equal Config.
std::string echo_config(const Config& config);

}  // namespace mlmcgrad::cli
