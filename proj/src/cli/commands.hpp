#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "cli/config.hpp"
#include "mlmcgrad/any_problem.hpp"
#include "mlmcgrad/bench.hpp"
#include "mlmcgrad/errors.hpp"

namespace mlmcgrad::cli {

// Stable exit-code taxonomy.
enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitParse = 2,  // malformed config, bad flags, invalid input
  kExitDivergence = 3,
  kExitInapplicable = 4,
  kExitBudgetOverflow = 5,
  kExitLevelOverflow = 6,
  kExitAssertion = 7,  // --assert band check failed
  kExitDomain = 8,     // any other library error
};

int exit_code_for(ErrorKind kind);

struct Options {
  std::string command;  // run | probe | sweep | grid
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  int jobs = 1;
  bool assert_bands = false;
  std::string preset;  // table1-sc | queue-f2
  bool force = false;
  // probe overrides
  std::optional<std::string> probe_kind;
  std::optional<std::string> instance;
};

// Reference constants an instance can supply; empty when it has none.
struct InstanceInfo {
  AnyProblem problem;
  std::optional<double> mu;
  std::optional<double> smoothness;
  std::optional<double> optimum;  // F(x*)
  Vector default_x1;
  Vector probe_point;
};

InstanceInfo make_instance(const InstanceBlock& block);

// Encoded slope bands, or nullopt when none is declared for the pair.
std::optional<Band> probe_band(const std::string& statistic, const std::string& instance);
std::optional<Band> sweep_band(const std::string& instance, EstimatorKind kind);

// Output directory: --out, then the config, then $MLMC_GRAD_OUT, then ./mlmc_out.
std::filesystem::path resolve_output_dir(const Options& opt, const Config& cfg);

int cmd_run(const Config& cfg, const Options& opt, std::ostream& log);
int cmd_probe(const Config& cfg, const Options& opt, std::ostream& log);
int cmd_sweep(const Config& cfg, const Options& opt, std::ostream& log);
int cmd_grid(const Config& cfg, const Options& opt, std::ostream& log);

// Loads the config, dispatches, and maps exceptions to exit codes.
int dispatch(const Options& opt, std::ostream& log, std::ostream& err);

// Full command line entry point.
int main_entry(int argc, char** argv);

}  // namespace mlmcgrad::cli
