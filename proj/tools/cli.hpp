#pragma once

#include "nebp/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nebp::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kValidation = 2,
  kNumerical = 3,
};

struct SimulateArgs {
  std::optional<std::string> config;
  std::uint64_t seed = 1;
  std::string out;
};

struct TrackArgs {
  std::string mode = "bp";
  std::vector<std::string> scenarios;
  std::optional<std::string> checkpoint;
  std::optional<std::string> config;
  std::uint64_t seed = 1;
  std::string out;  // file for one scenario, directory for several
  int jobs = 1;
  bool debug_corrections = false;
};

struct TrainArgs {
  std::vector<std::string> scenarios;  // paths or glob patterns
  std::optional<std::string> config;
  std::uint64_t seed = 1;
  std::string out;
  int jobs = 1;
};

struct EvalArgs {
  std::string tracks;
  std::string scenario;
  std::optional<std::string> config;
  std::uint64_t seed = 1;
  std::string out;
};

struct OracleArgs {
  std::vector<std::string> sizes;  // "IxJ"
  int trials = 500;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& log);
int cmd_track(const TrackArgs& args, std::ostream& log);
int cmd_train(const TrainArgs& args, std::ostream& log);
int cmd_eval(const EvalArgs& args, std::ostream& log);
int cmd_oracle_check(const OracleArgs& args, std::ostream& log);
int cmd_default_config(const std::string& out, std::ostream& log);

/// Parses argv and dispatches; maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nebp::cli
