#pragma once

#include "nebp/gnn.hpp"
#include "nebp/model.hpp"
#include "nebp/sim.hpp"
#include "nebp/train.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace nebp {

struct EvalConfig {
  double t_dist = 2.0;
  int n_thresholds = 40;
};

/// Everything a run can be configured with. Seeds come from the command
/// line, not from here.
struct RunConfig {
  SimConfig sim;
  ModelParams model;
  TrainConfig train;
  GnnConfig gnn;
  EvalConfig eval;
};

RunConfig default_run_config();

/// Parses `section.key = value` lines; `#` starts a comment. Every key must
/// be present exactly once and unknown keys are rejected. Throws
/// ValidationError naming the offending key or line.
RunConfig parse_config(const std::string& text);

RunConfig load_config(const std::string& path);

/// Canonical text form; parse_config(to_config_text(c)) == c.
std::string to_config_text(const RunConfig& config);

/// Applies the single run seed to every stochastic component.
void apply_seed(RunConfig& config, std::uint64_t seed);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace nebp
