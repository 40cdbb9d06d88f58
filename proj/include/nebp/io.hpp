#pragma once

#include "nebp/config.hpp"
#include "nebp/gnn.hpp"
#include "nebp/metrics.hpp"
#include "nebp/nebp.hpp"
#include "nebp/sim.hpp"
#include "nebp/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nebp {

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Scenario files: JSON lines, a header record (config echo), one record per
// truth track, then one record per frame.
std::string scenario_to_jsonl(const Scenario& scenario);
Scenario scenario_from_jsonl(const std::string& text);
void write_scenario(const std::string& path, const Scenario& scenario);
Scenario read_scenario(const std::string& path);

// Track files: a header record, then one "tracks" record per frame and, when
// requested, one "diagnostics" record per frame with the correction factors.
struct TrackFile {
  std::string mode;
  TrackFrames frames;
};

struct TrackWriter {
  explicit TrackWriter(const std::string& mode, int n_frames);
  void frame(int k, const std::vector<DeclaredTrack>& tracks);
  void diagnostics(int k, const CorrectionFactors& corr);
  std::string text() const { return out_; }

 private:
  std::string out_;
};

TrackFile tracks_from_jsonl(const std::string& text);
TrackFile read_tracks(const std::string& path);

// Checkpoints: a JSON document with the network config and every layer's
// weights in row-major order.
std::string checkpoint_to_json(const GnnNets& nets);
GnnNets checkpoint_from_json(const std::string& text);
void write_checkpoint(const std::string& path, const GnnNets& nets);
GnnNets read_checkpoint(const std::string& path);

// Metric reports.
std::string report_to_json(const MetricReport& report, const EvalConfig& config);
std::string report_to_csv(const MetricReport& report);

// Training log, one row per step.
std::string training_log_csv(const std::vector<StepLoss>& log);

struct RunManifest {
  std::string command;
  std::string config;  // config text snapshot
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string code_version;
  double duration_s = 0.0;
};

std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const std::string& path, const RunManifest& manifest);

std::string code_version();

}  // namespace nebp
