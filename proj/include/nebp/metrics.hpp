#pragma once

#include "nebp/sim.hpp"
#include "nebp/tracker.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace nebp {

using TrackFrames = std::vector<std::vector<DeclaredTrack>>;
using TruthFrames = std::vector<std::vector<TruthObject>>;

TruthFrames truth_frames(const Scenario& scenario);

inline constexpr double kDefaultGate = 2.0;
inline constexpr int kDefaultThresholds = 40;

struct FrameMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (estimate, truth)
  int fp = 0;
  int fn = 0;
};

/// Gated Hungarian matching on planar distance. Correspondences in
/// `previous` (truth id -> estimate id) that are still within the gate are
/// kept before the remaining objects are assigned.
FrameMatch match_frame(const std::vector<DeclaredTrack>& estimates,
                       const std::vector<TruthObject>& truth, double t_dist,
                       const std::map<std::int64_t, std::int64_t>* previous = nullptr);

struct ClearCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long ids = 0;
  long frag = 0;
  long gt = 0;  // total ground-truth objects over all frames
};

/// CLEAR counts over a sequence, using only estimates scoring >= min_score.
ClearCounts clear_metrics(const TrackFrames& tracks, const TruthFrames& truth, double t_dist,
                          double min_score = -std::numeric_limits<double>::infinity());

struct RecallRow {
  double recall = 0.0;           // grid value
  double achieved_recall = 0.0;  // recall at the chosen threshold
  double threshold = 0.0;
  bool reached = false;
  double motar = 0.0;
  long fp = 0;
  long fn = 0;
  long ids = 0;
};

struct MetricReport {
  std::optional<double> amota;  // none without ground truth
  long ids = 0;
  long frag = 0;
  long fp = 0;
  long fn = 0;
  long tp = 0;
  long gt = 0;
  std::vector<RecallRow> per_recall;
};

/// Recall sweep over r in {1/n, ..., 1}. At each r the score threshold is
/// the largest one reaching recall r; MOTAR = max(0, 1 - (IDS + FP) / TP)
/// there, and 0 where r is unreachable. AMOTA is the mean over the grid.
/// Counts outside the table are for the unthresholded output.
MetricReport amota(const TrackFrames& tracks, const TruthFrames& truth, double t_dist = kDefaultGate,
                   int n_thresholds = kDefaultThresholds);

/// Grid row with the largest MOTAR (first on ties); nullptr when empty.
const RecallRow* best_motar_row(const MetricReport& report);

/// Row of the grid recall closest to `recall`; nullptr when empty.
const RecallRow* row_at_recall(const MetricReport& report, double recall);

}  // namespace nebp
