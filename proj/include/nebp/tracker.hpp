#pragma once

#include "nebp/da.hpp"
#include "nebp/model.hpp"

#include <cstdint>
#include <vector>

namespace nebp {

struct TrackerState {
  std::vector<PotentialObject> legacy;
  int frame = 0;
  std::int64_t next_track_id = 0;
};

/// One declared object in one frame.
struct DeclaredTrack {
  int frame = 0;
  std::int64_t track_id = 0;
  Vec4 mean = Vec4::Zero();
  Vec4 covariance_diagonal = Vec4::Zero();
  double existence = 0.0;
  double score = 0.0;
};

/// Where a PO of the next-frame legacy set came from.
struct PoSource {
  Lineage lineage = Lineage::Legacy;  // Legacy: updated legacy PO, New: new PO
  std::size_t index = 0;              // index into that list
};

using Messages = DaMessages<double>;

/// Constant-velocity prediction and survival thinning of every legacy PO.
TrackerState predict(const TrackerState& state, const ModelParams& params);

/// Row-normalized association likelihoods phi_a, I x (J+1).
MatrixXd association_weights(const std::vector<PotentialObject>& legacy,
                             const std::vector<Detection>& detections, const ModelParams& params);

/// New-PO vs false-alarm ratio of one measurement under uniform priors.
double phi_b_zero(const Detection& detection, const ModelParams& params);

VectorXd phi_b_zero(const std::vector<Detection>& detections, const ModelParams& params);

/// Posterior legacy beliefs from association weights and (possibly
/// corrected) output messages kappa.
std::vector<PotentialObject> update_legacy_beliefs(const std::vector<PotentialObject>& predicted,
                                                   const std::vector<Detection>& detections,
                                                   const MatrixXd& phi_a, const MatrixXd& kappa,
                                                   const ModelParams& params);

std::vector<PotentialObject> update_legacy_beliefs(const std::vector<PotentialObject>& predicted,
                                                   const std::vector<Detection>& detections,
                                                   const Messages& msgs, const ModelParams& params);

/// One new PO per measurement; existence (phi_b0 - 1) / (phi_b0 + sum_i iota(j, i)).
std::vector<PotentialObject> init_new_po_beliefs(const std::vector<Detection>& detections,
                                                 const VectorXd& phi_b0, const MatrixXd& iota,
                                                 const ModelParams& params);

std::vector<PotentialObject> init_new_po_beliefs(const std::vector<Detection>& detections,
                                                 const Messages& msgs, const ModelParams& params);

/// Legacy score: existence plus the association-weighted mean detector
/// score; new score: existence plus its detector score.
void object_scores(std::vector<PotentialObject>& legacy, const MatrixXd& phi_a,
                   const MatrixXd& kappa, std::vector<PotentialObject>& fresh,
                   const std::vector<Detection>& detections);

struct PruneResult {
  std::vector<PotentialObject> kept;
  std::vector<PoSource> sources;       // parallel to kept
  std::vector<std::size_t> declared;   // indices into kept
};

/// Drops POs below t_pru and declares those at or above t_dec (legacy) or
/// t_dec_new (new). Declared POs without an identity get the next track id.
/// `legacy` and `fresh` are concatenated in that order.
PruneResult prune_and_declare(const std::vector<PotentialObject>& legacy,
                              const std::vector<PotentialObject>& fresh,
                              std::int64_t& next_track_id, const ModelParams& params);

/// Conventional BP stage of one frame: prediction, association likelihoods,
/// and converged DA messages.
struct FrameContext {
  TrackerState prior;      // incoming state (previous estimates)
  TrackerState predicted;  // after prediction
  std::vector<Detection> detections;
  Messages msgs;
};

FrameContext bp_stage(const TrackerState& state, const std::vector<Detection>& detections,
                      const ModelParams& params);

struct StepResult {
  TrackerState state;
  std::vector<DeclaredTrack> declared;
  Messages msgs;
  std::vector<PotentialObject> legacy_beliefs;  // before pruning
  std::vector<PotentialObject> new_beliefs;     // before pruning
  std::vector<PoSource> sources;                // parallel to state.legacy
};

/// Belief update, new-PO creation, scoring, pruning, declaration and the
/// legacy hand-over, given the messages that should drive them.
StepResult finish_step(const FrameContext& ctx, const MatrixXd& kappa, const VectorXd& phi_b0,
                       const MatrixXd& iota, const ModelParams& params);

StepResult bp_track_step(const TrackerState& state, const std::vector<Detection>& detections,
                         const ModelParams& params);

}  // namespace nebp
