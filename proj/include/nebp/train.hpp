#pragma once

#include "nebp/gnn.hpp"
#include "nebp/nebp.hpp"
#include "nebp/sim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace nebp {

using OptionalId = std::optional<std::int64_t>;

struct PseudoGt {
  VectorXd beta_gt;   // J, {0, 1}
  MatrixXd gamma_gt;  // I x J, at most one 1 per row
  std::vector<OptionalId> measurement_ids;  // J
  std::vector<OptionalId> legacy_ids;       // I, after the keep rule
  std::vector<OptionalId> new_ids;          // J, identities handed to new POs
};

struct TrainConfig {
  double epsilon = 0.1;
  double t_dist = 2.0;
  double learning_rate = 1e-4;
  int epochs = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
};

std::vector<std::string> validate(const TrainConfig& config);

struct MeasurementLabels {
  std::vector<OptionalId> ids;
  VectorXd beta_gt;
};

/// Hungarian assignment on position distance; pairs within t_dist take the
/// ground-truth id. beta_gt(j) = 1 iff some ground-truth position is within
/// t_dist of measurement j.
MeasurementLabels label_measurements(const std::vector<TruthObject>& truth,
                                     const std::vector<Detection>& detections, double t_dist);

struct AssociationLabels {
  MatrixXd gamma_gt;
  std::vector<OptionalId> legacy_ids;
  std::vector<OptionalId> new_ids;
};

/// A legacy PO keeps its id iff its estimate is within t_dist of the
/// same-id ground truth; gamma_gt(i, j) = 1 iff PO i and measurement j share
/// an id; measurement ids claimed by no legacy PO pass to the new PO.
AssociationLabels label_associations(const std::vector<OptionalId>& previous_legacy_ids,
                                     const std::vector<OptionalId>& measurement_ids,
                                     const std::vector<Vec4>& legacy_estimates,
                                     const std::vector<TruthObject>& truth, double t_dist);

PseudoGt make_pseudo_gt(const std::vector<OptionalId>& previous_legacy_ids,
                        const std::vector<Vec4>& legacy_estimates,
                        const std::vector<TruthObject>& truth,
                        const std::vector<Detection>& detections, double t_dist);

/// -(1/J) sum_j [gt ln beta + eps (1 - gt) ln(1 - beta)]; 0 when J = 0.
double loss_rejection(const VectorXd& beta, const VectorXd& beta_gt, double epsilon);

/// -(1/(I J)) sum [gt ln sigma(gamma) + (1 - gt) ln(1 - sigma(gamma))]; 0 when I J = 0.
double loss_association(const MatrixXd& gamma, const MatrixXd& gamma_gt);

/// Rejection loss from the pre-sigmoid logits, with its gradient.
double loss_rejection_logits(const VectorXd& logits, const VectorXd& beta_gt, double epsilon,
                             VectorXd* grad = nullptr);

double loss_association_grad(const MatrixXd& gamma, const MatrixXd& gamma_gt, MatrixXd* grad);

/// Adam with bias correction over every parameter of a GnnNets.
class Adam {
 public:
  Adam(const GnnNets& nets, const TrainConfig& config);

  void step(GnnNets& nets, const GnnGradient& grad);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  GnnGradient m_, v_;
};

struct StepLoss {
  int epoch = 0;
  long step = 0;
  double l_r = 0.0;
  double l_a = 0.0;
  double total() const { return l_r + l_a; }
};

struct EpochStats {
  int epoch = 0;
  long frames = 0;
  double mean_l_r = 0.0;
  double mean_l_a = 0.0;
  double mean_total() const { return mean_l_r + mean_l_a; }
};

/// Loss and parameter gradient of one frame, with messages held fixed.
struct FrameGradient {
  StepLoss loss;
  GnnGradient grad;
  CorrectionFactors corrections;
};

FrameGradient frame_gradient(const GnnNets& nets, const FrameContext& ctx, const PseudoGt& labels,
                             const TrainConfig& config);

/// Runs the tracker through one scenario, taking an Adam step per frame.
/// The state is propagated with the enhanced tracker; labels use the
/// conventional estimates of the same frame.
void train_scenario(const Scenario& scenario, GnnNets& nets, Adam& adam, const TrainConfig& config,
                    const ModelParams& params, std::vector<StepLoss>& log, int epoch = 0);

/// One pass over the scenarios in a seeded shuffled order. Throws
/// NumericalError on a non-finite loss.
EpochStats train_epoch(const std::vector<Scenario>& scenarios, GnnNets& nets, Adam& adam,
                       const TrainConfig& config, const ModelParams& params, int epoch,
                       std::vector<StepLoss>& log);

using EpochCallback = std::function<void(const EpochStats&, const GnnNets&)>;

/// config.epochs epochs of train_epoch.
std::vector<EpochStats> train(const std::vector<Scenario>& scenarios, GnnNets& nets,
                              const TrainConfig& config, const ModelParams& params,
                              std::vector<StepLoss>& log, const EpochCallback& on_epoch = {});

}  // namespace nebp
