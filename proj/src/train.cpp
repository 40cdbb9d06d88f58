#include "nebp/train.hpp"

#include "nebp/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nebp {
namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double planar_distance(const Vec4& a, const Vec4& b) { return std::hypot(a(0) - b(0), a(1) - b(1)); }

template <typename F>
void for_each_param(GnnNets& nets, GnnGradient& a, GnnGradient& b, const GnnGradient& g, F&& f) {
  for (std::size_t n = 0; n < kNetCount; ++n) {
    auto& net = nets.nets[n];
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      f(net.layers[l].weight, a.nets[n].weight[l], b.nets[n].weight[l], g.nets[n].weight[l]);
      f(net.layers[l].bias, a.nets[n].bias[l], b.nets[n].bias[l], g.nets[n].bias[l]);
    }
  }
}

}  // namespace

std::vector<std::string> validate(const TrainConfig& c) {
  std::vector<std::string> errors;
  if (!(c.epsilon > 0.0)) errors.emplace_back("epsilon must be > 0");
  if (!(c.t_dist > 0.0)) errors.emplace_back("t_dist must be > 0");
  if (!(c.learning_rate >= 0.0)) errors.emplace_back("learning_rate must be >= 0");
  if (c.epochs < 0) errors.emplace_back("epochs must be >= 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) errors.emplace_back("adam_beta1 out of range");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) errors.emplace_back("adam_beta2 out of range");
  if (!(c.adam_eps > 0.0)) errors.emplace_back("adam_eps must be > 0");
  return errors;
}

MeasurementLabels label_measurements(const std::vector<TruthObject>& truth,
                                     const std::vector<Detection>& detections, double t_dist) {
  const auto T = static_cast<Index>(truth.size());
  const auto J = static_cast<Index>(detections.size());
  MeasurementLabels out;
  out.ids.assign(detections.size(), std::nullopt);
  out.beta_gt = VectorXd::Zero(J);
  if (T == 0 || J == 0) return out;

  MatrixXd dist(T, J);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < J; ++j) {
      dist(t, j) = planar_distance(truth[static_cast<std::size_t>(t)].state,
                                   detections[static_cast<std::size_t>(j)].z);
    }
  }
  for (Index j = 0; j < J; ++j) out.beta_gt(j) = dist.col(j).minCoeff() <= t_dist ? 1.0 : 0.0;
  const auto assignment = hungarian<double>(dist);
  for (Index t = 0; t < T; ++t) {
    const Index j = assignment.row_to_col[static_cast<std::size_t>(t)];
    if (j >= 0 && dist(t, j) <= t_dist) {
      out.ids[static_cast<std::size_t>(j)] = truth[static_cast<std::size_t>(t)].id;
    }
  }
  return out;
}

AssociationLabels label_associations(const std::vector<OptionalId>& previous_legacy_ids,
                                     const std::vector<OptionalId>& measurement_ids,
                                     const std::vector<Vec4>& legacy_estimates,
                                     const std::vector<TruthObject>& truth, double t_dist) {
  if (previous_legacy_ids.size() != legacy_estimates.size()) {
    throw ValidationError("label_associations: one id per legacy estimate required");
  }
  const auto I = static_cast<Index>(previous_legacy_ids.size());
  const auto J = static_cast<Index>(measurement_ids.size());
  AssociationLabels out;
  out.gamma_gt = MatrixXd::Zero(I, J);
  out.legacy_ids.assign(previous_legacy_ids.size(), std::nullopt);
  out.new_ids = measurement_ids;

  for (Index i = 0; i < I; ++i) {
    const auto& id = previous_legacy_ids[static_cast<std::size_t>(i)];
    if (!id) continue;
    const auto it = std::find_if(truth.begin(), truth.end(),
                                 [&](const TruthObject& o) { return o.id == *id; });
    if (it == truth.end()) continue;
    if (planar_distance(legacy_estimates[static_cast<std::size_t>(i)], it->state) <= t_dist) {
      out.legacy_ids[static_cast<std::size_t>(i)] = id;
    }
  }
  for (Index j = 0; j < J; ++j) {
    const auto& mid = measurement_ids[static_cast<std::size_t>(j)];
    if (!mid) continue;
    for (Index i = 0; i < I; ++i) {
      if (out.legacy_ids[static_cast<std::size_t>(i)] == mid) {
        out.gamma_gt(i, j) = 1.0;
        out.new_ids[static_cast<std::size_t>(j)] = std::nullopt;
        break;
      }
    }
  }
  return out;
}

PseudoGt make_pseudo_gt(const std::vector<OptionalId>& previous_legacy_ids,
                        const std::vector<Vec4>& legacy_estimates,
                        const std::vector<TruthObject>& truth,
                        const std::vector<Detection>& detections, double t_dist) {
  MeasurementLabels m = label_measurements(truth, detections, t_dist);
  AssociationLabels a = label_associations(previous_legacy_ids, m.ids, legacy_estimates, truth, t_dist);
  PseudoGt gt;
  gt.beta_gt = std::move(m.beta_gt);
  gt.measurement_ids = std::move(m.ids);
  gt.gamma_gt = std::move(a.gamma_gt);
  gt.legacy_ids = std::move(a.legacy_ids);
  gt.new_ids = std::move(a.new_ids);
  return gt;
}

double loss_rejection(const VectorXd& beta, const VectorXd& beta_gt, double epsilon) {
  if (beta.size() != beta_gt.size()) throw ValidationError("loss_rejection: size mismatch");
  const Index J = beta.size();
  if (J == 0) return 0.0;
  double sum = 0.0;
  for (Index j = 0; j < J; ++j) {
    const double g = beta_gt(j);
    if (g > 0.0) sum += g * std::log(beta(j));
    if (g < 1.0) sum += epsilon * (1.0 - g) * std::log1p(-beta(j));
  }
  return -sum / static_cast<double>(J);
}

double loss_association(const MatrixXd& gamma, const MatrixXd& gamma_gt) {
  return loss_association_grad(gamma, gamma_gt, nullptr);
}

double loss_rejection_logits(const VectorXd& logits, const VectorXd& beta_gt, double epsilon,
                             VectorXd* grad) {
  if (logits.size() != beta_gt.size()) throw ValidationError("loss_rejection: size mismatch");
  const Index J = logits.size();
  if (grad) grad->setZero(J);
  if (J == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(J);
  double sum = 0.0;
  for (Index j = 0; j < J; ++j) {
    const double x = logits(j);
    const double g = beta_gt(j);
    // -ln sigma(x) = softplus(-x), -ln(1 - sigma(x)) = softplus(x)
    sum += g * softplus(-x) + epsilon * (1.0 - g) * softplus(x);
    if (grad) (*grad)(j) = inv * (-g * sigmoid(-x) + epsilon * (1.0 - g) * sigmoid(x));
  }
  return sum * inv;
}

double loss_association_grad(const MatrixXd& gamma, const MatrixXd& gamma_gt, MatrixXd* grad) {
  if (gamma.rows() != gamma_gt.rows() || gamma.cols() != gamma_gt.cols()) {
    throw ValidationError("loss_association: size mismatch");
  }
  const Index n = gamma.size();
  if (grad) grad->setZero(gamma.rows(), gamma.cols());
  if (n == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (Index c = 0; c < gamma.cols(); ++c) {
    for (Index r = 0; r < gamma.rows(); ++r) {
      const double x = gamma(r, c);
      const double g = gamma_gt(r, c);
      sum += g * softplus(-x) + (1.0 - g) * softplus(x);
      if (grad) (*grad)(r, c) = inv * (sigmoid(x) - g);
    }
  }
  return sum * inv;
}

Adam::Adam(const GnnNets& nets, const TrainConfig& config)
    : lr_(config.learning_rate),
      b1_(config.adam_beta1),
      b2_(config.adam_beta2),
      eps_(config.adam_eps),
      m_(GnnGradient::zeros_like(nets)),
      v_(GnnGradient::zeros_like(nets)) {}

void Adam::step(GnnNets& nets, const GnnGradient& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for_each_param(nets, m_, v_, grad, [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseAbs2();
    theta.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  });
}

FrameGradient frame_gradient(const GnnNets& nets, const FrameContext& ctx, const PseudoGt& labels,
                             const TrainConfig& config) {
  GnnTape tape;
  FrameGradient out;
  out.corrections = gnn_forward(nets, ctx.prior.legacy, ctx.detections, ctx.msgs, nullptr, &tape);
  VectorXd d_beta;
  MatrixXd d_gamma;
  out.loss.l_r = loss_rejection_logits(out.corrections.beta_logit, labels.beta_gt, config.epsilon, &d_beta);
  out.loss.l_a = loss_association_grad(out.corrections.gamma, labels.gamma_gt, &d_gamma);
  if (!std::isfinite(out.loss.l_r) || !std::isfinite(out.loss.l_a)) {
    throw NumericalError("non-finite training loss");
  }
  out.grad = gnn_backward(nets, tape, d_beta, d_gamma);
  return out;
}

void train_scenario(const Scenario& scenario, GnnNets& nets, Adam& adam, const TrainConfig& config,
                    const ModelParams& params, std::vector<StepLoss>& log, int epoch) {
  TrackerState state;
  std::vector<OptionalId> ids;  // pseudo identities of state.legacy
  for (int k = 0; k < scenario.n_frames(); ++k) {
    const auto& dets = scenario.frames[static_cast<std::size_t>(k)];
    const FrameContext ctx = bp_stage(state, dets, params);
    const StepResult bp = finish_step(ctx, ctx.msgs.kappa, ctx.msgs.phi_b0, ctx.msgs.iota, params);
    std::vector<Vec4> estimates;
    estimates.reserve(bp.legacy_beliefs.size());
    for (const auto& po : bp.legacy_beliefs) estimates.push_back(po.state.mean);

    const PseudoGt labels = make_pseudo_gt(ids, estimates, truth_at(scenario, k), dets, config.t_dist);
    FrameGradient fg = frame_gradient(nets, ctx, labels, config);
    fg.loss.epoch = epoch;
    fg.loss.step = adam.steps();
    log.push_back(fg.loss);

    const NebpStepResult res = nebp_finish(ctx, fg.corrections, params);
    adam.step(nets, fg.grad);

    std::vector<OptionalId> next;
    next.reserve(res.step.sources.size());
    for (const auto& src : res.step.sources) {
      next.push_back(src.lineage == Lineage::Legacy ? labels.legacy_ids[src.index]
                                                    : labels.new_ids[src.index]);
    }
    ids = std::move(next);
    state = res.step.state;
  }
}

EpochStats train_epoch(const std::vector<Scenario>& scenarios, GnnNets& nets, Adam& adam,
                       const TrainConfig& config, const ModelParams& params, int epoch,
                       std::vector<StepLoss>& log) {
  std::vector<std::size_t> order(scenarios.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t first = log.size();
  for (std::size_t s : order) train_scenario(scenarios[s], nets, adam, config, params, log, epoch);

  EpochStats stats;
  stats.epoch = epoch;
  stats.frames = static_cast<long>(log.size() - first);
  for (std::size_t n = first; n < log.size(); ++n) {
    stats.mean_l_r += log[n].l_r;
    stats.mean_l_a += log[n].l_a;
  }
  if (stats.frames > 0) {
    stats.mean_l_r /= static_cast<double>(stats.frames);
    stats.mean_l_a /= static_cast<double>(stats.frames);
  }
  return stats;
}

std::vector<EpochStats> train(const std::vector<Scenario>& scenarios, GnnNets& nets,
                              const TrainConfig& config, const ModelParams& params,
                              std::vector<StepLoss>& log, const EpochCallback& on_epoch) {
  const auto errors = validate(config);
  if (!errors.empty()) throw ValidationError("invalid train config: " + errors.front());
  Adam adam(nets, config);
  std::vector<EpochStats> stats;
  for (int e = 0; e < config.epochs; ++e) {
    stats.push_back(train_epoch(scenarios, nets, adam, config, params, e, log));
    if (on_epoch) on_epoch(stats.back(), nets);
  }
  return stats;
}

}  // namespace nebp
