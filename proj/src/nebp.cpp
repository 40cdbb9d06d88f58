#include "nebp/nebp.hpp"

namespace nebp {

EnhancedMessages enhance_messages(const Messages& msgs, const CorrectionFactors& corr) {
  const Index I = msgs.num_legacy();
  const Index J = msgs.num_measurements();
  if (corr.beta.size() != J || corr.gamma.rows() != I || corr.gamma.cols() != J) {
    throw ValidationError("enhance_messages: correction factors do not match the messages");
  }
  EnhancedMessages out;
  out.phi_a_tilde = msgs.phi_a;
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      out.phi_a_tilde(i, j + 1) = corr.beta(j) * msgs.phi_a(i, j + 1) + std::max(corr.gamma(i, j), 0.0);
    }
  }
  out.phi_b0_tilde = (corr.beta.array() * (msgs.phi_b0.array() - 1.0) + 1.0).matrix();
  return out;
}

MatrixXd renormalize_kappa(const MatrixXd& kappa_tilde, const MatrixXd& phi_a,
                           const MatrixXd& phi_a_tilde) {
  MatrixXd out = kappa_tilde;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      if (phi_a(i, j) >= kRatioGuard) out(i, j) *= phi_a_tilde(i, j) / phi_a(i, j);
    }
  }
  return out;
}

GnnNets neutral_nets(const GnnConfig& config, std::uint64_t seed) {
  GnnNets nets = GnnNets::create(config, seed);
  auto& rejection = nets[Net::Rejection].layers.back();
  rejection.weight.setZero();
  rejection.bias.setConstant(kNeutralBias);
  auto& association = nets[Net::Association].layers.back();
  association.weight.setZero();
  association.bias.setConstant(-kNeutralBias);
  return nets;
}

NebpStepResult nebp_finish(const FrameContext& ctx, CorrectionFactors corr,
                           const ModelParams& params, const CorrectionHook& hook) {
  if (hook) hook(corr);
  NebpStepResult res;
  res.enhanced = enhance_messages(ctx.msgs, corr);
  res.corrections = std::move(corr);
  res.enhanced_msgs = iterate_da_bp<double>(res.enhanced.phi_a_tilde, res.enhanced.phi_b0_tilde);
  const MatrixXd kappa_prime =
      renormalize_kappa(res.enhanced_msgs.kappa, ctx.msgs.phi_a, res.enhanced.phi_a_tilde);
  res.step = finish_step(ctx, kappa_prime, res.enhanced.phi_b0_tilde, res.enhanced_msgs.iota, params);
  return res;
}

NebpStepResult nebp_track_step(const TrackerState& state, const std::vector<Detection>& detections,
                               const ModelParams& params, const GnnNets& nets,
                               const ShapeProvider* shapes, const CorrectionHook& hook) {
  const FrameContext ctx = bp_stage(state, detections, params);
  CorrectionFactors corr = gnn_forward(nets, ctx.prior.legacy, ctx.detections, ctx.msgs, shapes);
  return nebp_finish(ctx, std::move(corr), params, hook);
}

}  // namespace nebp
