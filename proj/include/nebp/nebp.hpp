#pragma once

#include "nebp/gnn.hpp"
#include "nebp/tracker.hpp"

#include <functional>

namespace nebp {

struct EnhancedMessages {
  MatrixXd phi_a_tilde;   // I x (J+1), column 0 equals phi_a's
  VectorXd phi_b0_tilde;  // J
};

/// phi~_a(i, j) = beta_j phi_a(i, j) + ReLU(gamma_i(j)) for j >= 1,
/// phi~_a(i, 0) = phi_a(i, 0), phi~_b0(j) = beta_j (phi_b0(j) - 1) + 1.
/// phi_a rows are already normalized, so they enter as-is.
EnhancedMessages enhance_messages(const Messages& msgs, const CorrectionFactors& corr);

inline constexpr double kRatioGuard = 1e-12;

/// kappa'(i, j) = phi~_a(i, j) / phi_a(i, j) * kappa~(i, j); the ratio is 1
/// where phi_a(i, j) < 1e-12.
MatrixXd renormalize_kappa(const MatrixXd& kappa_tilde, const MatrixXd& phi_a,
                           const MatrixXd& phi_a_tilde);

/// Networks whose heads output beta = 1 and gamma = -kNeutralBias for any
/// input, so the enhanced tracker reproduces the conventional one.
inline constexpr double kNeutralBias = 40.0;
GnnNets neutral_nets(const GnnConfig& config, std::uint64_t seed);

/// Optional rewrite of the correction factors before they are applied.
using CorrectionHook = std::function<void(CorrectionFactors&)>;

struct NebpStepResult {
  StepResult step;            // beliefs, declarations and next state
  CorrectionFactors corrections;
  EnhancedMessages enhanced;
  Messages enhanced_msgs;     // DA iteration on the enhanced inputs
};

/// Second half of an enhanced frame, given the conventional BP stage and the
/// correction factors.
NebpStepResult nebp_finish(const FrameContext& ctx, CorrectionFactors corr,
                           const ModelParams& params, const CorrectionHook& hook = {});

NebpStepResult nebp_track_step(const TrackerState& state, const std::vector<Detection>& detections,
                               const ModelParams& params, const GnnNets& nets,
                               const ShapeProvider* shapes = nullptr, const CorrectionHook& hook = {});

}  // namespace nebp
