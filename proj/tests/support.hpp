#pragma once

#include "nebp/gnn.hpp"
#include "nebp/tracker.hpp"
#include "nebp/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace nebp::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline VectorXd random_vector(Rng& rng, Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  VectorXd v(n);
  for (Index k = 0; k < n; ++k) v(k) = g(rng);
  return v;
}

/// One tracking frame: legacy POs from the previous frame plus detections,
/// some of them near a PO.
struct RandomFrame {
  TrackerState state;
  std::vector<Detection> detections;
};

inline RandomFrame random_frame(Rng& rng, const ModelParams& params, Index I, Index J,
                                Index shape_dim = 8) {
  RandomFrame f;
  f.state.frame = 3;
  for (Index i = 0; i < I; ++i) {
    PotentialObject po;
    po.state.mean << uniform(rng, -20, 20), uniform(rng, -20, 20), uniform(rng, -3, 3), uniform(rng, -3, 3);
    Mat4 a;
    for (Index k = 0; k < 16; ++k) a(k) = uniform(rng, -0.3, 0.3);
    po.state.covariance = 0.2 * Mat4::Identity() + a * a.transpose();
    po.existence = uniform(rng, 0.02, 1.0);
    po.track_id = i;
    po.lineage = Lineage::Legacy;
    po.shape = random_vector(rng, shape_dim);
    f.state.legacy.push_back(po);
  }
  f.state.next_track_id = I;
  const Mat4 F = cv_transition(params.dt);
  for (Index j = 0; j < J; ++j) {
    Detection d;
    if (I > 0 && uniform(rng, 0, 1) < 0.6) {
      const auto& src = f.state.legacy[static_cast<std::size_t>(j % I)];
      d.z = F * src.state.mean + random_vector(rng, 4, 0.7);
    } else {
      d.z << uniform(rng, -20, 20), uniform(rng, -20, 20), uniform(rng, -3, 3), uniform(rng, -3, 3);
    }
    if (!params.measure_velocity) d.z.tail<2>().setZero();
    d.score = uniform(rng, 0.05, 1.0);
    d.shape = random_vector(rng, shape_dim);
    d.frame = f.state.frame;
    f.detections.push_back(d);
  }
  return f;
}

inline GnnConfig small_gnn_config() {
  GnnConfig c;
  c.hidden = 8;
  c.motion_features = 4;
  c.shape_features = 4;
  c.descriptor_dim = 8;
  c.rounds = 3;
  return c;
}

/// Every trainable scalar of a network set, in a fixed order.
inline std::vector<double*> parameters(GnnNets& nets) {
  std::vector<double*> out;
  for (auto& net : nets.nets) {
    for (auto& l : net.layers) {
      for (Index k = 0; k < l.weight.size(); ++k) out.push_back(l.weight.data() + k);
      for (Index k = 0; k < l.bias.size(); ++k) out.push_back(l.bias.data() + k);
    }
  }
  return out;
}

inline std::vector<double> flatten(const GnnGradient& g) {
  std::vector<double> out;
  for (const auto& net : g.nets) {
    for (std::size_t l = 0; l < net.weight.size(); ++l) {
      out.insert(out.end(), net.weight[l].data(), net.weight[l].data() + net.weight[l].size());
      out.insert(out.end(), net.bias[l].data(), net.bias[l].data() + net.bias[l].size());
    }
  }
  return out;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between analytic gradients and central differences
/// of `loss` over the given scalars.
inline double max_gradient_error(const std::vector<double*>& params, const std::vector<double>& analytic,
                                 const std::function<double()>& loss, double h = 1e-6,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double& p = *params[k];
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    worst = std::max(worst, relative_error(analytic[k], (up - down) / (2.0 * h), floor));
  }
  return worst;
}

/// Rejection plus association loss of one frame as a function of the nets.
inline double frame_loss(const GnnNets& nets, const FrameContext& ctx, const PseudoGt& gt, double epsilon) {
  const CorrectionFactors c = gnn_forward(nets, ctx.prior.legacy, ctx.detections, ctx.msgs);
  return loss_rejection_logits(c.beta_logit, gt.beta_gt, epsilon) + loss_association(c.gamma, gt.gamma_gt);
}

inline PseudoGt random_labels(Rng& rng, Index I, Index J) {
  PseudoGt gt;
  gt.beta_gt = VectorXd::Zero(J);
  gt.gamma_gt = MatrixXd::Zero(I, J);
  for (Index j = 0; j < J; ++j) gt.beta_gt(j) = uniform(rng, 0, 1) < 0.5 ? 1.0 : 0.0;
  for (Index i = 0; i < I && J > 0; ++i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(J + 1));
    if (j < J) gt.gamma_gt(i, j) = 1.0;
  }
  return gt;
}

}  // namespace nebp::testing
