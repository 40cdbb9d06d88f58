#include "nebp/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace nebp {
namespace {

// Edge and node attributes enter the networks through this squashing; BP
// messages can span many orders of magnitude.
double squash(double x) { return std::log1p(std::clamp(x, 0.0, 1e8)); }

const ShapeProvider& default_shapes() {
  static const ShapeProvider provider;
  return provider;
}

void check_descriptor(const VectorXd& d, const GnnConfig& cfg) {
  if (d.size() != cfg.descriptor_dim) {
    throw ValidationError("shape descriptor length " + std::to_string(d.size()) + " != " +
                          std::to_string(cfg.descriptor_dim));
  }
}

VectorXd legacy_motion_input(const Vec4& x, const GnnConfig& cfg) {
  VectorXd v(4);
  v << x(0) / cfg.position_scale, x(1) / cfg.position_scale, x(2) / cfg.velocity_scale,
      x(3) / cfg.velocity_scale;
  return v;
}

VectorXd measurement_motion_input(const Detection& d, const GnnConfig& cfg) {
  VectorXd v(5);
  v << d.z(0) / cfg.position_scale, d.z(1) / cfg.position_scale, d.z(2) / cfg.velocity_scale,
      d.z(3) / cfg.velocity_scale, d.score;
  return v;
}

// Edge inputs [h_a_i; h_b_j; phi_a(i, j); attr(i, j)] in row-major (i, j) order.
MatrixXd edge_inputs(const MatrixXd& h_a, const MatrixXd& h_b, const MatrixXd& phi_a,
                     const MatrixXd& attr) {
  const Index I = h_a.cols();
  const Index J = h_b.cols();
  const Index D = h_a.rows();
  MatrixXd X(2 * D + 2, I * J);
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      const Index e = i * J + j;
      X.col(e).head(D) = h_a.col(i);
      X.col(e).segment(D, D) = h_b.col(j);
      X(2 * D, e) = phi_a(i, j + 1);
      X(2 * D + 1, e) = squash(attr(i, j));
    }
  }
  return X;
}

// Scatter edge-input gradients back onto the node embeddings.
void scatter_edge_grad(const MatrixXd& dX, Index I, Index J, Index offset, MatrixXd& dh_a,
                       MatrixXd& dh_b) {
  const Index D = dh_a.rows();
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      const Index e = offset + i * J + j;
      dh_a.col(i) += dX.col(e).head(D);
      dh_b.col(j) += dX.col(e).segment(D, D);
    }
  }
}

}  // namespace

std::string_view net_name(Net n) {
  switch (n) {
    case Net::MotionLegacy:
      return "motion_legacy";
    case Net::MotionMeasurement:
      return "motion_measurement";
    case Net::ShapeLegacy:
      return "shape_legacy";
    case Net::ShapeMeasurement:
      return "shape_measurement";
    case Net::Edge:
      return "edge";
    case Net::Node:
      return "node";
    case Net::Rejection:
      return "rejection";
    case Net::Association:
      return "association";
  }
  return "unknown";
}

namespace {

struct NetShape {
  Index in, out;
  Activation output;
};

NetShape expected_shape(Net n, const GnnConfig& c) {
  const Index D = c.embedding();
  switch (n) {
    case Net::MotionLegacy:
      return {4, c.motion_features, Activation::Identity};
    case Net::MotionMeasurement:
      return {5, c.motion_features, Activation::Identity};
    case Net::ShapeLegacy:
    case Net::ShapeMeasurement:
      return {c.descriptor_dim, c.shape_features, Activation::Identity};
    case Net::Edge:
      return {2 * D + 2, D, Activation::Identity};
    case Net::Node:
      return {2 * D + 1, D, Activation::Identity};
    case Net::Rejection:
      return {D, 1, Activation::Sigmoid};
    case Net::Association:
      return {D, 1, Activation::Identity};
  }
  return {0, 0, Activation::Identity};
}

}  // namespace

GnnNets GnnNets::create(const GnnConfig& config, std::uint64_t seed) {
  if (config.rounds < 1) throw ValidationError("gnn rounds must be >= 1");
  GnnNets g;
  g.config = config;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < kNetCount; ++k) {
    const NetShape s = expected_shape(static_cast<Net>(k), config);
    g.nets[k] = make_mlp<double>({s.in, config.hidden, s.out}, Activation::LeakyRelu, s.output, rng);
  }
  return g;
}

Index GnnNets::parameter_count() const {
  Index n = 0;
  for (const auto& net : nets) n += net.parameter_count();
  return n;
}

void validate_shapes(const GnnNets& g) {
  for (std::size_t k = 0; k < kNetCount; ++k) {
    const Net id = static_cast<Net>(k);
    const NetShape s = expected_shape(id, g.config);
    const auto& net = g.nets[k];
    const std::string name(net_name(id));
    if (net.layers.empty() || net.in_dim() != s.in || net.out_dim() != s.out) {
      throw ValidationError("network '" + name + "' has the wrong input/output shape");
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      if (layer.bias.size() != layer.weight.rows() ||
          (l > 0 && layer.weight.cols() != net.layers[l - 1].weight.rows())) {
        throw ValidationError("network '" + name + "' has inconsistent layer shapes");
      }
    }
    if (net.layers.back().activation != s.output) {
      throw ValidationError("network '" + name + "' has the wrong output activation");
    }
    if (!net.all_finite()) throw ValidationError("network '" + name + "' has non-finite parameters");
  }
}

GnnGradient GnnGradient::zeros_like(const GnnNets& g) {
  GnnGradient grad;
  for (std::size_t k = 0; k < kNetCount; ++k) grad.nets[k] = MlpGradient<double>::zeros_like(g.nets[k]);
  return grad;
}

GnnState extract_features(const GnnNets& nets, const std::vector<PotentialObject>& prior_legacy,
                          const std::vector<Detection>& detections, const ShapeProvider* shapes,
                          FeatureTape* tape) {
  const GnnConfig& cfg = nets.config;
  const ShapeProvider& provider = shapes ? *shapes : default_shapes();
  const auto I = static_cast<Index>(prior_legacy.size());
  const auto J = static_cast<Index>(detections.size());
  const Index Dm = cfg.motion_features;
  const Index Ds = cfg.shape_features;

  GnnState st;
  st.iteration = 1;
  st.h_a = MatrixXd::Zero(Dm + Ds, I);
  st.h_b = MatrixXd::Zero(Dm + Ds, J);

  MatrixXd motion_a(4, I);
  for (Index i = 0; i < I; ++i) {
    motion_a.col(i) = legacy_motion_input(prior_legacy[static_cast<std::size_t>(i)].state.mean, cfg);
  }
  MatrixXd motion_b(5, J);
  for (Index j = 0; j < J; ++j) {
    motion_b.col(j) = measurement_motion_input(detections[static_cast<std::size_t>(j)], cfg);
  }
  st.h_a.topRows(Dm) = mlp_forward(nets[Net::MotionLegacy], motion_a, tape ? &tape->motion_a : nullptr);
  st.h_b.topRows(Dm) =
      mlp_forward(nets[Net::MotionMeasurement], motion_b, tape ? &tape->motion_b : nullptr);

  std::vector<Index> shaped_a, shaped_b;
  std::vector<VectorXd> desc_a, desc_b;
  for (Index i = 0; i < I; ++i) {
    if (auto d = provider.legacy(prior_legacy[static_cast<std::size_t>(i)])) {
      check_descriptor(*d, cfg);
      shaped_a.push_back(i);
      desc_a.push_back(std::move(*d));
    }
  }
  for (Index j = 0; j < J; ++j) {
    if (auto d = provider.measurement(detections[static_cast<std::size_t>(j)])) {
      check_descriptor(*d, cfg);
      shaped_b.push_back(j);
      desc_b.push_back(std::move(*d));
    }
  }
  auto run_shapes = [&](Net net, const std::vector<VectorXd>& desc, const std::vector<Index>& cols,
                        MatrixXd& h, MlpTape<double>* t) {
    MatrixXd X(cfg.descriptor_dim, static_cast<Index>(desc.size()));
    for (std::size_t k = 0; k < desc.size(); ++k) X.col(static_cast<Index>(k)) = desc[k];
    const MatrixXd Y = mlp_forward(nets[net], X, t);
    for (std::size_t k = 0; k < cols.size(); ++k) h.col(cols[k]).tail(Ds) = Y.col(static_cast<Index>(k));
  };
  run_shapes(Net::ShapeLegacy, desc_a, shaped_a, st.h_a, tape ? &tape->shape_a : nullptr);
  run_shapes(Net::ShapeMeasurement, desc_b, shaped_b, st.h_b, tape ? &tape->shape_b : nullptr);
  if (tape) {
    tape->shaped_a = std::move(shaped_a);
    tape->shaped_b = std::move(shaped_b);
  }
  return st;
}

GnnState gnn_round(const GnnState& state, const Messages& msgs, const GnnNets& nets,
                   RoundTape* tape) {
  const Index I = state.h_a.cols();
  const Index J = state.h_b.cols();
  const Index D = state.h_a.rows();
  const Index E = I * J;
  if (msgs.num_legacy() != I || msgs.num_measurements() != J) {
    throw ValidationError("gnn_round: messages do not match the graph");
  }

  // Columns [0, E): a -> b messages, [E, 2E): b -> a messages.
  MatrixXd X(2 * D + 2, 2 * E);
  X.leftCols(E) = edge_inputs(state.h_a, state.h_b, msgs.phi_a, msgs.mu);
  X.rightCols(E) = edge_inputs(state.h_a, state.h_b, msgs.phi_a, msgs.nu);
  const MatrixXd M = mlp_forward(nets[Net::Edge], X, tape ? &tape->edge : nullptr);
  const Index Dm = M.rows();

  MatrixXd agg_a = MatrixXd::Zero(Dm, I);
  MatrixXd agg_b = MatrixXd::Zero(Dm, J);
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      agg_b.col(j) += M.col(i * J + j);
      agg_a.col(i) += M.col(E + i * J + j);
    }
  }

  MatrixXd Y(D + Dm + 1, I + J);
  for (Index i = 0; i < I; ++i) {
    Y.col(i) << state.h_a.col(i), agg_a.col(i), msgs.phi_a(i, 0);
  }
  for (Index j = 0; j < J; ++j) {
    Y.col(I + j) << state.h_b.col(j), agg_b.col(j), std::log(msgs.phi_b0(j));
  }
  const MatrixXd H = mlp_forward(nets[Net::Node], Y, tape ? &tape->node : nullptr);
  if (tape) {
    tape->h_a = state.h_a;
    tape->h_b = state.h_b;
  }
  GnnState next;
  next.h_a = H.leftCols(I);
  next.h_b = H.rightCols(J);
  next.iteration = state.iteration + 1;
  return next;
}

MatrixXd measurement_to_legacy_messages(const GnnState& state, const Messages& msgs,
                                        const GnnNets& nets, MlpTape<double>* tape) {
  return mlp_forward(nets[Net::Edge], edge_inputs(state.h_a, state.h_b, msgs.phi_a, msgs.nu), tape);
}

CorrectionFactors correction_heads(const GnnState& state, const MatrixXd& messages,
                                   const GnnNets& nets, MlpTape<double>* rejection_tape,
                                   MlpTape<double>* association_tape) {
  const Index I = state.h_a.cols();
  const Index J = state.h_b.cols();
  CorrectionFactors c;
  MlpTape<double> local;
  MlpTape<double>* rt = rejection_tape ? rejection_tape : &local;
  c.beta = mlp_forward(nets[Net::Rejection], state.h_b, rt).row(0).transpose();
  c.beta_logit = rt->pre_activations.back().row(0).transpose();
  const MatrixXd g = mlp_forward(nets[Net::Association], messages, association_tape);
  c.gamma.resize(I, J);
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) c.gamma(i, j) = g(0, i * J + j);
  }
  return c;
}

CorrectionFactors gnn_forward(const GnnNets& nets, const std::vector<PotentialObject>& prior_legacy,
                              const std::vector<Detection>& detections, const Messages& msgs,
                              const ShapeProvider* shapes, GnnTape* tape) {
  if (tape) tape->rounds.clear();
  GnnState st = extract_features(nets, prior_legacy, detections, shapes,
                                 tape ? &tape->features : nullptr);
  for (int l = 1; l < nets.config.rounds; ++l) {
    RoundTape* rt = nullptr;
    if (tape) rt = &tape->rounds.emplace_back();
    st = gnn_round(st, msgs, nets, rt);
  }
  if (st.h_a.cols() != msgs.num_legacy() || st.h_b.cols() != msgs.num_measurements()) {
    throw ValidationError("gnn_forward: messages do not match the graph");
  }
  const MatrixXd m_ba =
      measurement_to_legacy_messages(st, msgs, nets, tape ? &tape->final_edge : nullptr);
  CorrectionFactors c = correction_heads(st, m_ba, nets, tape ? &tape->rejection : nullptr,
                                         tape ? &tape->association : nullptr);
  if (tape) {
    tape->h_a_final = st.h_a;
    tape->h_b_final = st.h_b;
    tape->I = st.h_a.cols();
    tape->J = st.h_b.cols();
  }
  return c;
}

GnnGradient gnn_backward(const GnnNets& nets, const GnnTape& tape, const VectorXd& d_beta_logit,
                         const MatrixXd& d_gamma) {
  const Index I = tape.I;
  const Index J = tape.J;
  const Index E = I * J;
  const Index D = nets.config.embedding();
  GnnGradient grad = GnnGradient::zeros_like(nets);
  auto& G = grad.nets;
  auto at = [](Net n) { return static_cast<std::size_t>(n); };

  MatrixXd dh_a = MatrixXd::Zero(D, I);
  MatrixXd dh_b = MatrixXd::Zero(D, J);

  // Heads.
  if (J > 0) {
    dh_b += mlp_backward(nets[Net::Rejection], tape.rejection, MatrixXd(d_beta_logit.transpose()),
                         G[at(Net::Rejection)], true);
  }
  if (E > 0) {
    MatrixXd dg(1, E);
    for (Index i = 0; i < I; ++i) {
      for (Index j = 0; j < J; ++j) dg(0, i * J + j) = d_gamma(i, j);
    }
    const MatrixXd dm = mlp_backward(nets[Net::Association], tape.association, dg, G[at(Net::Association)]);
    const MatrixXd dX = mlp_backward(nets[Net::Edge], tape.final_edge, dm, G[at(Net::Edge)]);
    scatter_edge_grad(dX, I, J, 0, dh_a, dh_b);
  }

  // Rounds, last to first.
  for (std::size_t r = tape.rounds.size(); r-- > 0;) {
    const RoundTape& rt = tape.rounds[r];
    MatrixXd dH(D, I + J);
    dH.leftCols(I) = dh_a;
    dH.rightCols(J) = dh_b;
    const MatrixXd dY = mlp_backward(nets[Net::Node], rt.node, dH, G[at(Net::Node)]);
    const Index Dm = dY.rows() - D - 1;
    dh_a = dY.topRows(D).leftCols(I);
    dh_b = dY.topRows(D).rightCols(J);
    if (E == 0) continue;
    MatrixXd dM(Dm, 2 * E);
    for (Index i = 0; i < I; ++i) {
      for (Index j = 0; j < J; ++j) {
        dM.col(i * J + j) = dY.col(I + j).segment(D, Dm);
        dM.col(E + i * J + j) = dY.col(i).segment(D, Dm);
      }
    }
    const MatrixXd dX = mlp_backward(nets[Net::Edge], rt.edge, dM, G[at(Net::Edge)]);
    scatter_edge_grad(dX, I, J, 0, dh_a, dh_b);
    scatter_edge_grad(dX, I, J, E, dh_a, dh_b);
  }

  // Feature extractors.
  const Index Dmo = nets.config.motion_features;
  const Index Dsh = nets.config.shape_features;
  if (I > 0) {
    mlp_backward(nets[Net::MotionLegacy], tape.features.motion_a, MatrixXd(dh_a.topRows(Dmo)),
                 G[at(Net::MotionLegacy)]);
  }
  if (J > 0) {
    mlp_backward(nets[Net::MotionMeasurement], tape.features.motion_b, MatrixXd(dh_b.topRows(Dmo)),
                 G[at(Net::MotionMeasurement)]);
  }
  auto shape_backward = [&](Net net, const std::vector<Index>& cols, const MatrixXd& dh,
                            const MlpTape<double>& t) {
    if (cols.empty()) return;
    MatrixXd d(Dsh, static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) d.col(static_cast<Index>(k)) = dh.col(cols[k]).tail(Dsh);
    mlp_backward(nets[net], t, d, G[at(net)]);
  };
  shape_backward(Net::ShapeLegacy, tape.features.shaped_a, dh_a, tape.features.shape_a);
  shape_backward(Net::ShapeMeasurement, tape.features.shaped_b, dh_b, tape.features.shape_b);
  return grad;
}

}  // namespace nebp
