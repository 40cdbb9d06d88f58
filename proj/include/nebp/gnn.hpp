#pragma once

#include "nebp/mlp.hpp"
#include "nebp/tracker.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace nebp {

struct GnnConfig {
  Index hidden = 64;          // hidden width of every MLP
  Index motion_features = 32;
  Index shape_features = 32;  // embedding = motion + shape
  Index descriptor_dim = 8;   // length of a shape descriptor
  int rounds = 3;             // L
  double position_scale = 54.0;
  double velocity_scale = 10.0;

  Index embedding() const { return motion_features + shape_features; }
};

enum class Net : std::size_t {
  MotionLegacy,
  MotionMeasurement,
  ShapeLegacy,
  ShapeMeasurement,
  Edge,
  Node,
  Rejection,
  Association,
};
inline constexpr std::size_t kNetCount = 8;

std::string_view net_name(Net n);

/// Every trainable network of the enhancement layer.
struct GnnNets {
  GnnConfig config;
  std::array<Mlp<double>, kNetCount> nets;

  Mlp<double>& operator[](Net n) { return nets[static_cast<std::size_t>(n)]; }
  const Mlp<double>& operator[](Net n) const { return nets[static_cast<std::size_t>(n)]; }

  Index parameter_count() const;

  static GnnNets create(const GnnConfig& config, std::uint64_t seed);
};

/// Checks every network's shape against the config. Throws ValidationError.
void validate_shapes(const GnnNets& nets);

struct GnnGradient {
  std::array<MlpGradient<double>, kNetCount> nets;

  static GnnGradient zeros_like(const GnnNets& nets);
};

/// Node embeddings, one column per node.
struct GnnState {
  MatrixXd h_a;  // D_h x I
  MatrixXd h_b;  // D_h x J
  int iteration = 1;
};

struct CorrectionFactors {
  VectorXd beta;        // J, in (0, 1)
  MatrixXd gamma;       // I x J, pre-ReLU
  VectorXd beta_logit;  // J, g_r pre-activation
};

/// Source of shape descriptors for legacy POs and measurements. The default
/// reads the descriptor carried by the PO or detection.
class ShapeProvider {
 public:
  virtual ~ShapeProvider() = default;
  virtual std::optional<VectorXd> legacy(const PotentialObject& po) const { return po.shape; }
  virtual std::optional<VectorXd> measurement(const Detection& d) const { return d.shape; }
};

struct FeatureTape {
  MlpTape<double> motion_a, motion_b, shape_a, shape_b;
  std::vector<Index> shaped_a, shaped_b;  // nodes that had a descriptor
};

struct RoundTape {
  MatrixXd h_a, h_b;  // embeddings entering the round
  MlpTape<double> edge;
  MlpTape<double> node;
};

struct GnnTape {
  FeatureTape features;
  std::vector<RoundTape> rounds;
  MatrixXd h_a_final, h_b_final;  // embeddings at iteration L
  MlpTape<double> final_edge;     // b -> a messages at iteration L
  MlpTape<double> association;
  MlpTape<double> rejection;
  Index I = 0;
  Index J = 0;
};

/// Initial embeddings: concat(motion, shape) per node; missing descriptors
/// give a zero shape half.
GnnState extract_features(const GnnNets& nets, const std::vector<PotentialObject>& prior_legacy,
                          const std::vector<Detection>& detections,
                          const ShapeProvider* shapes = nullptr, FeatureTape* tape = nullptr);

/// One message-passing iteration on the fully connected bipartite graph.
GnnState gnn_round(const GnnState& state, const Messages& msgs, const GnnNets& nets,
                   RoundTape* tape = nullptr);

/// Edge messages m_{b_j -> a_i}, one column per edge in row-major (i, j) order.
MatrixXd measurement_to_legacy_messages(const GnnState& state, const Messages& msgs,
                                        const GnnNets& nets, MlpTape<double>* tape = nullptr);

/// beta_j = g_r(h_b_j), gamma_i(j) = g_a(m_{b_j -> a_i}).
CorrectionFactors correction_heads(const GnnState& state, const MatrixXd& messages,
                                   const GnnNets& nets, MlpTape<double>* rejection_tape = nullptr,
                                   MlpTape<double>* association_tape = nullptr);

/// Features, L-1 rounds, final messages and both heads.
CorrectionFactors gnn_forward(const GnnNets& nets, const std::vector<PotentialObject>& prior_legacy,
                              const std::vector<Detection>& detections, const Messages& msgs,
                              const ShapeProvider* shapes = nullptr, GnnTape* tape = nullptr);

/// Parameter gradients given dL/d(beta_logit) and dL/d(gamma). Messages are
/// constants.
GnnGradient gnn_backward(const GnnNets& nets, const GnnTape& tape, const VectorXd& d_beta_logit,
                         const MatrixXd& d_gamma);

}  // namespace nebp
