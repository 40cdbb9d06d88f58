#pragma once

#include "nebp/common.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace nebp {

enum class Activation { Identity, LeakyRelu, Sigmoid };

inline constexpr double kLeakySlope = 0.01;

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::LeakyRelu:
      return "leaky_relu";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ValidationError("unknown activation '" + name + "'");
}

template <typename T>
struct DenseLayer {
  Matrix<T> weight;  // out x in
  Vector<T> bias;
  Activation activation = Activation::Identity;
};

/// Dense feed-forward network. Batched calls take one sample per column.
template <typename T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }
};

/// Per-layer inputs and pre-activations retained for the backward pass.
template <typename T>
struct MlpTape {
  std::vector<Matrix<T>> inputs;
  std::vector<Matrix<T>> pre_activations;
  std::vector<Matrix<T>> outputs;
};

template <typename T>
struct MlpGradient {
  std::vector<Matrix<T>> weight;
  std::vector<Vector<T>> bias;

  static MlpGradient zeros_like(const Mlp<T>& net) {
    MlpGradient g;
    for (const auto& l : net.layers) {
      g.weight.push_back(Matrix<T>::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector<T>::Zero(l.bias.size()));
    }
    return g;
  }

  void set_zero() {
    for (auto& w : weight) w.setZero();
    for (auto& b : bias) b.setZero();
  }
};

namespace detail {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Matrix<T> activate(const Matrix<T>& pre, Activation a) {
  switch (a) {
    case Activation::Identity:
      return pre;
    case Activation::LeakyRelu:
      return pre.unaryExpr([](T v) { return v > T(0) ? v : T(kLeakySlope) * v; });
    case Activation::Sigmoid:
      return pre.unaryExpr([](T v) { return sigmoid(v); });
  }
  return pre;
}

// d(out)/d(pre) elementwise, given both.
template <typename T>
Matrix<T> activation_slope(const Matrix<T>& pre, const Matrix<T>& out, Activation a) {
  switch (a) {
    case Activation::Identity:
      return Matrix<T>::Ones(pre.rows(), pre.cols());
    case Activation::LeakyRelu:
      return pre.unaryExpr([](T v) { return v > T(0) ? T(1) : T(kLeakySlope); });
    case Activation::Sigmoid:
      return out.array() * (T(1) - out.array());
  }
  return Matrix<T>::Ones(pre.rows(), pre.cols());
}

}  // namespace detail

/// Forward pass over a batch (one sample per column). When `tape` is given it
/// receives everything mlp_backward needs.
template <typename T, typename Derived>
Matrix<T> mlp_forward(const Mlp<T>& net, const Eigen::MatrixBase<Derived>& input,
                      MlpTape<T>* tape = nullptr) {
  if (input.rows() != net.in_dim()) {
    throw ValidationError("mlp_forward: input dimension " + std::to_string(input.rows()) +
                          " != " + std::to_string(net.in_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre_activations.clear();
    tape->outputs.clear();
  }
  Matrix<T> x = input;
  for (const auto& layer : net.layers) {
    Matrix<T> pre = layer.weight * x;
    pre.colwise() += layer.bias;
    Matrix<T> out = detail::activate(pre, layer.activation);
    if (tape) {
      tape->inputs.push_back(std::move(x));
      tape->pre_activations.push_back(std::move(pre));
      tape->outputs.push_back(out);
    }
    x = std::move(out);
  }
  return x;
}

/// Reverse-mode pass. Parameter gradients are accumulated into `grad`
/// (summed over the batch); the input gradient is returned. With
/// `grad_is_pre_activation` the incoming gradient is taken with respect to the
/// last layer's pre-activation, skipping its activation slope (used for
/// sigmoid heads trained through a logit-space loss).
template <typename T>
Matrix<T> mlp_backward(const Mlp<T>& net, const MlpTape<T>& tape, const Matrix<T>& output_grad,
                       MlpGradient<T>& grad, bool grad_is_pre_activation = false) {
  if (tape.inputs.size() != net.layers.size()) {
    throw ValidationError("mlp_backward: tape does not match network");
  }
  Matrix<T> delta = output_grad;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& layer = net.layers[k];
    const bool skip_slope = grad_is_pre_activation && k + 1 == net.layers.size();
    Matrix<T> d_pre = skip_slope ? delta
                                 : Matrix<T>(delta.cwiseProduct(detail::activation_slope(
                                       tape.pre_activations[k], tape.outputs[k], layer.activation)));
    grad.weight[k].noalias() += d_pre * tape.inputs[k].transpose();
    grad.bias[k] += d_pre.rowwise().sum();
    delta = layer.weight.transpose() * d_pre;
  }
  return delta;
}

/// Glorot-uniform weights, zero biases. `dims` lists in, hidden..., out.
template <typename T, typename Rng>
Mlp<T> make_mlp(const std::vector<Index>& dims, Activation hidden, Activation output, Rng& rng) {
  if (dims.size() < 2) throw ValidationError("make_mlp: need at least input and output dims");
  Mlp<T> net;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const Index in = dims[k];
    const Index out = dims[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer<T> layer;
    layer.weight.resize(out, in);
    for (Index c = 0; c < in; ++c) {
      for (Index r = 0; r < out; ++r) layer.weight(r, c) = static_cast<T>(dist(rng));
    }
    layer.bias = Vector<T>::Zero(out);
    layer.activation = (k + 2 == dims.size()) ? output : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace nebp
