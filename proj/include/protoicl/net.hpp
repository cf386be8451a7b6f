#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace protoicl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Flat parameter-congruent vector. Used for parameters, gradients, importances
/// and optimizer moments; the layout is owned by Network.
using ParamVector = Eigen::VectorXd;

struct LayerShape {
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  [[nodiscard]] Eigen::Index param_count() const { return out * in + out; }
  bool operator==(const LayerShape&) const = default;
};

/// ELU with alpha = 1.
[[nodiscard]] double elu(double x);
[[nodiscard]] double elu_derivative(double x);

/// Dense autoencoder. All parameters live in one contiguous vector: encoder
/// layers first, then decoder layers; per layer the out x in weight matrix
/// (column-major) followed by the bias. Encoder parameters are therefore the
/// prefix [0, encoder_param_count()).
///
/// Every encoder layer (including the code layer) and every hidden decoder
/// layer applies ELU; the final decoder layer is linear.
class Network {
 public:
  using WeightMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstWeightMap = Eigen::Map<const Eigen::MatrixXd>;
  using BiasMap = Eigen::Map<Eigen::VectorXd>;
  using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

  Network() = default;

  /// Zero-initialised network. Layer dims must chain, encoder input must equal
  /// decoder output and the code dims must agree.
  Network(std::vector<LayerShape> encoder, std::vector<LayerShape> decoder);

  /// Symmetric autoencoder input -> hidden... -> code, mirrored in the decoder.
  static Network symmetric(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden_dims,
                           Eigen::Index code_dim);

  /// Glorot-uniform weights, zero biases.
  void init_glorot(std::mt19937_64& rng);

  [[nodiscard]] Eigen::Index input_dim() const { return shapes_.front().in; }
  [[nodiscard]] Eigen::Index code_dim() const { return shapes_[encoder_layers_ - 1].out; }
  [[nodiscard]] std::size_t layer_count() const { return shapes_.size(); }
  [[nodiscard]] std::size_t encoder_layer_count() const { return encoder_layers_; }
  [[nodiscard]] const LayerShape& shape(std::size_t layer) const { return shapes_.at(layer); }
  [[nodiscard]] const std::vector<LayerShape>& shapes() const { return shapes_; }

  [[nodiscard]] Eigen::Index param_count() const { return params_.size(); }
  [[nodiscard]] Eigen::Index encoder_param_count() const { return offsets_[encoder_layers_]; }

  [[nodiscard]] ParamVector& params() { return params_; }
  [[nodiscard]] const ParamVector& params() const { return params_; }

  [[nodiscard]] WeightMap weights(std::size_t layer);
  [[nodiscard]] ConstWeightMap weights(std::size_t layer) const;
  [[nodiscard]] BiasMap bias(std::size_t layer);
  [[nodiscard]] ConstBiasMap bias(std::size_t layer) const;

  /// Views into a parameter-congruent vector (e.g. a gradient) with this layout.
  [[nodiscard]] WeightMap weights_in(ParamVector& flat, std::size_t layer) const;
  [[nodiscard]] BiasMap bias_in(ParamVector& flat, std::size_t layer) const;

  [[nodiscard]] bool is_output_layer(std::size_t layer) const { return layer + 1 == shapes_.size(); }
  [[nodiscard]] bool all_finite() const { return params_.allFinite(); }

 private:
  std::vector<LayerShape> shapes_;
  std::size_t encoder_layers_ = 0;
  std::vector<Eigen::Index> offsets_;
  ParamVector params_;
};

/// Activations cached by a forward pass, consumed by backward().
struct ForwardTrace {
  struct LayerCache {
    Matrix input;
    Matrix pre_activation;
  };
  std::vector<LayerCache> layers;
  Matrix codes;
  Matrix reconstruction;
  bool decoded = false;
};

/// Upstream loss gradients. An empty matrix means "no loss attached there".
struct Upstream {
  Matrix codes;
  Matrix reconstruction;
};

[[nodiscard]] Matrix forward_encode(const Network& net, const Matrix& batch);
[[nodiscard]] Matrix forward_decode(const Network& net, const Matrix& codes);

/// Encoder pass, optionally followed by the decoder, caching activations.
[[nodiscard]] ForwardTrace forward(const Network& net, const Matrix& batch, bool decode = true);

/// Exact gradient w.r.t. every parameter. Decoder entries are zero when the
/// trace did not run the decoder.
[[nodiscard]] ParamVector backward(const Network& net, const ForwardTrace& trace, const Upstream& upstream);

}  // namespace protoicl
