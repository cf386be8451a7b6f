#include "protoicl/net.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "protoicl/errors.hpp"

namespace protoicl {

double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

double elu_derivative(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

namespace {

void check_chain(const std::vector<LayerShape>& layers, const char* what) {
  if (layers.empty()) {
    throw ConfigError(std::string(what) + " needs at least one layer");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in <= 0 || layers[i].out <= 0) {
      throw ConfigError(std::string(what) + " layer dims must be positive");
    }
    if (i > 0 && layers[i - 1].out != layers[i].in) {
      throw ConfigError(std::string(what) + " layer " + std::to_string(i) + " input does not match previous output");
    }
  }
}

Matrix apply_layer(const Network& net, std::size_t layer, const Matrix& input, Matrix* pre_out) {
  Matrix pre = input * net.weights(layer).transpose();
  pre.rowwise() += net.bias(layer).transpose();
  Matrix out = net.is_output_layer(layer) ? pre : Matrix(pre.unaryExpr([](double v) { return elu(v); }));
  if (pre_out != nullptr) {
    *pre_out = std::move(pre);
  }
  return out;
}

}  // namespace

Network::Network(std::vector<LayerShape> encoder, std::vector<LayerShape> decoder) {
  check_chain(encoder, "encoder");
  check_chain(decoder, "decoder");
  if (encoder.back().out != decoder.front().in) {
    throw ConfigError("code dimension mismatch between encoder output and decoder input");
  }
  if (encoder.front().in != decoder.back().out) {
    throw ConfigError("decoder output dim must equal encoder input dim");
  }
  encoder_layers_ = encoder.size();
  shapes_ = std::move(encoder);
  shapes_.insert(shapes_.end(), decoder.begin(), decoder.end());

  offsets_.assign(shapes_.size() + 1, 0);
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    offsets_[i + 1] = offsets_[i] + shapes_[i].param_count();
  }
  params_ = ParamVector::Zero(offsets_.back());
}

Network Network::symmetric(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden_dims,
                           Eigen::Index code_dim) {
  std::vector<Eigen::Index> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(code_dim);

  std::vector<LayerShape> encoder;
  std::vector<LayerShape> decoder;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    encoder.push_back({dims[i], dims[i + 1]});
  }
  for (std::size_t i = dims.size() - 1; i > 0; --i) {
    decoder.push_back({dims[i], dims[i - 1]});
  }
  return {std::move(encoder), std::move(decoder)};
}

void Network::init_glorot(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shapes_[l].in + shapes_[l].out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = weights(l);
    // column-major fill keeps the draw order tied to the flat layout
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = dist(rng);
    }
    bias(l).setZero();
  }
}

Network::WeightMap Network::weights(std::size_t layer) { return weights_in(params_, layer); }

Network::ConstWeightMap Network::weights(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {params_.data() + offsets_[layer], s.out, s.in};
}

Network::BiasMap Network::bias(std::size_t layer) { return bias_in(params_, layer); }

Network::ConstBiasMap Network::bias(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {params_.data() + offsets_[layer] + s.out * s.in, s.out};
}

Network::WeightMap Network::weights_in(ParamVector& flat, std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {flat.data() + offsets_[layer], s.out, s.in};
}

Network::BiasMap Network::bias_in(ParamVector& flat, std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {flat.data() + offsets_[layer] + s.out * s.in, s.out};
}

Matrix forward_encode(const Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim()) {
    throw InputError("encode: batch has " + std::to_string(batch.cols()) + " columns, encoder expects " +
                     std::to_string(net.input_dim()));
  }
  Matrix a = batch;
  for (std::size_t l = 0; l < net.encoder_layer_count(); ++l) {
    a = apply_layer(net, l, a, nullptr);
  }
  return a;
}

Matrix forward_decode(const Network& net, const Matrix& codes) {
  if (codes.cols() != net.code_dim()) {
    throw InputError("decode: codes have " + std::to_string(codes.cols()) + " columns, decoder expects " +
                     std::to_string(net.code_dim()));
  }
  Matrix a = codes;
  for (std::size_t l = net.encoder_layer_count(); l < net.layer_count(); ++l) {
    a = apply_layer(net, l, a, nullptr);
  }
  return a;
}

ForwardTrace forward(const Network& net, const Matrix& batch, bool decode) {
  if (batch.cols() != net.input_dim()) {
    throw InputError("forward: batch has " + std::to_string(batch.cols()) + " columns, encoder expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  const std::size_t last = decode ? net.layer_count() : net.encoder_layer_count();
  trace.layers.resize(last);
  Matrix a = batch;
  for (std::size_t l = 0; l < last; ++l) {
    trace.layers[l].input = a;
    a = apply_layer(net, l, a, &trace.layers[l].pre_activation);
    if (l + 1 == net.encoder_layer_count()) {
      trace.codes = a;
    }
  }
  if (decode) {
    trace.reconstruction = std::move(a);
    trace.decoded = true;
  }
  return trace;
}

ParamVector backward(const Network& net, const ForwardTrace& trace, const Upstream& upstream) {
  if (trace.layers.size() < net.encoder_layer_count()) {
    throw UsageError("backward called without a cached forward pass");
  }
  const bool has_recon = upstream.reconstruction.size() > 0;
  const bool has_codes = upstream.codes.size() > 0;
  if (has_recon && !trace.decoded) {
    throw UsageError("reconstruction gradient supplied but the forward pass skipped the decoder");
  }
  const Eigen::Index n = trace.codes.rows();
  if ((has_codes && (upstream.codes.rows() != n || upstream.codes.cols() != trace.codes.cols())) ||
      (has_recon && (upstream.reconstruction.rows() != n ||
                     upstream.reconstruction.cols() != trace.reconstruction.cols()))) {
    throw InputError("backward: upstream gradient shape does not match the cached pass");
  }

  ParamVector grad = ParamVector::Zero(net.param_count());
  Matrix delta;  // dL/d(layer output)
  const std::size_t enc = net.encoder_layer_count();

  auto step_back = [&](std::size_t l) {
    const auto& cache = trace.layers[l];
    Matrix dz = net.is_output_layer(l)
                    ? delta
                    : Matrix(delta.cwiseProduct(cache.pre_activation.unaryExpr([](double v) { return elu_derivative(v); })));
    net.weights_in(grad, l).noalias() = dz.transpose() * cache.input;
    net.bias_in(grad, l) = dz.colwise().sum().transpose();
    delta = dz * net.weights(l);
  };

  if (has_recon) {
    delta = upstream.reconstruction;
    for (std::size_t l = net.layer_count(); l-- > enc;) {
      step_back(l);
    }
    if (has_codes) {
      delta += upstream.codes;
    }
  } else if (has_codes) {
    delta = upstream.codes;
  } else {
    return grad;
  }
  for (std::size_t l = enc; l-- > 0;) {
    step_back(l);
  }
  return grad;
}

}  // namespace protoicl
