#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aawr/errors.hpp"
#include "aawr/random.hpp"

namespace aawr::nn {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1 };
enum class OutputHead : std::uint8_t { Identity = 0, CategoricalLogits = 1 };
enum class Init { FanIn, Zero };

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Layer {
  MatrixX<Scalar> weight;  ///< (out x in)
  VectorX<Scalar> bias;    ///< (out)
};

/// Parameter-shaped container; also used for gradients and Adam moments.
template <typename Scalar>
using Gradients = std::vector<Layer<Scalar>>;

namespace detail {
inline std::uint64_t next_instance_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Activations recorded by Mlp::forward. Tied to one parameter version of
/// one network; backward rejects it once the parameters change.
template <typename Scalar>
struct ForwardCache {
  std::vector<MatrixX<Scalar>> inputs;       ///< input of each layer (batch x in)
  std::vector<MatrixX<Scalar>> activations;  ///< post-activation of each hidden layer
  std::uint64_t owner = 0;
  std::uint64_t version = 0;
};

/// Dense multilayer perceptron over row-major batches (one sample per row).
/// Hidden layers share one activation; the output layer is affine.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  Mlp() : id_(detail::next_instance_id()) {}
  Mlp(const Mlp& other)
      : layers_(other.layers_), activation_(other.activation_), head_(other.head_), id_(detail::next_instance_id()) {}
  Mlp& operator=(const Mlp& other) {
    layers_ = other.layers_;
    activation_ = other.activation_;
    head_ = other.head_;
    ++version_;
    return *this;
  }
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases from `seed`.
  static Mlp init(const std::vector<int>& sizes, std::uint64_t seed, Activation activation = Activation::Tanh,
                  OutputHead head = OutputHead::Identity, Init init = Init::FanIn) {
    if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    for (int s : sizes)
      if (s < 1) throw ShapeError("layer sizes must be positive");
    Mlp net;
    net.activation_ = activation;
    net.head_ = head;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      Layer<Scalar> layer{Matrix::Zero(sizes[l + 1], sizes[l]), Vector::Zero(sizes[l + 1])};
      if (init == Init::FanIn) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
          layer.weight.data()[i] = static_cast<Scalar>(bound * (2.0 * uniform01(rng) - 1.0));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
          layer.bias(i) = static_cast<Scalar>(bound * (2.0 * uniform01(rng) - 1.0));
      }
      net.layers_.push_back(std::move(layer));
    }
    return net;
  }

  /// Builds a network from explicit layers (checkpoint loading, tests).
  static Mlp from_layers(std::vector<Layer<Scalar>> layers, Activation activation, OutputHead head) {
    Mlp net;
    net.layers_ = std::move(layers);
    net.activation_ = activation;
    net.head_ = head;
    net.check_shapes();
    return net;
  }

  Matrix forward(const Matrix& x) const {
    ForwardCache<Scalar> scratch;
    return forward(x, scratch);
  }

  Matrix forward(const Matrix& x, ForwardCache<Scalar>& cache) const {
    if (x.cols() != input_size())
      throw ShapeError("input width " + std::to_string(x.cols()) + " != " + std::to_string(input_size()));
    cache.inputs.resize(layers_.size());
    cache.activations.resize(layers_.size() - 1);
    cache.owner = id_;
    cache.version = version_;
    cache.inputs[0] = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix h = cache.inputs[l] * layers_[l].weight.transpose();
      h.rowwise() += layers_[l].bias.transpose();
      if (l + 1 == layers_.size()) return h;
      apply_activation(h);
      cache.activations[l] = h;
      cache.inputs[l + 1] = std::move(h);
    }
    return {};
  }

  /// Reverse-mode gradients of sum(grad_out .* output) w.r.t. all parameters.
  Gradients<Scalar> backward(const ForwardCache<Scalar>& cache, const Matrix& grad_out) const {
    if (cache.owner != id_ || cache.version != version_ || cache.inputs.size() != layers_.size())
      throw std::logic_error("stale forward cache: parameters changed since the forward pass");
    if (grad_out.rows() != cache.inputs[0].rows() || grad_out.cols() != output_size())
      throw ShapeError("output gradient shape mismatch");
    Gradients<Scalar> grads(layers_.size());
    Matrix delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weight.noalias() = delta.transpose() * cache.inputs[l];
      grads[l].bias = delta.colwise().sum().transpose();
      if (l == 0) break;
      Matrix upstream = delta * layers_[l].weight;
      const Matrix& act = cache.activations[l - 1];
      if (activation_ == Activation::Tanh)
        delta = upstream.array() * (Scalar(1) - act.array().square());
      else
        delta = upstream.array() * (act.array() > Scalar(0)).template cast<Scalar>();
    }
    return grads;
  }

  /// target <- (1 - rate) target + rate * source, applied to *this.
  void polyak_update(const Mlp& source, Scalar rate) {
    if (source.layers_.size() != layers_.size()) throw ShapeError("polyak: architecture mismatch");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight = (Scalar(1) - rate) * layers_[l].weight + rate * source.layers_[l].weight;
      layers_[l].bias = (Scalar(1) - rate) * layers_[l].bias + rate * source.layers_[l].bias;
    }
    ++version_;
  }

  const std::vector<Layer<Scalar>>& layers() const { return layers_; }
  /// Mutable access; invalidates outstanding forward caches.
  std::vector<Layer<Scalar>>& mutable_layers() {
    ++version_;
    return layers_;
  }

  Activation activation() const { return activation_; }
  OutputHead head() const { return head_; }
  int input_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
  int output_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

  std::vector<int> sizes() const {
    std::vector<int> out;
    if (layers_.empty()) return out;
    out.push_back(input_size());
    for (const auto& l : layers_) out.push_back(static_cast<int>(l.weight.rows()));
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  std::uint64_t version() const { return version_; }

 private:
  void apply_activation(Matrix& h) const {
    if (activation_ == Activation::Tanh)
      h = h.array().tanh();
    else
      h = h.cwiseMax(Scalar(0));
  }

  void check_shapes() const {
    if (layers_.empty()) throw ShapeError("an MLP needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].bias.size() != layers_[l].weight.rows()) throw ShapeError("bias size mismatch");
      if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) throw ShapeError("layer chain mismatch");
    }
  }

  std::vector<Layer<Scalar>> layers_;
  Activation activation_ = Activation::Tanh;
  OutputHead head_ = OutputHead::Identity;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

/// Zero-valued gradient container shaped like `net`.
template <typename Scalar>
Gradients<Scalar> zeros_like(const Mlp<Scalar>& net) {
  Gradients<Scalar> g;
  for (const auto& l : net.layers())
    g.push_back({MatrixX<Scalar>::Zero(l.weight.rows(), l.weight.cols()), VectorX<Scalar>::Zero(l.bias.size())});
  return g;
}

/// Row-wise log-softmax, stable under large logits.
template <typename Derived>
auto log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const VectorX<Scalar> lse = shifted.array().exp().rowwise().sum().log();
  return MatrixX<Scalar>(shifted.colwise() - lse);
}

template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  return MatrixX<typename Derived::Scalar>(log_softmax(logits).array().exp());
}

}  // namespace aawr::nn
