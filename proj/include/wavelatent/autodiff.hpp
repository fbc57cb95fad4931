#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavelatent/rng.hpp"

namespace wavelatent::ad {

/// Batch x channels x length, row-major. Dense layers see channels * length
/// features per batch row.
struct Tensor {
  std::array<std::size_t, 3> shape{0, 0, 0};
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::size_t batch, std::size_t channels, std::size_t length, double fill = 0.0)
      : shape{batch, channels, length}, values(batch * channels * length, fill) {}

  static Tensor from(std::size_t batch, std::size_t channels, std::size_t length, std::vector<double> data);

  std::size_t batch() const { return shape[0]; }
  std::size_t channels() const { return shape[1]; }
  std::size_t length() const { return shape[2]; }
  std::size_t features() const { return shape[1] * shape[2]; }
  std::size_t size() const { return values.size(); }

  double& at(std::size_t b, std::size_t c, std::size_t t) { return values[(b * shape[1] + c) * shape[2] + t]; }
  const double& at(std::size_t b, std::size_t c, std::size_t t) const { return values[(b * shape[1] + c) * shape[2] + t]; }
  std::span<double> row(std::size_t b) { return {values.data() + b * features(), features()}; }
  std::span<const double> row(std::size_t b) const { return {values.data() + b * features(), features()}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Throws NumericError naming `where` if any value is NaN or infinite.
void require_finite(const Tensor& t, std::string_view where);

enum class LayerKind : std::uint8_t { dense = 0, conv1d = 1, conv1d_transpose = 2, maxpool = 3, upsample = 4, activation = 5 };
enum class Activation : std::uint8_t { linear = 0, relu = 1, tanh = 2, sigmoid = 3 };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

/// Declarative description of one layer.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;         // dense: output features
  std::size_t out_channels = 1;  // dense: output reshaped to (out_channels, units / out_channels)
  std::size_t channels = 0;      // conv: output channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t factor = 1;        // maxpool / upsample
  Activation activation = Activation::linear;

  static LayerSpec dense(std::size_t units, std::size_t out_channels = 1) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    s.out_channels = out_channels;
    return s;
  }
  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0) {
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
  }
  static LayerSpec conv_transpose(std::size_t channels, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0) {
    LayerSpec s = conv(channels, kernel, stride, padding);
    s.kind = LayerKind::conv1d_transpose;
    return s;
  }
  static LayerSpec maxpool(std::size_t factor) {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.factor = factor;
    return s;
  }
  static LayerSpec upsample(std::size_t factor) {
    LayerSpec s;
    s.kind = LayerKind::upsample;
    s.factor = factor;
    return s;
  }
  static LayerSpec act(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.activation = a;
    return s;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample shape (channels, length).
struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;

  std::size_t features() const { return channels * length; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// A differentiable operation. forward() records what backward() needs;
/// apply() is the pure, re-entrant inference path. backward() accumulates
/// parameter gradients and returns the gradient with respect to the input.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;
  virtual Tensor apply(const Tensor& input) const = 0;
  virtual Tensor forward(const Tensor& input) {
    cached_input_ = input;
    return apply(input);
  }
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual std::span<double> params() { return {}; }
  virtual std::span<const double> params() const { return {}; }
  virtual std::span<double> grads() { return {}; }

  void zero_grad() {
    auto g = grads();
    std::fill(g.begin(), g.end(), 0.0);
  }

 protected:
  Tensor cached_input_;
};

/// Builds one layer for a given per-sample input shape. Weights are drawn
/// uniformly from +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape input, Rng& rng);

/// Ordered layer stack with a recorded forward pass.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const std::vector<LayerSpec>& specs, Shape input, Rng& rng);
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void push(std::unique_ptr<Layer> layer);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  Tensor apply(const Tensor& input) const;
  void zero_grad();

  Shape input_shape() const { return input_; }
  Shape output_shape() const;
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  std::vector<LayerSpec> specs() const;

  /// Trainable blocks, one per parameterized layer, in layer order.
  std::vector<std::span<double>> params();
  std::vector<std::span<const double>> params() const;
  std::vector<std::span<double>> grads();
  std::size_t parameter_count() const;

 private:
  Shape input_{};
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

/// Mean of squared differences over every element; gradient 2 (pred - target) / count.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

struct KlResult {
  double value = 0.0;
  Tensor grad_mu;
  Tensor grad_log_var;
};

/// KL(N(mu, exp(log_var)) || N(0, I)), summed over latent dimensions and
/// averaged over the batch.
KlResult gaussian_kl(const Tensor& mu, const Tensor& log_var);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Moment buffers for a fixed list of parameter blocks.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t step = 0;
};

/// Bias-corrected Adam update applied in place. Moment buffers are created
/// on the first call.
void adam_step(std::vector<std::span<double>> params, const std::vector<std::span<double>>& grads, AdamState& state);

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_block = 0;   // parameter block; == block count for the input gradient
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of mse(net(input), target) with central
/// differences (h = 1e-5 * max(1, |theta|)) for every parameter and every
/// input element. Relative error is |a - n| / max(|a|, |n|, s) where s is a
/// tenth of the largest analytic gradient magnitude, so entries far below the
/// gradient scale are not judged on finite-difference roundoff alone.
GradientReport check_gradients(Sequential& net, const Tensor& input, const Tensor& target, double tolerance);

/// Same, with a deterministic pseudo-random target.
GradientReport check_gradients(Sequential& net, const Tensor& input, double tolerance);

}  // namespace wavelatent::ad
