#include "wavelatent/autodiff.hpp"

#include <cmath>
#include <limits>

#include "wavelatent/error.hpp"

namespace wavelatent::ad {

namespace {

void init_uniform(std::span<double> weights, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& w : weights) w = rng.uniform(-limit, limit);
}

void expect_shape(const Tensor& t, Shape s, const char* layer) {
  if (t.channels() != s.channels || t.length() != s.length)
    throw DimensionError(std::string(layer) + ": input shape (" + std::to_string(t.channels()) + "x" +
                         std::to_string(t.length()) + ") does not match (" + std::to_string(s.channels) + "x" +
                         std::to_string(s.length) + ")");
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape) throw DimensionError(std::string(what) + ": tensor shapes differ");
}

// --------------------------------------------------------------------------

class Dense final : public Layer {
 public:
  Dense(const LayerSpec& spec, Shape in, Rng& rng) : spec_(spec), in_(in) {
    if (spec.units == 0 || spec.out_channels == 0 || spec.units % spec.out_channels != 0)
      throw ConfigError("dense: units must be positive and divisible by out_channels");
    const std::size_t f = in.features();
    data_.assign(spec.units * f + spec.units, 0.0);
    grad_.assign(data_.size(), 0.0);
    init_uniform(std::span(data_).first(spec.units * f), f, spec.units, rng);
  }

  LayerSpec spec() const override { return spec_; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return {spec_.out_channels, spec_.units / spec_.out_channels}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  std::span<double> params() override { return data_; }
  std::span<const double> params() const override { return data_; }
  std::span<double> grads() override { return grad_; }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "dense");
    const std::size_t f = in_.features();
    const std::size_t u = spec_.units;
    const Shape out = output_shape();
    Tensor y(x.batch(), out.channels, out.length);
    const double* w = data_.data();
    const double* bias = w + u * f;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      const double* xr = x.values.data() + b * f;
      double* yr = y.values.data() + b * u;
      for (std::size_t i = 0; i < u; ++i) {
        const double* wr = w + i * f;
        double s = bias[i];
        for (std::size_t j = 0; j < f; ++j) s += wr[j] * xr[j];
        yr[i] = s;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    const std::size_t f = in_.features();
    const std::size_t u = spec_.units;
    Tensor gx(x.batch(), x.channels(), x.length());
    const double* w = data_.data();
    double* gw = grad_.data();
    double* gb = gw + u * f;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      const double* xr = x.values.data() + b * f;
      const double* gyr = gy.values.data() + b * u;
      double* gxr = gx.values.data() + b * f;
      for (std::size_t i = 0; i < u; ++i) {
        const double g = gyr[i];
        gb[i] += g;
        const double* wr = w + i * f;
        double* gwr = gw + i * f;
        for (std::size_t j = 0; j < f; ++j) {
          gwr[j] += g * xr[j];
          gxr[j] += g * wr[j];
        }
      }
    }
    return gx;
  }

 private:
  LayerSpec spec_;
  Shape in_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

// --------------------------------------------------------------------------

/// Shared storage for conv and transposed conv. Weight layout is
/// [a][b][kernel] with (a, b) = (out, in) for conv and (in, out) for the
/// transpose, so a conv and a transpose sharing one buffer are adjoint.
class ConvBase : public Layer {
 public:
  ConvBase(const LayerSpec& spec, Shape in) : spec_(spec), in_(in) {
    if (spec.channels == 0 || spec.kernel == 0 || spec.stride == 0)
      throw ConfigError("conv: channels, kernel and stride must be positive");
    if (spec.padding >= spec.kernel) throw ConfigError("conv: padding must be smaller than the kernel width");
  }

  LayerSpec spec() const override { return spec_; }
  Shape input_shape() const override { return in_; }
  std::span<double> params() override { return data_; }
  std::span<const double> params() const override { return data_; }
  std::span<double> grads() override { return grad_; }

 protected:
  void allocate(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const std::size_t nw = spec_.channels * in_.channels * spec_.kernel;
    data_.assign(nw + spec_.channels, 0.0);
    grad_.assign(data_.size(), 0.0);
    init_uniform(std::span(data_).first(nw), fan_in, fan_out, rng);
  }
  const double* bias() const { return data_.data() + spec_.channels * in_.channels * spec_.kernel; }

  LayerSpec spec_;
  Shape in_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

// Valid output index range [lo, hi) for tap kk: 0 <= t*s + kk - p < len.
inline void tap_range(std::size_t kk, std::size_t s, std::size_t p, std::size_t len, std::size_t out_len,
                      std::size_t& lo, std::size_t& hi) {
  lo = kk >= p ? 0 : (p - kk + s - 1) / s;
  const std::size_t top = len + p;  // t*s + kk < len + p
  hi = top > kk ? std::min(out_len, (top - kk - 1) / s + 1) : 0;
  if (hi < lo) hi = lo;
}

class Conv1d final : public ConvBase {
 public:
  Conv1d(const LayerSpec& spec, Shape in, Rng& rng) : ConvBase(spec, in) {
    if (spec.stride >= in.length && spec.stride > 1)
      throw DimensionError("conv1d: stride " + std::to_string(spec.stride) + " >= input length " + std::to_string(in.length));
    if (in.length + 2 * spec.padding < spec.kernel) throw DimensionError("conv1d: kernel wider than padded input");
    allocate(in.channels * spec.kernel, spec.channels * spec.kernel, rng);
  }

  Shape output_shape() const override {
    return {spec_.channels, (in_.length + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "conv1d");
    const std::size_t cin = in_.channels, cout = spec_.channels, k = spec_.kernel;
    const std::size_t s = spec_.stride, p = spec_.padding, len = in_.length;
    const std::size_t out_len = output_shape().length;
    Tensor y(x.batch(), cout, out_len);
    const double* w = data_.data();
    const double* bb = bias();
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t o = 0; o < cout; ++o) {
        double* yr = &y.at(b, o, 0);
        std::fill(yr, yr + out_len, bb[o]);
        for (std::size_t c = 0; c < cin; ++c) {
          const double* xr = &x.at(b, c, 0);
          const double* wr = w + (o * cin + c) * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            std::size_t lo, hi;
            tap_range(kk, s, p, len, out_len, lo, hi);
            const double wv = wr[kk];
            for (std::size_t t = lo; t < hi; ++t) yr[t] += wv * xr[t * s + kk - p];
          }
        }
      }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    const std::size_t cin = in_.channels, cout = spec_.channels, k = spec_.kernel;
    const std::size_t s = spec_.stride, p = spec_.padding, len = in_.length;
    const std::size_t out_len = output_shape().length;
    Tensor gx(x.batch(), cin, len);
    const double* w = data_.data();
    double* gw = grad_.data();
    double* gb = gw + cout * cin * k;
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t o = 0; o < cout; ++o) {
        const double* gyr = &gy.at(b, o, 0);
        for (std::size_t t = 0; t < out_len; ++t) gb[o] += gyr[t];
        for (std::size_t c = 0; c < cin; ++c) {
          const double* xr = &x.at(b, c, 0);
          double* gxr = &gx.at(b, c, 0);
          const double* wr = w + (o * cin + c) * k;
          double* gwr = gw + (o * cin + c) * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            std::size_t lo, hi;
            tap_range(kk, s, p, len, out_len, lo, hi);
            const double wv = wr[kk];
            double acc = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              const std::size_t idx = t * s + kk - p;
              acc += gyr[t] * xr[idx];
              gxr[idx] += wv * gyr[t];
            }
            gwr[kk] += acc;
          }
        }
      }
    return gx;
  }
};

class Conv1dTranspose final : public ConvBase {
 public:
  Conv1dTranspose(const LayerSpec& spec, Shape in, Rng& rng) : ConvBase(spec, in) {
    if (spec.stride * (in.length - 1) + spec.kernel <= 2 * spec.padding)
      throw DimensionError("conv1d_transpose: padding removes the whole output");
    allocate(in.channels * spec.kernel, spec.channels * spec.kernel, rng);
  }

  Shape output_shape() const override {
    return {spec_.channels, spec_.stride * (in_.length - 1) + spec_.kernel - 2 * spec_.padding};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1dTranspose>(*this); }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "conv1d_transpose");
    const std::size_t cin = in_.channels, cout = spec_.channels, k = spec_.kernel;
    const std::size_t s = spec_.stride, p = spec_.padding, len = in_.length;
    const std::size_t out_len = output_shape().length;
    Tensor y(x.batch(), cout, out_len);
    const double* w = data_.data();
    const double* bb = bias();
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        double* yr = &y.at(b, o, 0);
        std::fill(yr, yr + out_len, bb[o]);
      }
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xr = &x.at(b, c, 0);
        for (std::size_t o = 0; o < cout; ++o) {
          double* yr = &y.at(b, o, 0);
          const double* wr = w + (c * cout + o) * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            // Input positions t whose target t*s + kk - p lies inside the output.
            std::size_t lo, hi;
            tap_range(kk, s, p, out_len, len, lo, hi);
            const double wv = wr[kk];
            for (std::size_t t = lo; t < hi; ++t) yr[t * s + kk - p] += wv * xr[t];
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    const std::size_t cin = in_.channels, cout = spec_.channels, k = spec_.kernel;
    const std::size_t s = spec_.stride, p = spec_.padding, len = in_.length;
    const std::size_t out_len = output_shape().length;
    Tensor gx(x.batch(), cin, len);
    const double* w = data_.data();
    double* gw = grad_.data();
    double* gb = gw + cout * cin * k;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        const double* gyr = &gy.at(b, o, 0);
        for (std::size_t t = 0; t < out_len; ++t) gb[o] += gyr[t];
      }
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xr = &x.at(b, c, 0);
        double* gxr = &gx.at(b, c, 0);
        for (std::size_t o = 0; o < cout; ++o) {
          const double* gyr = &gy.at(b, o, 0);
          const double* wr = w + (c * cout + o) * k;
          double* gwr = gw + (c * cout + o) * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            std::size_t lo, hi;
            tap_range(kk, s, p, out_len, len, lo, hi);
            const double wv = wr[kk];
            double acc = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              const double g = gyr[t * s + kk - p];
              acc += g * xr[t];
              gxr[t] += wv * g;
            }
            gwr[kk] += acc;
          }
        }
      }
    }
    return gx;
  }
};

// --------------------------------------------------------------------------

class MaxPool final : public Layer {
 public:
  MaxPool(const LayerSpec& spec, Shape in) : spec_(spec), in_(in) {
    if (spec.factor == 0) throw ConfigError("maxpool: factor must be positive");
  }

  LayerSpec spec() const override { return spec_; }
  Shape input_shape() const override { return in_; }
  // A ragged tail is treated as padded with -infinity.
  Shape output_shape() const override { return {in_.channels, (in_.length + spec_.factor - 1) / spec_.factor}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(*this); }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "maxpool");
    const Shape out = output_shape();
    Tensor y(x.batch(), out.channels, out.length);
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < in_.channels; ++c)
        for (std::size_t t = 0; t < out.length; ++t) y.at(b, c, t) = x.at(b, c, argmax(x, b, c, t));
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    const Shape out = output_shape();
    Tensor gx(x.batch(), x.channels(), x.length());
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < in_.channels; ++c)
        for (std::size_t t = 0; t < out.length; ++t) gx.at(b, c, argmax(x, b, c, t)) += gy.at(b, c, t);
    return gx;
  }

 private:
  // Ties resolve to the lowest index.
  std::size_t argmax(const Tensor& x, std::size_t b, std::size_t c, std::size_t t) const {
    const std::size_t begin = t * spec_.factor;
    const std::size_t end = std::min(in_.length, begin + spec_.factor);
    std::size_t best = begin;
    for (std::size_t i = begin + 1; i < end; ++i)
      if (x.at(b, c, i) > x.at(b, c, best)) best = i;
    return best;
  }

  LayerSpec spec_;
  Shape in_;
};

class Upsample final : public Layer {
 public:
  Upsample(const LayerSpec& spec, Shape in) : spec_(spec), in_(in) {
    if (spec.factor == 0) throw ConfigError("upsample: factor must be positive");
  }

  LayerSpec spec() const override { return spec_; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return {in_.channels, in_.length * spec_.factor}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample>(*this); }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "upsample");
    const std::size_t f = spec_.factor;
    Tensor y(x.batch(), in_.channels, in_.length * f);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t r = 0; r < f; ++r) y.values[i * f + r] = x.values[i];
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    const std::size_t f = spec_.factor;
    Tensor gx(x.batch(), x.channels(), x.length());
    for (std::size_t i = 0; i < gx.size(); ++i)
      for (std::size_t r = 0; r < f; ++r) gx.values[i] += gy.values[i * f + r];
    return gx;
  }

 private:
  LayerSpec spec_;
  Shape in_;
};

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(const LayerSpec& spec, Shape in) : spec_(spec), in_(in) {}

  LayerSpec spec() const override { return spec_; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return in_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }

  Tensor apply(const Tensor& x) const override {
    expect_shape(x, in_, "activation");
    Tensor y = x;
    switch (spec_.activation) {
      case Activation::linear:
        break;
      case Activation::relu:
        for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::tanh:
        for (auto& v : y.values) v = std::tanh(v);
        break;
      case Activation::sigmoid:
        for (auto& v : y.values) v = 1.0 / (1.0 + std::exp(-v));
        break;
    }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    const Tensor& x = cached_input_;
    Tensor gx = gy;
    switch (spec_.activation) {
      case Activation::linear:
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (!(x.values[i] > 0.0)) gx.values[i] = 0.0;
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double th = std::tanh(x.values[i]);
          gx.values[i] *= 1.0 - th * th;
        }
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double sg = 1.0 / (1.0 + std::exp(-x.values[i]));
          gx.values[i] *= sg * (1.0 - sg);
        }
        break;
    }
    return gx;
  }

 private:
  LayerSpec spec_;
  Shape in_;
};

}  // namespace

// --------------------------------------------------------------------------

Tensor Tensor::from(std::size_t batch, std::size_t channels, std::size_t length, std::vector<double> data) {
  if (data.size() != batch * channels * length) throw DimensionError("tensor data size does not match shape");
  Tensor t;
  t.shape = {batch, channels, length};
  t.values = std::move(data);
  return t;
}

void require_finite(const Tensor& t, std::string_view where) {
  for (double v : t.values)
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + std::string(where));
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::linear:
      return "linear";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "linear";
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape input, Rng& rng) {
  if (input.channels == 0 || input.length == 0) throw DimensionError("layer input shape must be non-empty");
  switch (spec.kind) {
    case LayerKind::dense:
      return std::make_unique<Dense>(spec, input, rng);
    case LayerKind::conv1d:
      return std::make_unique<Conv1d>(spec, input, rng);
    case LayerKind::conv1d_transpose:
      return std::make_unique<Conv1dTranspose>(spec, input, rng);
    case LayerKind::maxpool:
      return std::make_unique<MaxPool>(spec, input);
    case LayerKind::upsample:
      return std::make_unique<Upsample>(spec, input);
    case LayerKind::activation:
      return std::make_unique<ActivationLayer>(spec, input);
  }
  throw ConfigError("unknown layer kind");
}

Sequential::Sequential(const std::vector<LayerSpec>& specs, Shape input, Rng& rng) : input_(input) {
  Shape shape = input;
  for (const auto& s : specs) {
    auto layer = make_layer(s, shape, rng);
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  }
}

Sequential::Sequential(const Sequential& other) : input_(other.input_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Sequential::push(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() ? !(layer->input_shape() == layers_.back()->output_shape())
                       : false)
    throw DimensionError("pushed layer input shape does not match the stack output");
  if (layers_.empty()) input_ = layer->input_shape();
  layers_.push_back(std::move(layer));
}

Tensor Sequential::forward(const Tensor& input) {
  Tensor x = input;
  for (auto& l : layers_) x = l->forward(x);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Tensor Sequential::apply(const Tensor& input) const {
  Tensor x = input;
  for (const auto& l : layers_) x = l->apply(x);
  return x;
}

void Sequential::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

Shape Sequential::output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }

std::vector<LayerSpec> Sequential::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l->spec());
  return out;
}

std::vector<std::span<double>> Sequential::params() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_)
    if (!l->params().empty()) out.push_back(l->params());
  return out;
}

std::vector<std::span<const double>> Sequential::params() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers_) {
    const Layer& cl = *l;
    if (!cl.params().empty()) out.push_back(cl.params());
  }
  return out;
}

std::vector<std::span<double>> Sequential::grads() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_)
    if (!l->params().empty()) out.push_back(l->grads());
  return out;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (auto p : params()) n += p.size();
  return n;
}

// --------------------------------------------------------------------------

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  expect_same_shape(pred, target, "mse_loss");
  LossResult r;
  r.grad = Tensor(pred.batch(), pred.channels(), pred.length());
  const auto count = static_cast<double>(pred.size());
  if (pred.size() == 0) return r;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values[i] - target.values[i];
    sum += d * d;
    r.grad.values[i] = 2.0 * d / count;
  }
  r.value = sum / count;
  return r;
}

KlResult gaussian_kl(const Tensor& mu, const Tensor& log_var) {
  expect_same_shape(mu, log_var, "gaussian_kl");
  require_finite(log_var, "gaussian_kl log-variance");
  KlResult r;
  r.grad_mu = Tensor(mu.batch(), mu.channels(), mu.length());
  r.grad_log_var = Tensor(mu.batch(), mu.channels(), mu.length());
  if (mu.batch() == 0) return r;
  const auto batch = static_cast<double>(mu.batch());
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.values[i];
    const double lv = log_var.values[i];
    const double var = std::exp(lv);
    // -1/2 (1 + lv - m^2 - var), written as a sum of two non-negative terms.
    sum += 0.5 * m * m + 0.5 * (var - 1.0 - lv);
    r.grad_mu.values[i] = m / batch;
    r.grad_log_var.values[i] = 0.5 * (var - 1.0) / batch;
  }
  r.value = sum / batch;
  return r;
}

void adam_step(std::vector<std::span<double>> params, const std::vector<std::span<double>>& grads, AdamState& state) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter and gradient block counts differ");
  if (state.first.empty()) {
    for (auto p : params) {
      state.first.emplace_back(p.size(), 0.0);
      state.second.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw DimensionError("adam: state does not match parameter blocks");
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m1 = state.first[b];
    auto& m2 = state.second[b];
    if (p.size() != g.size() || p.size() != m1.size()) throw DimensionError("adam: block size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * g[i];
      m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m1[i] / bc1;
      const double v_hat = m2[i] / bc2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

// --------------------------------------------------------------------------

GradientReport check_gradients(Sequential& net, const Tensor& input, const Tensor& target, double tolerance) {
  net.zero_grad();
  const Tensor out = net.forward(input);
  const auto loss = mse_loss(out, target);
  const Tensor grad_input = net.backward(loss.grad);

  auto eval = [&](const Tensor& x) { return mse_loss(net.apply(x), target).value; };

  auto blocks = net.params();
  auto grads = net.grads();

  // Gradients below this scale are compared absolutely; finite differences
  // cannot resolve them relative to the loss roundoff.
  double scale = 0.0;
  for (auto g : grads)
    for (double v : g) scale = std::max(scale, std::abs(v));
  for (double v : grad_input.values) scale = std::max(scale, std::abs(v));
  const double floor = std::max(0.1 * scale, 1e-12);

  GradientReport report;
  auto compare = [&](double analytic, double numeric, std::size_t block, std::size_t index) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (rel > report.max_relative_error || !std::isfinite(rel)) {
      report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
      report.worst_block = block;
      report.worst_index = index;
    }
  };

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto p = blocks[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      p[i] = saved + h;
      const double hi = p[i];
      const double up = eval(input);
      p[i] = saved - h;
      const double lo = p[i];
      const double down = eval(input);
      p[i] = saved;
      compare(grads[b][i], (up - down) / (hi - lo), b, i);
    }
  }
  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.values[i];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    x.values[i] = saved + h;
    const double hi = x.values[i];
    const double up = eval(x);
    x.values[i] = saved - h;
    const double lo = x.values[i];
    const double down = eval(x);
    x.values[i] = saved;
    compare(grad_input.values[i], (up - down) / (hi - lo), blocks.size(), i);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

GradientReport check_gradients(Sequential& net, const Tensor& input, double tolerance) {
  const Shape out = net.output_shape();
  Tensor target(input.batch(), out.channels, out.length);
  Rng rng(0x5eedULL);
  for (auto& v : target.values) v = rng.uniform(-1.0, 1.0);
  return check_gradients(net, input, target, tolerance);
}

}  // namespace wavelatent::ad
