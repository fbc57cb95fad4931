#include <gtest/gtest.h>

#include <cmath>

#include "wavelatent/autodiff.hpp"
#include "wavelatent/error.hpp"

using namespace wavelatent;
using namespace wavelatent::ad;

namespace {

Tensor random_tensor(std::size_t b, std::size_t c, std::size_t l, Rng& rng) {
  Tensor t(b, c, l);
  for (auto& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

void set_params(Layer& layer, std::initializer_list<double> values) {
  auto p = layer.params();
  ASSERT_EQ(p.size(), values.size());
  std::copy(values.begin(), values.end(), p.begin());
}

}  // namespace

TEST(Dense, HandCase) {
  Rng rng(1);
  Sequential net({LayerSpec::dense(2)}, {1, 2}, rng);
  set_params(net.layer(0), {1, 2, 3, 4, 0, 0});
  const Tensor y = net.apply(Tensor::from(1, 1, 2, {1, 1}));
  EXPECT_EQ(y.values, (std::vector<double>{3, 7}));
}

TEST(Dense, IdentityWeights) {
  Rng rng(1);
  Sequential net({LayerSpec::dense(3)}, {1, 3}, rng);
  set_params(net.layer(0), {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
  const Tensor x = Tensor::from(2, 1, 3, {1, -2, 3, 0.5, 0.25, -4});
  EXPECT_EQ(net.apply(x), x);
}

TEST(Dense, WrongWidthThrows) {
  Rng rng(1);
  Sequential net({LayerSpec::dense(2)}, {1, 3}, rng);
  EXPECT_THROW(net.apply(Tensor(1, 1, 4)), DimensionError);
}

TEST(Dense, LinearGradientNearExact) {
  Rng rng(2);
  Sequential net({LayerSpec::dense(4)}, {1, 5}, rng);
  const auto report = check_gradients(net, random_tensor(3, 1, 5, rng), 1e-9);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
  EXPECT_GT(report.checked, 24u);
}

TEST(Conv1d, SingleTapIsIdentity) {
  Rng rng(1);
  Sequential net({LayerSpec::conv(1, 1)}, {1, 3}, rng);
  set_params(net.layer(0), {1, 0});
  const Tensor x = Tensor::from(1, 1, 3, {1, 2, 3});
  EXPECT_EQ(net.apply(x), x);
}

TEST(Conv1d, HandCrossCorrelation) {
  Rng rng(1);
  Sequential net({LayerSpec::conv(1, 3)}, {1, 3}, rng);
  set_params(net.layer(0), {1, 0, -1, 0});
  EXPECT_EQ(net.apply(Tensor::from(1, 1, 3, {1, 2, 3})).values, std::vector<double>{-2});
}

TEST(Conv1d, StrideAtLeastLengthThrows) {
  Rng rng(1);
  EXPECT_THROW(Sequential({LayerSpec::conv(1, 2, 4)}, {1, 4}, rng), DimensionError);
}

TEST(Conv1d, PaddingMustBeBelowKernel) {
  Rng rng(1);
  EXPECT_THROW(Sequential({LayerSpec::conv(1, 2, 1, 2)}, {1, 8}, rng), ConfigError);
}

TEST(Conv1d, TransposeOutputLength) {
  Rng rng(1);
  Sequential net({LayerSpec::conv_transpose(2, 5, 3, 1)}, {1, 7}, rng);
  EXPECT_EQ(net.output_shape().length, 3u * 6u + 5u - 2u);
}

struct ConvCase {
  std::size_t cin, cout, len, kernel, stride, padding;
};

class ConvAdjoint : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvAdjoint, InnerProductsAgree) {
  const auto c = GetParam();
  Rng rng(11);
  Sequential conv({LayerSpec::conv(c.cout, c.kernel, c.stride, c.padding)}, {c.cin, c.len}, rng);
  const Shape out = conv.output_shape();
  Sequential convt({LayerSpec::conv_transpose(c.cin, c.kernel, c.stride, c.padding)}, {c.cout, out.length}, rng);
  // Same weight buffer, zero biases: the two maps are adjoint whenever the
  // transpose reproduces the input length.
  auto w = conv.layer(0).params();
  auto wt = convt.layer(0).params();
  const std::size_t nw = c.cout * c.cin * c.kernel;
  std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(nw), wt.begin());
  std::fill(w.begin() + static_cast<std::ptrdiff_t>(nw), w.end(), 0.0);
  std::fill(wt.begin() + static_cast<std::ptrdiff_t>(nw), wt.end(), 0.0);

  const Tensor x = random_tensor(2, c.cin, c.len, rng);
  const Tensor y = random_tensor(2, c.cout, out.length, rng);
  const Tensor cx = conv.apply(x);
  Tensor cty = convt.apply(y);
  // Transposed output may be shorter than x when the stride skips a tail.
  double rhs = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t ch = 0; ch < c.cin; ++ch)
      for (std::size_t t = 0; t < std::min(c.len, cty.length()); ++t) rhs += x.at(b, ch, t) * cty.at(b, ch, t);
  EXPECT_NEAR(dot(cx, y), rhs, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Configurations, ConvAdjoint,
                         ::testing::Values(ConvCase{1, 1, 9, 3, 1, 0}, ConvCase{2, 3, 16, 4, 2, 1},
                                           ConvCase{3, 2, 40, 16, 4, 0}, ConvCase{1, 4, 32, 8, 2, 3},
                                           ConvCase{2, 2, 13, 5, 3, 2}));

TEST(MaxPool, HandCaseAndRouting) {
  Rng rng(1);
  Sequential net({LayerSpec::maxpool(2)}, {1, 4}, rng);
  const Tensor y = net.forward(Tensor::from(1, 1, 4, {1, 3, 2, 2}));
  EXPECT_EQ(y.values, (std::vector<double>{3, 2}));
  const Tensor g = net.backward(Tensor::from(1, 1, 2, {1, 1}));
  EXPECT_EQ(g.values, (std::vector<double>{0, 1, 1, 0}));
}

TEST(MaxPool, RaggedTailPadsWithNegativeInfinity) {
  Rng rng(1);
  Sequential net({LayerSpec::maxpool(2)}, {1, 3}, rng);
  EXPECT_EQ(net.apply(Tensor::from(1, 1, 3, {-5, -6, -7})).values, (std::vector<double>{-5, -7}));
}

TEST(Resample, FactorOneIsIdentity) {
  Rng rng(1);
  const Tensor x = Tensor::from(1, 2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(Sequential({LayerSpec::maxpool(1)}, {2, 3}, rng).apply(x), x);
  EXPECT_EQ(Sequential({LayerSpec::upsample(1)}, {2, 3}, rng).apply(x), x);
}

TEST(Upsample, RepeatsAndSums) {
  Rng rng(1);
  Sequential net({LayerSpec::upsample(3)}, {1, 1}, rng);
  EXPECT_EQ(net.forward(Tensor::from(1, 1, 1, {5})).values, (std::vector<double>{5, 5, 5}));
  EXPECT_EQ(net.backward(Tensor::from(1, 1, 3, {1, 2, 3})).values, std::vector<double>{6});
}

TEST(Activation, UnknownNameThrows) { EXPECT_THROW(parse_activation("swish"), ConfigError); }

TEST(Activation, NamesRoundTrip) {
  for (auto a : {Activation::linear, Activation::relu, Activation::tanh, Activation::sigmoid})
    EXPECT_EQ(parse_activation(activation_name(a)), a);
}

TEST(Activation, TanhAtOrigin) {
  Rng rng(1);
  Sequential net({LayerSpec::act(Activation::tanh)}, {1, 1}, rng);
  EXPECT_EQ(net.forward(Tensor(1, 1, 1)).values[0], 0.0);
  EXPECT_EQ(net.backward(Tensor(1, 1, 1, 1.0)).values[0], 1.0);
}

TEST(Activation, LinearIsIdentity) {
  Rng rng(1);
  const Tensor x = Tensor::from(1, 1, 3, {-1, 0, 2});
  EXPECT_EQ(Sequential({LayerSpec::act(Activation::linear)}, {1, 3}, rng).apply(x), x);
}

TEST(Activation, GradientsMatchFiniteDifferences) {
  for (auto a : {Activation::linear, Activation::relu, Activation::tanh, Activation::sigmoid}) {
    Rng rng(5);
    Sequential net({LayerSpec::dense(6), LayerSpec::act(a), LayerSpec::dense(3)}, {1, 4}, rng);
    Tensor x = random_tensor(2, 1, 4, rng);
    const auto report = check_gradients(net, x, 1e-7);
    EXPECT_TRUE(report.passed) << activation_name(a) << " " << report.max_relative_error;
  }
}

TEST(LayerGradients, EveryKindMatchesFiniteDifferences) {
  const std::vector<std::vector<LayerSpec>> stacks = {
      {LayerSpec::conv(3, 4, 2, 1), LayerSpec::dense(2)},
      {LayerSpec::conv_transpose(2, 5, 3, 1), LayerSpec::dense(2)},
      {LayerSpec::conv(2, 3), LayerSpec::maxpool(2), LayerSpec::dense(2)},
      {LayerSpec::upsample(2), LayerSpec::conv(2, 3), LayerSpec::dense(2)},
  };
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    Rng rng(40 + i);
    Sequential net(stacks[i], {2, 11}, rng);
    const auto report = check_gradients(net, random_tensor(2, 2, 11, rng), 1e-5);
    EXPECT_TRUE(report.passed) << "stack " << i << " " << report.max_relative_error;
  }
}

TEST(LayerGradients, ThreeLayerCaeStack) {
  Rng rng(9);
  Sequential net({LayerSpec::conv(4, 8, 2), LayerSpec::act(Activation::relu), LayerSpec::maxpool(2),
                  LayerSpec::dense(3), LayerSpec::dense(8, 2), LayerSpec::conv_transpose(1, 6, 4)},
                 {1, 32}, rng);
  const auto report = check_gradients(net, random_tensor(3, 1, 32, rng), 1e-5);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

namespace {

// Fixture layer whose backward is deliberately wrong.
class BrokenScale final : public Layer {
 public:
  LayerSpec spec() const override { return LayerSpec::act(Activation::linear); }
  Shape input_shape() const override { return {1, 3}; }
  Shape output_shape() const override { return {1, 3}; }
  Tensor apply(const Tensor& x) const override {
    Tensor y = x;
    for (auto& v : y.values) v *= w_[0];
    return y;
  }
  Tensor backward(const Tensor& gy) override {
    g_[0] += 0.5 * dot(gy, cached_input_);
    return gy;
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BrokenScale>(*this); }
  std::span<double> params() override { return w_; }
  std::span<const double> params() const override { return w_; }
  std::span<double> grads() override { return g_; }

 private:
  std::vector<double> w_{1.3};
  std::vector<double> g_{0.0};
};

}  // namespace

TEST(CheckGradients, CorruptedBackwardIsReported) {
  Sequential net;
  net.push(std::make_unique<BrokenScale>());
  Rng rng(3);
  const auto report = check_gradients(net, random_tensor(2, 1, 3, rng), 1e-5);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_relative_error, 0.1);
}

TEST(Mse, HandCases) {
  EXPECT_EQ(mse_loss(Tensor::from(1, 1, 2, {3, 4}), Tensor::from(1, 1, 2, {3, 4})).value, 0.0);
  const auto r = mse_loss(Tensor::from(1, 1, 2, {0, 0}), Tensor::from(1, 1, 2, {1, 1}));
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  EXPECT_EQ(r.grad.values, (std::vector<double>{-1, -1}));
  EXPECT_THROW(mse_loss(Tensor(1, 1, 2), Tensor(1, 1, 3)), DimensionError);
}

TEST(Mse, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Tensor p = random_tensor(2, 1, 5, rng);
  const Tensor t = random_tensor(2, 1, 5, rng);
  const auto r = mse_loss(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p.values[i];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    p.values[i] = saved + h;
    const double up = mse_loss(p, t).value;
    p.values[i] = saved - h;
    const double down = mse_loss(p, t).value;
    p.values[i] = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_LT(std::abs(fd - r.grad.values[i]) / std::max(std::abs(fd), 1e-3), 1e-8);
  }
}

TEST(Kl, ClosedFormCases) {
  EXPECT_NEAR(gaussian_kl(Tensor(1, 1, 3), Tensor(1, 1, 3)).value, 0.0, 1e-12);
  EXPECT_NEAR(gaussian_kl(Tensor::from(1, 1, 1, {1}), Tensor::from(1, 1, 1, {0})).value, 0.5, 1e-12);
}

TEST(Kl, NonNegativeOnRandomDraws) {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const Tensor mu = Tensor::from(1, 1, 1, {rng.uniform(-3, 3)});
    const Tensor lv = Tensor::from(1, 1, 1, {rng.uniform(-5, 5)});
    EXPECT_GE(gaussian_kl(mu, lv).value, 0.0);
  }
}

TEST(Kl, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  Tensor mu = random_tensor(3, 1, 2, rng);
  Tensor lv = random_tensor(3, 1, 2, rng);
  const auto r = gaussian_kl(mu, lv);
  auto probe = [&](Tensor& t, const Tensor& analytic) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.values[i];
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      t.values[i] = saved + h;
      const double up = gaussian_kl(mu, lv).value;
      t.values[i] = saved - h;
      const double down = gaussian_kl(mu, lv).value;
      t.values[i] = saved;
      EXPECT_NEAR((up - down) / (2 * h), analytic.values[i], 1e-8);
    }
  };
  probe(mu, r.grad_mu);
  probe(lv, r.grad_log_var);
}

TEST(Kl, NonFiniteLogVarThrows) {
  EXPECT_THROW(gaussian_kl(Tensor(1, 1, 1), Tensor::from(1, 1, 1, {NAN})), NumericError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.5, -2.0};
  std::vector<double> g{0.0, 0.0};
  AdamState state;
  adam_step({p}, {g}, state);
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0};
  std::vector<double> g{1.0};
  AdamState state;
  adam_step({p}, {g}, state);
  EXPECT_NEAR(p[0], -0.001, 1e-10);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, DescendsQuadratic) {
  std::vector<double> p{3.0};
  std::vector<double> g{0.0};
  AdamState state;
  state.config.learning_rate = 0.1;
  const double start = p[0] * p[0];
  for (int i = 0; i < 2; ++i) {
    g[0] = 2.0 * p[0];
    adam_step({p}, {g}, state);
  }
  EXPECT_LT(p[0] * p[0], start);
}

TEST(Sequential, ForwardIsPureAndCopiesAreDeep) {
  Rng rng(6);
  Sequential net({LayerSpec::conv(2, 3), LayerSpec::act(Activation::tanh), LayerSpec::dense(2)}, {1, 8}, rng);
  const Tensor x = random_tensor(2, 1, 8, rng);
  EXPECT_EQ(net.apply(x), net.apply(x));
  Sequential copy = net;
  copy.params()[0][0] += 1.0;
  EXPECT_NE(copy.apply(x), net.apply(x));
}

TEST(Sequential, SameSeedSameInitialization) {
  Rng a(77), b(77);
  Sequential n1({LayerSpec::dense(5), LayerSpec::dense(2)}, {1, 3}, a);
  Sequential n2({LayerSpec::dense(5), LayerSpec::dense(2)}, {1, 3}, b);
  EXPECT_EQ(n1.params()[0][0], n2.params()[0][0]);
  EXPECT_EQ(n1.parameter_count(), 5u * 3 + 5 + 2 * 5 + 2);
}
