#include "wavelatent/models.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "wavelatent/error.hpp"
#include "wavelatent/parallel.hpp"

namespace wavelatent {

using ad::Activation;
using ad::LayerSpec;
using ad::Tensor;

NetworkFamily parse_family(std::string_view name) {
  if (name == "cae") return NetworkFamily::cae;
  if (name == "vae") return NetworkFamily::vae;
  if (name == "ffnn") return NetworkFamily::ffnn;
  throw ConfigError("unknown network family '" + std::string(name) + "'");
}

std::string_view family_name(NetworkFamily f) {
  switch (f) {
    case NetworkFamily::cae:
      return "cae";
    case NetworkFamily::vae:
      return "vae";
    case NetworkFamily::ffnn:
      return "ffnn";
  }
  return "cae";
}

namespace {

NetworkArch autoencoder_arch(std::size_t m, std::size_t latent_dim, std::size_t head) {
  if (latent_dim == 0 || latent_dim >= m) throw ConfigError("latent width must satisfy 0 < D < m");
  if (m < 100) throw ConfigError("reference architecture needs m >= 100, got " + std::to_string(m));
  const std::size_t l1 = (m - 16) / 4 + 1;
  const std::size_t l2 = (l1 + 1) / 2;
  const std::size_t l3 = (l2 - 8) / 2 + 1;
  NetworkArch arch;
  arch.input_dim = m;
  arch.latent_dim = latent_dim;
  arch.encoder = {LayerSpec::conv(8, 16, 4), LayerSpec::act(Activation::relu), LayerSpec::maxpool(2),
                  LayerSpec::conv(16, 8, 2), LayerSpec::act(Activation::relu), LayerSpec::dense(head * latent_dim)};
  const std::size_t t1 = 2 * (l3 - 1) + 8;
  const std::size_t t2 = 2 * t1;
  const std::size_t body = 4 * (t2 - 1) + 16;
  const std::size_t pad = m > body ? m - body : 0;
  const std::size_t kernel = body + 2 * pad + 1 - m;
  arch.decoder = {LayerSpec::dense(16 * l3, 16),          LayerSpec::act(Activation::relu),
                  LayerSpec::conv_transpose(8, 8, 2),      LayerSpec::act(Activation::relu),
                  LayerSpec::upsample(2),                  LayerSpec::conv_transpose(1, 16, 4),
                  LayerSpec::conv(1, kernel, 1, pad)};
  return arch;
}

Tensor gather(const RowMatrix& rows, std::span<const std::size_t> idx) {
  const auto width = static_cast<std::size_t>(rows.cols());
  Tensor t(idx.size(), 1, width);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const double* src = rows.row(static_cast<Eigen::Index>(idx[b])).data();
    std::copy(src, src + width, t.values.begin() + static_cast<std::ptrdiff_t>(b * width));
  }
  return t;
}

double sample_rss(std::span<const double> y, std::span<const double> yhat) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    num += d * d;
    den += y[i] * y[i];
  }
  return den > 0.0 ? 100.0 * num / den : 0.0;
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

std::vector<std::span<double>> concat(std::vector<std::span<double>> a, const std::vector<std::span<double>>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_rows(const RowMatrix& rows, std::size_t width, const char* what) {
  if (rows.rows() == 0) throw DimensionError(std::string(what) + ": no training rows");
  if (static_cast<std::size_t>(rows.cols()) != width)
    throw DimensionError(std::string(what) + ": rows have width " + std::to_string(rows.cols()) + ", expected " +
                         std::to_string(width));
  if (!rows.allFinite()) throw NumericError(std::string(what) + ": non-finite training data");
}

/// Early-stop bookkeeping shared by every training loop.
struct Plateau {
  std::size_t patience;
  double best = INFINITY;
  std::size_t waited = 0;

  bool stop(double loss) {
    if (loss < best * (1.0 - 1e-3)) {
      best = loss;
      waited = 0;
    } else {
      ++waited;
    }
    return patience > 0 && waited >= patience;
  }
};

// Batched inference over rows; rows are independent so chunks fan out.
template <class Fn>
RowMatrix map_rows(const RowMatrix& in, std::size_t out_width, Fn&& fn) {
  RowMatrix out(in.rows(), static_cast<Eigen::Index>(out_width));
  const std::size_t n = static_cast<std::size_t>(in.rows());
  constexpr std::size_t chunk = 32;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) idx.push_back(i);
    const Tensor y = fn(gather(in, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto row = y.row(b);
      std::copy(row.begin(), row.end(), out.row(static_cast<Eigen::Index>(idx[b])).data());
    }
  });
  return out;
}

void require_autoencoder(const NetworkModel& model, const char* what) {
  if (model.family == NetworkFamily::ffnn) throw FamilyError(std::string(what) + " needs a CAE or VAE model");
}

Tensor encoder_means(const NetworkModel& model, const Tensor& x) {
  Tensor out = model.encoder.apply(x);
  if (model.family != NetworkFamily::vae) return out;
  const std::size_t d = model.latent_dim;
  Tensor mu(x.batch(), 1, d);
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t i = 0; i < d; ++i) mu.at(b, 0, i) = out.at(b, 0, i);
  return mu;
}

NetworkModel train_autoencoder(NetworkFamily family, const RowMatrix& signals, const NetworkArch& arch,
                               const TrainConfig& config) {
  validate(config);
  check_rows(signals, arch.input_dim, family == NetworkFamily::vae ? "vae_train" : "cae_train");
  NetworkModel model = init_network(family, arch, config.seed);
  if (config.epochs == 0) return model;

  const bool vae = family == NetworkFamily::vae;
  const std::size_t n = static_cast<std::size_t>(signals.rows());
  const std::size_t d = arch.latent_dim;
  Rng order_rng = Rng::derive(config.seed, {1});
  Rng noise_rng = Rng::derive(config.seed, {2});
  ad::AdamState adam{config.adam, {}, {}, 0};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto warmup = static_cast<double>(config.epochs) * config.kl_warmup_fraction;
  Plateau plateau{config.patience};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double kappa = vae ? (warmup > 0.0 ? config.kl_weight * std::min(1.0, (static_cast<double>(epoch) + 1.0) / warmup)
                                             : config.kl_weight)
                             : 0.0;
    shuffle(order, order_rng);
    EpochLog log;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor x = gather(signals, idx);
      const std::size_t batch = idx.size();

      model.encoder.zero_grad();
      model.decoder.zero_grad();
      const Tensor enc = model.encoder.forward(x);
      Tensor z(batch, 1, d);
      Tensor mu, log_var, eps;
      if (vae) {
        mu = Tensor(batch, 1, d);
        log_var = Tensor(batch, 1, d);
        eps = Tensor(batch, 1, d);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < d; ++i) {
            mu.at(b, 0, i) = enc.at(b, 0, i);
            log_var.at(b, 0, i) = enc.at(b, 0, d + i);
            eps.at(b, 0, i) = noise_rng.normal();
            z.at(b, 0, i) = mu.at(b, 0, i) + std::exp(0.5 * log_var.at(b, 0, i)) * eps.at(b, 0, i);
          }
      } else {
        z = enc;
      }
      const Tensor yhat = model.decoder.forward(z);
      const auto recon = ad::mse_loss(yhat, x);
      const Tensor gz = model.decoder.backward(recon.grad);
      double kl_value = 0.0;
      if (vae) {
        if (!std::isfinite(recon.value)) throw TrainingError("reconstruction loss is not finite", epoch);
        for (double v : log_var.values)
          if (!std::isfinite(v)) throw TrainingError("log variance is not finite", epoch);
        const auto kl = ad::gaussian_kl(mu, log_var);
        kl_value = kl.value;
        Tensor genc(batch, 1, 2 * d);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < d; ++i) {
            const double sigma = std::exp(0.5 * log_var.at(b, 0, i));
            genc.at(b, 0, i) = gz.at(b, 0, i) + kappa * kl.grad_mu.at(b, 0, i);
            genc.at(b, 0, d + i) =
                gz.at(b, 0, i) * eps.at(b, 0, i) * 0.5 * sigma + kappa * kl.grad_log_var.at(b, 0, i);
          }
        model.encoder.backward(genc);
      } else {
        model.encoder.backward(gz);
      }
      const double total = recon.value + kappa * kl_value;
      if (!std::isfinite(total)) throw TrainingError("training loss is not finite", epoch);

      ad::adam_step(concat(model.encoder.params(), model.decoder.params()),
                    concat(model.encoder.grads(), model.decoder.grads()), adam);

      const auto w = static_cast<double>(batch);
      log.loss += w * total;
      log.recon += w * recon.value;
      log.kl += w * kl_value;
      for (std::size_t b = 0; b < batch; ++b) log.rss += sample_rss(x.row(b), yhat.row(b));
    }
    const auto count = static_cast<double>(n);
    log.loss /= count;
    log.recon /= count;
    log.kl /= count;
    log.rss /= count;
    model.log.push_back(log);
    if (plateau.stop(log.loss)) break;
  }
  model.final_rss = reconstruction_rss(model, signals);
  return model;
}

std::vector<ColumnScale> fit_columns(const RowMatrix& rows) {
  std::vector<ColumnScale> out;
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double lo = rows.col(c).minCoeff();
    const double hi = rows.col(c).maxCoeff();
    ColumnScale s;
    s.offset = 0.5 * (lo + hi);
    s.scale = hi > lo ? 2.0 / (hi - lo) : 1.0;
    out.push_back(s);
  }
  return out;
}

RowMatrix scale_columns(const RowMatrix& rows, const std::vector<ColumnScale>& s) {
  RowMatrix out = rows;
  for (Eigen::Index c = 0; c < rows.cols(); ++c)
    out.col(c) = (rows.col(c).array() - s[static_cast<std::size_t>(c)].offset) * s[static_cast<std::size_t>(c)].scale;
  return out;
}

RowMatrix unscale_columns(const RowMatrix& rows, const std::vector<ColumnScale>& s) {
  RowMatrix out = rows;
  for (Eigen::Index c = 0; c < rows.cols(); ++c)
    out.col(c) = rows.col(c).array() / s[static_cast<std::size_t>(c)].scale + s[static_cast<std::size_t>(c)].offset;
  return out;
}

}  // namespace

NetworkArch reference_cae_arch(std::size_t m, std::size_t latent_dim) { return autoencoder_arch(m, latent_dim, 1); }
NetworkArch reference_vae_arch(std::size_t m, std::size_t latent_dim) { return autoencoder_arch(m, latent_dim, 2); }

NetworkArch reference_ffnn_arch(std::size_t inputs, std::size_t outputs, std::size_t hidden, std::size_t layers) {
  if (inputs == 0 || outputs == 0 || hidden == 0) throw ConfigError("ffnn widths must be positive");
  NetworkArch arch;
  arch.input_dim = inputs;
  arch.latent_dim = outputs;
  for (std::size_t i = 0; i < layers; ++i) {
    arch.encoder.push_back(LayerSpec::dense(hidden));
    arch.encoder.push_back(LayerSpec::act(Activation::tanh));
  }
  arch.encoder.push_back(LayerSpec::dense(outputs));
  return arch;
}

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(c.adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0) || !(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(c.adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(c.kl_weight >= 0.0)) throw ConfigError("KL weight must be non-negative");
  if (!(c.kl_warmup_fraction >= 0.0 && c.kl_warmup_fraction <= 1.0)) throw ConfigError("KL warm-up fraction must lie in [0, 1]");
}

NetworkModel init_network(NetworkFamily family, const NetworkArch& arch, std::uint64_t seed) {
  NetworkModel model;
  model.family = family;
  model.input_dim = arch.input_dim;
  model.latent_dim = arch.latent_dim;
  model.seed = seed;
  Rng rng = Rng::derive(seed, {0});
  model.encoder = ad::Sequential(arch.encoder, {1, arch.input_dim}, rng);
  const std::size_t out = model.encoder.output_shape().features();
  if (family == NetworkFamily::ffnn) {
    if (out != arch.latent_dim) throw ConfigError("ffnn output width does not match the target width");
    if (!arch.decoder.empty()) throw ConfigError("ffnn has no decoder");
    return model;
  }
  const std::size_t head = family == NetworkFamily::vae ? 2 : 1;
  if (out != head * arch.latent_dim)
    throw ConfigError("encoder emits " + std::to_string(out) + " values, expected " + std::to_string(head * arch.latent_dim));
  model.decoder = ad::Sequential(arch.decoder, {1, arch.latent_dim}, rng);
  if (model.decoder.output_shape().features() != arch.input_dim)
    throw ConfigError("decoder emits " + std::to_string(model.decoder.output_shape().features()) + " samples, expected " +
                      std::to_string(arch.input_dim));
  return model;
}

NetworkModel cae_train(const RowMatrix& signals, const NetworkArch& arch, const TrainConfig& config) {
  return train_autoencoder(NetworkFamily::cae, signals, arch, config);
}

NetworkModel vae_train(const RowMatrix& signals, const NetworkArch& arch, const TrainConfig& config) {
  return train_autoencoder(NetworkFamily::vae, signals, arch, config);
}

NetworkModel ffnn_train(const RowMatrix& inputs, const RowMatrix& targets, const NetworkArch& arch,
                        const TrainConfig& config) {
  validate(config);
  check_rows(inputs, arch.input_dim, "ffnn_train inputs");
  check_rows(targets, arch.latent_dim, "ffnn_train targets");
  if (inputs.rows() != targets.rows()) throw DimensionError("ffnn_train: input and target row counts differ");
  NetworkModel model = init_network(NetworkFamily::ffnn, arch, config.seed);
  model.input_scale = fit_columns(inputs);
  model.output_scale = fit_columns(targets);
  if (config.epochs == 0) return model;

  const RowMatrix x = scale_columns(inputs, model.input_scale);
  const RowMatrix y = scale_columns(targets, model.output_scale);
  const std::size_t n = static_cast<std::size_t>(x.rows());
  Rng order_rng = Rng::derive(config.seed, {1});
  ad::AdamState adam{config.adam, {}, {}, 0};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Plateau plateau{config.patience};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, order_rng);
    EpochLog log;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor xb = gather(x, idx);
      const Tensor yb = gather(y, idx);
      model.encoder.zero_grad();
      const auto loss = ad::mse_loss(model.encoder.forward(xb), yb);
      if (!std::isfinite(loss.value)) throw TrainingError("training loss is not finite", epoch);
      model.encoder.backward(loss.grad);
      ad::adam_step(model.encoder.params(), model.encoder.grads(), adam);
      log.loss += static_cast<double>(idx.size()) * loss.value;
    }
    log.loss /= static_cast<double>(n);
    log.recon = log.loss;
    model.log.push_back(log);
    if (plateau.stop(log.loss)) break;
  }
  return model;
}

RowMatrix signal_matrix(const DatasetGrid& dataset) {
  RowMatrix out(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(dataset.m()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.records()[i].samples;
    std::copy(s.begin(), s.end(), out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

RowMatrix signal_matrix(const DatasetGrid& dataset, std::uint16_t path) {
  if (!dataset.has_path(path)) throw ConfigError("unknown path id " + std::to_string(path));
  const auto idx = dataset.indices_for_path(path);
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(dataset.m()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = dataset.records()[idx[i]].samples;
    std::copy(s.begin(), s.end(), out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

NetworkModel cae_train(const DatasetGrid& train, const NetworkArch& arch, const TrainConfig& config) {
  return cae_train(signal_matrix(train), arch, config);
}

NetworkModel vae_train(const DatasetGrid& train, const NetworkArch& arch, const TrainConfig& config) {
  return vae_train(signal_matrix(train), arch, config);
}

std::vector<double> encode(const NetworkModel& model, std::span<const double> signal) {
  require_autoencoder(model, "encode");
  if (signal.size() != model.input_dim)
    throw DimensionError("signal has " + std::to_string(signal.size()) + " samples, model expects " +
                         std::to_string(model.input_dim));
  const Tensor x = Tensor::from(1, 1, signal.size(), {signal.begin(), signal.end()});
  return encoder_means(model, x).values;
}

RowMatrix encode(const NetworkModel& model, const RowMatrix& signals) {
  require_autoencoder(model, "encode");
  if (static_cast<std::size_t>(signals.cols()) != model.input_dim)
    throw DimensionError("signals have " + std::to_string(signals.cols()) + " samples, model expects " +
                         std::to_string(model.input_dim));
  return map_rows(signals, model.latent_dim, [&](const Tensor& x) { return encoder_means(model, x); });
}

std::pair<RowMatrix, RowMatrix> encode_posterior(const NetworkModel& model, const RowMatrix& signals) {
  if (model.family != NetworkFamily::vae) throw FamilyError("posterior requested from a non-VAE model");
  if (static_cast<std::size_t>(signals.cols()) != model.input_dim) throw DimensionError("signal length mismatch");
  const std::size_t d = model.latent_dim;
  const RowMatrix both = map_rows(signals, 2 * d, [&](const Tensor& x) { return model.encoder.apply(x); });
  return {both.leftCols(static_cast<Eigen::Index>(d)), both.rightCols(static_cast<Eigen::Index>(d))};
}

std::vector<double> decode(const NetworkModel& model, std::span<const double> latent) {
  require_autoencoder(model, "decode");
  if (latent.size() != model.latent_dim)
    throw DimensionError("latent has " + std::to_string(latent.size()) + " values, model expects " +
                         std::to_string(model.latent_dim));
  return model.decoder.apply(Tensor::from(1, 1, latent.size(), {latent.begin(), latent.end()})).values;
}

RowMatrix decode(const NetworkModel& model, const RowMatrix& latents) {
  require_autoencoder(model, "decode");
  if (static_cast<std::size_t>(latents.cols()) != model.latent_dim) throw DimensionError("latent width mismatch");
  return map_rows(latents, model.input_dim, [&](const Tensor& z) { return model.decoder.apply(z); });
}

std::vector<double> predict(const NetworkModel& model, std::span<const double> input) {
  RowMatrix row(1, static_cast<Eigen::Index>(input.size()));
  std::copy(input.begin(), input.end(), row.data());
  const RowMatrix out = predict(model, row);
  return {out.data(), out.data() + out.size()};
}

RowMatrix predict(const NetworkModel& model, const RowMatrix& inputs) {
  if (model.family != NetworkFamily::ffnn) throw FamilyError("predict needs an FFNN model");
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim)
    throw DimensionError("input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim));
  const RowMatrix scaled = scale_columns(inputs, model.input_scale);
  const RowMatrix out = map_rows(scaled, model.latent_dim, [&](const Tensor& x) { return model.encoder.apply(x); });
  return unscale_columns(out, model.output_scale);
}

RowMatrix vae_sample(const NetworkModel& model, std::span<const double> signal, std::size_t count, Rng& rng) {
  if (model.family != NetworkFamily::vae) throw FamilyError("vae_sample needs a VAE model");
  if (count == 0) throw ConfigError("sample count must be at least 1");
  if (signal.size() != model.input_dim) throw DimensionError("signal length mismatch");
  const Tensor out = model.encoder.apply(Tensor::from(1, 1, signal.size(), {signal.begin(), signal.end()}));
  const std::size_t d = model.latent_dim;
  RowMatrix z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t i = 0; i < d; ++i) {
      const double sigma = std::exp(0.5 * out.values[d + i]);
      z(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = out.values[i] + sigma * rng.normal();
    }
  if (!z.allFinite()) throw NumericError("vae_sample produced non-finite latents");
  return z;
}

double reconstruction_rss(const NetworkModel& model, const RowMatrix& signals) {
  const RowMatrix recon = decode(model, encode(model, signals));
  double total = 0.0;
  for (Eigen::Index i = 0; i < signals.rows(); ++i) {
    const auto n = static_cast<std::size_t>(signals.cols());
    total += sample_rss({signals.row(i).data(), n}, {recon.row(i).data(), n});
  }
  return signals.rows() ? total / static_cast<double>(signals.rows()) : 0.0;
}

}  // namespace wavelatent
