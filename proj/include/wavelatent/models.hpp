#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wavelatent/autodiff.hpp"
#include "wavelatent/dmaps.hpp"
#include "wavelatent/signal.hpp"

namespace wavelatent {

enum class NetworkFamily : std::uint8_t { cae = 1, vae = 2, ffnn = 3 };

NetworkFamily parse_family(std::string_view name);
std::string_view family_name(NetworkFamily f);

/// Layer stacks plus the shapes they are built for. For a VAE the encoder
/// ends in 2 * latent_dim units (mu followed by log variance).
struct NetworkArch {
  std::vector<ad::LayerSpec> encoder;
  std::vector<ad::LayerSpec> decoder;
  std::size_t input_dim = 0;   // m for autoencoders, p for an FFNN
  std::size_t latent_dim = 0;  // D; q (output width) for an FFNN
};

/// conv(8, k16, s4) -> relu -> maxpool 2 -> conv(16, k8, s2) -> relu -> dense(D),
/// mirrored by dense -> relu -> convT(8, k8, s2) -> relu -> upsample 2 ->
/// convT(1, k16, s4) and a final single-channel conv sized to give exactly m.
NetworkArch reference_cae_arch(std::size_t m, std::size_t latent_dim);
NetworkArch reference_vae_arch(std::size_t m, std::size_t latent_dim);
/// `layers` tanh layers of `hidden` units followed by a linear output.
NetworkArch reference_ffnn_arch(std::size_t inputs, std::size_t outputs, std::size_t hidden = 32, std::size_t layers = 2);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  ad::AdamConfig adam{};
  /// Final KL weight; reached linearly over the first warmup fraction of epochs.
  double kl_weight = 1e-7;
  double kl_warmup_fraction = 0.2;
  /// Stop after this many epochs without a 0.1% loss improvement; 0 disables.
  std::size_t patience = 0;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct EpochLog {
  double loss = 0.0;   // total objective
  double recon = 0.0;  // MSE part
  double kl = 0.0;     // unweighted KL (VAE only)
  double rss = 0.0;    // mean training RSS/SSS of the epoch's forward passes (autoencoders)

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

/// Affine map of one column onto [-1, 1].
struct ColumnScale {
  double offset = 0.0;
  double scale = 1.0;

  friend bool operator==(const ColumnScale&, const ColumnScale&) = default;
};

struct NetworkModel {
  NetworkFamily family = NetworkFamily::cae;
  ad::Sequential encoder;  // the whole network for an FFNN
  ad::Sequential decoder;  // empty for an FFNN
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
  std::uint64_t seed = 0;
  std::vector<EpochLog> log;
  /// Mean RSS/SSS of decode(encode(y)) over the training set after the last
  /// update (autoencoders only).
  double final_rss = 0.0;
  std::vector<ColumnScale> input_scale;   // FFNN only
  std::vector<ColumnScale> output_scale;  // FFNN only

  bool trained() const { return !log.empty(); }
  std::size_t output_dim() const { return family == NetworkFamily::ffnn ? latent_dim : input_dim; }
};

/// Fresh, untrained network for an architecture.
NetworkModel init_network(NetworkFamily family, const NetworkArch& arch, std::uint64_t seed);

NetworkModel cae_train(const RowMatrix& signals, const NetworkArch& arch, const TrainConfig& config);
NetworkModel vae_train(const RowMatrix& signals, const NetworkArch& arch, const TrainConfig& config);
NetworkModel ffnn_train(const RowMatrix& inputs, const RowMatrix& targets, const NetworkArch& arch,
                        const TrainConfig& config);

/// Signals of every record (optionally one path) stacked as rows.
RowMatrix signal_matrix(const DatasetGrid& dataset);
RowMatrix signal_matrix(const DatasetGrid& dataset, std::uint16_t path);

NetworkModel cae_train(const DatasetGrid& train, const NetworkArch& arch, const TrainConfig& config);
NetworkModel vae_train(const DatasetGrid& train, const NetworkArch& arch, const TrainConfig& config);

/// Bottleneck activations (CAE) or posterior mean (VAE).
std::vector<double> encode(const NetworkModel& model, std::span<const double> signal);
RowMatrix encode(const NetworkModel& model, const RowMatrix& signals);

/// Posterior mean and log variance of a VAE, each N x D.
std::pair<RowMatrix, RowMatrix> encode_posterior(const NetworkModel& model, const RowMatrix& signals);

std::vector<double> decode(const NetworkModel& model, std::span<const double> latent);
RowMatrix decode(const NetworkModel& model, const RowMatrix& latents);

/// FFNN forward pass in physical units.
std::vector<double> predict(const NetworkModel& model, std::span<const double> input);
RowMatrix predict(const NetworkModel& model, const RowMatrix& inputs);

/// count draws z = mu + sigma * eps from the posterior of one signal.
RowMatrix vae_sample(const NetworkModel& model, std::span<const double> signal, std::size_t count, Rng& rng);

/// Mean RSS/SSS of decode(encode(y)) over the rows.
double reconstruction_rss(const NetworkModel& model, const RowMatrix& signals);

}  // namespace wavelatent
