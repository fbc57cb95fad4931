#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavelatent/dmaps.hpp"
#include "wavelatent/lpyramid.hpp"
#include "wavelatent/models.hpp"
#include "wavelatent/signal.hpp"

namespace wavelatent {

enum class CompressorKind : std::uint8_t { dmaps = 1, cae = 2, vae = 3 };

CompressorKind parse_compressor(std::string_view name);
std::string_view compressor_name(CompressorKind kind);

/// Width and depth of the two FFNN heads plus their training schedule.
struct HeadConfig {
  std::size_t hidden = 32;
  std::size_t layers = 2;
  TrainConfig train{2000, 16, {5e-3, 0.9, 0.999, 1e-8}, 0.0, 0.0, 0, 0};
};

struct PipelineConfig {
  CompressorKind kind = CompressorKind::cae;
  /// 0 picks the default width: 3 for dmaps, 7 for cae / vae.
  std::size_t latent_dim = 0;
  DMapConfig dmap{};
  PyramidConfig pyramid{};
  TrainConfig network{100, 8, {1e-3, 0.9, 0.999, 1e-8}, 1e-7, 0.2, 0, 0};
  HeadConfig head{};
  ScaleMode scale_mode = ScaleMode::peak;
  /// Latent columns fed to the state estimator; empty means all.
  std::vector<std::size_t> latent_subset;
  std::uint64_t seed = 0;
};

std::size_t effective_latent_dim(const PipelineConfig& config);

/// Compression model for one sensor path: diffusion map plus pyramid, or an
/// autoencoder. Signals are expected in the bundle's scaled units.
struct CompressorHandle {
  CompressorKind kind = CompressorKind::cae;
  std::uint16_t path = 0;
  std::size_t latent_dim = 0;
  DMapModel dmap;
  PyramidModel pyramid;
  NetworkModel network;
};

CompressorHandle fit_compressor(CompressorKind kind, const RowMatrix& signals, std::uint16_t path,
                                const PipelineConfig& config);
/// Per-path compressor on the records of `path` (signals used as stored).
CompressorHandle fit_compressor(CompressorKind kind, const DatasetGrid& train, std::uint16_t path,
                                const PipelineConfig& config);

struct Compressed {
  std::vector<double> latent;
  bool out_of_range = false;
};

Compressed compress(const CompressorHandle& handle, std::span<const double> signal);
/// Latents of every row. For diffusion maps the rows must be the training
/// signals in fit order, whose coordinates are returned directly.
RowMatrix training_latents(const CompressorHandle& handle, const RowMatrix& signals);

struct Expanded {
  std::vector<double> samples;
  bool out_of_range = false;
};

Expanded expand(const CompressorHandle& handle, std::span<const double> latent);

/// Everything fitted for one path.
struct PathModels {
  CompressorHandle compressor;
  NetworkModel estimator;  // phi1: latent -> state
  NetworkModel generator;  // phi2: state -> latent
};

struct PipelineBundle {
  CompressorKind kind = CompressorKind::cae;
  std::size_t latent_dim = 0;
  std::size_t m = 0;
  Scaling scaling;
  std::vector<double> grid1;
  std::vector<double> grid2;
  std::uint64_t fingerprint = 0;
  std::vector<std::size_t> latent_subset;
  HeadConfig head;
  std::vector<PathModels> paths;

  const PathModels& path(std::uint16_t id) const;
};

PipelineBundle fit_bundle(const DatasetGrid& train, const PipelineConfig& config);

struct Estimate {
  StateVector state;
  bool out_of_range = false;
};

/// k_hat = phi1(compress(y)) for a raw (unscaled) signal on a path.
Estimate estimate_state(const PipelineBundle& bundle, std::span<const double> signal, std::uint16_t path);

struct Reconstruction {
  std::vector<double> samples;
  /// The state lies outside the grid's bounding box.
  bool extrapolated = false;
  /// The state lies inside the box but is not a grid duplet.
  bool interpolated = false;
  /// The expansion fell back to the nearest training output.
  bool out_of_range = false;
};

/// y_hat = expand(phi2(k)) in raw signal units.
Reconstruction reconstruct_signal(const PipelineBundle& bundle, const StateVector& state, std::uint16_t path);

struct AugmentReport {
  /// Mean absolute training-set estimation error per component, before and after.
  StateVector before;
  StateVector after;
  std::size_t added = 0;
};

/// Retrains every estimator on its training latents plus samples_per_state
/// posterior draws per state, each labelled with the source state. Draws are
/// spread round-robin over the state's training records.
PipelineBundle augment_training(const PipelineBundle& bundle, const DatasetGrid& train, std::size_t samples_per_state,
                                AugmentReport* report = nullptr);

struct ErrorStat {
  double mean = 0.0;
  /// 1.96 s / sqrt(n); NaN when n < 2.
  double ci_half = 0.0;
  std::size_t n = 0;
};

ErrorStat error_stat(std::span<const double> errors);

struct ErrorRow {
  StateVector state;
  int component = 1;  // 1 or 2
  ErrorStat stat;
};

struct RssRow {
  StateVector state;
  std::uint16_t path = 0;
  double rss = 0.0;  // NaN when the state has no test trials on the path
};

struct EvalReport {
  std::vector<ErrorRow> errors;
  std::vector<RssRow> rss;
  /// Pooled mean absolute error per component.
  double mae_k1 = 0.0;
  double mae_k2 = 0.0;
  double range_k1 = 0.0;
  double range_k2 = 0.0;
  double mean_rss = 0.0;
  bool non_finite = false;
};

using Reconstructor = std::function<std::vector<double>(const StateVector&, std::uint16_t)>;

/// Report from precomputed predictions (one per test record, same order).
EvalReport build_report(const DatasetGrid& test, const std::vector<StateVector>& predictions,
                        const Reconstructor& reconstruct);

EvalReport evaluate(const PipelineBundle& bundle, const DatasetGrid& test);

std::string errors_csv(const EvalReport& report);
std::string rss_csv(const EvalReport& report);
std::string errors_svg(const EvalReport& report, int component);
std::string rss_svg(const EvalReport& report);

/// Writes errors.csv, rss.csv, errors_k1.svg, errors_k2.svg and rss.svg.
std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir);

std::vector<char> encode_bundle(const PipelineBundle& bundle);
PipelineBundle decode_bundle(std::span<const char> bytes);
void save_bundle(const PipelineBundle& bundle, const std::filesystem::path& path);
PipelineBundle load_bundle(const std::filesystem::path& path);

}  // namespace wavelatent
