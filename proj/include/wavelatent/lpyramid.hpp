#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wavelatent/dmaps.hpp"

namespace wavelatent {

struct PyramidConfig {
  /// Coarsest scale; nullopt selects 4x the maximum squared latent distance.
  std::optional<double> sigma0;
  /// Mean training RSS/SSS (percent) at which refinement stops.
  double stop_tolerance = 0.5;
  std::size_t max_levels = 12;
};

struct PyramidLevel {
  double sigma = 0.0;
  RowMatrix residuals;  // N x m targets smoothed at this level

  friend bool operator==(const PyramidLevel&, const PyramidLevel&) = default;
};

/// Multiscale kernel regression from latent coordinates back to waveforms.
/// Level l smooths the residual left by levels 0..l-1 with a Gaussian of
/// width sigma_l = sigma_0 / 2^l.
struct PyramidModel {
  RowMatrix latents;  // N x d
  std::vector<PyramidLevel> levels;
  std::size_t max_levels = 0;
  double stop_tolerance = 0.0;
  /// Mean training RSS/SSS after each fitted level.
  std::vector<double> train_error;
  /// Set when coincident latents carried different outputs and were averaged.
  bool averaged_duplicates = false;

  std::size_t input_dims() const { return static_cast<std::size_t>(latents.cols()); }
  std::size_t output_dims() const { return levels.empty() ? 0 : static_cast<std::size_t>(levels.front().residuals.cols()); }
};

PyramidModel fit_pyramid(const RowMatrix& latents, const RowMatrix& outputs, const PyramidConfig& config = {});

/// Default coarsest scale: 4x the largest squared pairwise latent distance.
double default_sigma0(const RowMatrix& latents);

struct Lift {
  std::vector<double> values;
  /// Every kernel weight underflowed; values are the nearest training output.
  bool out_of_range = false;
};

Lift lift(const PyramidModel& model, std::span<const double> query);

}  // namespace wavelatent
