#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "wavelatent/rng.hpp"
#include "wavelatent/signal.hpp"

namespace wavelatent {

/// Sensitivities of the synthetic response to the normalized states u1, u2
/// in [0, 1] and to the path index p.
///   A   = (1 - amp_k1 u1)(1 + amp_k2 u2) / (1 + path_attenuation p)
///   tau = base_delay (1 + path_delay p) + delay_k1 u1 + delay_k2 u2
///   rho = A_path (echo_base + echo_k1 u1)
///   tail amplitude tail * A, stretched in time by 1 + stretch_k2 u2
struct ResponseCoefficients {
  double amp_k1 = 0.5;
  double amp_k2 = 0.1;
  double path_attenuation = 0.1;
  double base_delay = 50e-6;
  double path_delay = 0.08;
  double delay_k1 = 0.0;
  double delay_k2 = 1.5e-6;
  double echo_base = 0.1;
  double echo_k1 = 0.4;
  double tail = 0.3;
  double stretch_k2 = 0.15;
};

struct SynthConfig {
  std::vector<double> grid1;
  std::vector<double> grid2;
  CountGrid trials;
  std::vector<std::uint16_t> paths;
  std::size_t m = 1024;
  double sample_rate = 3.072e6;
  double carrier = 250e3;
  std::size_t n_peaks = 5;
  /// Target signal-to-noise ratio in dB; infinity means noise-free.
  double snr_db = std::numeric_limits<double>::infinity();
  ResponseCoefficients response{};
  std::uint64_t seed = 0;
};

/// Throws ConfigError for unsorted grids, carrier at or above Nyquist, a
/// trial table of the wrong shape, or a response that overruns the window.
void validate(const SynthConfig& config);

/// Hann-windowed sine of n_peaks cycles at the carrier, zero-padded to m
/// samples and scaled to unit peak magnitude.
std::vector<double> tone_burst(std::size_t n_peaks, double carrier, double sample_rate, std::size_t m);

/// Noise-free response for one state on one path (path_index is the
/// position of the path in config.paths).
std::vector<double> clean_response(const SynthConfig& config, const StateVector& state, std::size_t path_index);

/// One record. Noise comes from an independent stream keyed by
/// (seed, i, j, path, trial) and is rescaled so the realized SNR is exact.
SignalRecord synth_response(const SynthConfig& config, std::size_t i, std::size_t j, std::size_t path_index,
                            std::uint16_t trial);

DatasetGrid generate_dataset(const SynthConfig& config);

struct Preset {
  SynthConfig config;
  double train_fraction = 0.5;
};

/// case1 (desk scale, m = 1024), case1-full (m = 8000 at 24 MHz) and case2.
Preset preset(std::string_view name);
std::vector<std::string_view> preset_names();

}  // namespace wavelatent
