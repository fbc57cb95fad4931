#include "wavelatent/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wavelatent/error.hpp"
#include "wavelatent/parallel.hpp"

namespace wavelatent {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double burst_shape(double t, double carrier, double duration) {
  if (t < 0.0 || t >= duration) return 0.0;
  return std::sin(kTwoPi * carrier * t) * 0.5 * (1.0 - std::cos(kTwoPi * t / duration));
}

/// Peak of the continuous burst, found on a fine grid.
double burst_peak(std::size_t n_peaks, double carrier) {
  const double duration = static_cast<double>(n_peaks) / carrier;
  const std::size_t steps = 4096 * n_peaks;
  double peak = 0.0;
  for (std::size_t i = 0; i < steps; ++i)
    peak = std::max(peak, std::abs(burst_shape(duration * static_cast<double>(i) / static_cast<double>(steps), carrier, duration)));
  return peak;
}

double normalized(double u, const std::vector<double>& grid) {
  const double lo = grid.front(), hi = grid.back();
  return hi > lo ? (u - lo) / (hi - lo) : 0.0;
}

struct Terms {
  double amp, tau, echo, tail, stretch;
};

Terms response_terms(const SynthConfig& c, const StateVector& s, std::size_t path_index) {
  const auto& r = c.response;
  const double u1 = normalized(s.k1, c.grid1);
  const double u2 = normalized(s.k2, c.grid2);
  const double p = static_cast<double>(path_index);
  const double path_amp = 1.0 / (1.0 + r.path_attenuation * p);
  Terms t{};
  t.amp = path_amp * (1.0 - r.amp_k1 * u1) * (1.0 + r.amp_k2 * u2);
  t.tau = r.base_delay * (1.0 + r.path_delay * p) + r.delay_k1 * u1 + r.delay_k2 * u2;
  t.echo = path_amp * (r.echo_base + r.echo_k1 * u1);
  t.tail = r.tail * t.amp;
  t.stretch = 1.0 + r.stretch_k2 * u2;
  return t;
}

}  // namespace

void validate(const SynthConfig& c) {
  for (const auto* g : {&c.grid1, &c.grid2}) {
    if (g->empty()) throw ConfigError("state grids must be non-empty");
    for (std::size_t i = 1; i < g->size(); ++i)
      if (!((*g)[i] > (*g)[i - 1])) throw ConfigError("state grids must be sorted and distinct");
  }
  if (c.trials.rows() != c.grid1.size() || c.trials.cols() != c.grid2.size())
    throw ConfigError("trial table shape does not match the state grid");
  if (c.paths.empty()) throw ConfigError("at least one path is required");
  if (c.m < 2) throw ConfigError("m must be at least 2");
  if (!(c.sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(c.carrier > 0.0) || c.carrier >= 0.5 * c.sample_rate)
    throw ConfigError("carrier must lie below the Nyquist frequency");
  if (c.n_peaks == 0) throw ConfigError("n_peaks must be positive");
  if (std::isnan(c.snr_db) || c.snr_db == -std::numeric_limits<double>::infinity())
    throw ConfigError("SNR must be finite or +infinity");
  const double window = static_cast<double>(c.m) / c.sample_rate;
  const double duration = static_cast<double>(c.n_peaks) / c.carrier;
  if (duration > window) throw ConfigError("tone burst is longer than the record window");
  // Latest arrival: the worst path at the largest delays.
  const auto& r = c.response;
  const double last_path = static_cast<double>(c.paths.size() - 1);
  const double tau = r.base_delay * (1.0 + r.path_delay * std::max(0.0, last_path)) +
                     std::max(0.0, r.delay_k1) + std::max(0.0, r.delay_k2);
  const double end = 3.0 * tau + (1.0 + r.stretch_k2) * duration;
  if (end > window)
    throw ConfigError("response ends at " + std::to_string(end * 1e6) + " us, beyond the " +
                      std::to_string(window * 1e6) + " us window");
}

std::vector<double> tone_burst(std::size_t n_peaks, double carrier, double sample_rate, std::size_t m) {
  if (!(carrier > 0.0) || !(sample_rate > 0.0) || carrier >= 0.5 * sample_rate)
    throw ConfigError("carrier must lie below the Nyquist frequency");
  if (n_peaks == 0) throw ConfigError("n_peaks must be positive");
  const double duration = static_cast<double>(n_peaks) / carrier;
  std::vector<double> out(m, 0.0);
  double peak = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = burst_shape(static_cast<double>(i) / sample_rate, carrier, duration);
    peak = std::max(peak, std::abs(out[i]));
  }
  if (!(peak > 0.0)) throw ConfigError("tone burst has no samples inside the window");
  for (auto& v : out) v /= peak;
  return out;
}

std::vector<double> clean_response(const SynthConfig& c, const StateVector& state, std::size_t path_index) {
  const Terms t = response_terms(c, state, path_index);
  const double duration = static_cast<double>(c.n_peaks) / c.carrier;
  const double norm = 1.0 / burst_peak(c.n_peaks, c.carrier);
  std::vector<double> y(c.m);
  for (std::size_t i = 0; i < c.m; ++i) {
    const double time = static_cast<double>(i) / c.sample_rate;
    y[i] = norm * (t.amp * burst_shape(time - t.tau, c.carrier, duration) +
                   t.echo * burst_shape(time - 2.0 * t.tau, c.carrier, duration) +
                   t.tail * burst_shape((time - 3.0 * t.tau) / t.stretch, c.carrier, duration));
  }
  return y;
}

SignalRecord synth_response(const SynthConfig& c, std::size_t i, std::size_t j, std::size_t path_index,
                            std::uint16_t trial) {
  SignalRecord rec;
  rec.state = {c.grid1.at(i), c.grid2.at(j)};
  rec.path_id = c.paths.at(path_index);
  rec.trial_id = trial;
  rec.sample_period = 1.0 / c.sample_rate;
  rec.samples = clean_response(c, rec.state, path_index);
  if (std::isinf(c.snr_db)) return rec;

  Rng rng = Rng::derive(c.seed, {i, j, rec.path_id, trial});
  std::vector<double> noise(c.m);
  double noise_power = 0.0, signal_power = 0.0;
  for (std::size_t t = 0; t < c.m; ++t) {
    noise[t] = rng.normal();
    noise_power += noise[t] * noise[t];
    signal_power += rec.samples[t] * rec.samples[t];
  }
  const double target = signal_power / std::pow(10.0, c.snr_db / 10.0);
  const double gain = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
  for (std::size_t t = 0; t < c.m; ++t) rec.samples[t] += gain * noise[t];
  return rec;
}

DatasetGrid generate_dataset(const SynthConfig& c) {
  validate(c);
  struct Slot {
    std::size_t i, j, p;
    std::uint16_t trial;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < c.paths.size(); ++p)
    for (std::size_t i = 0; i < c.grid1.size(); ++i)
      for (std::size_t j = 0; j < c.grid2.size(); ++j)
        for (std::uint32_t t = 0; t < c.trials(i, j); ++t) slots.push_back({i, j, p, static_cast<std::uint16_t>(t)});
  std::vector<SignalRecord> records(slots.size());
  parallel_for(slots.size(), [&](std::size_t k) {
    const auto& s = slots[k];
    records[k] = synth_response(c, s.i, s.j, s.p, s.trial);
  });
  return DatasetGrid::create(c.grid1, c.grid2, c.trials, c.paths, c.m, 1.0 / c.sample_rate, std::move(records));
}

Preset preset(std::string_view name) {
  Preset p;
  auto& c = p.config;
  if (name == "case1" || name == "case1-full") {
    c.grid1 = {0, 1, 2, 3, 4};
    c.grid2 = {0, 5, 10, 15, 20};
    c.trials = CountGrid(5, 5, 20);
    for (std::size_t i = 0; i < 5; ++i) c.trials(i, 4) = 2;
    c.paths = {14, 15, 16, 24, 25, 26, 34, 35, 36};
    if (name == "case1-full") {
      c.m = 8000;
      c.sample_rate = 24e6;
    }
    p.train_fraction = 0.4;
    return p;
  }
  if (name == "case2") {
    c.grid1 = {1, 3, 5, 7, 9, 11, 13, 14, 15};
    c.grid2 = {8, 10, 12, 14, 16, 18, 20};
    c.trials = CountGrid(9, 7, 10);
    c.paths = {21, 32, 43};
    c.snr_db = 20.0;
    // Unit steps at the top of grid1 need a phase cue to stay separable.
    c.response.delay_k1 = 1.5e-6;
    p.train_fraction = 0.6;
    return p;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string_view> preset_names() { return {"case1", "case1-full", "case2"}; }

}  // namespace wavelatent
