#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wavelatent {

/// Externally measurable state duplet (e.g. damage level and load).
struct StateVector {
  double k1 = 0.0;
  double k2 = 0.0;

  friend bool operator==(const StateVector&, const StateVector&) = default;
};

/// One recorded waveform y_k[t], t = 0..m-1, sampled every sample_period seconds.
struct SignalRecord {
  StateVector state;
  std::uint16_t path_id = 0;
  std::uint16_t trial_id = 0;
  std::vector<double> samples;
  double sample_period = 0.0;

  friend bool operator==(const SignalRecord&, const SignalRecord&) = default;
};

/// Dense M1 x M2 table of per-state counts, indexed (i, j) = (k1 index, k2 index).
class CountGrid {
 public:
  CountGrid() = default;
  CountGrid(std::size_t rows, std::size_t cols, std::uint32_t fill = 0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint32_t& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  std::uint32_t operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  const std::vector<std::uint32_t>& values() const { return values_; }

  friend bool operator==(const CountGrid&, const CountGrid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> values_;
};

/// The full collection Y over an M1 x M2 state grid. Immutable once built;
/// construction validates every invariant (records sit on grid duplets,
/// per-path counts equal n_ij, shared m and sample period).
class DatasetGrid {
 public:
  DatasetGrid() = default;

  static DatasetGrid create(std::vector<double> grid1, std::vector<double> grid2, CountGrid trials,
                            std::vector<std::uint16_t> paths, std::size_t m, double sample_period,
                            std::vector<SignalRecord> records);

  const std::vector<double>& grid1() const { return grid1_; }
  const std::vector<double>& grid2() const { return grid2_; }
  const CountGrid& trials() const { return trials_; }
  const std::vector<std::uint16_t>& paths() const { return paths_; }
  std::size_t m() const { return m_; }
  double sample_period() const { return sample_period_; }
  const std::vector<SignalRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t state_count() const { return grid1_.size() * grid2_.size(); }

  /// Grid indices of a state, if it is exactly a grid duplet.
  std::optional<std::pair<std::size_t, std::size_t>> state_index(const StateVector& s) const;
  StateVector state_at(std::size_t i, std::size_t j) const { return {grid1_[i], grid2_[j]}; }
  bool has_path(std::uint16_t path) const;

  /// Indices into records() for one path, in stored order.
  std::vector<std::size_t> indices_for_path(std::uint16_t path) const;

  /// Stable 64-bit FNV-1a hash of the binary serialization.
  std::uint64_t fingerprint() const;

  friend bool operator==(const DatasetGrid&, const DatasetGrid&) = default;

 private:
  std::vector<double> grid1_;
  std::vector<double> grid2_;
  CountGrid trials_;
  std::vector<std::uint16_t> paths_;
  std::size_t m_ = 0;
  double sample_period_ = 0.0;
  std::vector<SignalRecord> records_;
};

/// Reconstruction fidelity in percent: 100 * sum (y - y_hat)^2 / sum y^2.
double rss_sss(std::span<const double> original, std::span<const double> reconstructed);

/// Deterministic trial split. For every state and path the lowest
/// train_counts(i, j) trial ids go to the first partition, the rest to the second.
std::pair<DatasetGrid, DatasetGrid> split_by_trial(const DatasetGrid& dataset, const CountGrid& train_counts);

/// Per-state training counts round(fraction * n_ij), kept at least 1 and at
/// most n_ij - 1 whenever a state has two or more trials.
CountGrid train_counts_by_fraction(const DatasetGrid& dataset, double fraction);

enum class ScaleMode : std::uint8_t { minmax = 0, zscore = 1, peak = 2 };

/// One global affine map x' = (x - offset) * scale applied to every sample.
struct Scaling {
  ScaleMode mode = ScaleMode::peak;
  double offset = 0.0;
  double scale = 1.0;

  double apply(double x) const { return (x - offset) * scale; }
  double invert(double x) const { return x / scale + offset; }
  std::vector<double> apply(std::span<const double> xs) const;
  std::vector<double> invert(std::span<const double> xs) const;

  friend bool operator==(const Scaling&, const Scaling&) = default;
};

/// minmax maps the global sample range onto [-1, 1]; zscore gives global
/// mean 0 and variance 1; peak divides by max |sample|.
Scaling fit_scaling(const DatasetGrid& dataset, ScaleMode mode);
std::pair<DatasetGrid, Scaling> standardize(const DatasetGrid& dataset, ScaleMode mode);
DatasetGrid apply_scaling(const DatasetGrid& dataset, const Scaling& scaling);
DatasetGrid invert_scaling(const DatasetGrid& dataset, const Scaling& scaling);

enum class DatasetFormat { csv, wlat };

DatasetFormat format_from_extension(const std::filesystem::path& path);

std::vector<char> encode_wlat(const DatasetGrid& dataset);
DatasetGrid decode_wlat(std::span<const char> bytes);
std::string encode_csv(const DatasetGrid& dataset);
DatasetGrid decode_csv(std::string_view text);

void save_dataset(const DatasetGrid& dataset, const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const DatasetGrid& dataset, const std::filesystem::path& path);
DatasetGrid load_dataset(const std::filesystem::path& path);

}  // namespace wavelatent
