#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "wavelatent/rng.hpp"
#include "wavelatent/signal.hpp"

namespace fixtures {

/// Small dataset over a g1 x g2 grid with `trials` trials on each path. The
/// waveform depends smoothly on the state; noise_sd adds per-trial jitter.
inline wavelatent::DatasetGrid small_dataset(std::size_t g1, std::size_t g2, std::uint32_t trials,
                                             std::vector<std::uint16_t> paths, std::size_t m,
                                             double noise_sd = 0.0, std::uint64_t seed = 1) {
  using namespace wavelatent;
  std::vector<double> grid1, grid2;
  for (std::size_t i = 0; i < g1; ++i) grid1.push_back(static_cast<double>(i));
  for (std::size_t j = 0; j < g2; ++j) grid2.push_back(10.0 * static_cast<double>(j));
  Rng rng(seed);
  std::vector<SignalRecord> records;
  for (std::uint16_t p : paths)
    for (std::size_t i = 0; i < g1; ++i)
      for (std::size_t j = 0; j < g2; ++j)
        for (std::uint32_t t = 0; t < trials; ++t) {
          SignalRecord r;
          r.state = {grid1[i], grid2[j]};
          r.path_id = p;
          r.trial_id = static_cast<std::uint16_t>(t);
          r.sample_period = 1e-6;
          for (std::size_t s = 0; s < m; ++s) {
            const double x = static_cast<double>(s) / static_cast<double>(m);
            r.samples.push_back((1.0 - 0.1 * grid1[i]) * std::sin(2 * M_PI * (3.0 + 0.02 * grid2[j]) * x + 0.1 * p) +
                                noise_sd * rng.normal());
          }
          records.push_back(std::move(r));
        }
  return DatasetGrid::create(grid1, grid2, CountGrid(g1, g2, trials), std::move(paths), m, 1e-6, std::move(records));
}

/// Fresh scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("wavelatent_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixtures
