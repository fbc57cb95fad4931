#include "wavelatent/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "wavelatent/binary_io.hpp"
#include "wavelatent/error.hpp"

namespace wavelatent {

namespace {

constexpr char kWlatMagic[] = "WLAT";
constexpr std::uint16_t kWlatVersion = 1;

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

std::size_t grid_position(const std::vector<double>& grid, double value) {
  auto it = std::lower_bound(grid.begin(), grid.end(), value);
  if (it == grid.end() || *it != value) return grid.size();
  return static_cast<std::size_t>(it - grid.begin());
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

DatasetGrid DatasetGrid::create(std::vector<double> grid1, std::vector<double> grid2, CountGrid trials,
                                std::vector<std::uint16_t> paths, std::size_t m, double sample_period,
                                std::vector<SignalRecord> records) {
  for (const auto* grid : {&grid1, &grid2}) {
    for (double v : *grid)
      if (!std::isfinite(v)) throw NumericError("grid values must be finite");
    if (!strictly_increasing(*grid)) throw ConfigError("grid values must be sorted and distinct");
  }
  if (trials.rows() != grid1.size() || trials.cols() != grid2.size())
    throw DimensionError("trial table shape does not match the state grid");
  if (m < 2) throw DimensionError("signals need at least 2 samples");
  if (!(sample_period > 0.0) || !std::isfinite(sample_period)) throw ConfigError("sample period must be positive");
  std::sort(paths.begin(), paths.end());
  if (std::adjacent_find(paths.begin(), paths.end()) != paths.end()) throw ConfigError("duplicate path ids");

  // (path index, i, j) -> count
  std::vector<std::uint32_t> seen(paths.size() * grid1.size() * grid2.size(), 0);
  std::set<std::tuple<std::uint16_t, std::size_t, std::size_t, std::uint16_t>> keys;
  for (const auto& r : records) {
    if (r.samples.size() != m) throw DimensionError("record length differs from dataset m");
    if (r.sample_period != sample_period) throw ConfigError("record sample period differs from dataset");
    for (double s : r.samples)
      if (!std::isfinite(s)) throw NumericError("non-finite sample in record");
    const std::size_t i = grid_position(grid1, r.state.k1);
    const std::size_t j = grid_position(grid2, r.state.k2);
    if (i == grid1.size() || j == grid2.size()) throw ConfigError("record state is not a grid duplet");
    auto p = std::lower_bound(paths.begin(), paths.end(), r.path_id);
    if (p == paths.end() || *p != r.path_id) throw ConfigError("record path id not declared");
    if (!keys.emplace(r.path_id, i, j, r.trial_id).second)
      throw ConfigError("duplicate (state, path, trial) record");
    const auto pi = static_cast<std::size_t>(p - paths.begin());
    ++seen[(pi * grid1.size() + i) * grid2.size() + j];
  }
  for (std::size_t pi = 0; pi < paths.size(); ++pi)
    for (std::size_t i = 0; i < grid1.size(); ++i)
      for (std::size_t j = 0; j < grid2.size(); ++j)
        if (seen[(pi * grid1.size() + i) * grid2.size() + j] != trials(i, j))
          throw ConfigError("per-state record count does not match the trial table (path " +
                            std::to_string(paths[pi]) + ")");

  DatasetGrid out;
  out.grid1_ = std::move(grid1);
  out.grid2_ = std::move(grid2);
  out.trials_ = std::move(trials);
  out.paths_ = std::move(paths);
  out.m_ = m;
  out.sample_period_ = sample_period;
  out.records_ = std::move(records);
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> DatasetGrid::state_index(const StateVector& s) const {
  const std::size_t i = grid_position(grid1_, s.k1);
  const std::size_t j = grid_position(grid2_, s.k2);
  if (i == grid1_.size() || j == grid2_.size()) return std::nullopt;
  return std::pair{i, j};
}

bool DatasetGrid::has_path(std::uint16_t path) const {
  return std::binary_search(paths_.begin(), paths_.end(), path);
}

std::vector<std::size_t> DatasetGrid::indices_for_path(std::uint16_t path) const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < records_.size(); ++n)
    if (records_[n].path_id == path) out.push_back(n);
  return out;
}

std::uint64_t DatasetGrid::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : encode_wlat(*this)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

double rss_sss(std::span<const double> original, std::span<const double> reconstructed) {
  if (original.size() != reconstructed.size())
    throw DimensionError("rss_sss: length mismatch (" + std::to_string(original.size()) + " vs " +
                         std::to_string(reconstructed.size()) + ")");
  double residual = 0.0;
  double energy = 0.0;
  for (std::size_t t = 0; t < original.size(); ++t) {
    const double d = original[t] - reconstructed[t];
    residual += d * d;
    energy += original[t] * original[t];
  }
  if (!(energy > 0.0)) throw DegenerateInputError("rss_sss: original signal has zero energy");
  return 100.0 * residual / energy;
}

std::pair<DatasetGrid, DatasetGrid> split_by_trial(const DatasetGrid& dataset, const CountGrid& train_counts) {
  const auto& trials = dataset.trials();
  if (train_counts.rows() != trials.rows() || train_counts.cols() != trials.cols())
    throw DimensionError("split: count table shape does not match the state grid");
  for (std::size_t i = 0; i < trials.rows(); ++i)
    for (std::size_t j = 0; j < trials.cols(); ++j)
      if (train_counts(i, j) > trials(i, j))
        throw ConfigError("split: requested " + std::to_string(train_counts(i, j)) + " training trials but state (" +
                          std::to_string(i) + "," + std::to_string(j) + ") has " + std::to_string(trials(i, j)));

  // Rank of each record's trial id within its (state, path) group.
  std::map<std::tuple<std::size_t, std::size_t, std::uint16_t>, std::vector<std::uint16_t>> groups;
  for (const auto& r : dataset.records()) {
    auto [i, j] = *dataset.state_index(r.state);
    groups[{i, j, r.path_id}].push_back(r.trial_id);
  }
  for (auto& [key, ids] : groups) std::sort(ids.begin(), ids.end());

  std::vector<SignalRecord> train;
  std::vector<SignalRecord> test;
  for (const auto& r : dataset.records()) {
    auto [i, j] = *dataset.state_index(r.state);
    const auto& ids = groups[{i, j, r.path_id}];
    const auto rank = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), r.trial_id) - ids.begin());
    (rank < train_counts(i, j) ? train : test).push_back(r);
  }
  CountGrid test_counts(trials.rows(), trials.cols());
  for (std::size_t i = 0; i < trials.rows(); ++i)
    for (std::size_t j = 0; j < trials.cols(); ++j) test_counts(i, j) = trials(i, j) - train_counts(i, j);

  auto make = [&](std::vector<SignalRecord> recs, CountGrid counts) {
    return DatasetGrid::create(dataset.grid1(), dataset.grid2(), std::move(counts), dataset.paths(), dataset.m(),
                               dataset.sample_period(), std::move(recs));
  };
  return {make(std::move(train), train_counts), make(std::move(test), std::move(test_counts))};
}

CountGrid train_counts_by_fraction(const DatasetGrid& dataset, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("train fraction must lie in [0, 1]");
  const auto& trials = dataset.trials();
  CountGrid out(trials.rows(), trials.cols());
  for (std::size_t i = 0; i < trials.rows(); ++i)
    for (std::size_t j = 0; j < trials.cols(); ++j) {
      const std::uint32_t n = trials(i, j);
      auto c = static_cast<std::uint32_t>(std::lround(fraction * n));
      if (n >= 2 && fraction > 0.0 && fraction < 1.0) c = std::clamp<std::uint32_t>(c, 1, n - 1);
      out(i, j) = std::min(c, n);
    }
  return out;
}

std::vector<double> Scaling::apply(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return apply(x); });
  return out;
}

std::vector<double> Scaling::invert(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return invert(x); });
  return out;
}

Scaling fit_scaling(const DatasetGrid& dataset, ScaleMode mode) {
  if (dataset.empty()) throw DegenerateInputError("cannot fit a scaling to an empty dataset");
  double lo = INFINITY, hi = -INFINITY, peak = 0.0, sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : dataset.records())
    for (double x : r.samples) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      peak = std::max(peak, std::abs(x));
      sum += x;
      ++count;
    }
  Scaling s;
  s.mode = mode;
  switch (mode) {
    case ScaleMode::minmax:
      if (!(hi > lo)) throw DegenerateInputError("min-max scaling of a constant dataset");
      s.offset = 0.5 * (hi + lo);
      s.scale = 2.0 / (hi - lo);
      break;
    case ScaleMode::zscore: {
      const double mean = sum / static_cast<double>(count);
      double ss = 0.0;
      for (const auto& r : dataset.records())
        for (double x : r.samples) ss += (x - mean) * (x - mean);
      const double var = ss / static_cast<double>(count);
      if (!(var > 0.0)) throw DegenerateInputError("z-score scaling of a constant dataset");
      s.offset = mean;
      s.scale = 1.0 / std::sqrt(var);
      break;
    }
    case ScaleMode::peak:
      if (!(peak > 0.0)) throw DegenerateInputError("peak scaling of an all-zero dataset");
      s.offset = 0.0;
      s.scale = 1.0 / peak;
      break;
  }
  return s;
}

namespace {

DatasetGrid map_samples(const DatasetGrid& dataset, auto&& fn) {
  std::vector<SignalRecord> recs = dataset.records();
  for (auto& r : recs)
    for (auto& x : r.samples) x = fn(x);
  return DatasetGrid::create(dataset.grid1(), dataset.grid2(), dataset.trials(), dataset.paths(), dataset.m(),
                             dataset.sample_period(), std::move(recs));
}

}  // namespace

DatasetGrid apply_scaling(const DatasetGrid& dataset, const Scaling& scaling) {
  return map_samples(dataset, [&](double x) { return scaling.apply(x); });
}

DatasetGrid invert_scaling(const DatasetGrid& dataset, const Scaling& scaling) {
  return map_samples(dataset, [&](double x) { return scaling.invert(x); });
}

std::pair<DatasetGrid, Scaling> standardize(const DatasetGrid& dataset, ScaleMode mode) {
  Scaling s = fit_scaling(dataset, mode);
  return {apply_scaling(dataset, s), s};
}

DatasetFormat format_from_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? DatasetFormat::csv : DatasetFormat::wlat;
}

// WLAT layout (little-endian):
//   "WLAT" u16 version | u32 m | u32 M1 | u32 M2 | f64 sample_period
//   M1 x f64 grid1 | M2 x f64 grid2 | M1*M2 x u32 trials (row-major)
//   u32 path count | u16 path ids | u64 record count
//   per record: f64 k1 | f64 k2 | u16 path | u16 trial | m x f64 samples
std::vector<char> encode_wlat(const DatasetGrid& d) {
  io::ByteWriter w;
  w.bytes(std::string_view(kWlatMagic, 4));
  w.u16(kWlatVersion);
  w.u32(static_cast<std::uint32_t>(d.m()));
  w.u32(static_cast<std::uint32_t>(d.grid1().size()));
  w.u32(static_cast<std::uint32_t>(d.grid2().size()));
  w.f64(d.sample_period());
  for (double v : d.grid1()) w.f64(v);
  for (double v : d.grid2()) w.f64(v);
  for (auto n : d.trials().values()) w.u32(n);
  w.u32(static_cast<std::uint32_t>(d.paths().size()));
  for (auto p : d.paths()) w.u16(p);
  w.u64(d.records().size());
  for (const auto& r : d.records()) {
    w.f64(r.state.k1);
    w.f64(r.state.k2);
    w.u16(r.path_id);
    w.u16(r.trial_id);
    for (double x : r.samples) w.f64(x);
  }
  return w.buffer();
}

DatasetGrid decode_wlat(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != std::string_view(kWlatMagic, 4)) throw FormatError("bad magic (expected WLAT)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.u16();
  if (version != kWlatVersion)
    throw FormatError("unsupported WLAT version " + std::to_string(version), version_at);
  const std::size_t m = r.u32();
  const std::size_t m1 = r.u32();
  const std::size_t m2 = r.u32();
  const double period = r.f64();
  if (m1 * 8 + m2 * 8 + m1 * m2 * 4 > r.remaining()) r.fail("grid header exceeds payload");
  std::vector<double> g1(m1), g2(m2);
  for (auto& v : g1) v = r.f64();
  for (auto& v : g2) v = r.f64();
  CountGrid trials(m1, m2);
  for (std::size_t i = 0; i < m1; ++i)
    for (std::size_t j = 0; j < m2; ++j) trials(i, j) = r.u32();
  const std::size_t npaths = r.u32();
  if (npaths * 2 > r.remaining()) r.fail("path table exceeds payload");
  std::vector<std::uint16_t> paths(npaths);
  for (auto& p : paths) p = r.u16();
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64();
  const std::size_t record_bytes = 20 + 8 * m;
  if (count > r.remaining() / record_bytes) throw FormatError("truncated payload: record count exceeds data", count_at);
  std::vector<SignalRecord> recs(count);
  for (auto& rec : recs) {
    rec.state.k1 = r.f64();
    rec.state.k2 = r.f64();
    rec.path_id = r.u16();
    rec.trial_id = r.u16();
    rec.samples.resize(m);
    for (auto& x : rec.samples) x = r.f64();
    rec.sample_period = period;
  }
  if (!r.at_end()) r.fail("trailing bytes after records");
  try {
    return DatasetGrid::create(std::move(g1), std::move(g2), std::move(trials), std::move(paths), m, period,
                               std::move(recs));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent dataset: ") + e.what(), r.offset());
  }
}

// CSV: an optional "# wavelatent sample_period=<T>" line, then the header
// k1,k2,path,trial,s0..s{m-1} and one record per row. Values use the
// shortest round-trip representation. The grid is the set of distinct
// states present, so states without records are not representable.
std::string encode_csv(const DatasetGrid& d) {
  std::string out = "# wavelatent sample_period=" + format_double(d.sample_period()) + "\n";
  out += "k1,k2,path,trial";
  for (std::size_t t = 0; t < d.m(); ++t) out += ",s" + std::to_string(t);
  out += '\n';
  for (const auto& r : d.records()) {
    out += format_double(r.state.k1) + ',' + format_double(r.state.k2) + ',' + std::to_string(r.path_id) + ',' +
           std::to_string(r.trial_id);
    for (double x : r.samples) {
      out += ',';
      out += format_double(x);
    }
    out += '\n';
  }
  return out;
}

DatasetGrid decode_csv(std::string_view text) {
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& start) -> std::optional<std::string_view> {
    if (pos >= text.size()) return std::nullopt;
    start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    pos = end + 1;
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };
  auto split = [](std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t b = 0;
    while (true) {
      std::size_t e = line.find(',', b);
      cells.push_back(line.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b));
      if (e == std::string_view::npos) break;
      b = e + 1;
    }
    return cells;
  };
  auto parse_double = [](std::string_view cell, std::size_t at) {
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
      throw FormatError("bad number '" + std::string(cell) + "'", at);
    return v;
  };
  auto parse_u16 = [](std::string_view cell, std::size_t at) {
    unsigned v = 0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || v > 0xFFFF)
      throw FormatError("bad integer '" + std::string(cell) + "'", at);
    return static_cast<std::uint16_t>(v);
  };

  double period = 1.0;
  std::size_t start = 0;
  auto line = next_line(start);
  if (line && line->starts_with("#")) {
    constexpr std::string_view key = "sample_period=";
    if (auto k = line->find(key); k != std::string_view::npos)
      period = parse_double(line->substr(k + key.size()), start + k + key.size());
    line = next_line(start);
  }
  if (!line) throw FormatError("missing header row", pos);
  const auto header = split(*line);
  if (header.size() < 6 || header[0] != "k1" || header[1] != "k2" || header[2] != "path" || header[3] != "trial")
    throw FormatError("malformed header (expected k1,k2,path,trial,s0..)", start);
  const std::size_t m = header.size() - 4;
  for (std::size_t t = 0; t < m; ++t)
    if (header[4 + t] != "s" + std::to_string(t)) throw FormatError("malformed header column", start);

  std::vector<SignalRecord> recs;
  while ((line = next_line(start))) {
    if (line->empty()) continue;
    const auto cells = split(*line);
    if (cells.size() != m + 4)
      throw FormatError("row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(m + 4), start);
    SignalRecord rec;
    rec.state = {parse_double(cells[0], start), parse_double(cells[1], start)};
    rec.path_id = parse_u16(cells[2], start);
    rec.trial_id = parse_u16(cells[3], start);
    rec.samples.resize(m);
    for (std::size_t t = 0; t < m; ++t) rec.samples[t] = parse_double(cells[4 + t], start);
    rec.sample_period = period;
    recs.push_back(std::move(rec));
  }

  std::set<double> s1, s2;
  std::set<std::uint16_t> ps;
  for (const auto& r : recs) {
    s1.insert(r.state.k1);
    s2.insert(r.state.k2);
    ps.insert(r.path_id);
  }
  std::vector<double> g1(s1.begin(), s1.end()), g2(s2.begin(), s2.end());
  std::vector<std::uint16_t> paths(ps.begin(), ps.end());
  CountGrid trials(g1.size(), g2.size());
  if (!paths.empty()) {
    for (const auto& r : recs) {
      if (r.path_id != paths.front()) continue;
      const auto i = static_cast<std::size_t>(std::lower_bound(g1.begin(), g1.end(), r.state.k1) - g1.begin());
      const auto j = static_cast<std::size_t>(std::lower_bound(g2.begin(), g2.end(), r.state.k2) - g2.begin());
      ++trials(i, j);
    }
  }
  try {
    return DatasetGrid::create(std::move(g1), std::move(g2), std::move(trials), std::move(paths), m, period,
                               std::move(recs));
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent dataset: ") + e.what(), text.size());
  }
}

void save_dataset(const DatasetGrid& dataset, const std::filesystem::path& path, DatasetFormat format) {
  if (format == DatasetFormat::csv) {
    const std::string text = encode_csv(dataset);
    io::write_file(path, std::span<const char>(text.data(), text.size()));
  } else {
    io::write_file(path, encode_wlat(dataset));
  }
}

void save_dataset(const DatasetGrid& dataset, const std::filesystem::path& path) {
  save_dataset(dataset, path, format_from_extension(path));
}

DatasetGrid load_dataset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (format_from_extension(path) == DatasetFormat::csv) return decode_csv(std::string_view(bytes.data(), bytes.size()));
  return decode_wlat(bytes);
}

}  // namespace wavelatent
