#include "wavelatent/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "wavelatent/container.hpp"
#include "wavelatent/error.hpp"
#include "wavelatent/parallel.hpp"

namespace wavelatent {

CompressorKind parse_compressor(std::string_view name) {
  if (name == "dmaps") return CompressorKind::dmaps;
  if (name == "cae") return CompressorKind::cae;
  if (name == "vae") return CompressorKind::vae;
  throw ConfigError("unknown compressor kind '" + std::string(name) + "' (expected dmaps, cae or vae)");
}

std::string_view compressor_name(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::dmaps:
      return "dmaps";
    case CompressorKind::cae:
      return "cae";
    case CompressorKind::vae:
      return "vae";
  }
  return "cae";
}

std::size_t effective_latent_dim(const PipelineConfig& config) {
  if (config.latent_dim) return config.latent_dim;
  return config.kind == CompressorKind::dmaps ? 3 : 7;
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path, std::uint64_t tag) {
  return Rng::derive(seed, {path, tag}).next_u64();
}

RowMatrix state_matrix(const std::vector<StateVector>& states) {
  RowMatrix out(static_cast<Eigen::Index>(states.size()), 2);
  for (std::size_t i = 0; i < states.size(); ++i) {
    out(static_cast<Eigen::Index>(i), 0) = states[i].k1;
    out(static_cast<Eigen::Index>(i), 1) = states[i].k2;
  }
  return out;
}

RowMatrix select_columns(const RowMatrix& latents, const std::vector<std::size_t>& subset) {
  if (subset.empty()) return latents;
  RowMatrix out(latents.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t c = 0; c < subset.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = latents.col(static_cast<Eigen::Index>(subset[c]));
  return out;
}

std::vector<double> select_values(std::span<const double> latent, const std::vector<std::size_t>& subset) {
  if (subset.empty()) return {latent.begin(), latent.end()};
  std::vector<double> out;
  for (auto c : subset) out.push_back(latent[c]);
  return out;
}

NetworkModel train_head(const RowMatrix& in, const RowMatrix& out, const HeadConfig& head, std::uint64_t seed) {
  TrainConfig cfg = head.train;
  cfg.seed = seed;
  const auto arch = reference_ffnn_arch(static_cast<std::size_t>(in.cols()), static_cast<std::size_t>(out.cols()),
                                        head.hidden, head.layers);
  return ffnn_train(in, out, arch, cfg);
}

struct PathData {
  RowMatrix signals;
  std::vector<StateVector> states;
  std::vector<std::size_t> records;
};

PathData path_data(const DatasetGrid& ds, std::uint16_t path) {
  PathData d;
  d.records = ds.indices_for_path(path);
  d.signals = signal_matrix(ds, path);
  for (auto i : d.records) d.states.push_back(ds.records()[i].state);
  return d;
}

void check_subset(const std::vector<std::size_t>& subset, std::size_t d) {
  for (auto c : subset)
    if (c >= d) throw ConfigError("latent_subset index " + std::to_string(c) + " is outside the latent width " + std::to_string(d));
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

// --------------------------------------------------------------------------

CompressorHandle fit_compressor(CompressorKind kind, const RowMatrix& signals, std::uint16_t path,
                                const PipelineConfig& config) {
  if (signals.rows() == 0) throw DimensionError("fit_compressor: empty training set");
  CompressorHandle h;
  h.kind = kind;
  h.path = path;
  h.latent_dim = config.latent_dim ? config.latent_dim : (kind == CompressorKind::dmaps ? 3 : 7);
  const auto m = static_cast<std::size_t>(signals.cols());
  switch (kind) {
    case CompressorKind::dmaps: {
      DMapConfig dc = config.dmap;
      dc.d = h.latent_dim;
      if (dc.d >= static_cast<std::size_t>(signals.rows()))
        throw ConfigError("requested " + std::to_string(dc.d) + " diffusion coordinates from " +
                          std::to_string(signals.rows()) + " training signals");
      h.dmap = fit_dmap(signals, dc);
      h.pyramid = fit_pyramid(h.dmap.coordinates(), signals, config.pyramid);
      break;
    }
    case CompressorKind::cae:
    case CompressorKind::vae: {
      TrainConfig tc = config.network;
      tc.seed = stream_seed(config.seed, path, 1);
      h.network = kind == CompressorKind::cae ? cae_train(signals, reference_cae_arch(m, h.latent_dim), tc)
                                              : vae_train(signals, reference_vae_arch(m, h.latent_dim), tc);
      break;
    }
  }
  return h;
}

CompressorHandle fit_compressor(CompressorKind kind, const DatasetGrid& train, std::uint16_t path,
                                const PipelineConfig& config) {
  return fit_compressor(kind, signal_matrix(train, path), path, config);
}

Compressed compress(const CompressorHandle& h, std::span<const double> signal) {
  if (h.kind == CompressorKind::dmaps) {
    auto ext = nystrom_extend(h.dmap, signal);
    return {std::move(ext.coordinates), ext.out_of_range};
  }
  return {encode(h.network, signal), false};
}

RowMatrix training_latents(const CompressorHandle& h, const RowMatrix& signals) {
  if (h.kind == CompressorKind::dmaps) {
    if (signals.rows() != h.dmap.points.rows()) throw DimensionError("training_latents: row count differs from the fitted set");
    return h.dmap.coordinates();
  }
  return encode(h.network, signals);
}

Expanded expand(const CompressorHandle& h, std::span<const double> latent) {
  if (h.kind == CompressorKind::dmaps) {
    auto l = lift(h.pyramid, latent);
    return {std::move(l.values), l.out_of_range};
  }
  return {decode(h.network, latent), false};
}

// --------------------------------------------------------------------------

const PathModels& PipelineBundle::path(std::uint16_t id) const {
  for (const auto& p : paths)
    if (p.compressor.path == id) return p;
  throw ConfigError("unknown path id " + std::to_string(id));
}

PipelineBundle fit_bundle(const DatasetGrid& train, const PipelineConfig& config) {
  if (train.empty()) throw DimensionError("fit_bundle: empty training set");
  const std::size_t d = effective_latent_dim(config);
  check_subset(config.latent_subset, d);
  PipelineBundle b;
  b.kind = config.kind;
  b.latent_dim = d;
  b.m = train.m();
  b.grid1 = train.grid1();
  b.grid2 = train.grid2();
  b.fingerprint = train.fingerprint();
  b.latent_subset = config.latent_subset;
  b.head = config.head;
  b.scaling = fit_scaling(train, config.scale_mode);
  const DatasetGrid scaled = apply_scaling(train, b.scaling);

  PipelineConfig pc = config;
  pc.latent_dim = d;
  b.paths.resize(train.paths().size());
  parallel_for(train.paths().size(), [&](std::size_t k) {
    const std::uint16_t path = train.paths()[k];
    const PathData data = path_data(scaled, path);
    if (data.signals.rows() == 0) throw DimensionError("no training records on path " + std::to_string(path));
    PathModels pm;
    pm.compressor = fit_compressor(config.kind, data.signals, path, pc);
    const RowMatrix z = training_latents(pm.compressor, data.signals);
    const RowMatrix s = state_matrix(data.states);
    pm.estimator = train_head(select_columns(z, config.latent_subset), s, config.head, stream_seed(config.seed, path, 2));
    pm.generator = train_head(s, z, config.head, stream_seed(config.seed, path, 3));
    b.paths[k] = std::move(pm);
  });
  return b;
}

Estimate estimate_state(const PipelineBundle& b, std::span<const double> signal, std::uint16_t path) {
  if (signal.size() != b.m)
    throw DimensionError("signal has " + std::to_string(signal.size()) + " samples, bundle expects " + std::to_string(b.m));
  const auto& pm = b.path(path);
  const auto scaled = b.scaling.apply(signal);
  const Compressed c = compress(pm.compressor, scaled);
  const auto out = predict(pm.estimator, select_values(c.latent, b.latent_subset));
  return {{out[0], out[1]}, c.out_of_range};
}

Reconstruction reconstruct_signal(const PipelineBundle& b, const StateVector& state, std::uint16_t path) {
  const auto& pm = b.path(path);
  if (!std::isfinite(state.k1) || !std::isfinite(state.k2)) throw NumericError("state must be finite");
  Reconstruction r;
  r.extrapolated = state.k1 < b.grid1.front() || state.k1 > b.grid1.back() || state.k2 < b.grid2.front() ||
                   state.k2 > b.grid2.back();
  const bool on_grid = std::find(b.grid1.begin(), b.grid1.end(), state.k1) != b.grid1.end() &&
                       std::find(b.grid2.begin(), b.grid2.end(), state.k2) != b.grid2.end();
  r.interpolated = !r.extrapolated && !on_grid;
  const std::vector<double> k{state.k1, state.k2};
  const auto latent = predict(pm.generator, k);
  Expanded e = expand(pm.compressor, latent);
  r.out_of_range = e.out_of_range;
  r.samples = b.scaling.invert(e.samples);
  return r;
}

// --------------------------------------------------------------------------

PipelineBundle augment_training(const PipelineBundle& bundle, const DatasetGrid& train, std::size_t samples_per_state,
                                AugmentReport* report) {
  if (bundle.kind != CompressorKind::vae) throw FamilyError("augmentation needs a VAE bundle");
  if (train.m() != bundle.m) throw DimensionError("training set length differs from the bundle");
  PipelineBundle out = bundle;
  const DatasetGrid scaled = apply_scaling(train, bundle.scaling);
  std::vector<AugmentReport> per_path(bundle.paths.size());

  parallel_for(bundle.paths.size(), [&](std::size_t k) {
    PathModels& pm = out.paths[k];
    const std::uint16_t path = pm.compressor.path;
    const PathData data = path_data(scaled, path);
    if (data.signals.rows() == 0) throw DimensionError("no training records on path " + std::to_string(path));
    const RowMatrix z = training_latents(pm.compressor, data.signals);
    const RowMatrix s = state_matrix(data.states);

    // Group training rows by state, in grid order.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Eigen::Index>> groups;
    for (std::size_t r = 0; r < data.states.size(); ++r) {
      const auto ij = scaled.state_index(data.states[r]);
      groups[*ij].push_back(static_cast<Eigen::Index>(r));
    }
    const std::size_t extra = groups.size() * samples_per_state;
    RowMatrix zin(z.rows() + static_cast<Eigen::Index>(extra), z.cols());
    RowMatrix sin(s.rows() + static_cast<Eigen::Index>(extra), 2);
    zin.topRows(z.rows()) = z;
    sin.topRows(s.rows()) = s;
    Eigen::Index row = z.rows();
    for (const auto& [ij, rows] : groups) {
      if (samples_per_state == 0) break;
      Rng rng = Rng::derive(bundle.fingerprint ^ pm.estimator.seed, {path, ij.first, ij.second});
      std::vector<std::size_t> share(rows.size(), 0);
      for (std::size_t q = 0; q < samples_per_state; ++q) ++share[q % rows.size()];
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (share[r] == 0) continue;
        const auto sig = data.signals.row(rows[r]);
        const RowMatrix draws = vae_sample(pm.compressor.network, {sig.data(), static_cast<std::size_t>(sig.size())}, share[r], rng);
        for (Eigen::Index q = 0; q < draws.rows(); ++q) {
          zin.row(row) = draws.row(q);
          sin.row(row) = s.row(rows[r]);
          ++row;
        }
      }
    }
    auto mae = [&](const NetworkModel& est) {
      const RowMatrix pred = predict(est, select_columns(z, bundle.latent_subset));
      const auto n = static_cast<double>(s.rows());
      return StateVector{(pred.col(0) - s.col(0)).cwiseAbs().sum() / n, (pred.col(1) - s.col(1)).cwiseAbs().sum() / n};
    };
    per_path[k].before = mae(pm.estimator);
    pm.estimator = train_head(select_columns(zin, bundle.latent_subset), sin, bundle.head, pm.estimator.seed);
    per_path[k].after = mae(pm.estimator);
    per_path[k].added = extra;
  });

  if (report) {
    *report = {};
    const auto n = static_cast<double>(per_path.size());
    for (const auto& p : per_path) {
      report->before.k1 += p.before.k1 / n;
      report->before.k2 += p.before.k2 / n;
      report->after.k1 += p.after.k1 / n;
      report->after.k2 += p.after.k2 / n;
      report->added += p.added;
    }
  }
  return out;
}

// --------------------------------------------------------------------------

ErrorStat error_stat(std::span<const double> errors) {
  ErrorStat s;
  s.n = errors.size();
  if (s.n == 0) {
    s.mean = NAN;
    s.ci_half = NAN;
    return s;
  }
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) {
    s.ci_half = NAN;
    return s;
  }
  double ss = 0.0;
  for (double e : errors) ss += (e - s.mean) * (e - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.ci_half = 1.96 * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

EvalReport build_report(const DatasetGrid& test, const std::vector<StateVector>& predictions,
                        const Reconstructor& reconstruct) {
  if (test.empty()) throw DimensionError("evaluate: empty test set");
  if (predictions.size() != test.size()) throw DimensionError("one prediction per test record is required");
  const std::size_t m1 = test.grid1().size(), m2 = test.grid2().size();
  std::vector<std::vector<double>> e1(m1 * m2), e2(m1 * m2);
  EvalReport rep;
  double abs1 = 0.0, abs2 = 0.0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto& rec = test.records()[r];
    const auto [i, j] = *test.state_index(rec.state);
    const double d1 = predictions[r].k1 - rec.state.k1;
    const double d2 = predictions[r].k2 - rec.state.k2;
    if (!std::isfinite(d1) || !std::isfinite(d2)) rep.non_finite = true;
    e1[i * m2 + j].push_back(d1);
    e2[i * m2 + j].push_back(d2);
    abs1 += std::abs(d1);
    abs2 += std::abs(d2);
  }
  rep.mae_k1 = abs1 / static_cast<double>(test.size());
  rep.mae_k2 = abs2 / static_cast<double>(test.size());
  rep.range_k1 = test.grid1().back() - test.grid1().front();
  rep.range_k2 = test.grid2().back() - test.grid2().front();
  for (std::size_t i = 0; i < m1; ++i)
    for (std::size_t j = 0; j < m2; ++j) {
      const StateVector st = test.state_at(i, j);
      rep.errors.push_back({st, 1, error_stat(e1[i * m2 + j])});
      rep.errors.push_back({st, 2, error_stat(e2[i * m2 + j])});
    }

  // Reconstruction per (state, path): one synthesized waveform scored
  // against every test trial of that state.
  struct Slot {
    std::size_t i, j;
    std::uint16_t path;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < m1; ++i)
    for (std::size_t j = 0; j < m2; ++j)
      for (auto p : test.paths()) slots.push_back({i, j, p});
  std::map<std::tuple<std::size_t, std::size_t, std::uint16_t>, std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto& rec = test.records()[r];
    const auto [i, j] = *test.state_index(rec.state);
    members[{i, j, rec.path_id}].push_back(r);
  }
  std::vector<double> rss(slots.size(), NAN);
  parallel_for(slots.size(), [&](std::size_t k) {
    const auto& s = slots[k];
    const auto it = members.find({s.i, s.j, s.path});
    if (it == members.end()) return;
    const auto yhat = reconstruct(test.state_at(s.i, s.j), s.path);
    double total = 0.0;
    for (auto r : it->second) total += rss_sss(test.records()[r].samples, yhat);
    rss[k] = total / static_cast<double>(it->second.size());
  });
  double rss_sum = 0.0;
  std::size_t rss_count = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    rep.rss.push_back({test.state_at(slots[k].i, slots[k].j), slots[k].path, rss[k]});
    if (std::isnan(rss[k])) continue;
    if (!std::isfinite(rss[k])) rep.non_finite = true;
    rss_sum += rss[k];
    ++rss_count;
  }
  rep.mean_rss = rss_count ? rss_sum / static_cast<double>(rss_count) : NAN;
  return rep;
}

EvalReport evaluate(const PipelineBundle& bundle, const DatasetGrid& test) {
  if (test.empty()) throw DimensionError("evaluate: empty test set");
  if (test.m() != bundle.m)
    throw DimensionError("test signals have " + std::to_string(test.m()) + " samples, bundle expects " +
                         std::to_string(bundle.m));
  for (auto p : test.paths()) (void)bundle.path(p);
  std::vector<StateVector> pred(test.size());
  parallel_for(test.size(), [&](std::size_t r) {
    const auto& rec = test.records()[r];
    pred[r] = estimate_state(bundle, rec.samples, rec.path_id).state;
  });
  return build_report(test, pred, [&](const StateVector& s, std::uint16_t path) {
    return reconstruct_signal(bundle, s, path).samples;
  });
}

// --------------------------------------------------------------------------

std::string errors_csv(const EvalReport& report) {
  std::string out = "state_k1,state_k2,component,mean_err,ci_half,n\n";
  for (const auto& r : report.errors)
    out += format_number(r.state.k1) + "," + format_number(r.state.k2) + "," + std::to_string(r.component) + "," +
           format_number(r.stat.mean) + "," + format_number(r.stat.ci_half) + "," + std::to_string(r.stat.n) + "\n";
  return out;
}

std::string rss_csv(const EvalReport& report) {
  std::string out = "state_k1,state_k2,path,rss_sss\n";
  for (const auto& r : report.rss)
    out += format_number(r.state.k1) + "," + format_number(r.state.k2) + "," + std::to_string(r.path) + "," +
           format_number(r.rss) + "\n";
  return out;
}

namespace {

struct Bar {
  std::string label;
  double value;
  double whisker;  // NaN: none
};

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars) {
  const double width = 80.0 + 14.0 * static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  const double height = 320.0, top = 40.0, bottom = 260.0, left = 60.0;
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    if (!std::isfinite(b.value)) continue;
    const double w = std::isfinite(b.whisker) ? b.whisker : 0.0;
    lo = std::min(lo, b.value - w);
    hi = std::max(hi, b.value + w);
  }
  if (hi - lo <= 0.0) hi = lo + 1.0;
  auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<!-- generator: wavelatent 1.0 -->\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s << "<text x=\"10\" y=\"" << top - 8 << "\" font-size=\"10\">" << y_label << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << y(0.0) << "\" x2=\"" << width - 10 << "\" y2=\"" << y(0.0)
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"4\" y=\"" << y(hi) + 4 << "\" font-size=\"9\">" << format_number(hi) << "</text>\n";
  s << "<text x=\"4\" y=\"" << y(lo) + 4 << "\" font-size=\"9\">" << format_number(lo) << "</text>\n";
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const auto& b = bars[k];
    const double x = left + 14.0 * static_cast<double>(k) + 2.0;
    if (std::isfinite(b.value)) {
      const double y0 = y(0.0), y1 = y(b.value);
      s << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\"10\" height=\"" << std::abs(y1 - y0)
        << "\" fill=\"steelblue\"><title>" << b.label << "</title></rect>\n";
      if (std::isfinite(b.whisker))
        s << "<line x1=\"" << x + 5 << "\" y1=\"" << y(b.value - b.whisker) << "\" x2=\"" << x + 5 << "\" y2=\""
          << y(b.value + b.whisker) << "\" stroke=\"green\"/>\n";
    }
    s << "<text x=\"" << x << "\" y=\"" << bottom + 12 << "\" font-size=\"7\" transform=\"rotate(60 " << x << " "
      << bottom + 12 << ")\">" << b.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::string errors_svg(const EvalReport& report, int component) {
  std::vector<Bar> bars;
  for (const auto& r : report.errors)
    if (r.component == component)
      bars.push_back({format_number(r.state.k1) + "/" + format_number(r.state.k2), r.stat.mean, r.stat.ci_half});
  return bar_chart("Mean estimation error, k" + std::to_string(component), "error", bars);
}

std::string rss_svg(const EvalReport& report) {
  std::vector<Bar> bars;
  for (const auto& r : report.rss)
    bars.push_back({format_number(r.state.k1) + "/" + format_number(r.state.k2) + " p" + std::to_string(r.path), r.rss, NAN});
  return bar_chart("Reconstruction RSS/SSS", "%", bars);
}

std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> files = {
      {"errors.csv", errors_csv(report)},   {"rss.csv", rss_csv(report)},
      {"errors_k1.svg", errors_svg(report, 1)}, {"errors_k2.svg", errors_svg(report, 2)},
      {"rss.svg", rss_svg(report)}};
  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : files) {
    const auto path = dir / name;
    io::write_file(path, {text.data(), text.size()});
    written.push_back(path);
  }
  return written;
}

// --------------------------------------------------------------------------

std::vector<char> encode_bundle(const PipelineBundle& b) {
  io::ByteWriter w;
  container::write_header(w, ModelKind::bundle);
  w.u8(static_cast<std::uint8_t>(b.kind));
  w.u64(b.latent_dim);
  w.u64(b.m);
  w.u8(static_cast<std::uint8_t>(b.scaling.mode));
  w.f64(b.scaling.offset);
  w.f64(b.scaling.scale);
  w.f64s(b.grid1);
  w.f64s(b.grid2);
  w.u64(b.fingerprint);
  w.u32(static_cast<std::uint32_t>(b.latent_subset.size()));
  for (auto c : b.latent_subset) w.u64(c);
  w.u64(b.head.hidden);
  w.u64(b.head.layers);
  const auto& t = b.head.train;
  w.u64(t.epochs);
  w.u64(t.batch_size);
  for (double v : {t.adam.learning_rate, t.adam.beta1, t.adam.beta2, t.adam.epsilon, t.kl_weight, t.kl_warmup_fraction}) w.f64(v);
  w.u64(t.patience);
  w.u64(t.seed);
  w.u32(static_cast<std::uint32_t>(b.paths.size()));
  for (const auto& p : b.paths) {
    w.u16(p.compressor.path);
    w.u64(p.compressor.latent_dim);
    if (b.kind == CompressorKind::dmaps) {
      container::write_dmap(w, p.compressor.dmap);
      container::write_pyramid(w, p.compressor.pyramid);
    } else {
      container::write_network(w, p.compressor.network);
    }
    container::write_network(w, p.estimator);
    container::write_network(w, p.generator);
  }
  return w.buffer();
}

PipelineBundle decode_bundle(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  container::expect_kind(r, ModelKind::bundle);
  PipelineBundle b;
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 3) throw FormatError("unknown compressor kind", kind_at);
  b.kind = static_cast<CompressorKind>(kind);
  b.latent_dim = r.u64();
  b.m = r.u64();
  const std::size_t mode_at = r.offset();
  const std::uint8_t mode = r.u8();
  if (mode > 2) throw FormatError("unknown scaling mode", mode_at);
  b.scaling.mode = static_cast<ScaleMode>(mode);
  b.scaling.offset = r.f64();
  b.scaling.scale = r.f64();
  b.grid1 = r.f64s();
  b.grid2 = r.f64s();
  if (b.grid1.empty() || b.grid2.empty()) r.fail("bundle grids are empty");
  b.fingerprint = r.u64();
  const std::uint32_t subset = r.u32();
  if (subset > r.remaining() / 8) r.fail("latent subset exceeds payload");
  for (std::uint32_t i = 0; i < subset; ++i) b.latent_subset.push_back(r.u64());
  b.head.hidden = r.u64();
  b.head.layers = r.u64();
  auto& t = b.head.train;
  t.epochs = r.u64();
  t.batch_size = r.u64();
  t.adam.learning_rate = r.f64();
  t.adam.beta1 = r.f64();
  t.adam.beta2 = r.f64();
  t.adam.epsilon = r.f64();
  t.kl_weight = r.f64();
  t.kl_warmup_fraction = r.f64();
  t.patience = r.u64();
  t.seed = r.u64();
  const std::uint32_t n = r.u32();
  if (n > r.remaining()) r.fail("path count exceeds payload");
  for (std::uint32_t i = 0; i < n; ++i) {
    PathModels p;
    p.compressor.kind = b.kind;
    p.compressor.path = r.u16();
    p.compressor.latent_dim = r.u64();
    if (b.kind == CompressorKind::dmaps) {
      p.compressor.dmap = container::read_dmap(r);
      p.compressor.pyramid = container::read_pyramid(r);
    } else {
      const std::size_t at = r.offset();
      p.compressor.network = container::read_network(r);
      const auto expected = b.kind == CompressorKind::cae ? NetworkFamily::cae : NetworkFamily::vae;
      if (p.compressor.network.family != expected) throw FormatError("compressor family does not match bundle kind", at);
    }
    const std::size_t est_at = r.offset();
    p.estimator = container::read_network(r);
    const std::size_t gen_at = r.offset();
    p.generator = container::read_network(r);
    if (p.estimator.family != NetworkFamily::ffnn) throw FormatError("estimator is not an FFNN", est_at);
    if (p.generator.family != NetworkFamily::ffnn) throw FormatError("generator is not an FFNN", gen_at);
    b.paths.push_back(std::move(p));
  }
  if (!r.at_end()) r.fail("trailing bytes after bundle");
  return b;
}

void save_bundle(const PipelineBundle& bundle, const std::filesystem::path& path) {
  io::write_file(path, encode_bundle(bundle));
}

PipelineBundle load_bundle(const std::filesystem::path& path) { return decode_bundle(io::read_file(path)); }

}  // namespace wavelatent
