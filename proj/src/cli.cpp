#include "wavelatent/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "wavelatent/binary_io.hpp"
#include "wavelatent/error.hpp"
#include "wavelatent/pipeline.hpp"
#include "wavelatent/synthgen.hpp"

namespace fs = std::filesystem;

namespace wavelatent::cli {

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Resolves an output name under the output directory and refuses anything
/// that would land outside it.
fs::path output_path(const std::string& out_dir, const std::string& name) {
  const fs::path root = fs::weakly_canonical(fs::absolute(out_dir));
  fs::path p = fs::path(name).is_absolute() ? fs::path(name) : root / name;
  p = fs::weakly_canonical(p);
  const auto rel = p.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..")
    throw ConfigError("output '" + name + "' is outside the output directory " + root.string());
  fs::create_directories(p.parent_path());
  return p;
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path, {text.data(), text.size()}); }

/// Whole dataset for fraction 1, otherwise the requested side of a per-trial split.
DatasetGrid select_split(const DatasetGrid& ds, double fraction, bool test_side) {
  if (fraction >= 1.0) return ds;
  auto [train, test] = split_by_trial(ds, train_counts_by_fraction(ds, fraction));
  return test_side ? test : train;
}

struct GenOptions {
  std::string preset = "case1";
  std::uint64_t seed = 0;
  std::optional<double> snr;
  std::optional<std::uint32_t> trials;
  std::string output;
};

struct FitOptions {
  std::string input;
  std::string kind = "cae";
  std::size_t latent_dim = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double kl_weight = 1e-7;
  std::size_t patience = 0;
  std::size_t head_epochs = 2000;
  double head_lr = 5e-3;
  std::size_t head_hidden = 32;
  std::size_t head_layers = 2;
  double alpha = 1.0;
  double dmap_t = 1.0;
  std::optional<double> epsilon;
  std::string selection = "parsimonious";
  double pyramid_tol = 0.5;
  std::size_t pyramid_levels = 12;
  std::string scale = "peak";
  double train_fraction = 1.0;
  std::vector<std::size_t> latent_subset;
  std::uint64_t seed = 0;
  std::string output = "model.wlmd";
};

struct ModelDataOptions {
  std::string model;
  std::string input;
  double train_fraction = 1.0;
  std::string output;
};

struct ReconstructOptions {
  std::string model;
  std::optional<double> k1, k2;
  std::optional<std::uint16_t> path;
  std::string states;
  std::string output = "reconstruction.csv";
};

struct AugmentOptions {
  std::string model;
  std::string input;
  std::size_t samples = 20;
  double train_fraction = 1.0;
  std::string output = "augmented.wlmd";
};

ScaleMode parse_scale(const std::string& s) {
  if (s == "peak") return ScaleMode::peak;
  if (s == "minmax") return ScaleMode::minmax;
  if (s == "zscore") return ScaleMode::zscore;
  throw ConfigError("unknown scale mode '" + s + "'");
}

int run_gen(const GenOptions& o, const std::string& out_dir, std::ostream& out) {
  Preset p = preset(o.preset);
  p.config.seed = o.seed;
  if (o.snr) p.config.snr_db = *o.snr;
  if (o.trials) p.config.trials = CountGrid(p.config.grid1.size(), p.config.grid2.size(), *o.trials);
  const DatasetGrid ds = generate_dataset(p.config);
  const fs::path path = output_path(out_dir, o.output);
  save_dataset(ds, path);
  out << "wrote " << ds.size() << " records to " << path.string() << "\n";
  return ok;
}

int run_fit(const FitOptions& o, const std::string& out_dir, std::ostream& out) {
  PipelineConfig pc;
  pc.kind = parse_compressor(o.kind);
  pc.latent_dim = o.latent_dim;
  pc.network.epochs = o.epochs;
  pc.network.batch_size = o.batch_size;
  pc.network.adam.learning_rate = o.lr;
  pc.network.kl_weight = o.kl_weight;
  pc.network.patience = o.patience;
  pc.head.train.epochs = o.head_epochs;
  pc.head.train.adam.learning_rate = o.head_lr;
  pc.head.hidden = o.head_hidden;
  pc.head.layers = o.head_layers;
  pc.dmap.alpha = o.alpha;
  pc.dmap.t = o.dmap_t;
  pc.dmap.epsilon = o.epsilon;
  if (o.selection == "parsimonious")
    pc.dmap.selection = EigenSelection::parsimonious;
  else if (o.selection == "top")
    pc.dmap.selection = EigenSelection::top_d;
  else
    throw ConfigError("unknown eigenvector selection '" + o.selection + "'");
  pc.pyramid.stop_tolerance = o.pyramid_tol;
  pc.pyramid.max_levels = o.pyramid_levels;
  pc.scale_mode = parse_scale(o.scale);
  pc.latent_subset = o.latent_subset;
  pc.seed = o.seed;
  validate(pc.network);
  validate(pc.head.train);

  const DatasetGrid train = select_split(load_dataset(o.input), o.train_fraction, false);
  const PipelineBundle bundle = fit_bundle(train, pc);
  const fs::path path = output_path(out_dir, o.output);
  save_bundle(bundle, path);
  out << "fitted " << compressor_name(bundle.kind) << " bundle (D=" << bundle.latent_dim << ", " << bundle.paths.size()
      << " paths, " << train.size() << " records) -> " << path.string() << "\n";
  return ok;
}

int run_estimate(const ModelDataOptions& o, const std::string& out_dir, std::ostream& out) {
  const PipelineBundle bundle = load_bundle(o.model);
  const DatasetGrid ds = select_split(load_dataset(o.input), o.train_fraction, true);
  if (ds.m() != bundle.m)
    throw DimensionError("dataset signals have " + std::to_string(ds.m()) + " samples, model expects " +
                         std::to_string(bundle.m));
  std::string csv = "path,trial,k1,k2,est_k1,est_k2,out_of_range\n";
  for (const auto& r : ds.records()) {
    const Estimate e = estimate_state(bundle, r.samples, r.path_id);
    csv += std::to_string(r.path_id) + "," + std::to_string(r.trial_id) + "," + num(r.state.k1) + "," + num(r.state.k2) +
           "," + num(e.state.k1) + "," + num(e.state.k2) + "," + (e.out_of_range ? "1" : "0") + "\n";
  }
  const fs::path path = output_path(out_dir, o.output.empty() ? "states.csv" : o.output);
  write_text(path, csv);
  out << "estimated " << ds.size() << " states -> " << path.string() << "\n";
  return ok;
}

std::vector<std::tuple<double, double, std::uint16_t>> read_state_list(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open state list " + file, 0);
  std::vector<std::tuple<double, double, std::uint16_t>> out;
  std::string line;
  std::size_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("k1", 0) == 0) continue;
    }
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
      throw FormatError("state list rows need k1,k2,path", at);
    try {
      out.emplace_back(std::stod(a), std::stod(b), static_cast<std::uint16_t>(std::stoul(c)));
    } catch (const std::exception&) {
      throw FormatError("unparsable state list row", at);
    }
  }
  return out;
}

int run_reconstruct(const ReconstructOptions& o, const std::string& out_dir, std::ostream& out) {
  const PipelineBundle bundle = load_bundle(o.model);
  std::vector<std::tuple<double, double, std::uint16_t>> states;
  if (!o.states.empty()) {
    states = read_state_list(o.states);
  } else {
    if (!o.k1 || !o.k2 || !o.path) throw ConfigError("reconstruct needs --states or all of --k1, --k2 and --path");
    states.emplace_back(*o.k1, *o.k2, *o.path);
  }
  std::string csv = "k1,k2,path,extrapolated,interpolated,out_of_range";
  for (std::size_t t = 0; t < bundle.m; ++t) csv += ",s" + std::to_string(t);
  csv += "\n";
  std::size_t flagged = 0;
  for (const auto& [k1, k2, path] : states) {
    const Reconstruction r = reconstruct_signal(bundle, {k1, k2}, path);
    if (r.extrapolated) ++flagged;
    csv += num(k1) + "," + num(k2) + "," + std::to_string(path) + "," + (r.extrapolated ? "1" : "0") + "," +
           (r.interpolated ? "1" : "0") + "," + (r.out_of_range ? "1" : "0");
    for (double v : r.samples) csv += "," + num(v);
    csv += "\n";
  }
  const fs::path path = output_path(out_dir, o.output);
  write_text(path, csv);
  out << "reconstructed " << states.size() << " waveforms -> " << path.string() << "\n";
  if (flagged) out << "warning: " << flagged << " state(s) lie outside the training grid (extrapolated)\n";
  return ok;
}

int run_augment(const AugmentOptions& o, const std::string& out_dir, std::ostream& out) {
  const PipelineBundle bundle = load_bundle(o.model);
  const DatasetGrid train = select_split(load_dataset(o.input), o.train_fraction, false);
  AugmentReport report;
  const PipelineBundle augmented = augment_training(bundle, train, o.samples, &report);
  const fs::path path = output_path(out_dir, o.output);
  save_bundle(augmented, path);
  out << "added " << report.added << " sampled latents; training MAE k1 " << num(report.before.k1) << " -> "
      << num(report.after.k1) << ", k2 " << num(report.before.k2) << " -> " << num(report.after.k2) << "\n"
      << "wrote " << path.string() << "\n";
  return ok;
}

int run_eval(const ModelDataOptions& o, const std::string& out_dir, std::ostream& out) {
  const PipelineBundle bundle = load_bundle(o.model);
  const DatasetGrid test = select_split(load_dataset(o.input), o.train_fraction, true);
  const EvalReport report = evaluate(bundle, test);
  const fs::path dir = output_path(out_dir, o.output.empty() ? "report" : o.output);
  const auto files = write_report(report, dir);
  out << "MAE k1 " << num(report.mae_k1) << " (range " << num(report.range_k1) << "), k2 " << num(report.mae_k2)
      << " (range " << num(report.range_k2) << "), mean RSS/SSS " << num(report.mean_rss) << "%\n";
  for (const auto& f : files) out << "wrote " << f.string() << "\n";
  return report.non_finite ? numeric : ok;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space state estimation and signal reconstruction for guided-wave data", "wavelatent"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; command-line flags take precedence");
  std::string out_dir = ".";
  app.add_option("--out-dir", out_dir, "Directory that receives every output")->capture_default_str();

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--preset", gen.preset, "case1, case1-full or case2")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--snr", gen.snr, "Target SNR in dB (overrides the preset)");
  g->add_option("--trials", gen.trials, "Trials per state (overrides the preset)");
  g->add_option("-o,--output", gen.output, "Dataset file (.wlat or .csv)")->required();

  FitOptions fit;
  auto* f = app.add_subcommand("fit", "Fit a compressor bundle");
  f->add_option("-i,--input", fit.input, "Training dataset")->required()->check(CLI::ExistingFile);
  f->add_option("--kind", fit.kind, "dmaps, cae or vae")->capture_default_str();
  f->add_option("--latent-dim", fit.latent_dim, "Latent width D (0: 3 for dmaps, 7 otherwise)")->capture_default_str();
  f->add_option("--epochs", fit.epochs)->capture_default_str();
  f->add_option("--batch-size", fit.batch_size)->capture_default_str();
  f->add_option("--lr", fit.lr)->capture_default_str();
  f->add_option("--kl-weight", fit.kl_weight)->capture_default_str();
  f->add_option("--patience", fit.patience)->capture_default_str();
  f->add_option("--head-epochs", fit.head_epochs)->capture_default_str();
  f->add_option("--head-lr", fit.head_lr)->capture_default_str();
  f->add_option("--head-hidden", fit.head_hidden)->capture_default_str();
  f->add_option("--head-layers", fit.head_layers)->capture_default_str();
  f->add_option("--alpha", fit.alpha)->capture_default_str();
  f->add_option("--dmap-t", fit.dmap_t)->capture_default_str();
  f->add_option("--epsilon", fit.epsilon, "Kernel bandwidth (default: median squared distance)");
  f->add_option("--selection", fit.selection, "parsimonious or top")->capture_default_str();
  f->add_option("--pyramid-tol", fit.pyramid_tol)->capture_default_str();
  f->add_option("--pyramid-levels", fit.pyramid_levels)->capture_default_str();
  f->add_option("--scale", fit.scale, "peak, minmax or zscore")->capture_default_str();
  f->add_option("--train-fraction", fit.train_fraction, "Fraction of trials per state used for fitting")->capture_default_str();
  f->add_option("--latent-subset", fit.latent_subset, "Latent columns fed to the state estimator");
  f->add_option("--seed", fit.seed)->capture_default_str();
  f->add_option("-o,--output", fit.output)->capture_default_str();

  ModelDataOptions est;
  auto* e = app.add_subcommand("estimate", "Estimate states for every record of a dataset");
  e->add_option("-m,--model", est.model)->required()->check(CLI::ExistingFile);
  e->add_option("-i,--input", est.input)->required()->check(CLI::ExistingFile);
  e->add_option("--train-fraction", est.train_fraction, "Below 1: use only the held-out trials")->capture_default_str();
  e->add_option("-o,--output", est.output, "State CSV (default states.csv)");

  ReconstructOptions rec;
  auto* r = app.add_subcommand("reconstruct", "Synthesize waveforms for states");
  r->add_option("-m,--model", rec.model)->required()->check(CLI::ExistingFile);
  r->add_option("--k1", rec.k1);
  r->add_option("--k2", rec.k2);
  r->add_option("--path", rec.path);
  r->add_option("--states", rec.states, "CSV with k1,k2,path rows")->check(CLI::ExistingFile);
  r->add_option("-o,--output", rec.output)->capture_default_str();

  AugmentOptions aug;
  auto* a = app.add_subcommand("augment", "Retrain the state estimator with VAE posterior samples");
  a->add_option("-m,--model", aug.model)->required()->check(CLI::ExistingFile);
  a->add_option("-i,--input", aug.input, "Training dataset")->required()->check(CLI::ExistingFile);
  a->add_option("--samples", aug.samples, "Samples per state")->capture_default_str();
  a->add_option("--train-fraction", aug.train_fraction)->capture_default_str();
  a->add_option("-o,--output", aug.output)->capture_default_str();

  ModelDataOptions ev;
  auto* v = app.add_subcommand("eval", "Evaluate a bundle and write CSV / SVG reports");
  v->add_option("-m,--model", ev.model)->required()->check(CLI::ExistingFile);
  v->add_option("-i,--input", ev.input)->required()->check(CLI::ExistingFile);
  v->add_option("--train-fraction", ev.train_fraction, "Below 1: evaluate only the held-out trials")->capture_default_str();
  v->add_option("-o,--output", ev.output, "Report directory (default report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n\n" << app.help();
    return usage;
  }

  try {
    if (g->parsed()) return run_gen(gen, out_dir, out);
    if (f->parsed()) return run_fit(fit, out_dir, out);
    if (e->parsed()) return run_estimate(est, out_dir, out);
    if (r->parsed()) return run_reconstruct(rec, out_dir, out);
    if (a->parsed()) return run_augment(aug, out_dir, out);
    if (v->parsed()) return run_eval(ev, out_dir, out);
  } catch (const ConfigError& x) {
    err << "configuration error: " << x.what() << "\n";
    return usage;
  } catch (const NumericError& x) {
    err << "numeric error: " << x.what() << "\n";
    return numeric;
  } catch (const Error& x) {
    err << "data error: " << x.what() << "\n";
    return data;
  } catch (const fs::filesystem_error& x) {
    err << "data error: " << x.what() << "\n";
    return data;
  }
  err << app.help();
  return usage;
}

}  // namespace wavelatent::cli
