#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "wavelatent/autodiff.hpp"
#include "wavelatent/cli.hpp"
#include "wavelatent/container.hpp"
#include "wavelatent/dmaps.hpp"
#include "wavelatent/lpyramid.hpp"
#include "wavelatent/pipeline.hpp"
#include "wavelatent/synthgen.hpp"

using namespace wavelatent;
using namespace wavelatent::ad;
namespace fs = std::filesystem;

namespace {

/// Collects named checks for one criterion.
struct Verdict {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += "[failed] ";
    }
    detail += what + "; ";
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(std::size_t b, std::size_t c, std::size_t l, Rng& rng) {
  Tensor t(b, c, l);
  for (auto& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

/// Mean of the two range-normalized mean absolute errors.
double estimation_error(const EvalReport& r) { return 0.5 * (r.mae_k1 / r.range_k1 + r.mae_k2 / r.range_k2); }

Verdict gradients() {
  Verdict v;
  const std::vector<std::pair<std::string, std::vector<LayerSpec>>> stacks = {
      {"dense", {LayerSpec::dense(4), LayerSpec::dense(2)}},
      {"conv", {LayerSpec::conv(3, 4, 2, 1), LayerSpec::dense(2)}},
      {"conv_transpose", {LayerSpec::conv_transpose(2, 5, 3, 1), LayerSpec::dense(2)}},
      {"maxpool", {LayerSpec::conv(2, 3), LayerSpec::maxpool(2), LayerSpec::dense(2)}},
      {"upsample", {LayerSpec::upsample(2), LayerSpec::conv(2, 3), LayerSpec::dense(2)}},
  };
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    Rng rng(40 + i);
    Sequential net(stacks[i].second, {2, 11}, rng);
    const auto r = check_gradients(net, random_tensor(2, 2, 11, rng), 1e-5);
    v.check(r.passed, stacks[i].first + " rel err " + fmt("%.2e", r.max_relative_error));
  }
  for (Activation a : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::linear}) {
    Rng rng(7);
    Sequential net({LayerSpec::dense(5), LayerSpec::act(a), LayerSpec::dense(2)}, {1, 4}, rng);
    const auto r = check_gradients(net, random_tensor(3, 1, 4, rng), 1e-5);
    v.check(r.passed, std::string(activation_name(a)) + " rel err " + fmt("%.2e", r.max_relative_error));
  }
  {
    Rng rng(9);
    Sequential net({LayerSpec::conv(4, 8, 2), LayerSpec::act(Activation::relu), LayerSpec::maxpool(2),
                    LayerSpec::dense(3), LayerSpec::dense(8, 2), LayerSpec::conv_transpose(1, 6, 4)},
                   {1, 32}, rng);
    const auto r = check_gradients(net, random_tensor(3, 1, 32, rng), 1e-5);
    v.check(r.passed, "3-layer CAE stack rel err " + fmt("%.2e", r.max_relative_error));
  }
  struct Case {
    std::size_t cin, cout, len, kernel, stride, padding;
  };
  double worst = 0.0;
  for (const Case c : {Case{1, 1, 9, 3, 1, 0}, Case{2, 3, 16, 4, 2, 1}, Case{3, 2, 40, 16, 4, 0},
                       Case{1, 4, 32, 8, 2, 3}, Case{2, 2, 13, 5, 3, 2}}) {
    Rng rng(11);
    Sequential conv({LayerSpec::conv(c.cout, c.kernel, c.stride, c.padding)}, {c.cin, c.len}, rng);
    const Shape out = conv.output_shape();
    Sequential convt({LayerSpec::conv_transpose(c.cin, c.kernel, c.stride, c.padding)}, {c.cout, out.length}, rng);
    auto w = conv.layer(0).params();
    auto wt = convt.layer(0).params();
    const auto nw = static_cast<std::ptrdiff_t>(c.cout * c.cin * c.kernel);
    std::copy(w.begin(), w.begin() + nw, wt.begin());
    std::fill(w.begin() + nw, w.end(), 0.0);
    std::fill(wt.begin() + nw, wt.end(), 0.0);
    const Tensor x = random_tensor(2, c.cin, c.len, rng);
    const Tensor y = random_tensor(2, c.cout, out.length, rng);
    const Tensor cty = convt.apply(y);
    double rhs = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t ch = 0; ch < c.cin; ++ch)
        for (std::size_t t = 0; t < std::min(c.len, cty.length()); ++t) rhs += x.at(b, ch, t) * cty.at(b, ch, t);
    worst = std::max(worst, std::abs(dot(conv.apply(x), y) - rhs));
  }
  v.check(worst < 1e-10, "conv adjoint gap " + fmt("%.1e", worst));
  return v;
}

Verdict manifold_recovery() {
  Verdict v;
  const std::size_t n = 500;
  Rng rng(2024);
  RowMatrix p(static_cast<Eigen::Index>(n), 2);
  std::vector<double> angle(n);
  for (std::size_t i = 0; i < n; ++i) {
    angle[i] = rng.uniform(0.0, 2 * M_PI);
    p(static_cast<Eigen::Index>(i), 0) = std::cos(angle[i]) + 0.01 * rng.normal();
    p(static_cast<Eigen::Index>(i), 1) = std::sin(angle[i]) + 0.01 * rng.normal();
  }
  const double eps = median_epsilon(p);
  const auto op = normalize_to_markov(gaussian_kernel(p, eps), 1.0);
  double row_dev = 0.0;
  for (Eigen::Index i = 0; i < op.L.rows(); ++i) row_dev = std::max(row_dev, std::abs(op.L.row(i).sum() - 1.0));
  v.check(row_dev <= 1e-12, "max |row sum - 1| " + fmt("%.1e", row_dev));

  DMapConfig c;
  c.d = 2;
  const auto model = spectral_embed(op, p, eps, c);
  bool in_unit = true;
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i)
    in_unit = in_unit && model.eigenvalues(i) > 0.0 && model.eigenvalues(i) < 1.0;
  v.check(in_unit, "eigenvalues " + fmt("%.6f", model.eigenvalues(0)) + ", " + fmt("%.6f", model.eigenvalues(1)));

  const RowMatrix z = model.coordinates();
  std::complex<double> same = 0, flipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rec = std::atan2(z(static_cast<Eigen::Index>(i), 1), z(static_cast<Eigen::Index>(i), 0));
    same += std::polar(1.0, angle[i] - rec);
    flipped += std::polar(1.0, angle[i] + rec);
  }
  const double corr = std::max(std::abs(same), std::abs(flipped)) / static_cast<double>(n);
  v.check(corr > 0.99, "circular correlation " + fmt("%.5f", corr));
  return v;
}

Eigen::RowVectorXd manifold_output(double u, double w) {
  Eigen::RowVectorXd y(64);
  for (int t = 0; t < 64; ++t) {
    const double x = t / 64.0;
    y(t) = (1.0 + 0.3 * u) * std::sin(2 * M_PI * (2.0 * x + 0.4 * w)) + 0.2 * std::cos(2 * M_PI * 5.0 * x * (1 + 0.1 * u));
  }
  return y;
}

Verdict pyramid() {
  Verdict v;
  const int nu = 12, nw = 12;
  RowMatrix z(nu * nw, 2), y(nu * nw, 64);
  for (int i = 0, r = 0; i < nu; ++i)
    for (int j = 0; j < nw; ++j, ++r) {
      z.row(r) << i / double(nu - 1), j / double(nw - 1);
      y.row(r) = manifold_output(z(r, 0), z(r, 1));
    }
  PyramidConfig c;
  c.stop_tolerance = 0.05;
  c.max_levels = 20;
  const auto model = fit_pyramid(z, y, c);
  bool monotone = true;
  for (std::size_t l = 1; l < model.train_error.size(); ++l)
    monotone = monotone && model.train_error[l] <= model.train_error[l - 1];
  v.check(monotone, std::to_string(model.levels.size()) + " levels, training error non-increasing");
  v.check(model.train_error.back() < 0.1, "final training RSS/SSS " + fmt("%.4f", model.train_error.back()) + "%");
  Rng rng(5);
  double worst = 0.0;
  for (int q = 0; q < 100; ++q) {
    const double u = rng.uniform(0.0, 1.0), w = rng.uniform(0.0, 1.0);
    const auto truth = manifold_output(u, w);
    const auto out = lift(model, std::vector<double>{u, w}).values;
    worst = std::max(worst, rss_sss({truth.data(), 64}, out));
  }
  v.check(worst < 2.0, "worst held-out RSS/SSS " + fmt("%.3f", worst) + "%");
  return v;
}

struct KindResult {
  CompressorKind kind;
  EvalReport report;
  double seconds;
};

std::vector<KindResult> run_kinds(const Preset& p) {
  const auto ds = generate_dataset(p.config);
  const auto [train, test] = split_by_trial(ds, train_counts_by_fraction(ds, p.train_fraction));
  std::vector<KindResult> out;
  for (CompressorKind k : {CompressorKind::dmaps, CompressorKind::cae, CompressorKind::vae}) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineConfig pc;
    pc.kind = k;
    const auto bundle = fit_bundle(train, pc);
    auto report = evaluate(bundle, test);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  %-5s MAE k1 %.3f%% k2 %.3f%% of range, mean RSS/SSS %.3f%%, %.0f s\n",
                std::string(compressor_name(k)).c_str(), 100 * report.mae_k1 / report.range_k1,
                100 * report.mae_k2 / report.range_k2, report.mean_rss, secs);
    std::fflush(stdout);
    out.push_back({k, std::move(report), secs});
  }
  return out;
}

Verdict case_one() {
  Verdict v;
  const auto results = run_kinds(preset("case1"));
  for (const auto& r : results) {
    const std::string name(compressor_name(r.kind));
    const double limit = r.kind == CompressorKind::dmaps ? 2.0 : 3.0;
    v.check(r.report.mae_k1 < 0.05 * r.report.range_k1 && r.report.mae_k2 < 0.05 * r.report.range_k2,
            name + " MAE " + fmt("%.2f", 100 * r.report.mae_k1 / r.report.range_k1) + "% / " +
                fmt("%.2f", 100 * r.report.mae_k2 / r.report.range_k2) + "% of range");
    v.check(r.report.mean_rss < limit, name + " RSS/SSS " + fmt("%.3f", r.report.mean_rss) + "%");
  }
  const double cae = estimation_error(results[1].report), vae = estimation_error(results[2].report);
  v.check(cae <= vae, "CAE est. error " + fmt("%.4f", cae) + " <= VAE " + fmt("%.4f", vae));
  const double best_nn = std::min(results[1].report.mean_rss, results[2].report.mean_rss);
  v.check(results[0].report.mean_rss <= best_nn + 1.0,
          "DMaps RSS/SSS " + fmt("%.3f", results[0].report.mean_rss) + "% within 1 pp of " + fmt("%.3f", best_nn) + "%");
  return v;
}

Verdict case_two() {
  Verdict v;
  const auto results = run_kinds(preset("case2"));
  for (const auto& r : results)
    v.check(!r.report.non_finite && std::isfinite(r.report.mae_k1) && std::isfinite(r.report.mae_k2) &&
                std::isfinite(r.report.mean_rss),
            std::string(compressor_name(r.kind)) + " finite");
  const double dm = estimation_error(results[0].report), cae = estimation_error(results[1].report);
  v.check(cae <= dm, "CAE est. error " + fmt("%.4f", cae) + " <= DMaps " + fmt("%.4f", dm));
  return v;
}

Verdict vae_properties() {
  Verdict v;
  const auto p = preset("case2");
  const auto ds = generate_dataset(p.config);
  const auto [train, test] = split_by_trial(ds, train_counts_by_fraction(ds, p.train_fraction));
  double before = 0.0, after = 0.0, min_kl = 1e300;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PipelineConfig pc;
    pc.kind = CompressorKind::vae;
    pc.seed = seed;
    const auto bundle = fit_bundle(train, pc);
    for (const auto& path : bundle.paths)
      for (const auto& e : path.compressor.network.log) min_kl = std::min(min_kl, e.kl);
    const double e0 = estimation_error(evaluate(bundle, test));
    const double e1 = estimation_error(evaluate(augment_training(bundle, train, 20), test));
    std::printf("  seed %llu: est. error %.5f -> %.5f\n", static_cast<unsigned long long>(seed), e0, e1);
    std::fflush(stdout);
    before += e0 / 5;
    after += e1 / 5;
  }
  v.check(min_kl >= 0.0, "min epoch KL " + fmt("%.3e", min_kl));
  v.check(after <= before, "mean est. error " + fmt("%.5f", before) + " -> " + fmt("%.5f", after));
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wavelatent");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

Verdict determinism() {
  Verdict v;
  fixtures::TempDir dir("acceptance");
  const fs::path cfg = dir.path / "run.ini";
  std::ofstream(cfg) << "[gen]\npreset = \"case2\"\nseed = 11\ntrials = 4\n"
                     << "[fit]\nkind = \"cae\"\nepochs = 3\nhead-epochs = 100\ntrain-fraction = 0.5\nseed = 4\n";
  std::vector<std::string> csvs;
  for (const std::string run : {"a", "b"}) {
    const fs::path root = dir.path / run;
    const std::string r = root.string(), data = (root / "d.wlat").string(), model = (root / "model.wlmd").string();
    int code = cli({"--config", cfg.string(), "--out-dir", r, "gen", "-o", "d.wlat"});
    code = std::max(code, cli({"--config", cfg.string(), "--out-dir", r, "fit", "-i", data}));
    code = std::max(code, cli({"--out-dir", r, "estimate", "-m", model, "-i", data, "--train-fraction", "0.5"}));
    code = std::max(code, cli({"--out-dir", r, "reconstruct", "-m", model, "--k1", "2", "--k2", "20", "--path", "21"}));
    code = std::max(code, cli({"--out-dir", r, "eval", "-m", model, "-i", data, "--train-fraction", "0.5"}));
    v.check(code == 0, "run " + run + " exit " + std::to_string(code));
  }
  bool same = true;
  for (const char* f : {"d.wlat", "model.wlmd", "states.csv", "reconstruction.csv", "report/errors.csv", "report/rss.csv"}) {
    const auto a = slurp(dir.path / "a" / f), b = slurp(dir.path / "b" / f);
    same = same && !a.empty() && a == b;
  }
  v.check(same, "dataset, model and CSV outputs byte-identical across repeated runs");

  const auto ds = load_dataset(dir.path / "a" / "d.wlat");
  v.check(decode_wlat(encode_wlat(ds)) == ds && encode_wlat(decode_wlat(encode_wlat(ds))) == encode_wlat(ds),
          "dataset container round trip");
  const auto bundle = load_bundle(dir.path / "a" / "model.wlmd");
  const auto bytes = encode_bundle(bundle);
  v.check(encode_bundle(decode_bundle(bytes)) == bytes, "bundle container round trip");
  const auto& net = bundle.paths.front().compressor.network;
  v.check(encode_network(decode_network(encode_network(net))) == encode_network(net), "network container round trip");
  return v;
}

Verdict metrics() {
  Verdict v;
  const std::vector<double> y{1, 2, 3};
  const double r0 = rss_sss(y, y);
  const double r100 = rss_sss(y, std::vector<double>{0, 0, 0});
  const double r50 = rss_sss(std::vector<double>{1, 1}, std::vector<double>{1, 0});
  v.check(std::abs(r0) <= 1e-12, "identical -> " + fmt("%.3g", r0));
  v.check(std::abs(r100 - 100.0) <= 1e-12, "zero reconstruction -> " + fmt("%.12g", r100));
  v.check(std::abs(r50 - 50.0) <= 1e-12, "half energy residual -> " + fmt("%.12g", r50));
  const double k0 = gaussian_kl(Tensor(1, 1, 3), Tensor(1, 1, 3)).value;
  const double k5 = gaussian_kl(Tensor::from(1, 1, 1, {1}), Tensor::from(1, 1, 1, {0})).value;
  v.check(std::abs(k0) <= 1e-12, "KL(N(0,1)||N(0,1)) -> " + fmt("%.3g", k0));
  v.check(std::abs(k5 - 0.5) <= 1e-12, "KL(N(1,1)||N(0,1)) -> " + fmt("%.12g", k5));
  return v;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"autodiff soundness", 30, gradients},
      {"diffusion map manifold recovery", 10, manifold_recovery},
      {"Laplacian pyramid", 20, pyramid},
      {"case1 end to end", 600, case_one},
      {"case2 end to end", 900, case_two},
      {"VAE properties and augmentation", 1200, vae_properties},
      {"determinism", 120, determinism},
      {"metric unit suite", 1, metrics},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(k));
  }
  if (selected.empty())
    for (std::size_t k = 1; k <= criteria.size(); ++k) selected.push_back(k);

  int failures = 0;
  for (std::size_t k : selected) {
    const auto& c = criteria[k - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.check(secs < c.budget_seconds, fmt("%.1f", secs) + " s of " + fmt("%.0f", c.budget_seconds) + " s");
    std::printf("%s criterion %zu (%s): %s\n", v.ok ? "PASS" : "FAIL", k, c.name, v.detail.c_str());
    std::fflush(stdout);
    if (!v.ok) ++failures;
  }
  return failures ? 1 : 0;
}
