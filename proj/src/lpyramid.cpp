#include "wavelatent/lpyramid.hpp"

#include <cmath>
#include <string>

#include "wavelatent/error.hpp"
#include "wavelatent/signal.hpp"

namespace wavelatent {

namespace {

// exp(-x) underflows to zero beyond this.
constexpr double kUnderflowExponent = 708.0;

RowMatrix pairwise_sq(const RowMatrix& a) {
  const auto n = a.rows();
  RowMatrix d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d2(i, j) = d2(j, i) = (a.row(i) - a.row(j)).squaredNorm();
  }
  return d2;
}

/// Row-normalized Gaussian weights; each row is shifted by its minimum
/// distance so the nearest neighbour never underflows.
RowMatrix smoothing_operator(const RowMatrix& d2, double sigma) {
  RowMatrix k(d2.rows(), d2.cols());
  for (Eigen::Index i = 0; i < d2.rows(); ++i) {
    const double shift = d2.row(i).minCoeff();
    k.row(i) = (-(d2.row(i).array() - shift) / sigma).exp();
    k.row(i) /= k.row(i).sum();
  }
  return k;
}

double mean_rss(const RowMatrix& outputs, const RowMatrix& residual) {
  double total = 0.0;
  std::size_t counted = 0;
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    const double energy = outputs.row(i).squaredNorm();
    if (!(energy > 0.0)) continue;
    total += 100.0 * residual.row(i).squaredNorm() / energy;
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace

double default_sigma0(const RowMatrix& latents) {
  const double max_d2 = latents.rows() > 1 ? pairwise_sq(latents).maxCoeff() : 0.0;
  return max_d2 > 0.0 ? 4.0 * max_d2 : 1.0;
}

PyramidModel fit_pyramid(const RowMatrix& latents, const RowMatrix& outputs, const PyramidConfig& config) {
  const auto n = latents.rows();
  if (n < 1) throw DimensionError("fit_pyramid needs at least one training pair");
  if (outputs.rows() != n) throw DimensionError("latent and output row counts differ");
  if (latents.cols() < 1 || outputs.cols() < 1) throw DimensionError("empty latent or output width");
  if (!latents.allFinite() || !outputs.allFinite()) throw NumericError("non-finite training data");
  if (config.sigma0 && !(*config.sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  if (config.max_levels < 1) throw ConfigError("max_levels must be at least 1");
  if (!(config.stop_tolerance >= 0.0)) throw ConfigError("stop tolerance must be non-negative");

  PyramidModel model;
  model.latents = latents;
  model.max_levels = config.max_levels;
  model.stop_tolerance = config.stop_tolerance;

  const RowMatrix d2 = pairwise_sq(latents);
  RowMatrix targets = outputs;
  // Coincident latents must share one output; conflicting ones are averaged.
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (done[static_cast<std::size_t>(i)]) continue;
    std::vector<Eigen::Index> group{i};
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (d2(i, j) == 0.0) group.push_back(j);
    if (group.size() == 1) continue;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(outputs.cols());
    for (auto g : group) mean += outputs.row(g);
    mean /= static_cast<double>(group.size());
    for (auto g : group) {
      if ((outputs.row(g) - mean).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + mean.cwiseAbs().maxCoeff()))
        model.averaged_duplicates = true;
      targets.row(g) = mean;
      done[static_cast<std::size_t>(g)] = true;
    }
  }

  const double sigma0 = config.sigma0 ? *config.sigma0 : default_sigma0(latents);
  RowMatrix residual = targets;
  double previous = INFINITY;
  for (std::size_t l = 0; l < config.max_levels; ++l) {
    const double sigma = sigma0 / std::ldexp(1.0, static_cast<int>(l));
    const RowMatrix smooth = smoothing_operator(d2, sigma) * residual;
    RowMatrix next = residual - smooth;
    const double err = mean_rss(targets, next);
    if (!model.levels.empty() && err > previous) break;
    model.levels.push_back({sigma, residual});
    model.train_error.push_back(err);
    residual = std::move(next);
    previous = err;
    if (err <= config.stop_tolerance) break;
  }
  return model;
}

Lift lift(const PyramidModel& model, std::span<const double> query) {
  if (model.levels.empty()) throw ConfigError("pyramid has no levels");
  const auto d = model.latents.cols();
  if (static_cast<Eigen::Index>(query.size()) != d)
    throw DimensionError("lift query has " + std::to_string(query.size()) + " coordinates, expected " + std::to_string(d));
  const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), d);
  if (!q.allFinite()) throw NumericError("non-finite lift query");

  const auto n = model.latents.rows();
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (model.latents.row(i) - q).squaredNorm();
  Eigen::Index nearest = 0;
  const double closest = d2.minCoeff(&nearest);

  Lift out;
  const Eigen::Index m = model.levels.front().residuals.cols();
  out.values.assign(static_cast<std::size_t>(m), 0.0);
  Eigen::Map<Eigen::RowVectorXd> acc(out.values.data(), m);
  if (closest / model.levels.front().sigma > kUnderflowExponent) {
    out.out_of_range = true;
    acc = model.levels.front().residuals.row(nearest);
    return out;
  }
  for (const auto& level : model.levels) {
    Eigen::RowVectorXd w = (-(d2.array() - closest) / level.sigma).exp().transpose();
    w /= w.sum();
    acc.noalias() += w * level.residuals;
  }
  return out;
}

}  // namespace wavelatent
