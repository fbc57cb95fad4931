#include "wavelatent/dmaps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wavelatent/error.hpp"
#include "wavelatent/parallel.hpp"

namespace wavelatent {

namespace {

// Underflow threshold for the raw kernel row of an out-of-sample query:
// exp(-x) < 1e-300 for x above this.
constexpr double kVanishingExponent = 690.7755278982137;

void require_finite(const RowMatrix& points) {
  if (!points.allFinite()) throw NumericError("non-finite value in input points");
}

/// Symmetric matrix of squared Euclidean distances. Both triangles hold the
/// bitwise-same value, so anything derived from it is exactly symmetric.
RowMatrix squared_distances(const RowMatrix& points) {
  const auto n = points.rows();
  RowMatrix d2 = RowMatrix::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = ii + 1; j < n; ++j) d2(ii, j) = (points.row(ii) - points.row(j)).squaredNorm();
  });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) d2(i, j) = d2(j, i);
  return d2;
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
}

/// Rows of `m` grouped by near-equality; returns one representative per group.
std::vector<Eigen::Index> unique_rows(const RowMatrix& m) {
  const double tol = 1e-9 * std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  std::vector<Eigen::Index> reps;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    bool seen = false;
    for (auto r : reps)
      if ((m.row(i) - m.row(r)).cwiseAbs().maxCoeff() <= tol) {
        seen = true;
        break;
      }
    if (!seen) reps.push_back(i);
  }
  return reps;
}

}  // namespace

RowMatrix DMapModel::coordinates() const {
  RowMatrix out(eigenvectors.rows(), eigenvectors.cols());
  for (Eigen::Index c = 0; c < eigenvectors.cols(); ++c)
    out.col(c) = std::pow(eigenvalues(c), t) * eigenvectors.col(c);
  return out;
}

RowMatrix gaussian_kernel(const RowMatrix& points, double epsilon) {
  if (points.rows() < 2) throw DimensionError("gaussian_kernel needs at least 2 points");
  if (!(epsilon > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  require_finite(points);
  RowMatrix k = squared_distances(points);
  k = (-k.array() / (2.0 * epsilon)).exp().matrix();
  return k;
}

double median_epsilon(const RowMatrix& points) {
  if (points.rows() < 2) throw DimensionError("median_epsilon needs at least 2 points");
  require_finite(points);
  const RowMatrix d2 = squared_distances(points);
  std::vector<double> pool;
  for (Eigen::Index i = 0; i < d2.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d2.cols(); ++j)
      if (d2(i, j) > 0.0) pool.push_back(d2(i, j));
  if (pool.empty()) throw DegenerateInputError("all points are identical; bandwidth undefined");
  return median_of(std::move(pool));
}

MarkovOperator normalize_to_markov(const RowMatrix& kernel, double alpha) {
  if (kernel.rows() != kernel.cols()) throw DimensionError("kernel must be square");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!kernel.allFinite()) throw NumericError("non-finite kernel entry");
  MarkovOperator op;
  op.alpha = alpha;
  op.density = kernel.rowwise().sum();
  if ((op.density.array() <= 0.0).any()) throw NumericError("kernel row with zero sum");
  const Eigen::VectorXd inv_pow = op.density.array().pow(-alpha);
  RowMatrix k_tilde = inv_pow.asDiagonal() * kernel * inv_pow.asDiagonal();
  op.row_sums = k_tilde.rowwise().sum();
  if ((op.row_sums.array() <= 0.0).any()) throw NumericError("normalized kernel row with zero sum");
  op.L = op.row_sums.cwiseInverse().asDiagonal() * k_tilde;
  return op;
}

SpectralDecomposition nontrivial_eigenpairs(const MarkovOperator& op, std::size_t count) {
  const auto n = op.L.rows();
  // S = D^{1/2} L D^{-1/2} = D^{-1/2} Ktilde D^{-1/2} is symmetric.
  const Eigen::VectorXd sqrt_d = op.row_sums.cwiseSqrt();
  Eigen::MatrixXd s = sqrt_d.asDiagonal() * op.L * sqrt_d.cwiseInverse().asDiagonal();
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success)
    throw NumericError("symmetric eigensolver did not converge within " + std::to_string(30 * n) + " iterations");

  SpectralDecomposition out;
  std::vector<double> values;
  std::vector<Eigen::VectorXd> vectors;
  for (Eigen::Index k = n - 1; k >= 0 && values.size() < count; --k) {
    const double lambda = solver.eigenvalues()(k);
    Eigen::VectorXd v = solver.eigenvectors().col(k).cwiseQuotient(sqrt_d);
    v.normalize();
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().mean());
    const bool trivial = std::abs(lambda - 1.0) <= 1e-9 && sd < 1e-6 * std::abs(mean);
    if (trivial) continue;
    fix_sign(v);
    values.push_back(lambda);
    vectors.push_back(std::move(v));
  }
  out.eigenvalues = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  out.eigenvectors.resize(n, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t c = 0; c < vectors.size(); ++c) out.eigenvectors.col(static_cast<Eigen::Index>(c)) = vectors[c];
  return out;
}

std::vector<double> parsimonious_residuals(const RowMatrix& eigenvectors) {
  const auto cols = eigenvectors.cols();
  std::vector<double> residuals(static_cast<std::size_t>(cols), 1.0);
  if (cols <= 1) return residuals;

  // Duplicate samples would make every leave-one-out fit exact.
  const auto reps = unique_rows(eigenvectors);
  const auto n = static_cast<Eigen::Index>(reps.size());
  RowMatrix v(n, cols);
  for (Eigen::Index r = 0; r < n; ++r) v.row(r) = eigenvectors.row(reps[static_cast<std::size_t>(r)]);
  if (n < 3) return residuals;

  for (Eigen::Index k = 1; k < cols; ++k) {
    const RowMatrix x = v.leftCols(k);
    const Eigen::VectorXd y = v.col(k);
    const RowMatrix d2 = squared_distances(x);
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back(std::sqrt(d2(i, j)));
    const double scale = median_of(std::move(dists)) / 3.0;
    if (!(scale > 0.0)) continue;
    const RowMatrix w = (-d2.array() / (scale * scale)).exp().matrix();

    Eigen::VectorXd fitted(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
      const auto i = static_cast<Eigen::Index>(ui);
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k + 1, k + 1);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(k + 1);
      Eigen::VectorXd z(k + 1);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        z(0) = 1.0;
        z.tail(k) = x.row(j).transpose();
        a.noalias() += w(i, j) * z * z.transpose();
        b.noalias() += w(i, j) * y(j) * z;
      }
      a.diagonal().array() += 1e-12 * (a.trace() + 1e-300);
      const Eigen::VectorXd coef = a.ldlt().solve(b);
      z(0) = 1.0;
      z.tail(k) = x.row(i).transpose();
      fitted(i) = z.dot(coef);
    });
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    const double rms = std::sqrt((y - fitted).array().square().mean());
    double r = sd > 0.0 ? rms / sd : 0.0;
    if (!std::isfinite(r)) r = 1.0;
    residuals[static_cast<std::size_t>(k)] = std::clamp(r, 0.0, 1.0);
  }
  return residuals;
}

std::vector<std::size_t> parsimonious_select(const RowMatrix& eigenvectors, std::size_t d) {
  const auto cols = static_cast<std::size_t>(eigenvectors.cols());
  if (d > cols)
    throw ConfigError("requested " + std::to_string(d) + " eigenvectors but only " + std::to_string(cols) +
                      " candidates");
  const auto residuals = parsimonious_residuals(eigenvectors);
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return residuals[a] > residuals[b]; });
  order.resize(d);
  std::sort(order.begin(), order.end());
  return order;
}

DMapModel spectral_embed(const MarkovOperator& op, const RowMatrix& points, double epsilon, const DMapConfig& config) {
  const auto n = static_cast<std::size_t>(op.L.rows());
  if (config.d == 0) throw ConfigError("embedding dimension must be positive");
  if (config.d >= n)
    throw ConfigError("embedding dimension " + std::to_string(config.d) + " must be below the point count " +
                      std::to_string(n));
  if (!(config.t >= 0.0)) throw ConfigError("diffusion time must be non-negative");
  const std::size_t screened = config.selection == EigenSelection::top_d
                                   ? config.d
                                   : std::max(config.d, config.candidates ? config.candidates : std::max<std::size_t>(10, 3 * config.d));
  auto spectrum = nontrivial_eigenpairs(op, std::min(screened, n - 1));

  // Null-space directions (duplicate points) cannot carry an embedding.
  Eigen::Index usable = 0;
  const double floor = 1e-10;
  while (usable < spectrum.eigenvalues.size() && spectrum.eigenvalues(usable) > floor) ++usable;
  if (static_cast<std::size_t>(usable) < config.d)
    throw ConfigError("only " + std::to_string(usable) + " positive nontrivial eigenvalues; cannot embed in " +
                      std::to_string(config.d) + " dimensions");
  const RowMatrix candidates = spectrum.eigenvectors.leftCols(usable);

  DMapModel model;
  model.points = points;
  model.epsilon = epsilon;
  model.alpha = op.alpha;
  model.t = config.t;
  model.density = op.density;
  std::vector<std::size_t> chosen;
  if (config.selection == EigenSelection::top_d) {
    chosen.resize(config.d);
    std::iota(chosen.begin(), chosen.end(), 0);
    model.residuals.assign(config.d, 1.0);
  } else {
    model.residuals = parsimonious_residuals(candidates);
    chosen = parsimonious_select(candidates, config.d);
  }
  model.eigenvalues.resize(static_cast<Eigen::Index>(config.d));
  model.eigenvectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.d));
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    const auto src = static_cast<Eigen::Index>(chosen[c]);
    model.eigenvalues(static_cast<Eigen::Index>(c)) = spectrum.eigenvalues(src);
    model.eigenvectors.col(static_cast<Eigen::Index>(c)) = candidates.col(src);
    model.selected.push_back(chosen[c] + 1);
  }
  return model;
}

DMapModel fit_dmap(const RowMatrix& points, const DMapConfig& config) {
  const double epsilon = config.epsilon ? *config.epsilon : median_epsilon(points);
  if (!(epsilon > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  const RowMatrix kernel = gaussian_kernel(points, epsilon);
  const MarkovOperator op = normalize_to_markov(kernel, config.alpha);
  return spectral_embed(op, points, epsilon, config);
}

Extension nystrom_extend(const DMapModel& model, std::span<const double> query) {
  const auto n = model.points.rows();
  const auto m = model.points.cols();
  if (static_cast<Eigen::Index>(query.size()) != m)
    throw DimensionError("query length " + std::to_string(query.size()) + " does not match training length " +
                         std::to_string(m));
  const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), m);
  if (!q.allFinite()) throw NumericError("non-finite query");

  Eigen::VectorXd exponent(n);
  for (Eigen::Index j = 0; j < n; ++j) exponent(j) = (model.points.row(j) - q).squaredNorm() / (2.0 * model.epsilon);
  Eigen::Index nearest = 0;
  const double closest = exponent.minCoeff(&nearest);

  Extension out;
  out.coordinates.resize(model.dims());
  if (closest > kVanishingExponent) {
    out.out_of_range = true;
    const RowMatrix coords = model.coordinates();
    for (std::size_t c = 0; c < model.dims(); ++c) out.coordinates[c] = coords(nearest, static_cast<Eigen::Index>(c));
    return out;
  }
  // Shifting the exponent scales the kernel row by a constant, which the row
  // normalization removes for every alpha.
  const Eigen::VectorXd k = (-(exponent.array() - closest)).exp();
  const Eigen::VectorXd k_tilde = k.cwiseProduct(model.density.array().pow(-model.alpha).matrix());
  const Eigen::VectorXd row = k_tilde / k_tilde.sum();
  for (std::size_t c = 0; c < model.dims(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double lambda = model.eigenvalues(ci);
    out.coordinates[c] = std::pow(lambda, model.t - 1.0) * row.dot(model.eigenvectors.col(ci));
  }
  return out;
}

}  // namespace wavelatent
