#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace wavelatent {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class EigenSelection : std::uint8_t { top_d = 0, parsimonious = 1 };

struct DMapConfig {
  /// Kernel bandwidth; nullopt selects the median squared pairwise distance.
  std::optional<double> epsilon;
  double alpha = 1.0;
  double t = 1.0;
  std::size_t d = 3;
  EigenSelection selection = EigenSelection::parsimonious;
  /// Nontrivial eigenvectors screened by parsimonious selection; 0 = max(10, 3d).
  std::size_t candidates = 0;
};

/// Row-stochastic diffusion operator built from a kernel matrix.
struct MarkovOperator {
  RowMatrix L;
  Eigen::VectorXd density;   // P_ii = sum_j K_ij
  Eigen::VectorXd row_sums;  // D_ii = sum_j Ktilde_ij
  double alpha = 1.0;
};

/// A fitted diffusion map. Eigenpairs are the selected ones, in descending
/// eigenvalue order, each eigenvector of unit Euclidean norm with its
/// largest-magnitude entry positive.
struct DMapModel {
  RowMatrix points;             // N x m training points
  double epsilon = 0.0;
  double alpha = 1.0;
  double t = 1.0;
  Eigen::VectorXd eigenvalues;  // d
  RowMatrix eigenvectors;       // N x d
  Eigen::VectorXd density;      // P_ii of the training kernel
  std::vector<std::size_t> selected;  // 1-based index among nontrivial eigenvectors
  std::vector<double> residuals;      // parsimonious residual of every screened candidate

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(eigenvalues.size()); }

  /// N x d diffusion coordinates lambda_i^t * v_i(j).
  RowMatrix coordinates() const;
};

/// K_ij = exp(-|y_i - y_j|^2 / (2 epsilon)).
RowMatrix gaussian_kernel(const RowMatrix& points, double epsilon);

/// Median of the nonzero squared pairwise distances.
double median_epsilon(const RowMatrix& points);

/// Density normalization Ktilde_ij = K_ij / (P_i^alpha P_j^alpha) followed by
/// row normalization.
MarkovOperator normalize_to_markov(const RowMatrix& kernel, double alpha);

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;  // nontrivial, descending
  RowMatrix eigenvectors;       // N x count, right eigenvectors of L
};

/// Right eigenpairs of L via the symmetric conjugate D^{1/2} L D^{-1/2}, with
/// the trivial (lambda = 1, constant) pair removed. Returns at most `count`.
SpectralDecomposition nontrivial_eigenpairs(const MarkovOperator& op, std::size_t count);

/// Local linear regression residual of each eigenvector against the ones
/// before it; r_1 = 1. Values lie in [0, 1].
std::vector<double> parsimonious_residuals(const RowMatrix& eigenvectors);

/// Indices (0-based columns) of the d largest residuals, in eigenvalue order.
std::vector<std::size_t> parsimonious_select(const RowMatrix& eigenvectors, std::size_t d);

/// Eigendecomposition, trivial-pair removal and eigenvector selection on an
/// already built operator. `points` and `epsilon` are recorded into the model.
DMapModel spectral_embed(const MarkovOperator& op, const RowMatrix& points, double epsilon, const DMapConfig& config);

/// Kernel, normalization and embedding in one call.
DMapModel fit_dmap(const RowMatrix& points, const DMapConfig& config);

struct Extension {
  std::vector<double> coordinates;
  /// Set when the query's kernel row vanished; coordinates are then the
  /// nearest training point's.
  bool out_of_range = false;
};

/// Nystrom extension of a new point into the fitted coordinates.
Extension nystrom_extend(const DMapModel& model, std::span<const double> query);

}  // namespace wavelatent
