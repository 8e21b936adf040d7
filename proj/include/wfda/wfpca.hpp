#pragma once

// Weighted FPCA. The process is transformed to Z = sqrt(w) (X - mu), its
// covariance is eigendecomposed under Lebesgue measure, and eigenfunctions are
// mapped back with phi_w = phi_Z / sqrt(w) (taking 1/sqrt(0) = 0).

#include <cmath>
#include <string>

#include "wfda/errors.hpp"
#include "wfda/fpca.hpp"
#include "wfda/numerics.hpp"

namespace wfda {

/// dnu2/dnu1 tabulated on a grid.
struct RadonNikodymRatio {
  WorkingGrid grid;
  Vector values;
};

namespace detail {

inline double inv_sqrt0(double w) { return w > 0.0 ? 1.0 / std::sqrt(w) : 0.0; }

inline bool same_grid(const WorkingGrid& a, const WorkingGrid& b) {
  return a.size() == b.size() && a.points == b.points;
}

}  // namespace detail

inline FunctionalDataset transform_to_Z(const FunctionalDataset& data, const MeanFunction& mean,
                                        const WeightSpec& spec) {
  validate(spec);
  FunctionalDataset out = data;
  for (auto& s : out.samples) {
    const bool on_grid = sample_on_grid(s, mean.grid);
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      const double w = evaluate_weight(spec, s.times[j]);
      if (!(w >= 0.0)) throw InvariantError("weight evaluated negative");
      const double mu = on_grid ? mean.values[static_cast<Eigen::Index>(j)] : mean.at(s.times[j]);
      s.values[j] = std::sqrt(w) * (s.values[j] - mu);
    }
  }
  return out;
}

/// Weighted FPCA with a precomputed mean of X (lets callers share the mean
/// across many candidate weights).
inline Eigensystem wfpca_fit(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                             Eigen::Index m_max, const MeanFunction& mean,
                             std::optional<double> cov_bandwidth = std::nullopt) {
  check_compatible(spec, grid.domain);
  const Vector density = evaluate_weight(spec, grid);
  const FunctionalDataset z = transform_to_Z(data, mean, spec);
  const MeanFunction zero{grid, Vector::Zero(grid.size()), std::nullopt};
  CovarianceSurface cov = estimate_covariance(z, zero, grid, cov_bandwidth);
  for (Eigen::Index g = 0; g < grid.size(); ++g)
    if (density[g] == 0.0) {
      cov.matrix.row(g).setZero();
      cov.matrix.col(g).setZero();
    }
  Eigensystem eig = eigendecompose(cov, std::min<Eigen::Index>(m_max, grid.size()));
  eig.mean = mean;
  eig.weight = spec;
  eig.density = density;
  eig.measure = describe(spec);
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double s = detail::inv_sqrt0(density[g]);
    if (density[g] == 0.0) eig.phi_Z.col(g).setZero();
    eig.phi_w.col(g) = eig.phi_Z.col(g) * s;
  }
  return eig;
}

inline Eigensystem wfpca_fit(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                             Eigen::Index m_max, const SmoothingOptions& opts = {}) {
  check_compatible(spec, grid.domain);
  const MeanFunction mean = estimate_mean(data, grid, opts.mean_bandwidth);
  return wfpca_fit(data, spec, grid, m_max, mean, opts.cov_bandwidth);
}

/// Scores through the Z-integral, int Z phi_Z dt.
inline Matrix wfpca_scores(const FunctionalDataset& data, const Eigensystem& eig, const WorkingGrid& grid) {
  return compute_scores(data, eig, grid);
}

/// Scores through the nu-integral, int (X - mu) phi_w dnu.
inline Matrix wfpca_scores_nu_form(const FunctionalDataset& data, const Eigensystem& eig, const WorkingGrid& grid) {
  if (grid.size() != eig.grid().size()) throw ShapeError("eigensystem was fitted on a different grid");
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix scores(n, eig.components());
  const Matrix phiwq = eig.phi_w * eig.density.cwiseProduct(grid.quad_weights).asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i)
    scores.row(i) = (phiwq * transformed_on_grid(data.samples[static_cast<std::size_t>(i)], eig, false)).transpose();
  return scores;
}

/// Moves an eigensystem from nu1 to nu2 given dnu2/dnu1. Eigenvalues are kept;
/// the nu1 eigenfunctions (phi_w of the input) are divided by sqrt(ratio).
inline Eigensystem change_of_measure(const Eigensystem& eig, const RadonNikodymRatio& ratio) {
  if (!detail::same_grid(eig.grid(), ratio.grid) || ratio.values.size() != eig.grid().size())
    throw ShapeError("Radon-Nikodym ratio is tabulated on a different grid");
  for (Eigen::Index g = 0; g < ratio.values.size(); ++g)
    if (!(ratio.values[g] >= 0.0) || !std::isfinite(ratio.values[g]))
      throw InvariantError("Radon-Nikodym ratio must be finite and nonnegative");
  if ((ratio.values.array() == 1.0).all()) return eig;

  Eigensystem out = eig;
  for (Eigen::Index g = 0; g < ratio.values.size(); ++g) out.phi_w.col(g) = eig.phi_w.col(g) * detail::inv_sqrt0(ratio.values[g]);
  out.density = eig.density.cwiseProduct(ratio.values);
  out.composite = true;
  out.measure = eig.measure + " x dnu2/dnu1";
  return out;
}

/// max_{j,k} |<phi_wj, phi_wk>_nu - delta_jk| on the grid.
inline double nu_orthonormality_deviation(const Eigensystem& eig) {
  const WorkingGrid& grid = eig.grid();
  const Matrix gram = eig.phi_w * eig.density.cwiseProduct(grid.quad_weights).asDiagonal() * eig.phi_w.transpose();
  if (gram.size() == 0) return 0.0;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

}  // namespace wfda
