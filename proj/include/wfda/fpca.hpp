#pragma once

// Classical FPCA: mean and covariance estimation from discretely observed
// curves, and the eigendecomposition of the discretized covariance operator.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfda/errors.hpp"
#include "wfda/log.hpp"
#include "wfda/numerics.hpp"
#include "wfda/smoothing.hpp"

namespace wfda {

struct FunctionalSample {
  std::string subject_id;
  std::vector<double> times;
  std::vector<double> values;
};

struct FunctionalDataset {
  std::vector<FunctionalSample> samples;
  std::optional<std::vector<double>> responses;
  Domain domain;

  std::size_t size() const { return samples.size(); }
  bool has_responses() const { return responses.has_value(); }
};

inline void validate(const FunctionalDataset& data) {
  std::set<std::string> ids;
  for (const auto& s : data.samples) {
    if (!ids.insert(s.subject_id).second) throw ConfigError("duplicate subject id '" + s.subject_id + "'");
    if (s.times.empty() || s.times.size() != s.values.size())
      throw ShapeError("subject '" + s.subject_id + "' needs matching, nonempty times and values");
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      if (j > 0 && !(s.times[j - 1] < s.times[j]))
        throw ConfigError("subject '" + s.subject_id + "' times must be strictly increasing");
      if (!data.domain.contains(s.times[j]))
        throw DomainError("subject '" + s.subject_id + "' has time " + std::to_string(s.times[j]) +
                          " outside the domain " + describe(data.domain));
    }
  }
  if (data.responses && data.responses->size() != data.samples.size())
    throw ShapeError("responses must have one entry per sample");
}

/// Copy of the dataset restricted to the given sample indices.
inline FunctionalDataset subset(const FunctionalDataset& data, const std::vector<std::size_t>& idx) {
  FunctionalDataset out;
  out.domain = data.domain;
  out.samples.reserve(idx.size());
  for (auto i : idx) out.samples.push_back(data.samples[i]);
  if (data.responses) {
    std::vector<double> y;
    y.reserve(idx.size());
    for (auto i : idx) y.push_back((*data.responses)[i]);
    out.responses = std::move(y);
  }
  return out;
}

inline FunctionalDataset drop_one(const FunctionalDataset& data, std::size_t i) {
  std::vector<std::size_t> idx;
  idx.reserve(data.size() - 1);
  for (std::size_t j = 0; j < data.size(); ++j)
    if (j != i) idx.push_back(j);
  return subset(data, idx);
}

struct MeanFunction {
  WorkingGrid grid;
  Vector values;
  std::optional<double> bandwidth;  // set in irregular mode

  double at(double t) const { return interpolate_linear(grid.points, values, t); }
};

struct CovarianceSurface {
  WorkingGrid grid;
  Matrix matrix;
  double noise_var = 0.0;
  std::optional<double> bandwidth;
};

struct Eigensystem {
  Vector eigenvalues;  // decreasing, positive
  Matrix phi_Z;        // components x grid, Lebesgue-orthonormal
  Matrix phi_w;        // components x grid, orthonormal under the weight
  MeanFunction mean;
  WeightSpec weight = UniformWeight{};
  Vector density;       // weight on the grid
  std::string measure;  // label; "composite" systems come from change_of_measure
  bool composite = false;
  double total_variance = 0.0;  // sum of all positive operator eigenvalues
  double noise_var = 0.0;

  Eigen::Index components() const { return eigenvalues.size(); }
  const WorkingGrid& grid() const { return mean.grid; }

  /// Density at an arbitrary time; composite systems interpolate the grid table.
  double density_at(double t) const {
    if (composite) return std::max(0.0, interpolate_linear(grid().points, density, t));
    return evaluate_weight(weight, t);
  }
};

struct SmoothingOptions {
  std::optional<double> mean_bandwidth;
  std::optional<double> cov_bandwidth;
};

// ---------------------------------------------------------------------------

inline bool sample_on_grid(const FunctionalSample& s, const WorkingGrid& grid) {
  if (static_cast<Eigen::Index>(s.times.size()) != grid.size()) return false;
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double p = grid.points[g];
    if (std::abs(s.times[static_cast<std::size_t>(g)] - p) > 1e-9 * std::max(1.0, std::abs(p))) return false;
  }
  return true;
}

/// True iff every sample is observed exactly at the grid points.
inline bool is_dense_regular(const FunctionalDataset& data, const WorkingGrid& grid) {
  return std::all_of(data.samples.begin(), data.samples.end(),
                     [&grid](const FunctionalSample& s) { return sample_on_grid(s, grid); });
}

inline std::vector<double> pooled_times(const FunctionalDataset& data) {
  std::vector<double> t;
  for (const auto& s : data.samples) t.insert(t.end(), s.times.begin(), s.times.end());
  return t;
}

inline void require_samples(const FunctionalDataset& data) {
  if (data.size() < 2) throw InsufficientDataError("at least 2 samples are required");
}

inline void check_bandwidth(const std::optional<double>& h) {
  if (h && !(*h > 0.0)) throw ParameterError("bandwidth must be positive");
}

inline std::vector<PooledPoint> pooled_points(const FunctionalDataset& data) {
  std::vector<PooledPoint> pts;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data.samples[i].times.size(); ++j)
      pts.push_back({data.samples[i].times[j], data.samples[i].values[j], static_cast<int>(i)});
  return pts;
}

/// CV bandwidth for the irregular-design mean smoother.
inline double select_mean_bandwidth(const FunctionalDataset& data) {
  return select_bandwidth_1d(pooled_points(data), bandwidth_candidates(pooled_times(data)));
}

inline MeanFunction estimate_mean(const FunctionalDataset& data, const WorkingGrid& grid,
                                  std::optional<double> bandwidth = std::nullopt) {
  require_samples(data);
  check_bandwidth(bandwidth);
  MeanFunction mean{grid, Vector::Zero(grid.size()), std::nullopt};
  if (is_dense_regular(data, grid)) {
    // Running mean: exact when all curves agree.
    double k = 0.0;
    for (const auto& s : data.samples) mean.values += (as_vector(s.values) - mean.values) / ++k;
    return mean;
  }
  const double h = bandwidth ? *bandwidth : select_mean_bandwidth(data);
  LocalLinear1D sm(pooled_points(data));
  for (Eigen::Index g = 0; g < grid.size(); ++g) mean.values[g] = sm(grid.points[g], h);
  mean.bandwidth = h;
  return mean;
}

namespace detail {

/// Diagonal excess over a Richardson extrapolation of the near-diagonal bands.
inline double dense_noise_variance(const Matrix& C) {
  const Eigen::Index G = C.rows();
  if (G < 5) return 0.0;
  double acc = 0.0;
  for (Eigen::Index g = 2; g + 2 < G; ++g) {
    const double m1 = 0.5 * (C(g, g - 1) + C(g, g + 1));
    const double m2 = 0.5 * (C(g, g - 2) + C(g, g + 2));
    acc += C(g, g) - (4.0 * m1 - m2) / 3.0;
  }
  return std::max(0.0, acc / static_cast<double>(G - 4));
}

inline void symmetrize(Matrix& C) {
  Matrix s = 0.5 * (C + C.transpose());
  C = std::move(s);
}

}  // namespace detail

inline CovarianceSurface estimate_covariance(const FunctionalDataset& data, const MeanFunction& mean,
                                             const WorkingGrid& grid,
                                             std::optional<double> bandwidth = std::nullopt) {
  require_samples(data);
  check_bandwidth(bandwidth);
  const Eigen::Index G = grid.size();
  CovarianceSurface cov{grid, Matrix::Zero(G, G), 0.0, std::nullopt};
  if (is_dense_regular(data, grid)) {
    const Vector mu = interpolate_linear(mean.grid.points, mean.values, grid.points);
    Matrix R(static_cast<Eigen::Index>(data.size()), G);
    for (std::size_t i = 0; i < data.size(); ++i)
      R.row(static_cast<Eigen::Index>(i)) = (as_vector(data.samples[i].values) - mu).transpose();
    cov.matrix.noalias() = R.transpose() * R;
    cov.matrix /= static_cast<double>(data.size());
    detail::symmetrize(cov.matrix);
    cov.noise_var = detail::dense_noise_variance(cov.matrix);
    return cov;
  }

  std::vector<PooledPair> pairs;
  std::vector<PooledPoint> diag;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    std::vector<double> r(s.times.size());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = s.values[j] - mean.at(s.times[j]);
    for (std::size_t j = 0; j < r.size(); ++j) {
      diag.push_back({s.times[j], r[j] * r[j], static_cast<int>(i)});
      for (std::size_t l = 0; l < r.size(); ++l)
        if (l != j) pairs.push_back({s.times[j], s.times[l], r[j] * r[l], static_cast<int>(i)});
    }
  }
  if (pairs.empty()) throw InsufficientDataError("covariance smoothing needs subjects with at least 2 observations");
  const auto candidates = bandwidth_candidates(pooled_times(data));
  const double h = bandwidth ? *bandwidth : select_bandwidth_2d(pairs, candidates);
  cov.bandwidth = h;
  {
    LocalLinear2D sm(pairs, h);
    for (Eigen::Index g = 0; g < G; ++g)
      for (Eigen::Index k = g; k < G; ++k) {
        cov.matrix(g, k) = sm(grid.points[g], grid.points[k]);
        cov.matrix(k, g) = cov.matrix(g, k);
      }
  }
  detail::symmetrize(cov.matrix);

  // Noise: smoothed raw diagonal minus the surface, over the middle half.
  LocalLinear1D diag_sm(std::move(diag));
  const double lo = grid.points[0], hi = grid.points[G - 1];
  const double a = lo + 0.25 * (hi - lo), b = hi - 0.25 * (hi - lo);
  double acc = 0.0;
  int count = 0;
  for (Eigen::Index g = 0; g < G; ++g) {
    if (grid.points[g] < a || grid.points[g] > b) continue;
    acc += diag_sm(grid.points[g], h) - cov.matrix(g, g);
    ++count;
  }
  cov.noise_var = count > 0 ? std::max(0.0, acc / count) : 0.0;
  return cov;
}

namespace detail {

/// Flip so that the integral is nonnegative; near-zero integrals defer to the
/// first nonzero grid value.
inline void apply_sign_convention(Eigen::Ref<Vector> phi, const WorkingGrid& grid) {
  const double integral = phi.dot(grid.quad_weights);
  bool flip = false;
  if (std::abs(integral) > 1e-10) {
    flip = integral < 0.0;
  } else {
    for (Eigen::Index g = 0; g < phi.size(); ++g)
      if (phi[g] != 0.0) {
        flip = phi[g] < 0.0;
        break;
      }
  }
  if (flip) phi = -phi;
}

}  // namespace detail

inline Eigensystem eigendecompose(const CovarianceSurface& cov, Eigen::Index m_max) {
  const WorkingGrid& grid = cov.grid;
  const Eigen::Index G = grid.size();
  if (cov.matrix.rows() != G || cov.matrix.cols() != G) throw ShapeError("covariance does not match its grid");
  if (m_max < 1 || m_max > G) throw ParameterError("m_max must lie in [1, grid size]");
  const double scale = std::max(1.0, cov.matrix.cwiseAbs().maxCoeff());
  if ((cov.matrix - cov.matrix.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvariantError("covariance matrix is not symmetric");

  const Vector sq = grid.quad_weights.cwiseSqrt();
  const Matrix B = sq.asDiagonal() * cov.matrix * sq.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(B);
  if (solver.info() != Eigen::Success) throw InvariantError("symmetric eigensolver failed");
  const Vector& ev = solver.eigenvalues();  // ascending
  const Matrix& U = solver.eigenvectors();

  Eigensystem eig;
  eig.mean = MeanFunction{grid, Vector::Zero(G), std::nullopt};
  eig.density = Vector::Ones(G);
  eig.measure = "uniform";
  eig.noise_var = cov.noise_var;
  for (Eigen::Index k = 0; k < G; ++k) eig.total_variance += std::max(0.0, ev[k]);

  const double rho1 = ev[G - 1];
  const double floor = std::max(0.0, 1e-12 * rho1);
  Eigen::Index kept = 0;
  while (kept < m_max && ev[G - 1 - kept] > floor) ++kept;

  eig.eigenvalues.resize(kept);
  eig.phi_Z.resize(kept, G);
  for (Eigen::Index k = 0; k < kept; ++k) {
    eig.eigenvalues[k] = ev[G - 1 - k];
    Vector phi = U.col(G - 1 - k).cwiseQuotient(sq);
    detail::apply_sign_convention(phi, grid);
    phi /= std::sqrt(integrate(phi.cwiseProduct(phi), grid));
    eig.phi_Z.row(k) = phi.transpose();
  }
  eig.phi_w = eig.phi_Z;
  return eig;
}

/// Residual X - mu at the grid, from a single sample. Off-grid samples are
/// interpolated linearly with constant extension beyond their range.
inline Vector transformed_on_grid(const FunctionalSample& s, const Eigensystem& eig, bool apply_sqrt_weight) {
  const WorkingGrid& grid = eig.grid();
  if (sample_on_grid(s, grid)) {
    Vector r = as_vector(s.values) - eig.mean.values;
    if (apply_sqrt_weight)
      for (Eigen::Index g = 0; g < r.size(); ++g) r[g] *= std::sqrt(eig.density[g]);
    return r;
  }
  Vector t = as_vector(s.times), r(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    const double res = s.values[static_cast<std::size_t>(j)] - eig.mean.at(t[j]);
    r[j] = apply_sqrt_weight ? std::sqrt(eig.density_at(t[j])) * res : res;
  }
  return interpolate_linear(t, r, grid.points);
}

/// Scores xi_ik = int Z_i phi_Zk dt. With a non-uniform weight these are the
/// weighted scores xi_wk.
inline Matrix compute_scores(const FunctionalDataset& data, const Eigensystem& eig, const WorkingGrid& grid) {
  if (grid.size() != eig.grid().size()) throw ShapeError("eigensystem was fitted on a different grid");
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix scores(n, eig.components());
  const Matrix phiq = eig.phi_Z * grid.quad_weights.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data.samples[static_cast<std::size_t>(i)];
    if (s.times.size() < 2 && !sample_on_grid(s, grid))
      warn("subject '" + s.subject_id + "' has a single observation; using a constant extension");
    scores.row(i) = (phiq * transformed_on_grid(s, eig, true)).transpose();
  }
  return scores;
}

inline Eigensystem fpca_fit(const FunctionalDataset& data, const WorkingGrid& grid, Eigen::Index m_max,
                            const SmoothingOptions& opts = {}) {
  MeanFunction mean = estimate_mean(data, grid, opts.mean_bandwidth);
  CovarianceSurface cov = estimate_covariance(data, mean, grid, opts.cov_bandwidth);
  Eigensystem eig = eigendecompose(cov, std::min<Eigen::Index>(m_max, grid.size()));
  eig.mean = std::move(mean);
  return eig;
}

/// Fraction of variance explained by the first k components.
inline double fve(const Eigensystem& eig, Eigen::Index k) {
  if (eig.total_variance <= 0.0) return 1.0;
  return eig.eigenvalues.head(std::min(k, eig.components())).sum() / eig.total_variance;
}

}  // namespace wfda
