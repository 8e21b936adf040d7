#pragma once

// Weighted functional linear model: truncated score regression
// beta_k = sigma_kY / rho_wk, prediction, and leave-one-out scores.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wfda/errors.hpp"
#include "wfda/fpca.hpp"
#include "wfda/log.hpp"
#include "wfda/numerics.hpp"
#include "wfda/wfpca.hpp"

namespace wfda {

enum class CvMode { Fast, Exact };

inline std::string to_string(CvMode m) { return m == CvMode::Fast ? "fast" : "exact"; }

struct WflmModel {
  double mu_Y = 0.0;
  Eigensystem eig;
  Eigen::Index M = 0;
  Vector sigma_kY;
  Vector beta_k;
  Vector beta_w_values;  // sum_k beta_k phi_Zk
  Vector beta_values;    // sum_k beta_k phi_wk
};

inline const std::vector<double>& require_responses(const FunctionalDataset& data) {
  if (!data.responses) throw ConfigError("responses are required");
  if (data.responses->size() != data.size()) throw ShapeError("responses must have one entry per sample");
  return *data.responses;
}

/// Regression step on an already fitted eigensystem.
inline WflmModel fit_on_eigensystem(const FunctionalDataset& data, const Eigensystem& eig, Eigen::Index M) {
  const auto& y = require_responses(data);
  if (M < 0) throw ParameterError("M must be nonnegative");
  if (M > eig.components()) {
    warn("M = " + std::to_string(M) + " exceeds the " + std::to_string(eig.components()) +
         " retained components; truncating");
    M = eig.components();
  }
  const WorkingGrid& grid = eig.grid();
  WflmModel model;
  model.eig = eig;
  model.M = M;
  const Vector Y = as_vector(y);
  const auto n = static_cast<double>(data.size());
  model.mu_Y = Y.sum() / n;
  model.sigma_kY = Vector::Zero(M);
  model.beta_k = Vector::Zero(M);
  if (M > 0) {
    const Matrix scores = compute_scores(data, eig, grid).leftCols(M);
    model.sigma_kY = scores.transpose() * (Y.array() - model.mu_Y).matrix() / n;
    model.beta_k = model.sigma_kY.cwiseQuotient(eig.eigenvalues.head(M));
  }
  model.beta_w_values = eig.phi_Z.topRows(M).transpose() * model.beta_k;
  model.beta_values = eig.phi_w.topRows(M).transpose() * model.beta_k;
  return model;
}

struct FitOptions {
  SmoothingOptions smoothing;
};

inline WflmModel fit(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                     Eigen::Index M, const FitOptions& opts = {}) {
  require_responses(data);
  const Eigensystem eig = wfpca_fit(data, spec, grid, std::max<Eigen::Index>(M, 1), opts.smoothing);
  return fit_on_eigensystem(data, eig, M);
}

/// Classical (Lebesgue) functional linear model.
inline WflmModel flm_fit(const FunctionalDataset& data, const WorkingGrid& grid, Eigen::Index M,
                         const FitOptions& opts = {}) {
  require_responses(data);
  const Eigensystem eig = fpca_fit(data, grid, std::max<Eigen::Index>(M, 1), opts.smoothing);
  return fit_on_eigensystem(data, eig, M);
}

inline Vector predict(const WflmModel& model, const FunctionalDataset& new_data, const WorkingGrid& grid) {
  const Domain& dom = model.eig.grid().domain;
  for (const auto& s : new_data.samples)
    for (double t : s.times)
      if (!dom.contains(t))
        throw DomainError("subject '" + s.subject_id + "' has time " + std::to_string(t) +
                          " outside the model domain " + describe(dom));
  Vector out = Vector::Constant(static_cast<Eigen::Index>(new_data.size()), model.mu_Y);
  if (model.M > 0) out += compute_scores(new_data, model.eig, grid).leftCols(model.M) * model.beta_k;
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out

/// LOO residuals of OLS with intercept on the given score columns, through the
/// hat-matrix identity e_i / (1 - h_ii).
inline Vector fast_loo_residuals(const Eigen::Ref<const Matrix>& scores, const Vector& y) {
  const Eigen::Index n = y.size();
  Matrix X(n, scores.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(scores.cols()) = scores;
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  const Eigen::Index r = qr.rank();
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, r);
  const Vector fitted = Q * (Q.transpose() * y);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = Q.row(i).squaredNorm();
    const double denom = 1.0 - h;
    if (denom <= 1e-12) throw UndefinedScoreError("leave-one-out residual undefined (leverage 1)");
    out[i] = (y[i] - fitted[i]) / denom;
  }
  return out;
}

inline Vector exact_loo_residuals(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                                  Eigen::Index M, const FitOptions& opts = {}) {
  const auto& y = require_responses(data);
  ScopedWarningSilencer quiet;
  Vector out(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const WflmModel m = fit(drop_one(data, i), spec, grid, M, opts);
    const Vector pred = predict(m, subset(data, {i}), grid);
    out[static_cast<Eigen::Index>(i)] = y[i] - pred[0];
  }
  return out;
}

inline Vector loo_residuals(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                            Eigen::Index M, CvMode mode, const FitOptions& opts = {}) {
  const auto& y = require_responses(data);
  if (data.size() < 3) throw InsufficientDataError("leave-one-out needs at least 3 samples");
  if (M < 0) throw ParameterError("M must be nonnegative");
  if (mode == CvMode::Exact) return exact_loo_residuals(data, spec, grid, M, opts);
  const Eigensystem eig = wfpca_fit(data, spec, grid, std::max<Eigen::Index>(M, 1), opts.smoothing);
  const Eigen::Index m = std::min(M, eig.components());
  const Matrix scores = compute_scores(data, eig, grid);
  return fast_loo_residuals(scores.leftCols(m), as_vector(y));
}

inline double cve(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid, Eigen::Index M,
                  CvMode mode = CvMode::Fast, const FitOptions& opts = {}) {
  return loo_residuals(data, spec, grid, M, mode, opts).squaredNorm() / static_cast<double>(data.size());
}

inline double total_sum_of_squares(const std::vector<double>& y) {
  const Vector Y = as_vector(y);
  return (Y.array() - Y.mean()).square().sum();
}

inline double loocvs(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid, Eigen::Index M,
                     CvMode mode = CvMode::Fast, const FitOptions& opts = {}) {
  const double sst = total_sum_of_squares(require_responses(data));
  if (!(sst > 0.0)) throw UndefinedScoreError("LOOCVS undefined: responses have zero variance");
  return loo_residuals(data, spec, grid, M, mode, opts).squaredNorm() / sst;
}

struct MSelection {
  Eigen::Index M = 0;
  std::vector<std::pair<Eigen::Index, double>> trace;  // (M, cve)
};

inline MSelection select_M(const FunctionalDataset& data, const WeightSpec& spec, const WorkingGrid& grid,
                           const std::vector<Eigen::Index>& m_candidates, CvMode mode = CvMode::Fast,
                           const FitOptions& opts = {}) {
  if (m_candidates.empty()) throw ConfigError("select_M needs at least one candidate");
  const auto& y = require_responses(data);
  if (data.size() < 3) throw InsufficientDataError("leave-one-out needs at least 3 samples");
  MSelection sel;
  const double n = static_cast<double>(data.size());
  if (mode == CvMode::Fast) {
    const Eigen::Index top = std::max<Eigen::Index>(1, *std::max_element(m_candidates.begin(), m_candidates.end()));
    const Eigensystem eig = wfpca_fit(data, spec, grid, top, opts.smoothing);
    const Matrix scores = compute_scores(data, eig, grid);
    const Vector Y = as_vector(y);
    for (auto M : m_candidates) {
      if (M < 0) throw ParameterError("M must be nonnegative");
      const Eigen::Index m = std::min(M, eig.components());
      sel.trace.emplace_back(M, fast_loo_residuals(scores.leftCols(m), Y).squaredNorm() / n);
    }
  } else {
    for (auto M : m_candidates) sel.trace.emplace_back(M, cve(data, spec, grid, M, mode, opts));
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < sel.trace.size(); ++c) {
    const auto& [m, v] = sel.trace[c];
    if (v < sel.trace[best].second || (v == sel.trace[best].second && m < sel.trace[best].first)) best = c;
  }
  sel.M = sel.trace[best].first;
  return sel;
}

/// Smallest K whose cumulative fraction of variance explained reaches the threshold.
inline Eigen::Index fve_count(const Eigensystem& eig, double threshold = 0.95) {
  for (Eigen::Index k = 1; k <= eig.components(); ++k)
    if (fve(eig, k) >= threshold) return k;
  return eig.components();
}

/// Candidate truncation levels 1..K_FVE(0.95) for a given weight.
inline std::vector<Eigen::Index> default_m_candidates(const Eigensystem& eig, double threshold = 0.95) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index k = 1; k <= std::max<Eigen::Index>(1, fve_count(eig, threshold)); ++k) out.push_back(k);
  return out;
}

}  // namespace wfda
