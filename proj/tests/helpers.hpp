#pragma once

// Shared fixtures and independent reference implementations for the test
// suites. Nothing here calls into the library's numerical routines except to
// build inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wfda/fpca.hpp"
#include "wfda/numerics.hpp"

namespace wfda::oracle {

struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // columns, matching values
};

/// Cyclic Jacobi rotations on a symmetric matrix.
inline EigenPairs jacobi_eigen(Matrix A, double tol = 1e-15, int max_sweeps = 100) {
  const Eigen::Index n = A.rows();
  Matrix V = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        total += A(i, j) * A(i, j);
        if (i != j) off += A(i, j) * A(i, j);
      }
    if (off <= tol * tol * std::max(total, 1e-300)) break;
    for (Eigen::Index p = 0; p < n - 1; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&A](Eigen::Index a, Eigen::Index b) { return A(a, a) > A(b, b); });
  EigenPairs out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = A(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// Gauss-Laguerre rule by Golub-Welsch on the Jacobi matrix, solved with the
/// Jacobi rotation oracle above.
inline std::pair<Vector, Vector> golub_welsch_laguerre(int n) {
  Matrix J = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = 2.0 * i + 1.0;
    if (i + 1 < n) J(i, i + 1) = J(i + 1, i) = i + 1.0;
  }
  const EigenPairs e = jacobi_eigen(J, 1e-16, 200);
  Vector x(n), w(n);
  for (int i = 0; i < n; ++i) {
    x[i] = e.values[i];
    w[i] = e.vectors(0, i) * e.vectors(0, i);
  }
  return {x, w};
}

/// L_k(u) from the three-term recurrence.
inline double laguerre_recurrence(int k, double u) {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = 1.0 - u;
  for (int m = 2; m <= k; ++m) {
    const double next = ((2.0 * m - 1.0 - u) * cur - (m - 1.0) * prev) / m;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Dataset observed on common time points, curve i given by f(i, t).
inline FunctionalDataset dense_dataset(const Domain& dom, const Vector& times, int n,
                                       const std::function<double(int, double)>& f) {
  FunctionalDataset d;
  d.domain = dom;
  for (int i = 0; i < n; ++i) {
    FunctionalSample s;
    s.subject_id = "id" + std::to_string(i);
    s.times = to_std(times);
    for (double t : s.times) s.values.push_back(f(i, t));
    d.samples.push_back(std::move(s));
  }
  return d;
}

/// Three-component synthetic data on a grid: X_i = sum_k xi_ik e_k(t) with
/// xi_ik ~ N(0, rho_k), plus responses Y = sum_k b_k xi_ik + noise.
struct ThreeComponent {
  FunctionalDataset data;
  Matrix scores;
};

inline ThreeComponent three_component(const Domain& dom, const Vector& times, int n, std::uint64_t seed,
                                      const std::function<double(int, double)>& basis,
                                      double y_noise = 0.1) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const double rho[3] = {9.0, 4.0, 1.0};
  const double b[3] = {1.0, -2.0, 0.5};
  ThreeComponent out;
  out.scores.resize(n, 3);
  std::vector<double> y;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) out.scores(i, k) = std::sqrt(rho[k]) * z(eng);
  out.data = dense_dataset(dom, times, n, [&](int i, double t) {
    double x = 0.0;
    for (int k = 0; k < 3; ++k) x += out.scores(i, k) * basis(k, t);
    return x;
  });
  for (int i = 0; i < n; ++i) {
    double yi = y_noise * z(eng);
    for (int k = 0; k < 3; ++k) yi += b[k] * out.scores(i, k);
    y.push_back(yi);
  }
  out.data.responses = std::move(y);
  return out;
}

inline double cosine_basis(int k, double t) {
  return k == 0 ? std::sqrt(2.0) * std::cos(M_PI * t)
                : (k == 1 ? std::sqrt(2.0) * std::sin(2.0 * M_PI * t) : std::sqrt(2.0) * std::cos(3.0 * M_PI * t));
}

/// Leave-one-out CVE by refitting every fold from scratch on a dense-regular
/// design: cross-sectional mean, 1/n covariance of sqrt(w)-weighted residuals,
/// trapezoid-symmetrized eigenproblem solved by Jacobi rotations, diagonal
/// score regression beta_k = sigma_kY / rho_k.
inline double naive_exact_cve(const std::vector<std::vector<double>>& X, const std::vector<double>& Y,
                              const std::vector<double>& t, const std::vector<double>& w, int M) {
  const std::size_t n = X.size(), G = t.size();
  std::vector<double> q(G, 0.0);
  for (std::size_t g = 0; g + 1 < G; ++g) {
    q[g] += 0.5 * (t[g + 1] - t[g]);
    q[g + 1] += 0.5 * (t[g + 1] - t[g]);
  }
  double sse = 0.0;
  for (std::size_t out = 0; out < n; ++out) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
      if (i != out) keep.push_back(i);
    const double m = static_cast<double>(keep.size());
    std::vector<double> mu(G, 0.0);
    for (auto i : keep)
      for (std::size_t g = 0; g < G; ++g) mu[g] += X[i][g] / m;
    double ybar = 0.0;
    for (auto i : keep) ybar += Y[i] / m;

    auto z_of = [&](const std::vector<double>& x, std::size_t g) { return std::sqrt(w[g]) * (x[g] - mu[g]); };
    Matrix B = Matrix::Zero(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G));
    for (auto i : keep)
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t h = 0; h < G; ++h)
          B(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) +=
              std::sqrt(q[g]) * z_of(X[i], g) * z_of(X[i], h) * std::sqrt(q[h]) / m;
    const EigenPairs e = jacobi_eigen(B);

    double pred = ybar;
    for (int k = 0; k < M; ++k) {
      std::vector<double> phi(G);
      double norm = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        phi[g] = e.vectors(static_cast<Eigen::Index>(g), k) / std::sqrt(q[g]);
        norm += q[g] * phi[g] * phi[g];
      }
      for (auto& v : phi) v /= std::sqrt(norm);
      auto score = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t g = 0; g < G; ++g) s += q[g] * z_of(x, g) * phi[g];
        return s;
      };
      double sigma = 0.0;
      for (auto i : keep) sigma += score(X[i]) * (Y[i] - ybar) / m;
      pred += sigma / e.values[k] * score(X[out]);
    }
    sse += (Y[out] - pred) * (Y[out] - pred);
  }
  return sse / static_cast<double>(n);
}

inline double sample_variance(const Eigen::Ref<const Vector>& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline double correlation(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const Vector x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace wfda::oracle
