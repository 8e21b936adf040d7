#pragma once

// Polynomials phi_1..phi_9 orthonormal in L2([0, inf), rate * exp(-rate t) dt).
// phi_k(t) = L_{k-1}(rate * t), stored as explicit coefficient rows.

#include <array>
#include <cmath>
#include <vector>

#include "wfda/errors.hpp"

namespace wfda {

struct ExpBasis {
  double rate = 1.0;
  int max_order = 9;

  ExpBasis() = default;
  ExpBasis(double rate_, int max_order_) : rate(rate_), max_order(max_order_) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ParameterError("basis rate must be positive");
    if (max_order < 1 || max_order > 9) throw ParameterError("basis order must be in [1, 9]");
  }
};

namespace detail {

// Row k-1 holds the coefficients of (rate t)^j, j = 0..k-1.
inline constexpr std::array<std::array<double, 9>, 9> kExpBasisCoefficients{{
    {1.0},
    {1.0, -1.0},
    {1.0, -2.0, 1.0 / 2},
    {1.0, -3.0, 3.0 / 2, -1.0 / 6},
    {1.0, -4.0, 3.0, -2.0 / 3, 1.0 / 24},
    {1.0, -5.0, 5.0, -5.0 / 3, 5.0 / 24, -1.0 / 120},
    {1.0, -6.0, 15.0 / 2, -10.0 / 3, 5.0 / 8, -1.0 / 20, 1.0 / 720},
    {1.0, -7.0, 21.0 / 2, -35.0 / 6, 35.0 / 24, -7.0 / 40, 7.0 / 720, -1.0 / 5040},
    {1.0, -8.0, 14.0, -28.0 / 3, 35.0 / 12, -7.0 / 15, 7.0 / 180, -1.0 / 630, 1.0 / 40320},
}};

}  // namespace detail

inline double evaluate_basis(const ExpBasis& basis, int k, double t) {
  if (k < 1 || k > basis.max_order) throw ParameterError("basis index out of range");
  if (t < 0.0) throw DomainError("basis evaluated at negative time");
  const auto& c = detail::kExpBasisCoefficients[static_cast<std::size_t>(k - 1)];
  const double u = basis.rate * t;
  double acc = 0.0;
  for (int j = k - 1; j >= 0; --j) acc = acc * u + c[static_cast<std::size_t>(j)];
  return acc;
}

struct GaussLaguerre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes and weights for int_0^inf f(u) e^{-u} du, roots found by Newton
/// iteration on the three-term recurrence.
inline GaussLaguerre gauss_laguerre(int n) {
  if (n < 1) throw ParameterError("Gauss-Laguerre needs at least one node");
  GaussLaguerre q;
  q.nodes.resize(static_cast<std::size_t>(n));
  q.weights.resize(static_cast<std::size_t>(n));
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      z = 3.0 / (1.0 + 2.4 * n);
    } else if (i == 1) {
      z += 15.0 / (1.0 + 2.5 * n);
    } else {
      const double ai = i - 1;
      z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - q.nodes[static_cast<std::size_t>(i - 2)]);
    }
    double p1 = 0.0, p2 = 0.0, pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      p1 = 1.0;
      p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0 - z) * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (p1 - p2) / z;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::abs(z)) break;
    }
    q.nodes[static_cast<std::size_t>(i)] = z;
    q.weights[static_cast<std::size_t>(i)] = -1.0 / (pp * n * p2);
  }
  return q;
}

/// max |<phi_j, phi_k> - delta_jk| under rate * exp(-rate t) dt.
inline double check_orthonormality(const ExpBasis& basis, int quad_nodes) {
  if (quad_nodes < 2 * basis.max_order) throw ParameterError("need at least 2 * max_order quadrature nodes");
  const GaussLaguerre q = gauss_laguerre(quad_nodes);
  double worst = 0.0;
  for (int j = 1; j <= basis.max_order; ++j)
    for (int k = j; k <= basis.max_order; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const double t = q.nodes[i] / basis.rate;
        acc += q.weights[i] * evaluate_basis(basis, j, t) * evaluate_basis(basis, k, t);
      }
      worst = std::max(worst, std::abs(acc - (j == k ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace wfda
