#pragma once

// Grids, trapezoid quadrature, weight densities and nu-weighted inner
// products. Every integral over the domain in the library goes through here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "wfda/errors.hpp"

namespace wfda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Domain

struct Domain {
  enum class Kind { Bounded, UnboundedRight };

  Kind kind = Kind::Bounded;
  double a = 0.0;
  double b = 1.0;  // +inf when unbounded

  static Domain bounded(double a, double b) {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
      std::ostringstream os;
      os << "bounded domain requires a < b, got [" << a << ", " << b << "]";
      throw ConfigError(os.str());
    }
    return Domain{Kind::Bounded, a, b};
  }

  static Domain unbounded_right(double a = 0.0) {
    if (!std::isfinite(a)) throw ConfigError("unbounded domain needs a finite left endpoint");
    return Domain{Kind::UnboundedRight, a, std::numeric_limits<double>::infinity()};
  }

  bool is_bounded() const { return kind == Kind::Bounded; }
  double length() const { return b - a; }

  bool contains(double t, double tol = 1e-12) const {
    const double slack = tol * std::max(1.0, std::abs(a) + (is_bounded() ? std::abs(b) : 0.0));
    if (t < a - slack) return false;
    return !is_bounded() || t <= b + slack;
  }

  friend bool operator==(const Domain&, const Domain&) = default;
};

inline std::string describe(const Domain& d) {
  std::ostringstream os;
  if (d.is_bounded())
    os << "[" << d.a << ", " << d.b << "]";
  else
    os << "[" << d.a << ", inf)";
  return os.str();
}

// ---------------------------------------------------------------------------
// Weight densities w = dnu/dt

/// Lebesgue density, w == 1.
struct UniformWeight {
  friend bool operator==(const UniformWeight&, const UniformWeight&) = default;
};

/// Piecewise constant density. Intervals are [breaks[l], breaks[l+1]) with the
/// last one closed on the right.
struct StepWeight {
  std::vector<double> breaks;
  std::vector<double> levels;
  friend bool operator==(const StepWeight&, const StepWeight&) = default;
};

/// rate * exp(-rate * (t - origin)) on [origin, inf).
struct ExponentialWeight {
  double rate = 1.0;
  double origin = 0.0;
  friend bool operator==(const ExponentialWeight&, const ExponentialWeight&) = default;
};

/// sqrt(2 / (pi scale^2)) exp(-(t - origin)^2 / (2 scale^2)) on [origin, inf).
struct HalfNormalWeight {
  double scale = 1.0;
  double origin = 0.0;
  friend bool operator==(const HalfNormalWeight&, const HalfNormalWeight&) = default;
};

using WeightSpec = std::variant<UniformWeight, StepWeight, ExponentialWeight, HalfNormalWeight>;

inline void validate(const WeightSpec& spec) {
  std::visit(
      [](const auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, StepWeight>) {
          if (w.breaks.size() < 2 || w.levels.size() + 1 != w.breaks.size())
            throw ConfigError("step weight needs len(levels) == len(breaks) - 1 >= 1");
          for (std::size_t i = 0; i + 1 < w.breaks.size(); ++i)
            if (!(w.breaks[i] < w.breaks[i + 1]))
              throw ConfigError("step weight breaks must be strictly increasing");
          for (double c : w.levels)
            if (!(c >= 0.0) || !std::isfinite(c))
              throw InvariantError("step weight levels must be finite and nonnegative");
        } else if constexpr (std::is_same_v<T, ExponentialWeight>) {
          if (!(w.rate > 0.0) || !std::isfinite(w.rate))
            throw ConfigError("exponential weight needs rate > 0");
        } else if constexpr (std::is_same_v<T, HalfNormalWeight>) {
          if (!(w.scale > 0.0) || !std::isfinite(w.scale))
            throw ConfigError("half-normal weight needs scale > 0");
        }
      },
      spec);
}

inline StepWeight make_step(std::vector<double> breaks, std::vector<double> levels) {
  StepWeight w{std::move(breaks), std::move(levels)};
  validate(WeightSpec{w});
  return w;
}

inline bool is_step(const WeightSpec& spec) { return std::holds_alternative<StepWeight>(spec); }
inline bool is_uniform(const WeightSpec& spec) { return std::holds_alternative<UniformWeight>(spec); }
inline bool is_parametric(const WeightSpec& spec) {
  return std::holds_alternative<ExponentialWeight>(spec) || std::holds_alternative<HalfNormalWeight>(spec);
}

inline std::string describe(const WeightSpec& spec) {
  std::ostringstream os;
  os.precision(6);
  std::visit(
      [&os](const auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, UniformWeight>) {
          os << "uniform";
        } else if constexpr (std::is_same_v<T, StepWeight>) {
          os << "step(";
          for (std::size_t i = 0; i < w.levels.size(); ++i) os << (i ? "," : "") << w.levels[i];
          os << ")";
        } else if constexpr (std::is_same_v<T, ExponentialWeight>) {
          os << "exp(rate=" << w.rate << ")";
        } else {
          os << "halfnorm(scale=" << w.scale << ")";
        }
      },
      spec);
  return os.str();
}

/// Index of the step interval containing t; the last interval is closed.
inline std::size_t step_interval(const StepWeight& w, double t) {
  if (t < w.breaks.front() || t > w.breaks.back()) {
    std::ostringstream os;
    os << "t = " << t << " outside step weight support [" << w.breaks.front() << ", "
       << w.breaks.back() << "]";
    throw DomainError(os.str());
  }
  auto it = std::upper_bound(w.breaks.begin(), w.breaks.end(), t);
  auto idx = static_cast<std::size_t>(it - w.breaks.begin());
  return std::min(idx, w.levels.size()) - 1;
}

inline double evaluate_weight(const WeightSpec& spec, double t) {
  return std::visit(
      [t](const auto& w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, UniformWeight>) {
          return 1.0;
        } else if constexpr (std::is_same_v<T, StepWeight>) {
          return w.levels[step_interval(w, t)];
        } else if constexpr (std::is_same_v<T, ExponentialWeight>) {
          if (t < w.origin) throw DomainError("exponential weight evaluated left of its origin");
          return w.rate * std::exp(-w.rate * (t - w.origin));
        } else {
          if (t < w.origin) throw DomainError("half-normal weight evaluated left of its origin");
          const double u = (t - w.origin) / w.scale;
          return std::sqrt(2.0 / M_PI) / w.scale * std::exp(-0.5 * u * u);
        }
      },
      spec);
}

/// Quantile of a parametric density (offset by its origin).
inline double weight_quantile(const WeightSpec& spec, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("quantile probability must be in (0, 1)");
  if (const auto* e = std::get_if<ExponentialWeight>(&spec)) return e->origin - std::log1p(-p) / e->rate;
  if (const auto* h = std::get_if<HalfNormalWeight>(&spec))
    return h->origin + h->scale * std::sqrt(2.0) * boost::math::erf_inv(p);
  throw ConfigError("quantile is only defined for exponential and half-normal weights");
}

/// Closed-form total mass of the density over the domain.
inline double weight_mass(const WeightSpec& spec, const Domain& domain) {
  return std::visit(
      [&domain](const auto& w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, UniformWeight>) {
          return domain.length();
        } else if constexpr (std::is_same_v<T, StepWeight>) {
          double m = 0.0;
          for (std::size_t l = 0; l < w.levels.size(); ++l) m += w.levels[l] * (w.breaks[l + 1] - w.breaks[l]);
          return m;
        } else {
          return 1.0;
        }
      },
      spec);
}

inline bool is_normalized(const WeightSpec& spec, const Domain& domain, double tol = 1e-10) {
  return std::abs(weight_mass(spec, domain) - 1.0) < tol;
}

/// Throws ConfigError when the density family does not match the domain kind.
inline void check_compatible(const WeightSpec& spec, const Domain& domain) {
  validate(spec);
  if (domain.is_bounded() && is_parametric(spec))
    throw ConfigError("exponential/half-normal weights require an unbounded domain");
  if (!domain.is_bounded() && !is_parametric(spec))
    throw ConfigError("uniform/step weights require a bounded domain");
}

// ---------------------------------------------------------------------------
// Working grid

struct WorkingGrid {
  Domain domain;
  Vector points;
  Vector quad_weights;
  std::optional<double> truncation;  // right end of an unbounded grid

  Eigen::Index size() const { return points.size(); }
};

/// Trapezoid weights for arbitrary increasing nodes.
inline Vector trapezoid_weights(const Vector& points) {
  const Eigen::Index G = points.size();
  Vector q = Vector::Zero(G);
  for (Eigen::Index g = 0; g + 1 < G; ++g) {
    const double h = points[g + 1] - points[g];
    q[g] += 0.5 * h;
    q[g + 1] += 0.5 * h;
  }
  return q;
}

inline WorkingGrid grid_from_points(const Domain& domain, Vector points) {
  if (points.size() < 2) throw ParameterError("a working grid needs at least 2 points");
  for (Eigen::Index g = 0; g + 1 < points.size(); ++g)
    if (!(points[g] < points[g + 1])) throw ParameterError("grid points must be strictly increasing");
  for (Eigen::Index g = 0; g < points.size(); ++g)
    if (!domain.contains(points[g])) throw DomainError("grid point outside the domain");
  WorkingGrid grid;
  grid.domain = domain;
  grid.quad_weights = trapezoid_weights(points);
  grid.points = std::move(points);
  if (!domain.is_bounded()) grid.truncation = grid.points[grid.points.size() - 1];
  return grid;
}

inline Vector equispaced(double lo, double hi, Eigen::Index size) {
  Vector p(size);
  for (Eigen::Index g = 0; g < size; ++g)
    p[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(size - 1);
  p[size - 1] = hi;
  return p;
}

struct GridOptions {
  double tail_probability = 0.999;
  /// Optional hard upper limit for unbounded grids (e.g. the last observed time).
  std::optional<double> upper_cap;
};

inline WorkingGrid build_grid(const Domain& domain, Eigen::Index size, const WeightSpec& spec,
                              const GridOptions& options = {}) {
  if (size < 2) throw ParameterError("grid size must be at least 2");
  validate(spec);
  if (domain.is_bounded()) return grid_from_points(domain, equispaced(domain.a, domain.b, size));
  if (!is_parametric(spec))
    throw ConfigError("uniform/step weights cannot build a grid on an unbounded domain");
  double upper = weight_quantile(spec, options.tail_probability);
  if (options.upper_cap && *options.upper_cap < upper) upper = *options.upper_cap;
  if (!(upper > domain.a)) throw ConfigError("unbounded grid truncation point is not right of the origin");
  return grid_from_points(domain, equispaced(domain.a, upper, size));
}

inline Vector evaluate_weight(const WeightSpec& spec, const WorkingGrid& grid) {
  Vector w(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) w[g] = evaluate_weight(spec, grid.points[g]);
  return w;
}

inline double integrate(const Eigen::Ref<const Vector>& f_values, const WorkingGrid& grid) {
  if (f_values.size() != grid.size()) throw ShapeError("integrand length does not match the grid");
  return f_values.dot(grid.quad_weights);
}

inline double inner_product_nu(const Eigen::Ref<const Vector>& f_values, const Eigen::Ref<const Vector>& g_values,
                               const WeightSpec& spec, const WorkingGrid& grid) {
  if (f_values.size() != grid.size() || g_values.size() != grid.size())
    throw ShapeError("inner product arguments do not match the grid");
  const Vector w = evaluate_weight(spec, grid);
  return integrate(f_values.cwiseProduct(g_values).cwiseProduct(w), grid);
}

// ---------------------------------------------------------------------------
// Interpolation

/// Piecewise-linear interpolation through (xs, ys) with constant extrapolation.
/// xs must be increasing.
inline double interpolate_linear(const Eigen::Ref<const Vector>& xs, const Eigen::Ref<const Vector>& ys, double x) {
  const Eigen::Index n = xs.size();
  if (n == 0) throw ShapeError("cannot interpolate through zero points");
  if (x <= xs[0]) return ys[0];
  if (x >= xs[n - 1]) return ys[n - 1];
  const double* begin = xs.data();
  auto idx = static_cast<Eigen::Index>(std::upper_bound(begin, begin + n, x) - begin) - 1;
  const double frac = (x - xs[idx]) / (xs[idx + 1] - xs[idx]);
  return ys[idx] + frac * (ys[idx + 1] - ys[idx]);
}

inline Vector interpolate_linear(const Eigen::Ref<const Vector>& xs, const Eigen::Ref<const Vector>& ys,
                                 const Eigen::Ref<const Vector>& targets) {
  Vector out(targets.size());
  for (Eigen::Index g = 0; g < targets.size(); ++g) out[g] = interpolate_linear(xs, ys, targets[g]);
  return out;
}

inline Vector as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace wfda
