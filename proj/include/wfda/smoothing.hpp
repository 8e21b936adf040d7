#pragma once

// Local linear smoothers with the Epanechnikov kernel, used for the mean curve
// and the covariance surface of irregularly observed data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wfda/errors.hpp"
#include "wfda/numerics.hpp"

namespace wfda {

struct PooledPoint {
  double t;
  double y;
  int subject;
};

/// Off-diagonal raw covariance (s, t, value) from one subject.
struct PooledPair {
  double s;
  double t;
  double v;
  int subject;
};

namespace detail {

inline double epanechnikov(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Ten geometric bandwidths spanning [2 * median gap, range / 4] of the pooled times.
inline std::vector<double> bandwidth_candidates(std::vector<double> times, int count = 10) {
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.size() < 2) throw InsufficientDataError("bandwidth selection needs at least two distinct times");
  std::vector<double> gaps;
  gaps.reserve(times.size() - 1);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) gaps.push_back(times[i + 1] - times[i]);
  const double lo = 2.0 * detail::median_of(gaps);
  const double hi = (times.back() - times.front()) / 4.0;
  if (!(lo < hi)) return {std::max(lo, hi)};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  return out;
}

// ---------------------------------------------------------------------------
// 1-D

class LocalLinear1D {
 public:
  explicit LocalLinear1D(std::vector<PooledPoint> pts) : pts_(std::move(pts)) {
    if (pts_.empty()) throw InsufficientDataError("smoother needs at least one observation");
    std::sort(pts_.begin(), pts_.end(), [](const PooledPoint& a, const PooledPoint& b) { return a.t < b.t; });
    ts_.reserve(pts_.size());
    for (const auto& p : pts_) ts_.push_back(p.t);
  }

  double operator()(double x, double h) const {
    auto lo = std::lower_bound(ts_.begin(), ts_.end(), x - h);
    auto hi = std::upper_bound(ts_.begin(), ts_.end(), x + h);
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (auto it = lo; it != hi; ++it) {
      const auto& p = pts_[static_cast<std::size_t>(it - ts_.begin())];
      const double d = p.t - x;
      const double k = detail::epanechnikov(d / h);
      if (k == 0.0) continue;
      s0 += k;
      s1 += k * d;
      s2 += k * d * d;
      t0 += k * p.y;
      t1 += k * d * p.y;
    }
    if (s0 <= 0.0) return nearest(x);
    const double det = s0 * s2 - s1 * s1;
    if (det <= 1e-10 * s0 * s2) return t0 / s0;
    return (s2 * t0 - s1 * t1) / det;
  }

 private:
  double nearest(double x) const {
    auto it = std::lower_bound(ts_.begin(), ts_.end(), x);
    if (it == ts_.end()) return pts_.back().y;
    if (it == ts_.begin()) return pts_.front().y;
    const auto i = static_cast<std::size_t>(it - ts_.begin());
    return (x - ts_[i - 1] <= ts_[i] - x) ? pts_[i - 1].y : pts_[i].y;
  }

  std::vector<PooledPoint> pts_;
  std::vector<double> ts_;
};

/// 5-fold CV (folds by subject index mod 5) over the candidate bandwidths.
inline double select_bandwidth_1d(const std::vector<PooledPoint>& pts, const std::vector<double>& candidates) {
  if (candidates.size() == 1) return candidates.front();
  constexpr int kFolds = 5;
  std::vector<std::vector<PooledPoint>> train(kFolds), test(kFolds);
  for (const auto& p : pts)
    for (int f = 0; f < kFolds; ++f) (p.subject % kFolds == f ? test : train)[f].push_back(p);
  std::vector<double> sse(candidates.size(), 0.0);
  for (int f = 0; f < kFolds; ++f) {
    if (train[f].empty() || test[f].empty()) continue;
    LocalLinear1D sm(train[f]);
    for (std::size_t c = 0; c < candidates.size(); ++c)
      for (const auto& p : test[f]) {
        const double r = p.y - sm(p.t, candidates[c]);
        sse[c] += r * r;
      }
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < sse.size(); ++c)
    if (sse[c] < sse[best]) best = c;
  return candidates[best];
}

// ---------------------------------------------------------------------------
// 2-D

/// Local linear surface smoother with a product kernel. Pairs are bucketed in
/// h x h cells so each query only touches the 3 x 3 neighbourhood.
class LocalLinear2D {
 public:
  LocalLinear2D(const std::vector<PooledPair>& pairs, double h) : pairs_(pairs), h_(h) {
    if (pairs_.empty()) throw InsufficientDataError("surface smoother needs at least one pair");
    if (!(h > 0.0)) throw ParameterError("bandwidth must be positive");
    s0_ = std::numeric_limits<double>::infinity();
    double t0 = s0_, t_max = -s0_;
    for (const auto& p : pairs_) {
      s0_ = std::min(s0_, p.s);
      t0 = std::min(t0, p.t);
      t_max = std::max(t_max, p.t);
    }
    t0_ = t0;
    ny_ = static_cast<std::int64_t>(std::floor((t_max - t0_) / h_)) + 1;
    keyed_.reserve(pairs_.size());
    for (std::size_t i = 0; i < pairs_.size(); ++i) keyed_.emplace_back(key(pairs_[i].s, pairs_[i].t), i);
    std::sort(keyed_.begin(), keyed_.end());
  }

  double operator()(double x, double y) const {
    const std::int64_t cx = cell(x, s0_), cy = cell(y, t0_);
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    double wsum = 0.0;
    for (std::int64_t ix = cx - 1; ix <= cx + 1; ++ix) {
      if (ix < 0) continue;
      const std::int64_t ylo = std::max<std::int64_t>(cy - 1, 0), yhi = std::min<std::int64_t>(cy + 1, ny_ - 1);
      if (ylo > yhi) continue;
      auto first = std::lower_bound(keyed_.begin(), keyed_.end(), std::make_pair(ix * ny_ + ylo, std::size_t{0}));
      for (auto it = first; it != keyed_.end() && it->first <= ix * ny_ + yhi; ++it) {
        const auto& p = pairs_[it->second];
        const double ds = p.s - x, dt = p.t - y;
        const double k = detail::epanechnikov(ds / h_) * detail::epanechnikov(dt / h_);
        if (k == 0.0) continue;
        const Eigen::Vector3d z(1.0, ds, dt);
        A.noalias() += k * z * z.transpose();
        b.noalias() += k * p.v * z;
        wsum += k;
      }
    }
    if (wsum <= 0.0) return nearest(x, y);
    const double det = A.determinant();
    if (!(std::abs(det) > 1e-10 * A(0, 0) * A(1, 1) * A(2, 2))) return b[0] / A(0, 0);
    return A.inverse().row(0).dot(b);
  }

 private:
  std::int64_t cell(double v, double origin) const {
    return static_cast<std::int64_t>(std::floor((v - origin) / h_));
  }
  std::int64_t key(double s, double t) const { return cell(s, s0_) * ny_ + cell(t, t0_); }

  double nearest(double x, double y) const {
    double best = std::numeric_limits<double>::infinity(), v = 0.0;
    for (const auto& p : pairs_) {
      const double d = (p.s - x) * (p.s - x) + (p.t - y) * (p.t - y);
      if (d < best) {
        best = d;
        v = p.v;
      }
    }
    return v;
  }

  const std::vector<PooledPair>& pairs_;
  double h_;
  double s0_ = 0.0, t0_ = 0.0;
  std::int64_t ny_ = 1;
  std::vector<std::pair<std::int64_t, std::size_t>> keyed_;
};

/// 5-fold CV by subject, scored only at held-out pairs with s < t.
inline double select_bandwidth_2d(const std::vector<PooledPair>& pairs, const std::vector<double>& candidates) {
  if (candidates.size() == 1) return candidates.front();
  constexpr int kFolds = 5;
  std::vector<std::vector<PooledPair>> train(kFolds), test(kFolds);
  for (const auto& p : pairs)
    for (int f = 0; f < kFolds; ++f) {
      if (p.subject % kFolds != f)
        train[f].push_back(p);
      else if (p.s < p.t)
        test[f].push_back(p);
    }
  std::vector<double> sse(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c)
    for (int f = 0; f < kFolds; ++f) {
      if (train[f].empty() || test[f].empty()) continue;
      LocalLinear2D sm(train[f], candidates[c]);
      for (const auto& p : test[f]) {
        const double r = p.v - sm(p.s, p.t);
        sse[c] += r * r;
      }
    }
  std::size_t best = 0;
  for (std::size_t c = 1; c < sse.size(); ++c)
    if (sse[c] < sse[best]) best = c;
  return candidates[best];
}

}  // namespace wfda
