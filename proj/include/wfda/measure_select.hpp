#pragma once

// Data-adaptive choice of the measure. Bounded domains: greedy dyadic search
// over normalized step weights minimizing the penalized CV score. Unbounded
// domains: grid search over exponential or half-normal densities minimizing CVE.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wfda/errors.hpp"
#include "wfda/fpca.hpp"
#include "wfda/log.hpp"
#include "wfda/numerics.hpp"
#include "wfda/wfpca.hpp"
#include "wfda/wflm.hpp"

namespace wfda {

struct PcvsConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::Index M = 1;
  int K_max = 3;
  std::vector<double> candidate_levels{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
};

struct TraceEntry {
  WeightSpec weight;
  double score = 0.0;
  bool accepted = false;
};

struct SelectionResult {
  WeightSpec weight;
  Eigen::Index M = 1;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double score = 0.0;   // objective at the chosen weight (PCVS for steps, CVE for parametric)
  double loocvs = 0.0;  // unpenalized LOO score at the chosen weight
  std::optional<double> parameter;
  std::vector<TraceEntry> trace;
};

// ---------------------------------------------------------------------------
// Penalties

namespace detail {

inline const StepWeight* as_step_or_throw(const WeightSpec& spec) {
  if (is_parametric(spec)) throw ConfigError("penalized CV score needs a step (or uniform) weight");
  return std::get_if<StepWeight>(&spec);
}

inline std::string weight_key(const WeightSpec& spec) {
  std::string key = describe(spec);
  auto add = [&key](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "|%a", v);
    key += buf;
  };
  std::visit(
      [&add](const auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, StepWeight>) {
          for (double b : w.breaks) add(b);
          for (double c : w.levels) add(c);
        } else if constexpr (std::is_same_v<T, ExponentialWeight>) {
          add(w.rate);
          add(w.origin);
        } else if constexpr (std::is_same_v<T, HalfNormalWeight>) {
          add(w.scale);
          add(w.origin);
        }
      },
      spec);
  return key;
}

}  // namespace detail

/// Sum of absolute jumps between consecutive levels, on the scale of a density
/// over the unit interval (levels times |T|).
inline double total_variation(const WeightSpec& spec, const Domain& domain) {
  const StepWeight* step = detail::as_step_or_throw(spec);
  if (!step) return 0.0;
  double tv = 0.0;
  for (std::size_t l = 0; l + 1 < step->levels.size(); ++l) tv += std::abs(step->levels[l + 1] - step->levels[l]);
  return tv * domain.length();
}

/// Fraction of the domain where the weight is nonzero.
inline double support_fraction(const WeightSpec& spec, const Domain& domain) {
  const StepWeight* step = detail::as_step_or_throw(spec);
  if (!step) return 1.0;
  double len = 0.0;
  for (std::size_t l = 0; l < step->levels.size(); ++l)
    if (step->levels[l] != 0.0) len += step->breaks[l + 1] - step->breaks[l];
  return len / domain.length();
}

// ---------------------------------------------------------------------------
// Cached CV objective

/// Caches, per weight, the full-data eigensystem and its scores so that fast
/// LOO scores for every M and every penalty setting share one fit.
class CvObjective {
 public:
  CvObjective(const FunctionalDataset& data, const WorkingGrid& grid, CvMode mode = CvMode::Fast,
              FitOptions opts = {}, Eigen::Index m_max = 0)
      : data_(data), grid_(grid), mode_(mode), opts_(std::move(opts)) {
    const auto& y = require_responses(data_);
    if (data_.size() < 3) throw InsufficientDataError("leave-one-out needs at least 3 samples");
    y_ = as_vector(y);
    sst_ = total_sum_of_squares(y);
    m_max_ = m_max > 0 ? std::min(m_max, grid_.size()) : grid_.size();
  }

  const FunctionalDataset& data() const { return data_; }
  const WorkingGrid& grid() const { return grid_; }
  CvMode mode() const { return mode_; }
  double sst() const { return sst_; }

  const MeanFunction& mean() {
    if (!mean_) mean_ = estimate_mean(data_, grid_, opts_.smoothing.mean_bandwidth);
    return *mean_;
  }

  const Eigensystem& eigensystem(const WeightSpec& spec) { return entry(spec).eig; }

  Eigen::Index fve_count(const WeightSpec& spec, double threshold = 0.95) {
    return wfda::fve_count(eigensystem(spec), threshold);
  }

  double loo_sse(const WeightSpec& spec, Eigen::Index M) {
    if (M < 0) throw ParameterError("M must be nonnegative");
    Entry& e = entry(spec);
    auto it = e.sse.find(M);
    if (it != e.sse.end()) return it->second;
    double sse;
    if (mode_ == CvMode::Fast) {
      sse = fast_loo_residuals(e.scores.leftCols(std::min(M, e.eig.components())), y_).squaredNorm();
    } else {
      sse = exact_loo_residuals(data_, spec, grid_, M, opts_).squaredNorm();
    }
    e.sse.emplace(M, sse);
    return sse;
  }

  double cve(const WeightSpec& spec, Eigen::Index M) { return loo_sse(spec, M) / static_cast<double>(y_.size()); }

  double loocvs(const WeightSpec& spec, Eigen::Index M) {
    if (!(sst_ > 0.0)) throw UndefinedScoreError("LOOCVS undefined: responses have zero variance");
    return loo_sse(spec, M) / sst_;
  }

  /// Final regression on the cached eigensystem.
  WflmModel fit(const WeightSpec& spec, Eigen::Index M) { return fit_on_eigensystem(data_, eigensystem(spec), M); }

 private:
  struct Entry {
    Eigensystem eig;
    Matrix scores;
    std::map<Eigen::Index, double> sse;
  };

  Entry& entry(const WeightSpec& spec) {
    const std::string key = detail::weight_key(spec);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Entry e;
    e.eig = wfpca_fit(data_, spec, grid_, m_max_, mean(), opts_.smoothing.cov_bandwidth);
    e.scores = compute_scores(data_, e.eig, grid_);
    return cache_.emplace(key, std::move(e)).first->second;
  }

  const FunctionalDataset& data_;
  WorkingGrid grid_;
  CvMode mode_;
  FitOptions opts_;
  Vector y_;
  double sst_ = 0.0;
  Eigen::Index m_max_ = 0;
  std::optional<MeanFunction> mean_;
  std::map<std::string, Entry> cache_;
};

inline double pcvs(CvObjective& obj, const WeightSpec& weight, Eigen::Index M, double lambda1, double lambda2) {
  detail::as_step_or_throw(weight);
  const Domain& dom = obj.grid().domain;
  if (!dom.is_bounded()) throw ConfigError("penalized CV score needs a bounded domain");
  if (is_step(weight) && !is_normalized(weight, dom))
    throw ConfigError("penalized CV score needs a normalized weight");
  return obj.loocvs(weight, M) + lambda1 * total_variation(weight, dom) + lambda2 * support_fraction(weight, dom);
}

inline double pcvs(const FunctionalDataset& data, const WeightSpec& weight, const WorkingGrid& grid, Eigen::Index M,
                   double lambda1, double lambda2, CvMode mode = CvMode::Fast, const FitOptions& opts = {}) {
  detail::as_step_or_throw(weight);
  CvObjective obj(data, grid, mode, opts, std::max<Eigen::Index>(M, 1));
  return pcvs(obj, weight, M, lambda1, lambda2);
}

// ---------------------------------------------------------------------------
// Dyadic step search

namespace detail {

struct UnitInterval {
  double lo, hi, level;  // level is a density on [0, 1]
};

inline StepWeight to_step(const std::vector<UnitInterval>& iv, const Domain& dom) {
  StepWeight w;
  const double L = dom.length();
  w.breaks.push_back(dom.a);
  for (std::size_t i = 0; i < iv.size(); ++i) {
    const double level = iv[i].level / L;
    if (!w.levels.empty() && w.levels.back() == level) {
      w.breaks.back() = (i + 1 == iv.size()) ? dom.b : dom.a + L * iv[i].hi;
      continue;
    }
    w.levels.push_back(level);
    w.breaks.push_back((i + 1 == iv.size()) ? dom.b : dom.a + L * iv[i].hi);
  }
  return w;
}

inline void renormalize(std::vector<UnitInterval>& iv) {
  double mass = 0.0;
  for (const auto& x : iv) mass += x.level * (x.hi - x.lo);
  if (!(mass > 0.0)) throw InvariantError("step weight lost all its mass");
  for (auto& x : iv) x.level /= mass;
}

}  // namespace detail

inline SelectionResult dyadic_search(CvObjective& obj, const PcvsConfig& config) {
  if (config.candidate_levels.empty()) throw ConfigError("dyadic search needs candidate levels");
  if (config.K_max < 0) throw ConfigError("K_max must be nonnegative");
  const Domain& dom = obj.grid().domain;
  if (!dom.is_bounded()) throw ConfigError("step weights need a bounded domain");

  auto objective = [&](const std::vector<detail::UnitInterval>& iv) {
    return pcvs(obj, WeightSpec{detail::to_step(iv, dom)}, config.M, config.lambda1, config.lambda2);
  };

  SelectionResult res;
  res.M = config.M;
  res.lambda1 = config.lambda1;
  res.lambda2 = config.lambda2;

  std::vector<detail::UnitInterval> state{{0.0, 1.0, 1.0}};
  double best = objective(state);
  res.trace.push_back({detail::to_step(state, dom), best, true});

  for (int k = 1; k <= config.K_max; ++k) {
    std::vector<detail::UnitInterval> split;
    for (const auto& x : state) {
      const double mid = 0.5 * (x.lo + x.hi);
      split.push_back({x.lo, mid, x.level});
      split.push_back({mid, x.hi, x.level});
    }
    bool improved = false;
    for (std::size_t p = 0; p < split.size(); p += 2) {
      const double parent = 0.5 * (split[p].level + split[p + 1].level);
      std::optional<std::vector<detail::UnitInterval>> pick;
      double pick_score = 0.0, pick_dist = 0.0;
      std::size_t pick_entry = 0;
      for (double c : config.candidate_levels) {
        auto cand = split;
        cand[p].level = c * parent;
        cand[p + 1].level = 2.0 * parent - cand[p].level;
        if (cand[p + 1].level < 0.0) {
          cand[p + 1].level = 0.0;
          detail::renormalize(cand);
        }
        const double s = objective(cand);
        res.trace.push_back({detail::to_step(cand, dom), s, false});
        const double dist = std::abs(c - 1.0);
        if (!pick || s < pick_score || (s == pick_score && dist < pick_dist)) {
          pick = std::move(cand);
          pick_score = s;
          pick_dist = dist;
          pick_entry = res.trace.size() - 1;
        }
      }
      if (pick_score < best) {
        split = std::move(*pick);
        best = pick_score;
        res.trace[pick_entry].accepted = true;
        improved = true;
      }
    }
    if (!improved) break;
    state = std::move(split);
  }

  res.weight = detail::to_step(state, dom);
  res.score = best;
  res.loocvs = obj.loocvs(res.weight, config.M);
  return res;
}

inline SelectionResult dyadic_search(const FunctionalDataset& data, const WorkingGrid& grid, const PcvsConfig& config,
                                     CvMode mode = CvMode::Fast, const FitOptions& opts = {}) {
  CvObjective obj(data, grid, mode, opts, std::max<Eigen::Index>(config.M, 1));
  return dyadic_search(obj, config);
}

struct TuneOptions {
  std::vector<double> lambda1s{0.0, 0.5, 1.0};
  std::vector<double> lambda2s{0.0, 0.5, 1.0};
  int K_max = 3;
  std::vector<double> candidate_levels{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
};

/// Joint choice of (M, lambda1, lambda2): one dyadic search per combination,
/// winner by unpenalized LOOCVS (earlier combination on ties).
inline SelectionResult tune_step(CvObjective& obj, Eigen::Index m_cap, const TuneOptions& opts = {}) {
  if (m_cap < 1) throw ParameterError("m_cap must be at least 1");
  if (opts.lambda1s.empty() || opts.lambda2s.empty()) throw ConfigError("penalty grids must be nonempty");
  std::optional<SelectionResult> best;
  for (Eigen::Index M = 1; M <= m_cap; ++M)
    for (double l1 : opts.lambda1s)
      for (double l2 : opts.lambda2s) {
        PcvsConfig cfg;
        cfg.M = M;
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        cfg.K_max = opts.K_max;
        cfg.candidate_levels = opts.candidate_levels;
        SelectionResult r = dyadic_search(obj, cfg);
        if (!best || r.loocvs < best->loocvs) best = std::move(r);
      }
  return *best;
}

inline SelectionResult tune_step(const FunctionalDataset& data, const WorkingGrid& grid, Eigen::Index m_cap,
                                 CvMode mode = CvMode::Fast, const TuneOptions& opts = {},
                                 const FitOptions& fit_opts = {}) {
  CvObjective obj(data, grid, mode, fit_opts, m_cap);
  return tune_step(obj, m_cap, opts);
}

/// M_Leb: the number of components explaining 95% of the variance under
/// Lebesgue measure. Used as the cap for the step search.
inline Eigen::Index lebesgue_m_cap(CvObjective& obj, double threshold = 0.95) {
  return std::max<Eigen::Index>(1, obj.fve_count(UniformWeight{}, threshold));
}

// ---------------------------------------------------------------------------
// Parametric search

enum class ParametricFamily { Exponential, HalfNormal };

inline std::string to_string(ParametricFamily f) {
  return f == ParametricFamily::Exponential ? "exponential" : "halfnormal";
}

inline WeightSpec make_parametric(ParametricFamily f, double param, double origin = 0.0) {
  WeightSpec w = f == ParametricFamily::Exponential ? WeightSpec{ExponentialWeight{param, origin}}
                                                    : WeightSpec{HalfNormalWeight{param, origin}};
  validate(w);
  return w;
}

/// r * 2^j for j = -4..4, where r = 1 / mean(observation time - origin).
inline std::vector<double> default_parametric_grid(const FunctionalDataset& data) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : data.samples)
    for (double t : s.times) {
      sum += t - data.domain.a;
      ++count;
    }
  if (count == 0 || !(sum > 0.0)) throw InsufficientDataError("cannot centre the parameter grid: no positive times");
  const double r = static_cast<double>(count) / sum;
  std::vector<double> out;
  for (int j = -4; j <= 4; ++j) out.push_back(r * std::ldexp(1.0, j));
  return out;
}

using GridBuilder = std::function<WorkingGrid(const WeightSpec&)>;

/// Default builder for unbounded data: equispaced up to the density's 0.999
/// quantile, capped at the last observed time.
inline GridBuilder default_grid_builder(const FunctionalDataset& data, Eigen::Index size = 101) {
  double t_max = data.domain.a;
  for (const auto& s : data.samples) t_max = std::max(t_max, s.times.back());
  const Domain dom = data.domain;
  return [dom, size, t_max](const WeightSpec& w) {
    GridOptions go;
    go.upper_cap = t_max;
    return build_grid(dom, size, w, go);
  };
}

inline SelectionResult parametric_search(const FunctionalDataset& data, const GridBuilder& grid_builder,
                                         ParametricFamily family, const std::vector<double>& param_grid,
                                         const std::vector<Eigen::Index>& m_candidates = {},
                                         CvMode mode = CvMode::Fast, FitOptions opts = {}) {
  if (param_grid.empty()) throw ConfigError("parameter grid must be nonempty");
  if (data.domain.is_bounded()) throw ConfigError("parametric weights need an unbounded domain");
  const auto& y = require_responses(data);
  // Grids differ per parameter, but the mean bandwidth depends only on X.
  if (!opts.smoothing.mean_bandwidth) opts.smoothing.mean_bandwidth = select_mean_bandwidth(data);

  std::vector<double> params = param_grid;
  std::sort(params.begin(), params.end());
  SelectionResult res;
  bool have = false;
  double best_cve = 0.0;
  for (double p : params) {
    const WeightSpec w = make_parametric(family, p, data.domain.a);
    CvObjective obj(data, grid_builder(w), mode, opts);
    std::vector<Eigen::Index> cands = m_candidates;
    if (cands.empty())
      for (Eigen::Index k = 1; k <= std::max<Eigen::Index>(1, obj.fve_count(w)); ++k) cands.push_back(k);
    std::sort(cands.begin(), cands.end());
    double p_best = 0.0;
    Eigen::Index p_M = cands.front();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const double v = obj.cve(w, cands[c]);
      if (c == 0 || v < p_best) {
        p_best = v;
        p_M = cands[c];
      }
    }
    res.trace.push_back({w, p_best, false});
    if (!have || p_best < best_cve) {
      have = true;
      best_cve = p_best;
      res.weight = w;
      res.M = p_M;
      res.parameter = p;
    }
  }
  for (auto& e : res.trace)
    if (detail::weight_key(e.weight) == detail::weight_key(res.weight)) e.accepted = true;
  res.score = best_cve;
  const double sst = total_sum_of_squares(y);
  res.loocvs = sst > 0.0 ? best_cve * static_cast<double>(data.size()) / sst : 0.0;
  return res;
}

}  // namespace wfda
