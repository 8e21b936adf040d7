#pragma once

// Seeded generators for the two bounded designs and the unbounded design, and
// the Monte Carlo harness that scores fitted methods by mean squared
// prediction error on noise-free test responses.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "wfda/errors.hpp"
#include "wfda/expbasis.hpp"
#include "wfda/fpca.hpp"
#include "wfda/log.hpp"
#include "wfda/measure_select.hpp"
#include "wfda/numerics.hpp"
#include "wfda/wflm.hpp"

namespace wfda {

enum class Scenario { S1, S2, Unbounded };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::S1: return "1";
    case Scenario::S2: return "2";
    default: return "unbounded";
  }
}

struct SimConfig {
  Scenario scenario = Scenario::S1;
  int n = 200;
  std::optional<int> N = 50;        // unset: N_i uniform on {5, ..., 10}
  std::optional<double> noise_sd;   // default 0.5, or sqrt(0.5) for the unbounded design
  double response_noise_sd = 0.5;
  std::uint64_t seed = 1;
  int runs = 100;
  int test_size = 100;

  double measurement_sd() const {
    if (noise_sd) return *noise_sd;
    return scenario == Scenario::Unbounded ? std::sqrt(0.5) : 0.5;
  }
};

inline void validate(const SimConfig& c) {
  if (c.n < 1) throw ConfigError("n must be positive");
  if (c.runs < 1) throw ConfigError("runs must be positive");
  if (c.test_size < 1) throw ConfigError("test size must be positive");
  if (c.N && *c.N < 1) throw ConfigError("N must be positive");
  if (!c.N && c.scenario != Scenario::Unbounded) throw ConfigError("bounded designs need a fixed N");
  if (c.scenario != Scenario::Unbounded && c.N && *c.N < 2) throw ConfigError("bounded designs need N >= 2");
  if (c.noise_sd && !(*c.noise_sd >= 0.0)) throw ConfigError("noise sd must be nonnegative");
  if (!(c.response_noise_sd >= 0.0)) throw ConfigError("response noise sd must be nonnegative");
}

// ---------------------------------------------------------------------------
// Randomness

/// splitmix64 finalizer applied to seed + (q + 1) * golden gamma.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t q) {
  std::uint64_t z = seed + (q + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// mt19937_64 stream; uniforms from the top 53 bits, other laws by inverse CDF.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * uniform()); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Uniform integer in [lo, hi].
  int integer(int lo, int hi) {
    const int span = hi - lo + 1;
    return lo + std::min(span - 1, static_cast<int>(uniform() * span));
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Designs

struct SimData {
  FunctionalDataset train;
  FunctionalDataset test;  // noise-free responses
  Matrix train_scores;
  Matrix test_scores;
};

namespace sim {

inline double s1_mean(double t) { return 2.0 * t - 5.0 * std::cos(2.0 * M_PI * t); }

/// sqrt(2) cos(k pi t) for odd k, sqrt(2) sin((k - 1) pi t) for even k.
inline double s1_psi(int k, double t) {
  return k % 2 == 1 ? std::sqrt(2.0) * std::cos(k * M_PI * t) : std::sqrt(2.0) * std::sin((k - 1) * M_PI * t);
}

inline double s1_rho(int k) { return 10.0 * std::pow(0.5, 10 - k); }
inline double s1_beta(int k) { return 5.0 * std::pow(0.5, k - 1); }
inline double s2_rho(int k) { return 10.0 * std::pow(0.5, k - 1); }
inline double s2_beta_fn(double t) { return 2.0 + 3.0 * t - 3.0 * std::sin(M_PI * t); }

/// The generating weight, taken as given (it integrates to 1/4).
inline StepWeight s2_weight() { return StepWeight{{0.0, 0.25, 0.5, 0.75, 1.0}, {0.0, 1.0 / 6, 1.0 / 3, 0.5}}; }

inline double unb_mean(double t) { return 5.0 - 3.0 * std::cos(M_PI * t / 5.0) + 2.0 * t; }
inline double unb_rho(int k) { return 10.0 * std::pow(0.5, k - 1); }
inline double unb_beta(int k) { return 10.0 / (k * k * k); }

inline std::string subject_name(char prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05d", prefix, i + 1);
  return buf;
}

}  // namespace sim

/// int_0^1 beta(t) x(t) w(t) dt for the second bounded design. Trapezoid on
/// each constant piece of w separately, about grid_size nodes in total, so the
/// jumps of w never fall inside a panel.
inline double s2_response_integral(const std::function<double(double)>& x, int grid_size = 1001) {
  if (grid_size < 2) throw ParameterError("grid size must be at least 2");
  const StepWeight w = sim::s2_weight();
  double acc = 0.0;
  for (std::size_t l = 0; l < w.levels.size(); ++l) {
    if (w.levels[l] == 0.0) continue;
    const double lo = w.breaks[l], hi = w.breaks[l + 1];
    const auto panels = std::max<Eigen::Index>(1, std::lround((grid_size - 1) * (hi - lo)));
    const Vector t = equispaced(lo, hi, panels + 1);
    const Vector q = trapezoid_weights(t);
    double piece = 0.0;
    for (Eigen::Index g = 0; g < t.size(); ++g) piece += q[g] * sim::s2_beta_fn(t[g]) * x(t[g]);
    acc += w.levels[l] * piece;
  }
  return acc;
}

namespace detail {

template <class TimesFn, class CurveFn, class ResponseFn>
void draw_block(Rng& rng, const SimConfig& c, int count, char prefix, bool noisy_response, int K,
                const std::function<double(int)>& rho, TimesFn times_fn, CurveFn curve, ResponseFn response,
                FunctionalDataset& out, Matrix& scores) {
  const double eps_sd = c.measurement_sd();
  scores.resize(count, K);
  std::vector<double> y;
  for (int i = 0; i < count; ++i) {
    FunctionalSample s;
    s.subject_id = sim::subject_name(prefix, i);
    s.times = times_fn(rng);
    Vector xi(K);
    for (int k = 0; k < K; ++k) xi[k] = std::sqrt(rho(k + 1)) * rng.normal();
    scores.row(i) = xi.transpose();
    s.values.resize(s.times.size());
    for (std::size_t j = 0; j < s.times.size(); ++j) s.values[j] = curve(xi, s.times[j]) + eps_sd * rng.normal();
    double yi = response(xi);
    if (noisy_response) yi += c.response_noise_sd * rng.normal();
    y.push_back(yi);
    out.samples.push_back(std::move(s));
  }
  out.responses = std::move(y);
}

inline std::vector<double> regular_times(int N) {
  const Vector t = equispaced(0.0, 1.0, N);
  return std::vector<double>(t.data(), t.data() + t.size());
}

}  // namespace detail

inline SimData generate_s1(const SimConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng(seed);
  SimData d;
  d.train.domain = d.test.domain = Domain::bounded(0.0, 1.0);
  const auto times = detail::regular_times(*c.N);
  auto times_fn = [&times](Rng&) { return times; };
  auto curve = [](const Vector& xi, double t) {
    double x = sim::s1_mean(t);
    for (int k = 1; k <= 10; ++k) x += xi[k - 1] * sim::s1_psi(k, t);
    return x;
  };
  auto response = [](const Vector& xi) {
    double y = 0.0;
    for (int k = 1; k <= 10; ++k) y += sim::s1_beta(k) * xi[k - 1];
    return y;
  };
  detail::draw_block(rng, c, c.n, 's', true, 10, sim::s1_rho, times_fn, curve, response, d.train, d.train_scores);
  detail::draw_block(rng, c, c.test_size, 't', false, 10, sim::s1_rho, times_fn, curve, response, d.test,
                     d.test_scores);
  return d;
}

inline SimData generate_s2(const SimConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng(seed);
  SimData d;
  d.train.domain = d.test.domain = Domain::bounded(0.0, 1.0);
  const auto times = detail::regular_times(*c.N);
  auto times_fn = [&times](Rng&) { return times; };
  auto curve = [](const Vector& xi, double t) {
    double x = sim::s1_mean(t);
    for (int k = 1; k <= 10; ++k) x += xi[k - 1] * sim::s1_psi(k, t);
    return x;
  };
  auto response = [&curve](const Vector& xi) {
    return s2_response_integral([&](double t) { return curve(xi, t); }, 1001);
  };
  detail::draw_block(rng, c, c.n, 's', true, 10, sim::s2_rho, times_fn, curve, response, d.train, d.train_scores);
  detail::draw_block(rng, c, c.test_size, 't', false, 10, sim::s2_rho, times_fn, curve, response, d.test,
                     d.test_scores);
  return d;
}

inline SimData generate_unbounded(const SimConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng(seed);
  SimData d;
  d.train.domain = d.test.domain = Domain::unbounded_right(0.0);
  const ExpBasis basis(1.0, 9);
  auto times_fn = [&c](Rng& r) {
    const int N = c.N ? *c.N : r.integer(5, 10);
    std::vector<double> t(static_cast<std::size_t>(N));
    for (auto& v : t) v = r.exponential(0.5);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  };
  auto curve = [&basis](const Vector& xi, double t) {
    double x = sim::unb_mean(t);
    for (int k = 1; k <= 9; ++k) x += xi[k - 1] * evaluate_basis(basis, k, t);
    return x;
  };
  auto response = [](const Vector& xi) {
    double y = 0.0;
    for (int k = 1; k <= 9; ++k) y += sim::unb_beta(k) * xi[k - 1];
    return y;
  };
  detail::draw_block(rng, c, c.n, 's', true, 9, sim::unb_rho, times_fn, curve, response, d.train, d.train_scores);
  detail::draw_block(rng, c, c.test_size, 't', false, 9, sim::unb_rho, times_fn, curve, response, d.test,
                     d.test_scores);
  return d;
}

inline SimData generate(const SimConfig& c, std::uint64_t seed) {
  switch (c.scenario) {
    case Scenario::S1: return generate_s1(c, seed);
    case Scenario::S2: return generate_s2(c, seed);
    default: return generate_unbounded(c, seed);
  }
}

// ---------------------------------------------------------------------------
// Harness

enum class MethodKind { FlmUniform, WflmStep, WflmExp, WflmHalfNormal, WflmFixed };

struct Method {
  Method() = default;
  Method(MethodKind k) : kind(k) {}

  MethodKind kind = MethodKind::FlmUniform;
  std::optional<WeightSpec> weight;             // WflmFixed
  std::optional<std::vector<double>> lambda1s;  // WflmStep overrides
  std::optional<std::vector<double>> lambda2s;
  std::string label;                            // optional display name

  std::string name() const {
    if (!label.empty()) return label;
    switch (kind) {
      case MethodKind::FlmUniform: return "flm";
      case MethodKind::WflmStep: return "wflm-step";
      case MethodKind::WflmExp: return "wflm-exp";
      case MethodKind::WflmHalfNormal: return "wflm-halfnorm";
      default: return "wflm-fixed(" + (weight ? describe(*weight) : std::string("?")) + ")";
    }
  }
};

struct HarnessOptions {
  TuneOptions tune;
  Eigen::Index unbounded_grid_size = 101;
  double fve_threshold = 0.95;
  unsigned threads = 0;  // 0: hardware concurrency
  std::function<void(int)> on_run_done;
};

struct MethodSummary {
  std::string method;
  std::vector<double> mspe;
  double amspe = 0.0;
  double sd = 0.0;
  double median = 0.0;
};

struct SimResult {
  SimConfig config;
  std::vector<MethodSummary> methods;
};

inline double mspe(const Eigen::Ref<const Vector>& predicted, const Eigen::Ref<const Vector>& truth) {
  if (predicted.size() != truth.size() || predicted.size() == 0) throw ShapeError("prediction/truth length mismatch");
  return (predicted - truth).squaredNorm() / static_cast<double>(predicted.size());
}

inline MethodSummary summarize(std::string method, std::vector<double> values) {
  MethodSummary s;
  s.method = std::move(method);
  s.mspe = std::move(values);
  const double n = static_cast<double>(s.mspe.size());
  for (double v : s.mspe) s.amspe += v;
  s.amspe /= n;
  double ss = 0.0;
  for (double v : s.mspe) ss += (v - s.amspe) * (v - s.amspe);
  s.sd = s.mspe.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::vector<double> sorted = s.mspe;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  s.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  return s;
}

namespace detail {

inline Eigen::Index cv_select_M(CvObjective& obj, const WeightSpec& w, double fve_threshold) {
  const Eigen::Index top = std::max<Eigen::Index>(1, obj.fve_count(w, fve_threshold));
  Eigen::Index best_M = 1;
  double best = 0.0;
  for (Eigen::Index M = 1; M <= top; ++M) {
    const double v = obj.cve(w, M);
    if (M == 1 || v < best) {
      best = v;
      best_M = M;
    }
  }
  return best_M;
}

/// Lebesgue FLM for unbounded data works on [a, last training time]; test
/// observations past that point are dropped.
inline FunctionalDataset clip_to(const FunctionalDataset& data, const Domain& dom) {
  FunctionalDataset out = data;
  out.domain = dom;
  for (auto& s : out.samples) {
    FunctionalSample kept{s.subject_id, {}, {}};
    for (std::size_t j = 0; j < s.times.size(); ++j)
      if (dom.contains(s.times[j])) {
        kept.times.push_back(s.times[j]);
        kept.values.push_back(s.values[j]);
      }
    if (kept.times.empty()) {
      kept.times.push_back(dom.b);
      kept.values.push_back(s.values.front());
    }
    s = std::move(kept);
  }
  return out;
}

}  // namespace detail

/// Fits one method on the training data and returns test predictions.
inline Vector fit_and_predict(const Method& method, const FunctionalDataset& train, const FunctionalDataset& test,
                              const HarnessOptions& opts = {}) {
  ScopedWarningSilencer quiet;
  const Domain& dom = train.domain;
  const bool bounded = dom.is_bounded();

  // Bounded designs use the common observation grid when there is one.
  auto bounded_grid = [&](const FunctionalDataset& d) {
    const auto& t0 = d.samples.front().times;
    const WorkingGrid g = build_grid(d.domain, static_cast<Eigen::Index>(t0.size()), UniformWeight{});
    if (t0.size() >= 2 && is_dense_regular(d, g)) return g;
    return build_grid(d.domain, 101, UniformWeight{});
  };

  switch (method.kind) {
    case MethodKind::FlmUniform: {
      if (bounded) {
        const WorkingGrid grid = bounded_grid(train);
        CvObjective obj(train, grid);
        const Eigen::Index M = detail::cv_select_M(obj, UniformWeight{}, opts.fve_threshold);
        return predict(obj.fit(UniformWeight{}, M), test, grid);
      }
      double t_max = dom.a;
      for (const auto& s : train.samples) t_max = std::max(t_max, s.times.back());
      const Domain box = Domain::bounded(dom.a, t_max);
      FunctionalDataset tr = train;
      tr.domain = box;
      const WorkingGrid grid = build_grid(box, opts.unbounded_grid_size, UniformWeight{});
      CvObjective obj(tr, grid);
      const Eigen::Index M = detail::cv_select_M(obj, UniformWeight{}, opts.fve_threshold);
      return predict(obj.fit(UniformWeight{}, M), detail::clip_to(test, box), grid);
    }
    case MethodKind::WflmStep: {
      if (!bounded) throw ConfigError("step weights need a bounded domain");
      const WorkingGrid grid = bounded_grid(train);
      CvObjective obj(train, grid);
      TuneOptions tune = opts.tune;
      if (method.lambda1s) tune.lambda1s = *method.lambda1s;
      if (method.lambda2s) tune.lambda2s = *method.lambda2s;
      const SelectionResult sel = tune_step(obj, lebesgue_m_cap(obj, opts.fve_threshold), tune);
      return predict(obj.fit(sel.weight, sel.M), test, grid);
    }
    case MethodKind::WflmExp:
    case MethodKind::WflmHalfNormal: {
      if (bounded) throw ConfigError("parametric weights need an unbounded domain");
      const auto family =
          method.kind == MethodKind::WflmExp ? ParametricFamily::Exponential : ParametricFamily::HalfNormal;
      FitOptions fo;
      fo.smoothing.mean_bandwidth = select_mean_bandwidth(train);
      const GridBuilder builder = default_grid_builder(train, opts.unbounded_grid_size);
      const SelectionResult sel =
          parametric_search(train, builder, family, default_parametric_grid(train), {}, CvMode::Fast, fo);
      const WorkingGrid grid = builder(sel.weight);
      CvObjective obj(train, grid, CvMode::Fast, fo);
      return predict(obj.fit(sel.weight, sel.M), test, grid);
    }
    case MethodKind::WflmFixed: {
      if (!method.weight) throw ConfigError("fixed-weight method needs a weight");
      check_compatible(*method.weight, dom);
      const WorkingGrid grid =
          bounded ? bounded_grid(train) : default_grid_builder(train, opts.unbounded_grid_size)(*method.weight);
      CvObjective obj(train, grid);
      const Eigen::Index M = detail::cv_select_M(obj, *method.weight, opts.fve_threshold);
      return predict(obj.fit(*method.weight, M), test, grid);
    }
  }
  throw ConfigError("unknown method");
}

inline void check_methods(const SimConfig& config, const std::vector<Method>& methods) {
  if (methods.empty()) throw ConfigError("at least one method is required");
  const bool bounded = config.scenario != Scenario::Unbounded;
  for (const auto& m : methods) {
    if (bounded && (m.kind == MethodKind::WflmExp || m.kind == MethodKind::WflmHalfNormal))
      throw ConfigError(m.name() + " needs an unbounded domain");
    if (!bounded && m.kind == MethodKind::WflmStep) throw ConfigError(m.name() + " needs a bounded domain");
    if (m.kind == MethodKind::WflmFixed) {
      if (!m.weight) throw ConfigError("fixed-weight method needs a weight");
      check_compatible(*m.weight, bounded ? Domain::bounded(0.0, 1.0) : Domain::unbounded_right(0.0));
    }
  }
}

/// Q independent runs; run q draws from child_seed(seed, q). Runs may execute
/// on several threads, results do not depend on the thread count.
inline SimResult run_experiment(const SimConfig& config, const std::vector<Method>& methods,
                                const HarnessOptions& opts = {}) {
  validate(config);
  check_methods(config, methods);
  const auto Q = static_cast<std::size_t>(config.runs);
  std::vector<std::vector<double>> table(methods.size(), std::vector<double>(Q, 0.0));
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex, cb_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (std::size_t q = next++; q < Q; q = next++) {
      try {
        const SimData d = generate(config, child_seed(config.seed, q));
        const Vector truth = as_vector(*d.test.responses);
        for (std::size_t m = 0; m < methods.size(); ++m)
          table[m][q] = mspe(fit_and_predict(methods[m], d.train, d.test, opts), truth);
        if (opts.on_run_done) {
          std::lock_guard<std::mutex> lk(cb_mutex);
          opts.on_run_done(static_cast<int>(q));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!failure) failure = std::current_exception();
        next = Q;
      }
    }
  };

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(Q));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SimResult res;
  res.config = config;
  for (std::size_t m = 0; m < methods.size(); ++m) res.methods.push_back(summarize(methods[m].name(), table[m]));
  return res;
}

}  // namespace wfda
