#pragma once

// Command-line front end: fit, predict, select-measure, simulate, score.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wfda/errors.hpp"
#include "wfda/io.hpp"
#include "wfda/log.hpp"
#include "wfda/measure_select.hpp"
#include "wfda/simgen.hpp"
#include "wfda/wflm.hpp"

namespace wfda {

/// Bad flag values; reported like a CLI usage error.
struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

namespace cli {

inline CvMode parse_cv(const std::string& s) {
  if (s == "fast") return CvMode::Fast;
  if (s == "exact") return CvMode::Exact;
  throw UsageError("--cv must be 'fast' or 'exact'");
}

template <class F>
auto usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

/// Domain for a dataset: explicit flag, else implied by the weight family,
/// else the observed time range.
inline Domain infer_domain(const FunctionalDataset& data, const WeightSpec& w, const std::string& flag) {
  if (!flag.empty()) return usage([&] { return parse_domain_arg(flag); });
  if (is_parametric(w)) return Domain::unbounded_right(std::get_if<ExponentialWeight>(&w)
                                                           ? std::get<ExponentialWeight>(w).origin
                                                           : std::get<HalfNormalWeight>(w).origin);
  if (const auto* s = std::get_if<StepWeight>(&w)) return Domain::bounded(s->breaks.front(), s->breaks.back());
  return data.domain;
}

/// Working grid: the shared observation times when every subject has the same
/// ones, otherwise an equispaced grid of `size` points (101 when size is 0).
inline WorkingGrid choose_grid(const FunctionalDataset& data, const WeightSpec& w, Eigen::Index size) {
  const auto& t0 = data.samples.front().times;
  const bool shared = t0.size() >= 2 && std::all_of(data.samples.begin(), data.samples.end(),
                                                    [&t0](const FunctionalSample& s) { return s.times == t0; });
  if (size == 0 && shared && data.domain.is_bounded()) return grid_from_points(data.domain, as_vector(t0));
  const Eigen::Index g = size == 0 ? 101 : size;
  if (data.domain.is_bounded()) return build_grid(data.domain, g, w);
  return default_grid_builder(data, g)(w);
}

inline void with_output(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  fn(f);
  if (!f) throw Error("failed writing '" + path + "'");
}

inline json read_json_file(const std::string& path) {
  auto in = open_input(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::vector<Method> parse_methods(const std::string& list, Scenario sc) {
  std::vector<Method> out;
  if (list.empty()) {
    if (sc == Scenario::Unbounded) return {{MethodKind::FlmUniform}, {MethodKind::WflmExp}, {MethodKind::WflmHalfNormal}};
    return {{MethodKind::FlmUniform}, {MethodKind::WflmStep}};
  }
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    Method m;
    if (item == "flm" || item == "flm-uniform") {
      m.kind = MethodKind::FlmUniform;
    } else if (item == "wflm-step") {
      m.kind = MethodKind::WflmStep;
    } else if (item == "wflm-exp") {
      m.kind = MethodKind::WflmExp;
    } else if (item == "wflm-halfnorm") {
      m.kind = MethodKind::WflmHalfNormal;
    } else if (item.rfind("fixed:", 0) == 0) {
      m.kind = MethodKind::WflmFixed;
      m.weight = usage([&] { return parse_weight_arg(item.substr(6)); });
    } else {
      throw UsageError("unknown method '" + item + "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::string fmt(double v) { return detail::fmt17(v); }

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weighted functional PCA and functional linear models over selected measures", "wfda"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");

  // fit
  struct {
    std::string data, responses, weight = "uniform", cv = "fast", out, domain;
    int M = -1;
    int grid_size = 0;
  } fit_o;
  auto* fit_c = app.add_subcommand("fit", "Fit a weighted functional linear model");
  fit_c->add_option("--data", fit_o.data, "Curves CSV (subject_id,time,value)")->required();
  fit_c->add_option("--responses", fit_o.responses, "Responses CSV (subject_id,y)")->required();
  fit_c->add_option("--weight", fit_o.weight, "uniform | step:FILE.json | exp:RATE | halfnorm:SCALE");
  fit_c->add_option("--M", fit_o.M, "Number of components (default: chosen by leave-one-out CV)");
  fit_c->add_option("--grid-size", fit_o.grid_size, "Working grid size (0: shared times or 101)");
  fit_c->add_option("--cv", fit_o.cv, "fast | exact");
  fit_c->add_option("--domain", fit_o.domain, "bounded:a,b | unbounded:a");
  fit_c->add_option("--out", fit_o.out, "Model JSON output path");

  // predict
  struct {
    std::string model, data, out;
  } pred_o;
  auto* pred_c = app.add_subcommand("predict", "Predict responses from a fitted model");
  pred_c->add_option("--model", pred_o.model, "Model JSON")->required();
  pred_c->add_option("--data", pred_o.data, "Curves CSV")->required();
  pred_c->add_option("--out", pred_o.out, "Predictions CSV output path");

  // select-measure
  struct {
    std::string data, responses, domain, family, cv = "fast", out;
    int grid_size = 0;
    int m_cap = 0;
    int k_max = 3;
    std::vector<double> params;
  } sel_o;
  auto* sel_c = app.add_subcommand("select-measure", "Choose a weight function by cross-validation");
  sel_c->add_option("--data", sel_o.data, "Curves CSV")->required();
  sel_c->add_option("--responses", sel_o.responses, "Responses CSV")->required();
  sel_c->add_option("--domain", sel_o.domain, "bounded:a,b | unbounded:a");
  sel_c->add_option("--family", sel_o.family, "step | exp | halfnorm")->required();
  sel_c->add_option("--grid-size", sel_o.grid_size, "Working grid size (0: shared times or 101)");
  sel_c->add_option("--cv", sel_o.cv, "fast | exact");
  sel_c->add_option("--m-cap", sel_o.m_cap, "Largest M for the step search (default: 95% FVE under Lebesgue)");
  sel_c->add_option("--k-max", sel_o.k_max, "Maximum number of dyadic splits");
  sel_c->add_option("--params", sel_o.params, "Parameter grid for exp/halfnorm")->delimiter(',');
  sel_c->add_option("--out", sel_o.out, "Selection JSON output path");

  // simulate
  struct {
    std::string scenario = "1", N = "50", methods, out, summary;
    int n = 200, runs = 10, test_size = 100;
    unsigned threads = 0;
    double sigma = -1.0;
    std::uint64_t seed = 1;
  } sim_o;
  auto* sim_c = app.add_subcommand("simulate", "Monte Carlo prediction study");
  sim_c->add_option("--scenario", sim_o.scenario, "1 | 2 | unbounded");
  sim_c->add_option("--n", sim_o.n, "Training sample size");
  sim_c->add_option("--N", sim_o.N, "Measurements per curve, or 'random' (5..10, unbounded only)");
  sim_c->add_option("--runs", sim_o.runs, "Monte Carlo runs");
  sim_c->add_option("--sigma", sim_o.sigma, "Measurement error sd (default 0.5; sqrt(0.5) unbounded)");
  sim_c->add_option("--seed", sim_o.seed, "Master seed");
  sim_c->add_option("--methods", sim_o.methods, "Comma list: flm,wflm-step,wflm-exp,wflm-halfnorm,fixed:WEIGHT");
  sim_c->add_option("--test-size", sim_o.test_size, "Test curves per run");
  sim_c->add_option("--threads", sim_o.threads, "Worker threads (0: all cores)");
  sim_c->add_option("--out", sim_o.out, "Per-run results CSV");
  sim_c->add_option("--summary", sim_o.summary, "Summary JSON output path");

  // score
  struct {
    std::string model, data, responses, cv = "fast";
  } score_o;
  auto* score_c = app.add_subcommand("score", "Leave-one-out CV score of a saved model's weight and M on data");
  score_c->add_option("--model", score_o.model, "Model JSON")->required();
  score_c->add_option("--data", score_o.data, "Curves CSV")->required();
  score_c->add_option("--responses", score_o.responses, "Responses CSV")->required();
  score_c->add_option("--cv", score_o.cv, "fast | exact");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*fit_c) {
      const WeightSpec w = cli::usage([&] { return parse_weight_arg(fit_o.weight); });
      const CvMode mode = cli::parse_cv(fit_o.cv);
      FunctionalDataset data = parse_dataset(fit_o.data, fit_o.responses);
      data.domain = cli::infer_domain(data, w, fit_o.domain);
      cli::usage([&] { check_compatible(w, data.domain); return 0; });
      validate(data);
      const WorkingGrid grid = cli::choose_grid(data, w, fit_o.grid_size);
      Eigen::Index M = fit_o.M;
      std::vector<std::pair<Eigen::Index, double>> trace;
      if (M < 0) {
        const Eigensystem probe = wfpca_fit(data, w, grid, grid.size());
        const MSelection sel = select_M(data, w, grid, default_m_candidates(probe), mode);
        M = sel.M;
        trace = sel.trace;
      }
      const WflmModel model = fit(data, w, grid, M);
      const json mj = to_json(model);
      cli::with_output(fit_o.out, out, [&](std::ostream& os) { os << mj.dump(2) << '\n'; });
      if (!fit_o.out.empty() && fit_o.out != "-") {
        if (as_json) {
          json s{{"M", model.M}, {"mu_Y", model.mu_Y}, {"eigenvalues", detail::to_std(model.eig.eigenvalues)},
                 {"weight", to_json(w)}, {"out", fit_o.out}};
          if (!trace.empty()) {
            json t = json::array();
            for (auto& [m, v] : trace) t.push_back({{"M", m}, {"cve", v}});
            s["cv_trace"] = t;
          }
          out << s.dump() << '\n';
        } else {
          out << "fitted " << describe(w) << " model with M = " << model.M << " on " << data.size()
              << " subjects; written to " << fit_o.out << '\n';
        }
      }
      return 0;
    }

    if (*pred_c) {
      const WflmModel model = model_from_json(cli::read_json_file(pred_o.model));
      FunctionalDataset data = parse_dataset(pred_o.data);
      data.domain = model.eig.grid().domain;
      const Vector yhat = predict(model, data, model.eig.grid());
      cli::with_output(pred_o.out, out, [&](std::ostream& os) {
        if (as_json && (pred_o.out.empty() || pred_o.out == "-")) {
          json j = json::array();
          for (std::size_t i = 0; i < data.size(); ++i)
            j.push_back({{"subject_id", data.samples[i].subject_id}, {"prediction", yhat[static_cast<Eigen::Index>(i)]}});
          os << j.dump() << '\n';
          return;
        }
        os << "subject_id,prediction\n";
        for (std::size_t i = 0; i < data.size(); ++i)
          os << data.samples[i].subject_id << ',' << cli::fmt(yhat[static_cast<Eigen::Index>(i)]) << '\n';
      });
      if (as_json && !pred_o.out.empty() && pred_o.out != "-")
        out << json{{"predictions", data.size()}, {"out", pred_o.out}}.dump() << '\n';
      return 0;
    }

    if (*sel_c) {
      const CvMode mode = cli::parse_cv(sel_o.cv);
      FunctionalDataset data = parse_dataset(sel_o.data, sel_o.responses);
      SelectionResult res;
      if (sel_o.family == "step") {
        data.domain = cli::infer_domain(data, UniformWeight{}, sel_o.domain);
        if (!data.domain.is_bounded()) throw UsageError("step weights need a bounded domain");
        validate(data);
        const WorkingGrid grid = cli::choose_grid(data, UniformWeight{}, sel_o.grid_size);
        CvObjective obj(data, grid, mode);
        const Eigen::Index cap = sel_o.m_cap > 0 ? sel_o.m_cap : lebesgue_m_cap(obj);
        TuneOptions t;
        t.K_max = sel_o.k_max;
        res = tune_step(obj, cap, t);
      } else if (sel_o.family == "exp" || sel_o.family == "halfnorm") {
        const auto fam = sel_o.family == "exp" ? ParametricFamily::Exponential : ParametricFamily::HalfNormal;
        data.domain = sel_o.domain.empty() ? Domain::unbounded_right(std::min(0.0, data.domain.a))
                                           : cli::usage([&] { return parse_domain_arg(sel_o.domain); });
        if (data.domain.is_bounded()) throw UsageError("exp/halfnorm weights need an unbounded domain");
        validate(data);
        const std::vector<double> params = sel_o.params.empty() ? default_parametric_grid(data) : sel_o.params;
        res = parametric_search(data, default_grid_builder(data, sel_o.grid_size ? sel_o.grid_size : 101), fam,
                                params, {}, mode);
      } else {
        throw UsageError("--family must be step, exp or halfnorm");
      }
      const json j = to_json(res);
      cli::with_output(sel_o.out, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
      if (!sel_o.out.empty() && sel_o.out != "-") {
        if (as_json)
          out << json{{"weight", j["weight"]}, {"M", res.M}, {"score", res.score}, {"loocvs", res.loocvs}}.dump() << '\n';
        else
          out << "selected " << describe(res.weight) << " with M = " << res.M << ", LOOCVS = " << res.loocvs << '\n';
      }
      return 0;
    }

    if (*sim_c) {
      SimConfig c;
      if (sim_o.scenario == "1")
        c.scenario = Scenario::S1;
      else if (sim_o.scenario == "2")
        c.scenario = Scenario::S2;
      else if (sim_o.scenario == "unbounded")
        c.scenario = Scenario::Unbounded;
      else
        throw UsageError("--scenario must be 1, 2 or unbounded");
      c.n = sim_o.n;
      if (sim_o.N == "random") {
        c.N = std::nullopt;
      } else {
        try {
          std::size_t used = 0;
          c.N = std::stoi(sim_o.N, &used);
          if (used != sim_o.N.size()) throw std::invalid_argument("N");
        } catch (const std::logic_error&) {
          throw UsageError("--N must be an integer or 'random'");
        }
      }
      if (sim_o.sigma >= 0.0) c.noise_sd = sim_o.sigma;
      c.seed = sim_o.seed;
      c.runs = sim_o.runs;
      c.test_size = sim_o.test_size;
      const auto methods = cli::parse_methods(sim_o.methods, c.scenario);
      cli::usage([&] { validate(c); check_methods(c, methods); return 0; });
      HarnessOptions ho;
      ho.threads = sim_o.threads;
      const SimResult r = run_experiment(c, methods, ho);
      if (!sim_o.out.empty()) cli::with_output(sim_o.out, out, [&](std::ostream& os) { write_sim_csv(os, r); });
      const json summary = to_json(r);
      if (!sim_o.summary.empty()) cli::with_output(sim_o.summary, out, [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
      if (as_json) {
        out << summary.dump() << '\n';
      } else {
        for (const auto& m : r.methods)
          out << m.method << ": AMSPE " << m.amspe << " (sd " << m.sd << "), median " << m.median << '\n';
      }
      return 0;
    }

    if (*score_c) {
      const CvMode mode = cli::parse_cv(score_o.cv);
      const WflmModel model = model_from_json(cli::read_json_file(score_o.model));
      if (model.eig.composite) throw ConfigError("cannot rescore a composite-measure model");
      FunctionalDataset data = parse_dataset(score_o.data, score_o.responses);
      data.domain = model.eig.grid().domain;
      validate(data);
      const double s = loocvs(data, model.eig.weight, model.eig.grid(), model.M, mode);
      if (as_json)
        out << json{{"loocvs", s}, {"M", model.M}, {"weight", to_json(model.eig.weight)}}.dump() << '\n';
      else
        out << "LOOCVS " << cli::fmt(s) << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace wfda
