#pragma once

// Scaling benchmark: final l2 error over a T grid, with least-squares fits of
// log error against log T and against log log T.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "orme/harness/experiment.hpp"

namespace orme {

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double sse = 0.0;
};

// Ordinary least squares y = a + b x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_line needs at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  if (!(sxx > 0.0)) throw ConfigError("fit_line needs at least two distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) f.sse += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
  return f;
}

struct EstimatorScaling {
  std::string estimator;
  std::vector<std::size_t> T;
  std::vector<double> mean_error;               // mean over trials of the final l2 error
  std::vector<std::vector<double>> errors;      // [grid index][trial]
  LineFit log_t;                                // log err ~ log T
  LineFit loglog_t;                             // log err ~ log log T
  std::string winner;                           // "log_T" or "log_log_T", by SSE
  double slope_mean = 0.0;                      // per-trial log-log slopes
  double slope_ci_low = 0.0, slope_ci_high = 0.0;  // 95% Student-t interval
  double ratio_last_first = 0.0;                // mean_error.back() / mean_error.front()
};

struct BenchResult {
  ExperimentConfig config;
  std::vector<EstimatorScaling> estimators;
  std::vector<ExperimentReport> reports;  // one per grid point
};

inline EstimatorScaling fit_scaling(const std::string& name, const std::vector<std::size_t>& grid,
                                    const std::vector<std::vector<double>>& errors) {
  EstimatorScaling s;
  s.estimator = name;
  s.T = grid;
  s.errors = errors;
  std::vector<double> x1, x2, y;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double m = 0.0;
    for (double e : errors[g]) {
      if (!(e > 0.0)) throw AssumptionViolation("bench: zero error at T=" + std::to_string(grid[g]) + " for " + name);
      m += e;
      x1.push_back(std::log(static_cast<double>(grid[g])));
      x2.push_back(std::log(std::log(static_cast<double>(grid[g]))));
      y.push_back(std::log(e));
    }
    s.mean_error.push_back(m / static_cast<double>(errors[g].size()));
  }
  s.log_t = fit_line(x1, y);
  s.loglog_t = fit_line(x2, y);
  s.winner = s.log_t.sse <= s.loglog_t.sse ? "log_T" : "log_log_T";
  s.ratio_last_first = s.mean_error.back() / s.mean_error.front();

  const std::size_t trials = errors.front().size();
  std::vector<double> slopes;
  for (std::size_t k = 0; k < trials; ++k) {
    std::vector<double> xs, ys;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      xs.push_back(std::log(static_cast<double>(grid[g])));
      ys.push_back(std::log(errors[g][k]));
    }
    slopes.push_back(fit_line(xs, ys).slope);
  }
  double mean = 0.0;
  for (double v : slopes) mean += v;
  mean /= static_cast<double>(slopes.size());
  s.slope_mean = mean;
  s.slope_ci_low = s.slope_ci_high = mean;
  if (slopes.size() > 1) {
    double var = 0.0;
    for (double v : slopes) var += (v - mean) * (v - mean);
    var /= static_cast<double>(slopes.size() - 1);
    boost::math::students_t dist(static_cast<double>(slopes.size() - 1));
    const double half = boost::math::quantile(boost::math::complement(dist, 0.025)) *
                        std::sqrt(var / static_cast<double>(slopes.size()));
    s.slope_ci_low = mean - half;
    s.slope_ci_high = mean + half;
  }
  return s;
}

inline BenchResult run_bench(const ExperimentConfig& base, std::size_t workers = 1) {
  base.validate();
  std::vector<std::size_t> grid = base.T_grid;
  if (grid.size() < 3) throw ConfigError("T_grid: a scaling benchmark needs at least 3 grid points");
  std::sort(grid.begin(), grid.end());
  if (std::adjacent_find(grid.begin(), grid.end()) != grid.end()) throw ConfigError("T_grid: duplicate entries");
  if (grid.front() < 2) throw ConfigError("T_grid: entries must be at least 2 for the log log T fit");

  BenchResult out;
  out.config = base;
  std::map<std::string, std::vector<std::vector<double>>> errors;
  for (std::size_t T : grid) {
    ExperimentConfig cfg = base;
    cfg.T = T;
    cfg.n = cfg.effective_n(T);
    cfg.n_pow2_factor.reset();
    ExperimentReport rep = run_experiment(cfg, workers);
    for (const auto& name : cfg.estimators) {
      std::vector<double> finals(cfg.trials);
      for (const auto& r : rep.records)
        if (r.estimator == name && r.t == T) finals[std::stoul(r.trial)] = r.cum_err;
      errors[name].push_back(std::move(finals));
    }
    out.reports.push_back(std::move(rep));
  }
  for (const auto& name : base.estimators) out.estimators.push_back(fit_scaling(name, grid, errors[name]));
  return out;
}

inline json bench_json(const BenchResult& b) {
  json j;
  j["config"] = config_to_json(b.config);
  j["estimators"] = json::array();
  for (const auto& s : b.estimators) {
    json e;
    e["estimator"] = s.estimator;
    e["T"] = s.T;
    e["mean_error"] = s.mean_error;
    e["errors"] = s.errors;
    e["fit_log_T"] = {{"intercept", s.log_t.intercept}, {"slope", s.log_t.slope}, {"sse", s.log_t.sse}};
    e["fit_log_log_T"] = {{"intercept", s.loglog_t.intercept}, {"slope", s.loglog_t.slope}, {"sse", s.loglog_t.sse}};
    e["winner"] = s.winner;
    e["slope"] = {{"mean", s.slope_mean}, {"ci95_low", s.slope_ci_low}, {"ci95_high", s.slope_ci_high}};
    e["ratio_last_first"] = s.ratio_last_first;
    j["estimators"].push_back(e);
  }
  return j;
}

inline std::vector<Series> bench_series(const BenchResult& b) {
  std::vector<Series> out;
  for (const auto& s : b.estimators) {
    Series series{s.estimator, {}};
    for (std::size_t g = 0; g < s.T.size(); ++g) series.points.emplace_back(static_cast<double>(s.T[g]), s.mean_error[g]);
    out.push_back(std::move(series));
  }
  return out;
}

// Named benchmark setups. Each can still be overridden by file or environment.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"filter-vs-naive", "binary-t-independence", "gaussian"};
  return names;
}

inline json preset_json(const std::string& name) {
  if (name == "filter-vs-naive")
    return json::parse(R"({"epsilon": 0.1, "n": 2000, "generator": "gaussian",
      "adversary": {"name": "mean_shift", "params": {"magnitude": 10}},
      "estimators": ["online_filter", "naive_filter"], "T": 16, "T_grid": [16, 64, 256], "trials": 20})");
  if (name == "binary-t-independence")
    return json::parse(R"({"epsilon": 0.05, "gamma": 0.5, "n_pow2_factor": 200, "generator": "binary_product",
      "adversary": "median_attack", "estimators": ["binary_product"], "T": 6, "T_grid": [6, 8, 10], "trials": 5})");
  if (name == "gaussian")
    return json::parse(R"({"epsilon": 0.05, "n_pow2_factor": 500, "generator": "gaussian",
      "adversary": {"name": "mean_shift", "params": {"magnitude": 10}},
      "estimators": ["gaussian", "sample_mean"], "T": 4, "T_grid": [4, 6, 8], "trials": 10})");
  throw ConfigError("preset: unknown preset '" + name + "'");
}

}  // namespace orme
