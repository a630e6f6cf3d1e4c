#pragma once

// Trial orchestration: builds streams and estimators from a config, replays
// every (trial, estimator) cell on a worker pool, and collects records.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "orme/binary.hpp"
#include "orme/block.hpp"
#include "orme/core.hpp"
#include "orme/filter.hpp"
#include "orme/harness/config.hpp"
#include "orme/harness/report.hpp"
#include "orme/harness/svg.hpp"
#include "orme/nonparam.hpp"
#include "orme/threat.hpp"

namespace orme {

inline const std::vector<std::string>& known_estimators() {
  static const std::vector<std::string> names{"online_filter", "naive_filter", "sample_mean", "binary_product",
                                              "gaussian",      "nonparam",     "projection"};
  return names;
}

inline FilterOptions filter_options(const ExperimentConfig& cfg) {
  FilterOptions o;
  o.lambda = cfg.effective_lambda();
  o.epsilon = cfg.epsilon;
  o.rule = parse_beta_rule(cfg.beta_rule);
  return o;
}

inline CalibrationOptions calibration_options(const ExperimentConfig& cfg) {
  return {cfg.calibration_constant, cfg.tau};
}

inline std::unique_ptr<OnlineEstimator> make_estimator(const std::string& name, const ExperimentConfig& cfg, Rng rng) {
  if (name == "online_filter") return std::make_unique<OnlineFilterEstimator>(filter_options(cfg));
  if (name == "naive_filter") return std::make_unique<NaiveFilterEstimator>(filter_options(cfg));
  if (name == "sample_mean") return std::make_unique<SampleMeanEstimator>();
  if (name == "binary_product") return std::make_unique<BinaryProductEstimator>(cfg.gamma, cfg.epsilon, rng);
  if (name == "gaussian") return std::make_unique<GaussianEstimator>(cfg.epsilon, rng, calibration_options(cfg));
  if (name == "nonparam")
    return std::make_unique<NonparamEstimator>(TailProfile::from_spec(cfg.tail, cfg.epsilon), cfg.epsilon, rng,
                                               calibration_options(cfg));
  if (name == "projection") {
    ProjectionOptions po;
    po.calibration = calibration_options(cfg);
    return std::make_unique<ProjectionEstimator>(TailProfile::from_spec(cfg.tail, cfg.epsilon), cfg.epsilon,
                                                 sample_directions(cfg.d, cfg.directions, rng.split("directions")),
                                                 rng, po);
  }
  throw ConfigError("estimators: unknown estimator '" + name + "'");
}

inline Rng trial_rng(const ExperimentConfig& cfg, std::size_t trial) { return Rng(cfg.seed).split("trial", trial); }

// Clean draw plus contamination for one trial at the config's T and n.
inline SampleStream make_trial_stream(const ExperimentConfig& cfg, std::size_t trial) {
  const Rng rng = trial_rng(cfg, trial);
  const auto gen = make_generator(cfg.generator, cfg.generator_params);
  const auto adv = make_adversary(cfg.adversary, cfg.adversary_params);
  CleanData clean = gen->generate(cfg.effective_n(cfg.T), cfg.T, cfg.d, rng.split("clean"));
  return make_stream(clean.X, clean.true_mean, cfg.T, cfg.d, *adv, cfg.epsilon, rng.split("stream"));
}

inline std::vector<Record> trace_records(const EstimateTrace& trace, const Vector& true_mean, std::size_t trial,
                                         const std::string& estimator, bool timing) {
  const auto errs = round_errors_sq(trace, true_mean);
  std::vector<Record> out;
  double acc = 0.0;
  for (std::size_t t = 0; t < errs.size(); ++t) {
    acc += errs[t];
    Record r;
    r.trial = std::to_string(trial);
    r.t = t + 1;
    r.estimator = estimator;
    r.err_sq = errs[t];
    r.cum_err = std::sqrt(acc);
    r.total_weight = trace.diagnostics[t].total_weight;
    r.potential = trace.diagnostics[t].potential;
    r.cov_norm = trace.diagnostics[t].cov_norm;
    if (timing) r.ms = trace.ms[t];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<Record> run_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const SampleStream stream = make_trial_stream(cfg, trial);
  const Rng rng = trial_rng(cfg, trial);
  std::vector<Record> out;
  for (const auto& name : cfg.estimators) {
    auto est = make_estimator(name, cfg, rng.split("estimator").split(name));
    const EstimateTrace trace = replay(stream, *est);
    auto recs = trace_records(trace, stream.true_mean(), trial, name, cfg.record_timing);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads. The exception of
// the lowest failing index is rethrown, so failures are reproducible too.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  for (const auto& name : cfg.estimators)
    if (std::find(known_estimators().begin(), known_estimators().end(), name) == known_estimators().end())
      throw ConfigError("estimators: unknown estimator '" + name + "'");
  std::vector<std::vector<Record>> per_trial(cfg.trials);
  parallel_for(cfg.trials, workers, [&](std::size_t k) { per_trial[k] = run_trial(cfg, k); });

  ExperimentReport rep;
  rep.config = cfg;
  rep.estimators = cfg.estimators;
  for (auto& v : per_trial) rep.records.insert(rep.records.end(), v.begin(), v.end());
  rep.aggregates = aggregate(rep.records, rep.estimators);
  return rep;
}

// Mean cumulative error against round index, one series per estimator.
inline std::vector<Series> curve_series(const ExperimentReport& rep) {
  std::vector<Series> out;
  for (const auto& name : rep.estimators) {
    Series s{name, {}};
    for (const auto& r : rep.aggregates)
      if (r.estimator == name && r.trial == "mean" && r.cum_err > 0.0)
        s.points.emplace_back(static_cast<double>(r.t), r.cum_err);
    if (!s.points.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace orme
