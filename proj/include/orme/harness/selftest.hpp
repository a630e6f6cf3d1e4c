#pragma once

// Fast invariant checks that the CLI can run on any machine in a few seconds.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "orme/harness/experiment.hpp"
#include "orme/stability.hpp"

namespace orme {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline SelfCheck check_filter_invariants() {
  ExperimentConfig cfg;
  cfg.n = 1000, cfg.T = 8, cfg.adversary = "mean_shift";
  const SampleStream s = make_trial_stream(cfg, 0);
  FilterOptions opts = filter_options(cfg);
  opts.keep_history = true;
  OnlineFilterEstimator est(opts);
  double worst_cov = 0.0;
  bool monotone = true;
  for (std::size_t t = 1; t <= s.T(); ++t) {
    est.observe_block(t, RevealedView(s, t));
    worst_cov = std::max(worst_cov, est.state().cov_norm());
    const auto& h = est.state().history();
    if (h.size() > 1 && ((h.back() - h[h.size() - 2]).array() > 0.0).any()) monotone = false;
  }
  const bool ok = monotone && worst_cov <= 1.0 + opts.lambda + 1e-9;
  return {"filter weights monotone and covariance certified", ok,
          "max cov norm " + format_number(worst_cov) + ", bound " + format_number(1.0 + opts.lambda)};
}

inline SelfCheck check_potential_monotone() {
  ExperimentConfig cfg;
  cfg.epsilon = 0.05, cfg.T = 6, cfg.n = 64 * 50, cfg.generator = "binary_product", cfg.adversary = "median_attack";
  const SampleStream s = make_trial_stream(cfg, 0);
  BinaryProductEstimator est(0.5, cfg.epsilon, Rng(7));
  replay(s, est);
  const auto& phi = est.core().potentials();
  bool ok = true;
  for (std::size_t k = 1; k < phi.size(); ++k) ok = ok && phi[k] >= phi[k - 1] - 1e-12;
  return {"binary potential non-decreasing", ok, "final potential " + format_number(phi.back())};
}

inline SelfCheck check_erf_round_trip() {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = -4.0 + 8.0 * i / 999.0;
    worst = std::max(worst, std::abs(normal_cdf_inv(normal_cdf(u)) - u));
  }
  return {"erf round trip", worst <= 1e-10, "max error " + format_number(worst)};
}

inline SelfCheck check_stability_example() {
  Matrix S(4, 1);
  S << -1, -1, 1, 1;
  const auto r = check_stability_exact(S, Vector::Zero(1), 0.25);
  return {"stability worked example", std::abs(r.delta_required - 1.0 / 3.0) <= 1e-12,
          "delta " + format_number(r.delta_required)};
}

// Reads one block ahead; every attempt must be refused.
class PeekingEstimator final : public OnlineEstimator {
 public:
  std::string name() const override { return "peeking"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    mu_ = view.block(t + 1).colwise().mean().transpose();
  }
  Vector emit_estimate(std::size_t) override { return mu_; }

 private:
  Vector mu_;
};

inline SelfCheck check_online_discipline() {
  ExperimentConfig cfg;
  cfg.n = 50, cfg.T = 3;
  const SampleStream s = make_trial_stream(cfg, 0);
  PeekingEstimator est;
  try {
    replay(s, est);
  } catch (const OnlineDisciplineError& e) {
    return {"future-block reads refused", true, e.what()};
  }
  return {"future-block reads refused", false, "peek was not detected"};
}

inline SelfCheck check_determinism() {
  ExperimentConfig cfg;
  cfg.n = 200, cfg.T = 4, cfg.trials = 2, cfg.adversary = "mean_shift";
  cfg.estimators = {"online_filter", "naive_filter"};
  const std::string a = report_csv(run_experiment(cfg, 1));
  const std::string b = report_csv(run_experiment(cfg, 2));
  return {"reports identical across runs and worker counts", a == b, std::to_string(a.size()) + " bytes"};
}

}  // namespace detail

inline std::vector<SelfCheck> run_selftest() {
  std::vector<std::function<SelfCheck()>> checks{detail::check_filter_invariants, detail::check_potential_monotone,
                                                 detail::check_erf_round_trip,    detail::check_stability_example,
                                                 detail::check_online_discipline, detail::check_determinism};
  std::vector<SelfCheck> out;
  for (auto& c : checks) {
    try {
      out.push_back(c());
    } catch (const std::exception& e) {
      out.push_back({"(check threw)", false, e.what()});
    }
  }
  return out;
}

}  // namespace orme
