#pragma once

// Online weighted filter and its per-round (weights reset) baseline.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "orme/core.hpp"
#include "orme/linalg.hpp"

namespace orme {

enum class BetaRule {
  Weighted,  // sum of w_i * rho_i against 2 eps ||w||_1 (1 + lambda)
  Literal,   // sum of rho_i against 2 eps
};

inline BetaRule parse_beta_rule(const std::string& s) {
  if (s == "weighted") return BetaRule::Weighted;
  if (s == "literal") return BetaRule::Literal;
  throw ConfigError("beta_rule: expected weighted or literal, got '" + s + "'");
}

struct FilterOptions {
  double lambda = 1.0;
  double epsilon = 0.1;
  BetaRule rule = BetaRule::Weighted;
  bool keep_history = false;  // store the weight vector after every round
};

// Scales each weight by (1 - rho_i / max rho). The argmax weight becomes 0.
inline std::vector<double> wfilter_step(const std::vector<double>& scores, const std::vector<double>& weights) {
  if (scores.size() != weights.size()) throw ConfigError("scores and weights differ in length");
  if (scores.empty()) throw ConfigError("wfilter_step on empty input");
  double rho_max = 0.0;
  for (double r : scores) {
    if (r < 0.0) throw ConfigError("scores must be nonnegative");
    rho_max = std::max(rho_max, r);
  }
  if (!(rho_max > 0.0)) throw ConfigError("wfilter_step needs a positive score");
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = scores[i] == rho_max ? 0.0 : (1.0 - scores[i] / rho_max) * weights[i];
  }
  return out;
}

// Smallest beta whose prefix mass exceeds the threshold; scores sorted
// descending. Returns the full length if the threshold is never exceeded.
inline std::size_t select_filter_set(const std::vector<double>& sorted_scores, const std::vector<double>& weights,
                                     double epsilon, BetaRule rule = BetaRule::Literal, double lambda = 0.0) {
  if (sorted_scores.size() != weights.size()) throw ConfigError("scores and weights differ in length");
  double threshold = 2.0 * epsilon;
  if (rule == BetaRule::Weighted) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    threshold *= total * (1.0 + lambda);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < sorted_scores.size(); ++i) {
    acc += rule == BetaRule::Weighted ? weights[i] * sorted_scores[i] : sorted_scores[i];
    if (acc > threshold) return i + 1;
  }
  return sorted_scores.size();
}

// Carried state of the online filter: weights plus all blocks revealed so far.
class FilterState {
 public:
  FilterState(std::size_t n, std::size_t capacity_cols, FilterOptions opts)
      : opts_(opts), w_(Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n))) {
    if (!(opts_.lambda > 0.0)) throw ConfigError("lambda: must be positive");
    if (!(opts_.epsilon > 0.0 && opts_.epsilon < 0.5)) throw ConfigError("epsilon: must satisfy 0 < epsilon < 1/2");
    revealed_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(capacity_cols));
  }

  template <class Derived>
  Vector round(const Eigen::MatrixBase<Derived>& block) {
    const auto n = w_.size();
    const auto d = block.cols();
    if (block.rows() != n) throw ConfigError("block row count does not match the filter state");
    if (cols_ + d > revealed_.cols()) revealed_.conservativeResize(Eigen::NoChange, cols_ + d);
    revealed_.middleCols(cols_, d) = block;
    cols_ += d;
    ++t_;

    const auto X = revealed_.leftCols(cols_);
    const double bound = 1.0 + opts_.lambda;
    iterations_ = 0;
    WeightedMoments mom = weighted_cov(w_, X);
    Eigenpair top = dominant_eigenpair(mom.cov, false);
    std::vector<Eigen::Index> order;
    std::vector<double> rho;
    while (top.value > bound) {
      if (++iterations_ > static_cast<std::size_t>(n))
        throw AssumptionViolation("filter exceeded n inner iterations in one round");
      top = dominant_eigenpair(mom.cov, true);
      const Vector proj = (X.rowwise() - mom.mean.transpose()) * top.vector;

      order.clear();
      for (Eigen::Index i = 0; i < n; ++i)
        if (w_(i) > 0.0) order.push_back(i);
      rho.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) rho[static_cast<std::size_t>(i)] = proj(i) * proj(i);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return rho[static_cast<std::size_t>(a)] > rho[static_cast<std::size_t>(b)];
      });
      std::vector<double> sorted_rho(order.size()), sorted_w(order.size());
      for (std::size_t k = 0; k < order.size(); ++k) {
        sorted_rho[k] = rho[static_cast<std::size_t>(order[k])];
        sorted_w[k] = w_(order[k]);
      }
      const std::size_t beta = select_filter_set(sorted_rho, sorted_w, opts_.epsilon, opts_.rule, opts_.lambda);
      sorted_rho.resize(beta);
      sorted_w.resize(beta);
      const auto updated = wfilter_step(sorted_rho, sorted_w);
      for (std::size_t k = 0; k < beta; ++k) w_(order[k]) = updated[k];

      if (w_.sum() < 0.5)
        throw AssumptionViolation("filter total weight fell below 1/2 at round " + std::to_string(t_));
      mom = weighted_cov(w_, X);
      top = dominant_eigenpair(mom.cov, false);
    }
    cov_norm_ = top.value;
    if (opts_.keep_history) history_.push_back(w_);
    return mom.mean.tail(d);
  }

  const Vector& weights() const { return w_; }
  const std::vector<Vector>& history() const { return history_; }
  double cov_norm() const { return cov_norm_; }
  std::size_t iterations() const { return iterations_; }
  std::size_t round_index() const { return t_; }
  auto revealed() const { return revealed_.leftCols(cols_); }
  const FilterOptions& options() const { return opts_; }

 private:
  FilterOptions opts_;
  Vector w_;
  Matrix revealed_;
  Eigen::Index cols_ = 0;
  std::size_t t_ = 0;
  std::size_t iterations_ = 0;
  double cov_norm_ = 0.0;
  std::vector<Vector> history_;
};

class OnlineFilterEstimator final : public OnlineEstimator {
 public:
  explicit OnlineFilterEstimator(FilterOptions opts) : opts_(opts) {}

  std::string name() const override { return "online_filter"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    if (!state_) state_.emplace(view.n(), view.T() * view.d(), opts_);
    mu_ = state_->round(view.block(t));
  }
  Vector emit_estimate(std::size_t) override { return mu_; }
  RoundDiagnostics diagnostics(std::size_t) const override {
    RoundDiagnostics d;
    d.cov_norm = state_->cov_norm();
    d.total_weight = state_->weights().sum();
    d.filter_iterations = state_->iterations();
    return d;
  }
  const FilterState& state() const { return *state_; }

 private:
  FilterOptions opts_;
  std::optional<FilterState> state_;
  Vector mu_;
};

// Same machinery on each block alone with weights reset to 1/n every round.
class NaiveFilterEstimator final : public OnlineEstimator {
 public:
  explicit NaiveFilterEstimator(FilterOptions opts) : opts_(opts) { opts_.keep_history = false; }

  std::string name() const override { return "naive_filter"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    FilterState state(view.n(), view.d(), opts_);
    mu_ = state.round(view.block(t));
    diag_ = {};
    diag_.cov_norm = state.cov_norm();
    diag_.total_weight = state.weights().sum();
    diag_.filter_iterations = state.iterations();
  }
  Vector emit_estimate(std::size_t) override { return mu_; }
  RoundDiagnostics diagnostics(std::size_t) const override { return diag_; }

 private:
  FilterOptions opts_;
  Vector mu_;
  RoundDiagnostics diag_;
};

inline EstimateTrace run_online_filter(const SampleStream& stream, FilterOptions opts) {
  OnlineFilterEstimator est(opts);
  return replay(stream, est);
}

inline EstimateTrace run_naive_per_round_filter(const SampleStream& stream, FilterOptions opts) {
  NaiveFilterEstimator est(opts);
  return replay(stream, est);
}

// Single-shot filter over a full matrix; returns final weights and mean.
struct OfflineFilterResult {
  Vector weights;
  Vector mean;
  double cov_norm = 0.0;
  std::size_t iterations = 0;
};

inline OfflineFilterResult offline_filter(const Matrix& X, FilterOptions opts) {
  FilterState state(static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(X.cols()), opts);
  OfflineFilterResult r;
  r.mean = state.round(X);
  r.weights = state.weights();
  r.cov_norm = state.cov_norm();
  r.iterations = state.iterations();
  return r;
}

}  // namespace orme
