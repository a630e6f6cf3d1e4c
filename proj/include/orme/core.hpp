#pragma once

// Shared data model: corrupted sample streams revealed block by block, the
// online estimator interface, and replay of a stream through an estimator.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orme/rng.hpp"

namespace orme {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A configuration or argument that violates a documented precondition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A modelling assumption failed at runtime (e.g. filter weight collapse).
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An estimator tried to read a block that has not been revealed yet.
class OnlineDisciplineError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::size_t corruption_budget(double epsilon, std::size_t n) {
  return static_cast<std::size_t>(std::floor(epsilon * static_cast<double>(n) + 1e-9));
}

// n samples of dimension M = T*d, revealed in T column blocks of width d.
// The corruption mask, tags and true mean are instrumentation: estimators
// never receive them through the online interface.
class SampleStream {
 public:
  SampleStream(Matrix data, std::size_t T, std::size_t d, std::vector<bool> corrupted_mask,
               Vector true_mean, double epsilon, std::vector<int> tags = {})
      : data_(std::move(data)),
        T_(T),
        d_(d),
        mask_(std::move(corrupted_mask)),
        true_mean_(std::move(true_mean)),
        epsilon_(epsilon),
        tags_(std::move(tags)) {
    if (T_ == 0 || d_ == 0) throw ConfigError("stream needs T >= 1 and d >= 1");
    if (static_cast<std::size_t>(data_.cols()) != T_ * d_)
      throw ConfigError("stream data must have exactly T*d columns");
    if (mask_.size() != static_cast<std::size_t>(data_.rows()))
      throw ConfigError("corrupted_mask length must equal the row count");
    if (static_cast<std::size_t>(true_mean_.size()) != T_ * d_)
      throw ConfigError("true_mean must have T*d entries");
    if (tags_.empty()) {
      tags_.resize(mask_.size());
      for (std::size_t i = 0; i < mask_.size(); ++i) tags_[i] = mask_[i] ? 0 : -1;
    }
    if (tags_.size() != mask_.size()) throw ConfigError("tags length must equal the row count");
    const auto bad = static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
    if (bad > corruption_budget(epsilon_, mask_.size()))
      throw ConfigError("corrupted rows exceed floor(epsilon*n)");
  }

  std::size_t n() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t T() const { return T_; }
  std::size_t d() const { return d_; }
  std::size_t M() const { return T_ * d_; }
  double epsilon() const { return epsilon_; }

  // Columns [(t-1)d, td), t is 1-based.
  auto block(std::size_t t) const {
    if (t == 0 || t > T_) throw std::out_of_range("block index out of range");
    return data_.middleCols(static_cast<Eigen::Index>((t - 1) * d_), static_cast<Eigen::Index>(d_));
  }
  auto true_block_mean(std::size_t t) const {
    return true_mean_.segment(static_cast<Eigen::Index>((t - 1) * d_), static_cast<Eigen::Index>(d_));
  }

  const Matrix& data() const { return data_; }
  const std::vector<bool>& corrupted_mask() const { return mask_; }
  // -1 clean, 0 corrupted, k >= 1 adversary-specific group label.
  const std::vector<int>& tags() const { return tags_; }
  const Vector& true_mean() const { return true_mean_; }
  std::size_t corrupted_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
  }

 private:
  Matrix data_;
  std::size_t T_;
  std::size_t d_;
  std::vector<bool> mask_;
  Vector true_mean_;
  double epsilon_;
  std::vector<int> tags_;
};

// The estimator-facing window onto a stream: only blocks 1..round are readable.
class RevealedView {
 public:
  RevealedView(const SampleStream& stream, std::size_t round) : stream_(&stream), round_(round) {}

  std::size_t n() const { return stream_->n(); }
  std::size_t d() const { return stream_->d(); }
  std::size_t T() const { return stream_->T(); }
  std::size_t round() const { return round_; }

  auto block(std::size_t t) const {
    if (t == 0 || t > round_)
      throw OnlineDisciplineError("read of block " + std::to_string(t) + " during round " +
                                  std::to_string(round_));
    return stream_->block(t);
  }
  // Concatenated blocks 1..t.
  auto prefix(std::size_t t) const {
    if (t > round_)
      throw OnlineDisciplineError("read of prefix " + std::to_string(t) + " during round " +
                                  std::to_string(round_));
    return stream_->data().leftCols(static_cast<Eigen::Index>(t * stream_->d()));
  }

 private:
  const SampleStream* stream_;
  std::size_t round_;
};

// Hidden ground truth handed to estimators that record potential-style
// diagnostics. Estimator logic must not read it.
struct Instrumentation {
  const std::vector<bool>* corrupted_mask = nullptr;
  const Vector* true_mean = nullptr;
};

struct RoundDiagnostics {
  std::optional<double> cov_norm;
  std::optional<double> total_weight;
  std::optional<double> potential;
  std::size_t filter_iterations = 0;
};

struct EstimateTrace {
  std::vector<Vector> estimates;
  std::vector<RoundDiagnostics> diagnostics;
  std::vector<double> ms;  // wall time per round

  std::size_t rounds() const { return estimates.size(); }
};

class OnlineEstimator {
 public:
  virtual ~OnlineEstimator() = default;
  virtual std::string name() const = 0;
  // Called once per round with the view advanced to round t.
  virtual void observe_block(std::size_t t, const RevealedView& view) = 0;
  virtual Vector emit_estimate(std::size_t t) = 0;
  virtual RoundDiagnostics diagnostics(std::size_t /*t*/) const { return {}; }
  virtual void attach_instrumentation(const Instrumentation& /*inst*/) {}
};

// Rows to overwrite and their new values (|rows| x M).
struct Replacement {
  std::vector<std::size_t> rows;
  Matrix values;
  std::vector<int> tags;  // optional, one per row, >= 0
};

class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual std::string name() const = 0;
  // Sees the whole clean matrix up front (strong contamination).
  virtual Replacement corrupt(const Matrix& clean, const Vector& true_mean, double epsilon,
                              std::size_t T, std::size_t d, Rng& rng) const = 0;
};

// Injects the adversary's rows, then permutes all rows with rng so corrupted
// rows are not positionally identifiable. The mask travels with the permutation.
inline SampleStream make_stream(const Matrix& clean, const Vector& true_mean, std::size_t T,
                                std::size_t d, const Adversary& adversary, double epsilon, Rng rng) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw ConfigError("epsilon must lie in [0, 1/2)");
  const auto n = static_cast<std::size_t>(clean.rows());
  if (static_cast<std::size_t>(clean.cols()) != T * d) throw ConfigError("clean matrix must have T*d columns");

  Rng adv_rng = rng.split("adversary");
  Replacement rep = adversary.corrupt(clean, true_mean, epsilon, T, d, adv_rng);
  if (rep.rows.size() > corruption_budget(epsilon, n))
    throw ConfigError("adversary " + adversary.name() + " replaced more than floor(epsilon*n) rows");
  if (static_cast<std::size_t>(rep.values.rows()) != rep.rows.size() ||
      (!rep.rows.empty() && static_cast<std::size_t>(rep.values.cols()) != T * d))
    throw ConfigError("adversary " + adversary.name() + " returned a replacement of the wrong shape");
  if (!rep.tags.empty() && rep.tags.size() != rep.rows.size())
    throw ConfigError("adversary tags must match replaced rows");

  Matrix data = clean;
  std::vector<bool> mask(n, false);
  std::vector<int> tags(n, -1);
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    const std::size_t r = rep.rows[k];
    if (r >= n) throw ConfigError("adversary row index out of range");
    if (mask[r]) throw ConfigError("adversary replaced a row twice");
    mask[r] = true;
    tags[r] = rep.tags.empty() ? 0 : rep.tags[k];
    data.row(static_cast<Eigen::Index>(r)) = rep.values.row(static_cast<Eigen::Index>(k));
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng perm_rng = rng.split("permutation");
  std::shuffle(perm.begin(), perm.end(), perm_rng);

  Matrix shuffled(static_cast<Eigen::Index>(n), data.cols());
  std::vector<bool> smask(n);
  std::vector<int> stags(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(perm[i]));
    smask[i] = mask[perm[i]];
    stags[i] = tags[perm[i]];
  }
  return SampleStream(std::move(shuffled), T, d, std::move(smask), true_mean, epsilon, std::move(stags));
}

struct ReplayOptions {
  bool instrument = true;
};

// Feeds blocks in order; mu_t is collected right after block t is observed.
inline EstimateTrace replay(const SampleStream& stream, OnlineEstimator& estimator,
                            const ReplayOptions& opts = {}) {
  if (opts.instrument) {
    estimator.attach_instrumentation({&stream.corrupted_mask(), &stream.true_mean()});
  }
  EstimateTrace trace;
  trace.estimates.reserve(stream.T());
  for (std::size_t t = 1; t <= stream.T(); ++t) {
    const auto start = std::chrono::steady_clock::now();
    RevealedView view(stream, t);
    estimator.observe_block(t, view);
    Vector mu = estimator.emit_estimate(t);
    if (static_cast<std::size_t>(mu.size()) != stream.d())
      throw std::logic_error("estimator " + estimator.name() + " emitted an estimate of the wrong size");
    trace.estimates.push_back(std::move(mu));
    trace.diagnostics.push_back(estimator.diagnostics(t));
    const auto stop = std::chrono::steady_clock::now();
    trace.ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return trace;
}

// Squared error of each round's estimate.
inline std::vector<double> round_errors_sq(const EstimateTrace& trace, const Vector& true_mean) {
  if (trace.estimates.empty()) return {};
  const auto d = static_cast<std::size_t>(trace.estimates.front().size());
  if (static_cast<std::size_t>(true_mean.size()) != d * trace.estimates.size())
    throw ConfigError("true mean length does not match trace shape");
  std::vector<double> out;
  out.reserve(trace.estimates.size());
  for (std::size_t t = 0; t < trace.estimates.size(); ++t) {
    if (static_cast<std::size_t>(trace.estimates[t].size()) != d) throw ConfigError("ragged trace");
    const Vector diff = trace.estimates[t] - true_mean.segment(static_cast<Eigen::Index>(t * d), static_cast<Eigen::Index>(d));
    out.push_back(diff.squaredNorm());
  }
  return out;
}

// sqrt(sum_t ||mu_t - mu*_t||^2) over the round-concatenated estimate.
inline double l2_error(const EstimateTrace& trace, const Vector& true_mean) {
  const auto errs = round_errors_sq(trace, true_mean);
  return std::sqrt(std::accumulate(errs.begin(), errs.end(), 0.0));
}

// Plain per-round sample mean; the non-robust baseline.
class SampleMeanEstimator final : public OnlineEstimator {
 public:
  std::string name() const override { return "sample_mean"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    mu_ = view.block(t).colwise().mean().transpose();
  }
  Vector emit_estimate(std::size_t) override { return mu_; }

 private:
  Vector mu_;
};

// Tail profile description as it appears in configuration. The numerical
// profile is built from it by the nonparametric module.
struct TailSpec {
  std::string name = "gaussian";  // gaussian | bounded_k | subgaussian | table
  double k = 4.0;
  std::vector<std::pair<double, double>> table;  // (q, F(q)) for name == "table"
};

struct ExperimentConfig {
  double epsilon = 0.1;
  std::size_t T = 16;
  std::size_t d = 1;
  std::size_t n = 1000;
  std::optional<double> lambda;  // explicit filter threshold; else kappa * delta^2 / epsilon
  double kappa = 10.0;
  std::optional<double> delta;   // else derived from the tail profile
  double gamma = 0.5;
  double tau = 0.05;
  TailSpec tail;
  std::string generator = "gaussian";
  std::map<std::string, double> generator_params;
  std::string adversary = "identity";
  std::map<std::string, double> adversary_params;
  std::vector<std::string> estimators{"online_filter"};
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  std::string beta_rule = "weighted";  // weighted | literal
  std::size_t directions = 8;
  double calibration_constant = 4.0;    // reserve = c * eps^-2 * log(T / tau)
  std::optional<double> n_pow2_factor;  // if set, n = 2^T * factor
  std::vector<std::size_t> T_grid;      // scaling benchmarks
  bool record_timing = false;           // fill the ms column (breaks byte-identical reports)

  std::size_t effective_n(std::size_t t_rounds) const {
    if (!n_pow2_factor) return n;
    return static_cast<std::size_t>(std::ldexp(*n_pow2_factor, static_cast<int>(t_rounds)));
  }

  // Stability parameter implied by the tail profile.
  double effective_delta() const {
    if (delta) return *delta;
    if (tail.name == "bounded_k") return std::sqrt(epsilon);
    return epsilon * std::sqrt(std::log(1.0 / epsilon));
  }
  double effective_lambda() const { return lambda ? *lambda : kappa * std::pow(effective_delta(), 2) / epsilon; }

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon: must satisfy 0 < epsilon < 1/2");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma: must lie in (0, 1)");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau: must lie in (0, 1)");
    if (lambda && !(*lambda > 0.0)) throw ConfigError("lambda: must be positive");
    if (!(kappa > 0.0)) throw ConfigError("kappa: must be positive");
    if (delta && !(*delta > 0.0)) throw ConfigError("delta: must be positive");
    if (T == 0) throw ConfigError("T: must be at least 1");
    if (d == 0) throw ConfigError("d: must be at least 1");
    if (n < 2) throw ConfigError("n: must be at least 2");
    if (trials == 0) throw ConfigError("trials: must be at least 1");
    if (estimators.empty()) throw ConfigError("estimators: at least one estimator is required");
    if (beta_rule != "weighted" && beta_rule != "literal") throw ConfigError("beta_rule: must be weighted or literal");
    if (directions == 0) throw ConfigError("directions: must be at least 1");
    if (!(calibration_constant > 0.0)) throw ConfigError("calibration_constant: must be positive");
    if (n_pow2_factor && !(*n_pow2_factor > 0.0)) throw ConfigError("n_pow2_factor: must be positive");
    if (n_pow2_factor && T > 30) throw ConfigError("n_pow2_factor: T must be at most 30");
    for (auto g : T_grid)
      if (g == 0) throw ConfigError("T_grid: entries must be at least 1");
  }
};

}  // namespace orme
