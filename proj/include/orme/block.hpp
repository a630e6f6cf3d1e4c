#pragma once

// Block (T x d) estimation: random direction sets, correlated binary
// estimation over joint half-space labels, and minimax recovery of the block
// mean from its directional estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "orme/binary.hpp"
#include "orme/core.hpp"
#include "orme/linalg.hpp"
#include "orme/nonparam.hpp"

namespace orme {

// Rows are unit directions.
inline Matrix sample_directions(std::size_t d, std::size_t count, Rng rng) {
  if (d == 0) throw ConfigError("directions need d >= 1");
  if (count == 0) throw ConfigError("directions: count must be positive");
  Matrix V(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < V.rows(); ++r) {
    double norm = 0.0;
    do {
      for (Eigen::Index c = 0; c < V.cols(); ++c) V(r, c) = rng.normal();
      norm = V.row(r).norm();
    } while (norm < 1e-12);
    V.row(r) /= norm;
  }
  return V;
}

inline std::size_t default_direction_count(std::size_t d, std::size_t T, double tau, double c = 8.0) {
  return static_cast<std::size_t>(std::ceil(c * std::pow(2.0, static_cast<double>(d)) *
                                            std::log(static_cast<double>(T) / tau)));
}

enum class IndicatorMode {
  OneSided,  // 1{v.x > q} and 1{v.x < -q}
  Absolute,  // 1{|v.x| > q} for both signs
};

// labels[k][i] for direction k and sample i. upper selects the +q event.
inline std::vector<std::vector<std::uint8_t>> convert_indicators(const Matrix& projections, double q, bool upper,
                                                                 IndicatorMode mode = IndicatorMode::OneSided) {
  if (!(q > 0.0)) throw ConfigError("indicator threshold q must be positive");
  const auto n = static_cast<std::size_t>(projections.rows());
  const auto k = static_cast<std::size_t>(projections.cols());
  std::vector<std::vector<std::uint8_t>> out(k, std::vector<std::uint8_t>(n));
  for (std::size_t v = 0; v < k; ++v)
    for (std::size_t i = 0; i < n; ++i) {
      const double p = projections(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));
      if (mode == IndicatorMode::Absolute)
        out[v][i] = std::abs(p) > q;
      else
        out[v][i] = upper ? p > q : p < -q;
    }
  return out;
}

// log of |V|^(t (d + 1)), the half-space group-count bound at round t.
inline double log_group_bound(std::size_t num_directions, std::size_t t, std::size_t d) {
  return static_cast<double>(t * (d + 1)) * std::log(static_cast<double>(num_directions));
}

inline constexpr std::size_t kMaxBlockGroups = 1000000;

struct PatternHash {
  std::size_t operator()(const std::vector<std::uint64_t>& key) const noexcept {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL;
    for (auto w : key) h = mix64(h ^ w);
    return static_cast<std::size_t>(h);
  }
};

// Correlated binary estimation: one shared noise coin per sample, groups keyed
// by the joint label pattern across all directions.
class CorrelatedBinaryCore {
 public:
  CorrelatedBinaryCore(std::size_t n, std::size_t num_directions, double gamma, double epsilon, Rng noise_rng)
      : n_(n), k_(num_directions), gamma_(gamma), epsilon_(epsilon), rng_(noise_rng), group_of_(n, 0), sizes_{n} {
    check_unit_open(gamma_, "gamma");
    check_unit_open(epsilon_, "epsilon");
    if (k_ == 0) throw ConfigError("correlated binary estimation needs at least one direction");
  }

  void set_mask(const std::vector<bool>* mask) {
    mask_ = mask;
    if (mask_) {
      std::size_t bad = 0;
      for (bool b : *mask_) bad += b;
      corrupted_ = {bad};
      potentials_ = {potential(sizes_, corrupted_, gamma_, epsilon_)};
    }
  }

  // Returns per-direction estimates on the original scale.
  std::vector<double> step(std::vector<std::vector<std::uint8_t>> labels) {
    if (labels.size() != k_) throw ConfigError("label set count must equal the number of directions");
    for (const auto& l : labels)
      if (l.size() != n_) throw ConfigError("label vector length must equal n");
    ++t_;
    for (std::size_t i = 0; i < n_; ++i) {
      const double u = rng_.uniform();
      if (u < 0.25 * gamma_) {
        for (auto& l : labels) l[i] = 1;
      } else if (u < 0.5) {
        for (auto& l : labels) l[i] = 0;
      }
    }
    const std::size_t G = sizes_.size();
    std::vector<double> weights(G);
    for (std::size_t g = 0; g < G; ++g) weights[g] = static_cast<double>(sizes_[g]);
    std::vector<double> out(k_);
    noisy_.assign(k_, 0.0);
    std::vector<double> sums(G), est(G);
    for (std::size_t v = 0; v < k_; ++v) {
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t i = 0; i < n_; ++i) sums[group_of_[i]] += labels[v][i];
      for (std::size_t g = 0; g < G; ++g) est[g] = std::min(gamma_, sums[g] / weights[g]);
      noisy_[v] = weighted_median(est, weights);
      out[v] = noise_inverse(noisy_[v], gamma_);
    }
    split(labels);
    if (mask_) potentials_.push_back(potential(sizes_, corrupted_, gamma_, epsilon_));
    return out;
  }

  std::size_t group_count() const { return sizes_.size(); }
  const std::vector<std::size_t>& group_sizes() const { return sizes_; }
  const std::vector<std::uint32_t>& group_of() const { return group_of_; }
  const std::vector<double>& noisy_estimates() const { return noisy_; }
  const std::vector<double>& potentials() const { return potentials_; }
  double gamma() const { return gamma_; }

 private:
  void split(const std::vector<std::vector<std::uint8_t>>& labels) {
    const std::size_t words = (k_ + 63) / 64;
    std::unordered_map<std::vector<std::uint64_t>, std::uint32_t, PatternHash> ids;
    ids.reserve(2 * sizes_.size());
    std::vector<std::size_t> sizes, corrupted;
    std::vector<std::uint64_t> key(1 + words);
    for (std::size_t i = 0; i < n_; ++i) {
      std::fill(key.begin(), key.end(), 0);
      key[0] = group_of_[i];
      for (std::size_t v = 0; v < k_; ++v)
        if (labels[v][i]) key[1 + v / 64] |= std::uint64_t{1} << (v % 64);
      auto [it, fresh] = ids.try_emplace(key, static_cast<std::uint32_t>(sizes.size()));
      if (fresh) {
        sizes.push_back(0);
        corrupted.push_back(0);
      }
      group_of_[i] = it->second;
      ++sizes[it->second];
      if (mask_ && (*mask_)[i]) ++corrupted[it->second];
    }
    sizes_ = std::move(sizes);
    if (mask_) corrupted_ = std::move(corrupted);
  }

  std::size_t n_;
  std::size_t k_;
  double gamma_;
  double epsilon_;
  Rng rng_;
  std::vector<std::uint32_t> group_of_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> corrupted_;
  std::vector<double> noisy_;
  const std::vector<bool>* mask_ = nullptr;
  std::vector<double> potentials_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------- minimax LP

struct MinimaxResult {
  Vector mu;
  double objective = 0.0;   // max_v |v.mu - c_v|
  double gap = 0.0;         // |primal - dual| objective
  double cs_residual = 0.0; // complementary slackness violation
  std::size_t pivots = 0;
};

namespace detail {

// max c.x s.t. A x <= b, x >= 0 with b >= 0. Dense tableau, Bland's rule.
struct SimplexResult {
  Vector x;
  Vector y;  // duals
  double value = 0.0;
  std::size_t pivots = 0;
};

inline SimplexResult simplex_max(const Matrix& A, const Vector& b, const Vector& c) {
  const Eigen::Index m = A.rows(), nv = A.cols();
  if ((b.array() < 0.0).any()) throw std::logic_error("simplex_max needs a feasible origin");
  Matrix tab = Matrix::Zero(m + 1, nv + m + 1);
  tab.topLeftCorner(m, nv) = A;
  tab.block(0, nv, m, m).setIdentity();
  tab.topRightCorner(m, 1) = b;
  tab.block(m, 0, 1, nv) = c.transpose();  // reduced costs c_j - z_j
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = nv + i;

  constexpr double tol = 1e-12;
  const std::size_t cap = 50000;
  SimplexResult out;
  for (;;) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < nv + m; ++j)
      if (tab(m, j) > tol) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = tab(i, enter);
      if (a > tol) {
        const double ratio = tab(i, nv + m) / a;
        if (ratio < best - tol ||
            (std::abs(ratio - best) <= tol && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) throw AssumptionViolation("minimax program reported unbounded");
    tab.row(leave) /= tab(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i)
      if (i != leave && tab(i, enter) != 0.0) tab.row(i) -= tab(i, enter) * tab.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
    if (++out.pivots > cap) throw AssumptionViolation("minimax simplex exceeded its pivot cap");
  }
  out.x = Vector::Zero(nv);
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[static_cast<std::size_t>(i)] < nv) out.x(basis[static_cast<std::size_t>(i)]) = tab(i, nv + m);
  out.y = -tab.block(m, nv, 1, m).transpose();
  out.value = c.dot(out.x);
  return out;
}

}  // namespace detail

// argmin_mu max_v |v.mu - c_v|, directions as rows of V.
inline MinimaxResult minimax_recover(const Matrix& V, const Vector& targets) {
  const Eigen::Index k = V.rows(), d = V.cols();
  if (k == 0 || d == 0) throw ConfigError("minimax_recover needs directions");
  if (targets.size() != k) throw ConfigError("minimax_recover: one target per direction");
  const double S = targets.cwiseAbs().maxCoeff();
  // Variables (mu+, mu-, t) with s = S - t. Rows: v.mu + t <= S + c, -v.mu + t <= S - c.
  Matrix A(2 * k, 2 * d + 1);
  Vector b(2 * k);
  A.block(0, 0, k, d) = V;
  A.block(0, d, k, d) = -V;
  A.block(k, 0, k, d) = -V;
  A.block(k, d, k, d) = V;
  A.col(2 * d).setOnes();
  b.head(k) = Vector::Constant(k, S) + targets;
  b.tail(k) = Vector::Constant(k, S) - targets;
  Vector c = Vector::Zero(2 * d + 1);
  c(2 * d) = 1.0;
  const auto sol = detail::simplex_max(A, b, c);

  MinimaxResult out;
  out.pivots = sol.pivots;
  out.mu = sol.x.head(d) - sol.x.segment(d, d);
  const double primal = sol.value;
  const double dual = b.dot(sol.y);
  out.gap = std::abs(primal - dual);
  const Vector slack = b - A * sol.x;
  const Vector red = A.transpose() * sol.y - c;
  double cs = 0.0;
  for (Eigen::Index i = 0; i < slack.size(); ++i) cs = std::max(cs, std::abs(sol.y(i) * slack(i)));
  for (Eigen::Index j = 0; j < red.size(); ++j) cs = std::max(cs, std::abs(sol.x(j) * red(j)));
  cs = std::max(cs, std::max(0.0, -sol.y.minCoeff()));
  cs = std::max(cs, std::max(0.0, -red.minCoeff()));
  out.cs_residual = cs;

  // Drop components invisible to every direction.
  Eigen::JacobiSVD<Matrix> svd(V, Eigen::ComputeFullV);
  const double cutoff = 1e-10 * std::max(1.0, svd.singularValues()(0));
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()(i) > cutoff;
  if (rank < d) {
    const Matrix N = svd.matrixV().rightCols(d - rank);
    out.mu -= N * (N.transpose() * out.mu);
  }
  out.objective = (V * out.mu - targets).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------- estimator

struct ProjectionOptions {
  IndicatorMode mode = IndicatorMode::OneSided;
  CalibrationOptions calibration;
};

struct ProjectionRoundInfo {
  std::size_t max_groups = 0;      // largest group count over all grid instances
  double log_group_bound = 0.0;    // log |V|^(t (d + 1))
  double lp_gap = 0.0;
  double lp_cs_residual = 0.0;
  std::vector<double> directional; // mu(v)_t on the calibrated scale
  Vector shift;
};

class ProjectionEstimator final : public OnlineEstimator {
 public:
  ProjectionEstimator(TailProfile profile, double epsilon, Matrix directions, Rng rng, ProjectionOptions opts = {})
      : profile_(std::move(profile)), epsilon_(epsilon), V_(std::move(directions)), rng_(rng), opts_(opts) {}

  std::string name() const override { return "projection"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    const auto block = view.block(t);
    const auto d = static_cast<Eigen::Index>(view.d());
    if (V_.cols() != d) throw ConfigError("direction dimension must equal d");
    if (!tq_) init(view);

    ProjectionRoundInfo info;
    info.shift.resize(d);
    const auto R = static_cast<Eigen::Index>(reserve_);
    for (Eigen::Index c = 0; c < d; ++c) info.shift(c) = calibrate(block.col(c).head(R));
    const Matrix Y = block.bottomRows(block.rows() - R).rowwise() - info.shift.transpose();
    const Matrix P = Y * V_.transpose();
    const auto k = static_cast<std::size_t>(V_.rows());

    info.directional.assign(k, 0.0);
    last_upper_.assign(tq_->m, {});
    last_lower_.assign(tq_->m, {});
    for (std::size_t i = 1; i <= tq_->m; ++i) {
      const double q = tq_->grid[i];
      last_upper_[i - 1] = upper_[i - 1].step(convert_indicators(P, q, true, opts_.mode));
      last_lower_[i - 1] = lower_[i - 1].step(convert_indicators(P, q, false, opts_.mode));
      for (std::size_t v = 0; v < k; ++v) info.directional[v] += last_upper_[i - 1][v] - last_lower_[i - 1][v];
      info.max_groups = std::max({info.max_groups, upper_[i - 1].group_count(), lower_[i - 1].group_count()});
    }
    for (auto& x : info.directional) x *= tq_->step();

    Vector c = Eigen::Map<const Vector>(info.directional.data(), static_cast<Eigen::Index>(k));
    const auto lp = minimax_recover(V_, c);
    info.lp_gap = lp.gap;
    info.lp_cs_residual = lp.cs_residual;
    info.log_group_bound = log_group_bound(k, t, view.d());
    mu_ = lp.mu + info.shift;
    rounds_.push_back(std::move(info));
  }
  Vector emit_estimate(std::size_t) override { return mu_; }

  const TailQuantities& quantities() const { return *tq_; }
  const std::vector<ProjectionRoundInfo>& rounds() const { return rounds_; }
  const std::vector<std::vector<double>>& last_upper() const { return last_upper_; }
  const std::vector<std::vector<double>>& last_lower() const { return last_lower_; }
  std::size_t reserve() const { return reserve_; }

 private:
  void init(const RevealedView& view) {
    tq_ = tail_quantities(profile_, epsilon_, view.T());
    reserve_ = checked_reserve(view.n(), epsilon_, view.T(), opts_.calibration);
    const std::size_t ne = view.n() - reserve_;
    const auto k = static_cast<std::size_t>(V_.rows());
    const double log_cap = std::min(std::log(static_cast<double>(ne)), log_group_bound(k, view.T(), view.d()));
    if (log_cap > std::log(static_cast<double>(kMaxBlockGroups)) + 1e-12)
      throw ConfigError("block configuration can produce more than 1e6 groups");
    for (std::size_t i = 1; i <= tq_->m; ++i) {
      const double gamma = std::min(profile_(tq_->grid[i]), 1.0 - 1e-6);
      upper_.emplace_back(ne, k, gamma, epsilon_, grid_rng(rng_, i, true));
      lower_.emplace_back(ne, k, gamma, epsilon_, grid_rng(rng_, i, false));
    }
  }

  TailProfile profile_;
  double epsilon_;
  Matrix V_;
  Rng rng_;
  ProjectionOptions opts_;
  std::optional<TailQuantities> tq_;
  std::size_t reserve_ = 0;
  std::vector<CorrelatedBinaryCore> upper_, lower_;
  std::vector<std::vector<double>> last_upper_, last_lower_;
  std::vector<ProjectionRoundInfo> rounds_;
  Vector mu_;
};

inline EstimateTrace run_projection_estimation(const SampleStream& stream, const TailProfile& profile,
                                               double epsilon, const Matrix& V, Rng rng,
                                               ProjectionOptions opts = {}) {
  ProjectionEstimator est(profile, epsilon, V, rng, opts);
  return replay(stream, est);
}

}  // namespace orme
