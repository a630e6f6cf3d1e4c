#pragma once

// Binary product estimation: bit-history group tree, capped group means,
// weighted median, label-noise preprocessing and potential instrumentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "orme/core.hpp"
#include "orme/linalg.hpp"

namespace orme {

inline constexpr std::size_t kMaxBinaryRounds = 24;

inline void check_unit_open(double x, const char* what) {
  if (!(x > 0.0 && x < 1.0)) throw ConfigError(std::string(what) + ": must lie in (0, 1)");
}

// Piecewise potential kernel: quadratic below 10 eps / gamma, linear above.
inline double g_gamma(double x, double gamma, double epsilon) {
  check_unit_open(gamma, "gamma");
  check_unit_open(epsilon, "epsilon");
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("g_gamma argument must lie in [0, 1]");
  const double r = epsilon / gamma;
  if (x < 10.0 * r) return x * x;
  return 20.0 * r * x - 100.0 * r * r;
}

// One noise step: 1 w.p. gamma/4, 0 w.p. 1/2 - gamma/4, unchanged otherwise.
inline std::uint8_t apply_noise(std::uint8_t bit, double u, double gamma) {
  if (u < 0.25 * gamma) return 1;
  if (u < 0.5) return 0;
  return bit;
}

// Maps a mean estimate of the noisy stream back to the original scale.
inline double noise_inverse(double noisy_mean, double gamma) { return 2.0 * noisy_mean - 0.5 * gamma; }
inline double noise_forward(double mean, double gamma) { return 0.5 * mean + 0.25 * gamma; }

struct NoisyBits {
  std::vector<std::vector<std::uint8_t>> bits;  // [round][sample]
  double gamma = 0.5;
  double inverse(double noisy_mean) const { return noise_inverse(noisy_mean, gamma); }
};

// Batch form of the noise step; draws one uniform per sample per round,
// round-major, exactly as the online estimator does.
inline NoisyBits add_label_noise(const std::vector<std::vector<std::uint8_t>>& bits, double gamma, Rng rng) {
  check_unit_open(gamma, "gamma");
  NoisyBits out;
  out.gamma = gamma;
  out.bits = bits;
  for (auto& round : out.bits)
    for (auto& b : round) b = apply_noise(b, rng.uniform(), gamma);
  return out;
}

inline double group_estimate(const std::vector<std::size_t>& group, const std::vector<std::uint8_t>& bits,
                             double gamma) {
  if (group.empty()) throw ConfigError("group_estimate on an empty group");
  double s = 0.0;
  for (std::size_t j : group) s += bits.at(j);
  return std::min(gamma, s / static_cast<double>(group.size()));
}

// (1/n) sum_i g(eps_i) |S_i| over a partition given by per-group sizes and
// corrupted counts.
inline double potential(const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& corrupted,
                        double gamma, double epsilon) {
  if (sizes.size() != corrupted.size()) throw ConfigError("potential: size and count vectors differ");
  double n = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) continue;
    const double dens = static_cast<double>(corrupted[i]) / static_cast<double>(sizes[i]);
    acc += g_gamma(dens, gamma, epsilon) * static_cast<double>(sizes[i]);
    n += static_cast<double>(sizes[i]);
  }
  return n > 0.0 ? acc / n : 0.0;
}

// Partition snapshot used for instrumentation and tests.
struct GroupSnapshot {
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> corrupted;
  std::vector<double> sums;        // noisy bit sums of the round
  std::vector<double> clean_sums;  // same, clean members only
  std::vector<double> estimates;   // capped means
};

// Group tree state of one binary-product run. Groups are identified by dense
// ids; children of group g are keyed (g, bit) and compacted each round.
class BinaryProductCore {
 public:
  BinaryProductCore(std::size_t n, double gamma, double epsilon, Rng noise_rng)
      : n_(n), gamma_(gamma), epsilon_(epsilon), rng_(noise_rng), group_of_(n, 0), sizes_{n} {
    check_unit_open(gamma_, "gamma");
    check_unit_open(epsilon_, "epsilon");
    if (n_ == 0) throw ConfigError("binary product needs n >= 1");
  }

  void set_mask(const std::vector<bool>* mask) {
    mask_ = mask;
    if (mask_) {
      if (mask_->size() != n_) throw ConfigError("mask length must equal n");
      std::size_t bad = 0;
      for (bool b : *mask_) bad += b;
      corrupted_ = {bad};
      potentials_ = {potential(sizes_, corrupted_, gamma_, epsilon_)};
    }
  }

  // Noise coins are drawn here, one per sample, in sample order.
  std::vector<double> draw_coins() {
    std::vector<double> u(n_);
    for (auto& x : u) x = rng_.uniform();
    return u;
  }

  // Returns the estimate on the original scale.
  double step(const std::vector<std::uint8_t>& raw_bits) { return step(raw_bits, draw_coins()); }

  double step(const std::vector<std::uint8_t>& raw_bits, const std::vector<double>& coins) {
    if (raw_bits.size() != n_ || coins.size() != n_) throw ConfigError("bit vector length must equal n");
    if (++t_ > kMaxBinaryRounds) throw ConfigError("binary product supports at most 24 rounds");
    noisy_.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      if (raw_bits[j] > 1) throw ConfigError("binary product input must be 0/1");
      noisy_[j] = apply_noise(raw_bits[j], coins[j], gamma_);
    }
    const std::size_t G = sizes_.size();
    snap_.sizes = sizes_;
    snap_.sums.assign(G, 0.0);
    snap_.clean_sums.assign(G, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      snap_.sums[group_of_[j]] += noisy_[j];
      if (mask_ && !(*mask_)[j]) snap_.clean_sums[group_of_[j]] += noisy_[j];
    }
    snap_.corrupted = mask_ ? corrupted_ : std::vector<std::size_t>{};
    snap_.estimates.resize(G);
    std::vector<double> weights(G);
    for (std::size_t g = 0; g < G; ++g) {
      snap_.estimates[g] = std::min(gamma_, snap_.sums[g] / static_cast<double>(sizes_[g]));
      weights[g] = static_cast<double>(sizes_[g]);
    }
    noisy_estimate_ = weighted_median(snap_.estimates, weights);

    split();
    if (mask_) potentials_.push_back(potential(sizes_, corrupted_, gamma_, epsilon_));
    return noise_inverse(noisy_estimate_, gamma_);
  }

  double noisy_estimate() const { return noisy_estimate_; }
  double gamma() const { return gamma_; }
  std::size_t group_count() const { return sizes_.size(); }
  std::size_t rounds() const { return t_; }
  const std::vector<std::size_t>& group_sizes() const { return sizes_; }
  const std::vector<std::uint32_t>& group_of() const { return group_of_; }
  const std::vector<std::uint8_t>& noisy_bits() const { return noisy_; }
  // Partition used for the most recent estimate.
  const GroupSnapshot& last_round() const { return snap_; }
  // Phi(1..t+1): entry k is the potential of the partition used in round k+1.
  const std::vector<double>& potentials() const { return potentials_; }
  bool instrumented() const { return mask_ != nullptr; }

 private:
  void split() {
    const std::size_t G = sizes_.size();
    std::vector<std::int64_t> remap(2 * G, -1);
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> corrupted;
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t key = 2 * group_of_[j] + noisy_[j];
      if (remap[key] < 0) {
        remap[key] = static_cast<std::int64_t>(sizes.size());
        sizes.push_back(0);
        corrupted.push_back(0);
      }
      const auto id = static_cast<std::size_t>(remap[key]);
      group_of_[j] = static_cast<std::uint32_t>(id);
      ++sizes[id];
      if (mask_ && (*mask_)[j]) ++corrupted[id];
    }
    sizes_ = std::move(sizes);
    if (mask_) corrupted_ = std::move(corrupted);
  }

  std::size_t n_;
  double gamma_;
  double epsilon_;
  Rng rng_;
  std::vector<std::uint32_t> group_of_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> corrupted_;
  std::vector<std::uint8_t> noisy_;
  const std::vector<bool>* mask_ = nullptr;
  std::vector<double> potentials_;
  GroupSnapshot snap_;
  std::size_t t_ = 0;
  double noisy_estimate_ = 0.0;
};

inline std::vector<std::uint8_t> column_bits(const Eigen::Ref<const Matrix>& block) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(block.rows()));
  for (Eigen::Index i = 0; i < block.rows(); ++i) {
    const double x = block(i, 0);
    if (x != 0.0 && x != 1.0) throw ConfigError("binary product input must be 0/1");
    bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(x);
  }
  return bits;
}

class BinaryProductEstimator final : public OnlineEstimator {
 public:
  BinaryProductEstimator(double gamma, double epsilon, Rng rng) : gamma_(gamma), epsilon_(epsilon), rng_(rng) {
    check_unit_open(gamma_, "gamma");
    check_unit_open(epsilon_, "epsilon");
  }

  std::string name() const override { return "binary_product"; }
  void attach_instrumentation(const Instrumentation& inst) override { mask_ = inst.corrupted_mask; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    if (view.d() != 1) throw ConfigError("binary product needs d = 1");
    if (view.T() > kMaxBinaryRounds) throw ConfigError("binary product supports at most 24 rounds");
    if (!core_) {
      core_.emplace(view.n(), gamma_, epsilon_, rng_.split("noise"));
      if (mask_) core_->set_mask(mask_);
    }
    mu_ = core_->step(column_bits(view.block(t)));
  }
  Vector emit_estimate(std::size_t) override { return Vector::Constant(1, mu_); }
  RoundDiagnostics diagnostics(std::size_t t) const override {
    RoundDiagnostics d;
    if (core_->instrumented()) d.potential = core_->potentials()[t - 1];
    return d;
  }
  const BinaryProductCore& core() const { return *core_; }

 private:
  double gamma_;
  double epsilon_;
  Rng rng_;
  const std::vector<bool>* mask_ = nullptr;
  std::optional<BinaryProductCore> core_;
  double mu_ = 0.0;
};

inline EstimateTrace run_binary_product(const SampleStream& stream, double gamma, double epsilon, Rng rng) {
  BinaryProductEstimator est(gamma, epsilon, rng);
  return replay(stream, est);
}

}  // namespace orme
