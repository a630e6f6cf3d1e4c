#pragma once

// Clean-data generators and contamination adversaries.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "orme/core.hpp"
#include "orme/linalg.hpp"

namespace orme {

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

struct CleanData {
  Matrix X;
  Vector true_mean;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string name() const = 0;
  virtual CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const = 0;
};

namespace detail {
// mu*_j = mean + spread * U(-1, 1), drawn from its own stream.
inline Vector draw_mean(std::size_t M, double mean, double spread, Rng rng) {
  Vector mu(static_cast<Eigen::Index>(M));
  for (Eigen::Index j = 0; j < mu.size(); ++j) mu(j) = mean + spread * rng.uniform(-1.0, 1.0);
  return mu;
}
}  // namespace detail

// N(mu*, I).
class GaussianGenerator final : public Generator {
 public:
  explicit GaussianGenerator(Params p = {}) : mean_(param(p, "mean", 0.0)), spread_(param(p, "mean_spread", 0.0)) {}
  std::string name() const override { return "gaussian"; }
  CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const override {
    const std::size_t M = T * d;
    CleanData out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M)),
                  detail::draw_mean(M, mean_, spread_, rng.split("mean"))};
    Rng z = rng.split("noise");
    for (Eigen::Index i = 0; i < out.X.rows(); ++i)
      for (Eigen::Index j = 0; j < out.X.cols(); ++j) out.X(i, j) = out.true_mean(j) + z.normal();
    return out;
  }

 private:
  double mean_, spread_;
};

// Independent bits with Pr[x_t = 1] = p_t drawn uniformly in [p_lo, p_hi].
class BinaryProductGenerator final : public Generator {
 public:
  explicit BinaryProductGenerator(Params p = {}) : lo_(param(p, "p_lo", 0.1)), hi_(param(p, "p_hi", 0.4)) {
    if (!(0.0 <= lo_ && lo_ <= hi_ && hi_ <= 1.0)) throw ConfigError("generator_params: need 0 <= p_lo <= p_hi <= 1");
  }
  std::string name() const override { return "binary_product"; }
  CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const override {
    const std::size_t M = T * d;
    CleanData out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M)), Vector(static_cast<Eigen::Index>(M))};
    Rng pm = rng.split("mean");
    for (Eigen::Index j = 0; j < out.true_mean.size(); ++j) out.true_mean(j) = pm.uniform(lo_, hi_);
    Rng z = rng.split("noise");
    for (Eigen::Index i = 0; i < out.X.rows(); ++i)
      for (Eigen::Index j = 0; j < out.X.cols(); ++j) out.X(i, j) = z.uniform() < out.true_mean(j) ? 1.0 : 0.0;
    return out;
  }

 private:
  double lo_, hi_;
};

// E|X - mu|^k = 1. Two-point: +-a w.p. p/2 each, 0 otherwise, a = p^(-1/k).
// Student: t with k+1 degrees of freedom scaled to unit k-th absolute moment.
class BoundedMomentGenerator final : public Generator {
 public:
  explicit BoundedMomentGenerator(Params p = {})
      : k_(param(p, "k", 4.0)),
        p_(param(p, "p", 0.1)),
        student_(param(p, "student", 0.0) != 0.0),
        mean_(param(p, "mean", 0.0)),
        spread_(param(p, "mean_spread", 0.0)) {
    if (!(k_ >= 2.0)) throw ConfigError("generator_params.k: must be at least 2");
    if (!(p_ > 0.0 && p_ <= 1.0)) throw ConfigError("generator_params.p: must lie in (0, 1]");
  }
  std::string name() const override { return "bounded_k"; }
  double atom() const { return std::pow(p_, -1.0 / k_); }
  double mass() const { return p_; }
  double student_scale() const {
    const double nu = k_ + 1.0;
    const double lg = 0.5 * k_ * std::log(nu) + std::lgamma(0.5 * (k_ + 1.0)) + std::lgamma(0.5 * (nu - k_)) -
                      0.5 * std::log(M_PI) - std::lgamma(0.5 * nu);
    return std::exp(-lg / k_);
  }
  CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const override {
    const std::size_t M = T * d;
    CleanData out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M)),
                  detail::draw_mean(M, mean_, spread_, rng.split("mean"))};
    Rng z = rng.split("noise");
    const double a = atom();
    const double scale = student_ ? student_scale() : 1.0;
    std::student_t_distribution<double> tdist(k_ + 1.0);
    for (Eigen::Index i = 0; i < out.X.rows(); ++i)
      for (Eigen::Index j = 0; j < out.X.cols(); ++j) {
        double x;
        if (student_) {
          x = scale * tdist(z);
        } else {
          const double u = z.uniform();
          x = u < 0.5 * p_ ? a : (u < p_ ? -a : 0.0);
        }
        out.X(i, j) = out.true_mean(j) + x;
      }
    return out;
  }

 private:
  double k_, p_;
  bool student_;
  double mean_, spread_;
};

// (R + Z) / sqrt(2) with R Rademacher, Z standard normal: unit variance.
class SubgaussianGenerator final : public Generator {
 public:
  explicit SubgaussianGenerator(Params p = {}) : mean_(param(p, "mean", 0.0)), spread_(param(p, "mean_spread", 0.0)) {}
  std::string name() const override { return "subgaussian"; }
  CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const override {
    const std::size_t M = T * d;
    CleanData out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M)),
                  detail::draw_mean(M, mean_, spread_, rng.split("mean"))};
    Rng z = rng.split("noise");
    const double s = 1.0 / std::sqrt(2.0);
    for (Eigen::Index i = 0; i < out.X.rows(); ++i)
      for (Eigen::Index j = 0; j < out.X.cols(); ++j) {
        const double r = z.uniform() < 0.5 ? -1.0 : 1.0;
        out.X(i, j) = out.true_mean(j) + s * (r + z.normal());
      }
    return out;
  }

 private:
  double mean_, spread_;
};

// Independent Gaussian blocks; block t has covariance (1 - rho) I + rho W_t
// with W_t a random PSD matrix of spectral norm 1, so every block covariance
// has spectral norm exactly 1.
class GaussianBlockGenerator final : public Generator {
 public:
  explicit GaussianBlockGenerator(Params p = {})
      : rho_(param(p, "correlation", 0.5)), mean_(param(p, "mean", 0.0)), spread_(param(p, "mean_spread", 0.0)) {
    if (!(rho_ >= 0.0 && rho_ <= 1.0)) throw ConfigError("generator_params.correlation: must lie in [0, 1]");
  }
  std::string name() const override { return "gaussian_blocks"; }

  std::vector<Matrix> block_covariances(std::size_t T, std::size_t d, Rng rng) const {
    std::vector<Matrix> out;
    const auto D = static_cast<Eigen::Index>(d);
    for (std::size_t t = 0; t < T; ++t) {
      Rng r = rng.split("cov", t);
      Matrix A(D, D);
      for (Eigen::Index i = 0; i < D; ++i)
        for (Eigen::Index j = 0; j < D; ++j) A(i, j) = r.normal();
      Matrix W = A * A.transpose();
      W /= dominant_eigenpair(W, false).value;
      out.push_back((1.0 - rho_) * Matrix::Identity(D, D) + rho_ * W);
    }
    return out;
  }

  CleanData generate(std::size_t n, std::size_t T, std::size_t d, Rng rng) const override {
    const std::size_t M = T * d;
    CleanData out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M)),
                  detail::draw_mean(M, mean_, spread_, rng.split("mean"))};
    const auto covs = block_covariances(T, d, rng);
    Rng z = rng.split("noise");
    const auto D = static_cast<Eigen::Index>(d);
    Vector g(D);
    for (std::size_t t = 0; t < T; ++t) {
      const Matrix L = Eigen::LLT<Matrix>(covs[t]).matrixL();
      const auto off = static_cast<Eigen::Index>(t * d);
      for (Eigen::Index i = 0; i < out.X.rows(); ++i) {
        for (Eigen::Index k = 0; k < D; ++k) g(k) = z.normal();
        out.X.row(i).segment(off, D) = (out.true_mean.segment(off, D) + L * g).transpose();
      }
    }
    return out;
  }

 private:
  double rho_, mean_, spread_;
};

inline std::unique_ptr<Generator> make_generator(const std::string& name, const Params& p = {}) {
  if (name == "gaussian") return std::make_unique<GaussianGenerator>(p);
  if (name == "binary_product") return std::make_unique<BinaryProductGenerator>(p);
  if (name == "bounded_k") return std::make_unique<BoundedMomentGenerator>(p);
  if (name == "subgaussian") return std::make_unique<SubgaussianGenerator>(p);
  if (name == "gaussian_blocks") return std::make_unique<GaussianBlockGenerator>(p);
  throw ConfigError("generator: unknown generator '" + name + "'");
}

// ---------------------------------------------------------------- adversaries

inline std::vector<std::size_t> pick_rows(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

class IdentityAdversary final : public Adversary {
 public:
  std::string name() const override { return "identity"; }
  Replacement corrupt(const Matrix&, const Vector&, double, std::size_t, std::size_t, Rng&) const override {
    return {};
  }
};

// Replaced rows keep their clean draw plus c * eps along a unit direction in
// every block, so they look like samples of a shifted distribution.
class MeanShiftAdversary final : public Adversary {
 public:
  explicit MeanShiftAdversary(Params p = {}) : magnitude_(param(p, "magnitude", 10.0)) {}
  MeanShiftAdversary(double magnitude, Vector direction) : magnitude_(magnitude), direction_(std::move(direction)) {}
  std::string name() const override { return "mean_shift"; }
  Replacement corrupt(const Matrix& clean, const Vector&, double epsilon, std::size_t T, std::size_t d,
                      Rng& rng) const override {
    const auto n = static_cast<std::size_t>(clean.rows());
    Vector dir = direction_.size() ? direction_ : Vector::Unit(static_cast<Eigen::Index>(d), 0);
    if (static_cast<std::size_t>(dir.size()) != d) throw ConfigError("mean_shift direction must have d entries");
    if (std::abs(dir.norm() - 1.0) > 1e-9) throw ConfigError("mean_shift direction must be a unit vector");
    Vector shift(static_cast<Eigen::Index>(T * d));
    for (std::size_t t = 0; t < T; ++t) shift.segment(static_cast<Eigen::Index>(t * d), static_cast<Eigen::Index>(d)) = magnitude_ * epsilon * dir;
    Replacement r;
    r.rows = pick_rows(n, corruption_budget(epsilon, n), rng);
    r.values.resize(static_cast<Eigen::Index>(r.rows.size()), clean.cols());
    for (std::size_t k = 0; k < r.rows.size(); ++k)
      r.values.row(static_cast<Eigen::Index>(k)) = clean.row(static_cast<Eigen::Index>(r.rows[k])) + shift.transpose();
    return r;
  }

 private:
  double magnitude_;
  Vector direction_;
};

// Lower-bound construction: blocks B_1..B_T of b = floor(eps n / T) copies of
// mu* + sqrt(T) (1/i, 1/(i-1), ..., 1, 0, ..., 0). Rows of B_i carry tag i.
class StaircaseAdversary final : public Adversary {
 public:
  std::string name() const override { return "staircase"; }

  static std::size_t block_size(double epsilon, std::size_t n, std::size_t T) {
    return static_cast<std::size_t>(std::floor(epsilon * static_cast<double>(n) / static_cast<double>(T) + 1e-9));
  }
  // Coordinates of the B_i point (i is 1-based) before the mean shift.
  static Vector point(std::size_t i, std::size_t T) {
    Vector p = Vector::Zero(static_cast<Eigen::Index>(T));
    const double s = std::sqrt(static_cast<double>(T));
    for (std::size_t j = 1; j <= i; ++j) p(static_cast<Eigen::Index>(j - 1)) = s / static_cast<double>(i - j + 1);
    return p;
  }

  Replacement corrupt(const Matrix& clean, const Vector& true_mean, double epsilon, std::size_t T, std::size_t d,
                      Rng& rng) const override {
    if (d != 1) throw ConfigError("staircase adversary needs d = 1");
    const auto n = static_cast<std::size_t>(clean.rows());
    const std::size_t b = block_size(epsilon, n, T);
    if (b == 0) throw ConfigError("staircase: block size floor(eps n / T) is 0; increase n or epsilon");
    Replacement r;
    r.rows = pick_rows(n, T * b, rng);
    r.values.resize(static_cast<Eigen::Index>(T * b), static_cast<Eigen::Index>(T));
    r.tags.resize(T * b);
    for (std::size_t i = 1; i <= T; ++i) {
      const Vector p = point(i, T) + true_mean;
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t row = (i - 1) * b + k;
        r.values.row(static_cast<Eigen::Index>(row)) = p.transpose();
        r.tags[row] = static_cast<int>(i);
      }
    }
    return r;
  }
};

// Round 1: corrupted rows emit 1 to push first-round group means up, then they
// copy the clean majority bit so they stay in the largest branch.
class MedianAttackAdversary final : public Adversary {
 public:
  std::string name() const override { return "median_attack"; }
  Replacement corrupt(const Matrix& clean, const Vector&, double epsilon, std::size_t T, std::size_t d,
                      Rng& rng) const override {
    if (d != 1) throw ConfigError("median_attack adversary needs d = 1");
    const auto n = static_cast<std::size_t>(clean.rows());
    Replacement r;
    r.rows = pick_rows(n, corruption_budget(epsilon, n), rng);
    r.values.resize(static_cast<Eigen::Index>(r.rows.size()), static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) {
      const auto col = clean.col(static_cast<Eigen::Index>(t));
      if (((col.array() != 0.0) && (col.array() != 1.0)).any())
        throw ConfigError("median_attack adversary needs bit-valued data");
      const double bit = t == 0 ? 1.0 : (col.sum() * 2.0 > static_cast<double>(n) ? 1.0 : 0.0);
      r.values.col(static_cast<Eigen::Index>(t)).setConstant(bit);
    }
    return r;
  }
};

inline std::unique_ptr<Adversary> make_adversary(const std::string& name, const Params& p = {}) {
  if (name == "identity") return std::make_unique<IdentityAdversary>();
  if (name == "mean_shift") return std::make_unique<MeanShiftAdversary>(p);
  if (name == "staircase") return std::make_unique<StaircaseAdversary>();
  if (name == "median_attack") return std::make_unique<MedianAttackAdversary>();
  throw ConfigError("adversary: unknown adversary '" + name + "'");
}

// ---------------------------------------------------------------- staircase analysis

// Squared norm of the staircase trajectory: sum_t (eps^2 / T) H_{T-t+1}^2.
inline double staircase_lower_bound_sq(double epsilon, std::size_t T) {
  double acc = 0.0, H = 0.0;
  for (std::size_t k = 1; k <= T; ++k) {
    H += 1.0 / static_cast<double>(k);
    acc += H * H;
  }
  return epsilon * epsilon / static_cast<double>(T) * acc;
}

// Nested subsets X^(t) = C plus B_t..B_T, from the stream's tags.
inline std::vector<bool> staircase_members(const std::vector<int>& tags, std::size_t t) {
  std::vector<bool> keep(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) keep[i] = tags[i] < 0 || tags[i] >= static_cast<int>(t);
  return keep;
}

// Cooperative probe: reports the round-t coordinate mean over X^(t). Reads the
// tags, so it is an analysis device and not a robust estimator.
class StaircaseProbe final : public OnlineEstimator {
 public:
  std::string name() const override { return "staircase_probe"; }
  void set_tags(const std::vector<int>* tags) { tags_ = tags; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    if (!tags_) throw ConfigError("staircase probe needs stream tags");
    const auto keep = staircase_members(*tags_, t);
    const auto col = view.block(t).col(0);
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) {
        s += col(static_cast<Eigen::Index>(i));
        c += 1.0;
      }
    mu_ = s / c;
  }
  Vector emit_estimate(std::size_t) override { return Vector::Constant(1, mu_); }

 private:
  const std::vector<int>* tags_ = nullptr;
  double mu_ = 0.0;
};

// Top eigenvalue of the covariance of X^(t) truncated to its first t
// coordinates, for every t. Uses second-moment sums so each t costs O(t^3).
inline std::vector<double> staircase_truncated_cov_norms(const Matrix& clean_rows, const Vector& true_mean,
                                                         double epsilon, std::size_t T, std::size_t n) {
  const std::size_t b = StaircaseAdversary::block_size(epsilon, n, T);
  const auto Tn = static_cast<Eigen::Index>(T);
  const Matrix Cc = clean_rows.rowwise() - true_mean.transpose();
  const Matrix C2 = Cc.transpose() * Cc;
  const Vector C1 = Cc.colwise().sum().transpose();
  const double nc = static_cast<double>(clean_rows.rows());
  std::vector<Vector> pts;
  for (std::size_t i = 1; i <= T; ++i) pts.push_back(StaircaseAdversary::point(i, T));
  std::vector<double> out;
  Matrix B2 = Matrix::Zero(Tn, Tn);
  Vector B1 = Vector::Zero(Tn);
  for (std::size_t i = 1; i <= T; ++i) {
    B2 += static_cast<double>(b) * pts[i - 1] * pts[i - 1].transpose();
    B1 += static_cast<double>(b) * pts[i - 1];
  }
  for (std::size_t t = 1; t <= T; ++t) {
    if (t > 1) {  // drop B_{t-1}
      B2 -= static_cast<double>(b) * pts[t - 2] * pts[t - 2].transpose();
      B1 -= static_cast<double>(b) * pts[t - 2];
    }
    const double N = nc + static_cast<double>(b * (T - t + 1));
    const auto k = static_cast<Eigen::Index>(t);
    const Vector mean = (C1.head(k) + B1.head(k)) / N;
    const Matrix cov = (C2.topLeftCorner(k, k) + B2.topLeftCorner(k, k)) / N - mean * mean.transpose();
    out.push_back(dominant_eigenpair(cov, false).value);
  }
  return out;
}

}  // namespace orme
