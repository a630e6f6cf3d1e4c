#pragma once

// Tail-profile product estimation: quadrature helpers, the Riemann-sum grid,
// 1-d calibration, the grid-of-binary-estimators mean estimator and the
// Gaussian CDF-inversion estimator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orme/binary.hpp"
#include "orme/core.hpp"
#include "orme/linalg.hpp"

namespace orme {

// ---------------------------------------------------------------- quadrature

namespace detail {
template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                   int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson on [a, b]; the interval is pre-split into 16 panels so
// narrow features are not missed by the first probe.
template <class F>
double integrate(const F& f, double a, double b, double rel_tol = 1e-6) {
  if (b <= a) return 0.0;
  constexpr int panels = 16;
  const double h = (b - a) / panels;
  double coarse = 0.0;
  std::vector<double> whole(panels);
  for (int k = 0; k < panels; ++k) {
    const double lo = a + k * h, hi = lo + h;
    whole[k] = h / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    coarse += std::abs(whole[k]);
  }
  const double tol = std::max(rel_tol * coarse, 1e-15) / panels;
  double acc = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double lo = a + k * h, hi = lo + h, mid = 0.5 * (lo + hi);
    acc += detail::simpson_rec(f, lo, hi, f(lo), f(mid), f(hi), whole[k], tol, 40);
  }
  return acc;
}

// Integral over [a, inf) through q = a + s / (1 - s).
template <class F>
double integrate_to_inf(const F& f, double a, double rel_tol = 1e-6) {
  auto g = [&](double s) {
    if (s >= 1.0) return 0.0;
    const double one = 1.0 - s;
    return f(a + s / one) / (one * one);
  };
  return integrate(g, 0.0, 1.0 - 1e-12, rel_tol);
}

enum class RiemannSide { Left, Right };

template <class F>
double riemann_sum(const F& f, double a, double b, std::size_t n, RiemannSide side) {
  if (n == 0) throw ConfigError("riemann_sum needs n >= 1");
  if (!(a < b)) throw ConfigError("riemann_sum needs a < b");
  const double h = (b - a) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = side == RiemannSide::Left ? a + static_cast<double>(i - 1) * h : a + static_cast<double>(i) * h;
    acc += f(x);
  }
  return acc * h;
}

// ---------------------------------------------------------------- Gaussian CDF

// Pr[N(u, 1) > 0], i.e. the standard normal CDF at u.
inline double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }

inline double normal_cdf_inv(double y) {
  if (!(y >= 1e-6 && y <= 1.0 - 1e-6)) throw ConfigError("normal_cdf_inv domain is [1e-6, 1 - 1e-6]");
  double lo = -6.0, hi = 6.0;
  for (int i = 0; i < 60 && hi - lo > 1e-6; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < y ? lo : hi) = mid;
  }
  double u = 0.5 * (lo + hi);
  const double c = 1.0 / std::sqrt(2.0 * M_PI);
  for (int i = 0; i < 50; ++i) {
    const double step = (normal_cdf(u) - y) / (c * std::exp(-0.5 * u * u));
    u -= step;
    if (std::abs(step) < 1e-12) break;
  }
  return u;
}

// ---------------------------------------------------------------- tail profiles

class TailProfile {
 public:
  TailProfile(std::string name, std::function<double(double)> F, std::vector<double> breakpoints = {},
              std::optional<double> support_edge = std::nullopt)
      : name_(std::move(name)), F_(std::move(F)), breaks_(std::move(breakpoints)), edge_(support_edge) {}

  double operator()(double q) const { return F_(q); }
  const std::string& name() const { return name_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  std::optional<double> support_edge() const { return edge_; }

  // Calibrated mean within sqrt(eps) of zero; Gaussian tails on |X|.
  static TailProfile gaussian(double epsilon) {
    const double s = std::sqrt(epsilon);
    return {"gaussian", [s](double q) { return q < s ? 1.0 : std::min(1.0, std::erfc((q - s) / std::sqrt(2.0))); },
            {s}};
  }
  static TailProfile subgaussian(double epsilon) {
    const double s = std::sqrt(epsilon);
    return {"subgaussian", [s](double q) { return q < s ? 1.0 : std::exp(-0.5 * (q - s) * (q - s)); }, {s}};
  }
  static TailProfile bounded_k(double k, double epsilon) {
    if (!(k >= 4.0)) throw ConfigError("tail.k: bounded moment profile needs k >= 4");
    const double s = std::sqrt(epsilon);
    return {"bounded_k",
            [s, k](double q) { return q < 1.0 + s ? 1.0 : std::pow(q - s, -k); },
            {1.0 + s}};
  }
  // Piecewise-linear interpolation of (q, F(q)); F(q) = F(q_0) before q_0.
  static TailProfile table(std::vector<std::pair<double, double>> pts) {
    if (pts.size() < 2) throw ConfigError("tail.table: needs at least two points");
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].second < 0.0 || pts[i].second > 1.0) throw ConfigError("tail.table: F values must lie in [0, 1]");
      if (i > 0 && pts[i].first == pts[i - 1].first) throw ConfigError("tail.table: duplicate q");
      if (i > 0 && pts[i].second > pts[i - 1].second) throw ConfigError("tail.table: F must be non-increasing");
    }
    if (pts.back().second > 0.0) throw ConfigError("tail.table: last F value must be 0 for a convergent integral");
    std::optional<double> edge;
    for (auto& p : pts)
      if (p.second == 0.0) {
        edge = p.first;
        break;
      }
    std::vector<double> br;
    for (auto& p : pts) br.push_back(p.first);
    return {"table",
            [pts](double q) {
              if (q <= pts.front().first) return pts.front().second;
              if (q >= pts.back().first) return pts.back().second;
              auto it = std::upper_bound(pts.begin(), pts.end(), std::make_pair(q, std::numeric_limits<double>::infinity()));
              const auto& hi = *it;
              const auto& lo = *(it - 1);
              const double r = (q - lo.first) / (hi.first - lo.first);
              return lo.second + r * (hi.second - lo.second);
            },
            br, edge};
  }
  static TailProfile from_spec(const TailSpec& spec, double epsilon) {
    if (spec.name == "gaussian") return gaussian(epsilon);
    if (spec.name == "subgaussian") return subgaussian(epsilon);
    if (spec.name == "bounded_k") return bounded_k(spec.k, epsilon);
    if (spec.name == "table") return table(spec.table);
    throw ConfigError("tail.name: unknown profile '" + spec.name + "'");
  }

 private:
  std::string name_;
  std::function<double(double)> F_;
  std::vector<double> breaks_;
  std::optional<double> edge_;
};

// Integral of f over [a, inf), split at the profile's breakpoints.
template <class G>
double integrate_profile(const TailProfile& profile, const G& f, double a, double rel_tol = 1e-8) {
  std::vector<double> cuts{a};
  for (double b : profile.breakpoints())
    if (b > a) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) acc += integrate(f, cuts[i], cuts[i + 1], rel_tol);
  if (profile.support_edge() && *profile.support_edge() <= cuts.back()) return acc;
  return acc + integrate_to_inf(f, cuts.back(), rel_tol);
}

struct TailQuantities {
  double Q = 0.0;
  double L = 0.0;
  std::size_t m = 0;
  double truncation = 0.0;  // integral of F over [L, inf)
  std::vector<double> grid; // q_0 = 0, ..., q_m = L
  double step() const { return m ? L / static_cast<double>(m) : 0.0; }
};

inline constexpr double kMaxTailL = 1e6;
inline constexpr std::size_t kMaxGridInstances = 10000;

inline TailQuantities tail_quantities(const TailProfile& F, double epsilon, std::size_t T) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon: must satisfy 0 < epsilon < 1/2");
  if (T == 0) throw ConfigError("T: must be at least 1");
  if (!F.support_edge() && F(kMaxTailL) > 1e-12)
    throw ConfigError("tail profile " + F.name() + ": integral of min(eps, sqrt(eps F)) diverges");
  for (double q = 0.0; q < 50.0; q += 0.01)
    if (F(q + 0.01) > F(q) + 1e-15) throw ConfigError("tail profile " + F.name() + ": F must be non-increasing");

  TailQuantities out;
  out.Q = integrate_profile(F, [&](double q) { return std::min(epsilon, std::sqrt(epsilon * F(q))); }, 0.0);
  if (!std::isfinite(out.Q)) throw ConfigError("tail profile " + F.name() + ": Q is not finite");
  if (out.Q <= 0.0) return out;  // F vanishes: point mass at zero

  auto tail = [&](double z) { return integrate_profile(F, [&](double q) { return F(q); }, z); };
  if (F.support_edge()) {
    out.L = *F.support_edge();
  } else {
    const double target = out.Q / std::sqrt(static_cast<double>(T));
    double lo = 0.0, hi = 1.0;
    while (tail(hi) > target) {
      lo = hi;
      hi *= 2.0;
      if (hi > kMaxTailL) throw ConfigError("tail profile " + F.name() + ": L exceeds 1e6");
    }
    for (int i = 0; i < 100 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
      const double mid = 0.5 * (lo + hi);
      (tail(mid) > target ? lo : hi) = mid;
    }
    out.L = hi;
  }
  out.truncation = F.support_edge() ? 0.0 : tail(out.L);
  out.m = static_cast<std::size_t>(std::floor(out.L * std::sqrt(static_cast<double>(T)) / out.Q));
  if (out.m == 0) out.m = 1;
  if (2 * out.m > kMaxGridInstances)
    throw ConfigError("tail grid needs " + std::to_string(2 * out.m) + " binary instances; cap is 10000");
  out.grid.resize(out.m + 1);
  for (std::size_t i = 0; i <= out.m; ++i) out.grid[i] = out.L * static_cast<double>(i) / static_cast<double>(out.m);
  out.grid.back() = out.L;
  return out;
}

// Riemann combination of tail estimates at q_1..q_m (right endpoints).
inline double riemann_mean(const TailQuantities& tq, const std::vector<double>& upper,
                           const std::vector<double>& lower) {
  double acc = 0.0;
  for (std::size_t i = 0; i < tq.m; ++i) acc += upper[i] - lower[i];
  return acc * tq.step();
}

// The estimator with exact tail probabilities in place of the robust ones.
template <class Upper, class Lower>
double oracle_riemann_mean(const TailQuantities& tq, const Upper& pr_ge, const Lower& pr_le_neg) {
  std::vector<double> up(tq.m), lo(tq.m);
  for (std::size_t i = 1; i <= tq.m; ++i) {
    up[i - 1] = pr_ge(tq.grid[i]);
    lo[i - 1] = pr_le_neg(tq.grid[i]);
  }
  return riemann_mean(tq, up, lo);
}

// ---------------------------------------------------------------- calibration

struct CalibrationOptions {
  double constant = 4.0;  // reserve = constant * eps^-2 * log(T / tau)
  double tau = 0.05;
};

inline std::size_t calibration_reserve(double epsilon, std::size_t T, const CalibrationOptions& opts) {
  const double r = opts.constant / (epsilon * epsilon) * std::log(static_cast<double>(T) / opts.tau);
  return static_cast<std::size_t>(std::ceil(std::max(r, 1.0)));
}

// Coordinate median of the reserved rows.
template <class Derived>
double calibrate(const Eigen::MatrixBase<Derived>& reserved_column) {
  std::vector<double> v(static_cast<std::size_t>(reserved_column.size()));
  for (Eigen::Index i = 0; i < reserved_column.size(); ++i) v[static_cast<std::size_t>(i)] = reserved_column(i);
  if (v.empty()) throw ConfigError("calibration reserve is empty");
  return median(std::move(v));
}

inline Rng grid_rng(const Rng& base, std::size_t index, bool upper) {
  return base.split("grid", 2 * static_cast<std::uint64_t>(index) + (upper ? 0 : 1));
}

// Splits n rows into a calibration reserve [0, R) and estimation rows [R, n).
inline std::size_t checked_reserve(std::size_t n, double epsilon, std::size_t T, const CalibrationOptions& opts) {
  const std::size_t R = calibration_reserve(epsilon, T, opts);
  if (R + 2 > n)
    throw ConfigError("calibration reserve of " + std::to_string(R) + " rows leaves too few of n = " +
                      std::to_string(n));
  return R;
}

// ---------------------------------------------------------------- estimators

class NonparamEstimator final : public OnlineEstimator {
 public:
  NonparamEstimator(TailProfile profile, double epsilon, Rng rng, CalibrationOptions cal = {})
      : profile_(std::move(profile)), epsilon_(epsilon), rng_(rng), cal_(cal) {}

  std::string name() const override { return "nonparam"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    if (view.d() != 1) throw ConfigError("nonparametric estimator needs d = 1");
    const auto block = view.block(t);
    if (!tq_) {
      tq_ = tail_quantities(profile_, epsilon_, view.T());
      reserve_ = checked_reserve(view.n(), epsilon_, view.T(), cal_);
      const std::size_t ne = view.n() - reserve_;
      for (std::size_t i = 1; i <= tq_->m; ++i) {
        const double gamma = std::min(profile_(tq_->grid[i]), 1.0 - 1e-6);
        upper_.emplace_back(ne, gamma, epsilon_, grid_rng(rng_, i, true));
        lower_.emplace_back(ne, gamma, epsilon_, grid_rng(rng_, i, false));
      }
    }
    shift_ = calibrate(block.col(0).head(static_cast<Eigen::Index>(reserve_)));
    if (tq_->m == 0 || tq_->Q <= 0.0) {
      mu_ = shift_;
      return;
    }
    const auto x = block.col(0).tail(static_cast<Eigen::Index>(view.n() - reserve_));
    const std::size_t ne = static_cast<std::size_t>(x.size());
    std::vector<std::uint8_t> up(ne), lo(ne);
    std::vector<double> yu(tq_->m), yl(tq_->m);
    for (std::size_t i = 1; i <= tq_->m; ++i) {
      const double q = tq_->grid[i];
      for (std::size_t j = 0; j < ne; ++j) {
        const double v = x(static_cast<Eigen::Index>(j)) - shift_;
        up[j] = v >= q;
        lo[j] = v <= -q;
      }
      yu[i - 1] = upper_[i - 1].step(up);
      yl[i - 1] = lower_[i - 1].step(lo);
    }
    last_upper_ = yu;
    last_lower_ = yl;
    mu_ = shift_ + riemann_mean(*tq_, yu, yl);
  }
  Vector emit_estimate(std::size_t) override { return Vector::Constant(1, mu_); }

  const TailQuantities& quantities() const { return *tq_; }
  double shift() const { return shift_; }
  std::size_t reserve() const { return reserve_; }
  const std::vector<double>& last_upper() const { return last_upper_; }
  const std::vector<double>& last_lower() const { return last_lower_; }

 private:
  TailProfile profile_;
  double epsilon_;
  Rng rng_;
  CalibrationOptions cal_;
  std::optional<TailQuantities> tq_;
  std::size_t reserve_ = 0;
  std::vector<BinaryProductCore> upper_, lower_;
  std::vector<double> last_upper_, last_lower_;
  double shift_ = 0.0;
  double mu_ = 0.0;
};

class GaussianEstimator final : public OnlineEstimator {
 public:
  static constexpr double kGamma = 0.75;

  GaussianEstimator(double epsilon, Rng rng, CalibrationOptions cal = {}) : epsilon_(epsilon), rng_(rng), cal_(cal) {}

  std::string name() const override { return "gaussian"; }
  void observe_block(std::size_t t, const RevealedView& view) override {
    if (view.d() != 1) throw ConfigError("Gaussian estimator needs d = 1");
    const auto block = view.block(t);
    if (!core_) {
      reserve_ = checked_reserve(view.n(), epsilon_, view.T(), cal_);
      core_.emplace(view.n() - reserve_, kGamma, epsilon_, rng_.split("sign"));
    }
    const double shift = calibrate(block.col(0).head(static_cast<Eigen::Index>(reserve_)));
    const auto x = block.col(0).tail(static_cast<Eigen::Index>(view.n() - reserve_));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(x.size()));
    for (Eigen::Index j = 0; j < x.size(); ++j) bits[static_cast<std::size_t>(j)] = x(j) - shift > 0.0;
    const double y = std::clamp(core_->step(bits), 0.25, 0.75);
    mu_ = shift + normal_cdf_inv(y);
  }
  Vector emit_estimate(std::size_t) override { return Vector::Constant(1, mu_); }

 private:
  double epsilon_;
  Rng rng_;
  CalibrationOptions cal_;
  std::size_t reserve_ = 0;
  std::optional<BinaryProductCore> core_;
  double mu_ = 0.0;
};

inline EstimateTrace run_nonparam(const SampleStream& stream, const TailProfile& profile, double epsilon, Rng rng,
                                  CalibrationOptions cal = {}) {
  NonparamEstimator est(profile, epsilon, rng, cal);
  return replay(stream, est);
}

inline EstimateTrace run_gaussian(const SampleStream& stream, double epsilon, Rng rng, CalibrationOptions cal = {}) {
  GaussianEstimator est(epsilon, rng, cal);
  return replay(stream, est);
}

}  // namespace orme
