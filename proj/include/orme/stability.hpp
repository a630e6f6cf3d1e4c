#pragma once

// (eps, delta)-stability: exact evaluation over a direction grid for small D,
// and a spectral extreme-removal heuristic that yields violation lower bounds.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "orme/core.hpp"
#include "orme/linalg.hpp"

namespace orme {

enum class StabilityMode { Exact, Heuristic };

struct StabilityWitness {
  std::vector<std::size_t> subset;  // indices kept
  Vector direction;
  int condition = 0;                // 1: mean, 2: second moment
  double deviation = 0.0;
};

struct StabilityReport {
  StabilityMode mode = StabilityMode::Exact;
  double epsilon = 0.0;
  double delta_required = 0.0;
  double mean_deviation = 0.0;    // sup |v.(mu_S' - mu)|
  double second_deviation = 0.0;  // sup |E_S'[(v.(x - mu))^2] - 1|
  double grid_slack = 0.0;        // exact mode on a direction grid: possible underestimate of delta
  std::optional<StabilityWitness> witness;
};

inline std::size_t stability_floor(double epsilon, std::size_t n) {
  return static_cast<std::size_t>(std::ceil((1.0 - epsilon) * static_cast<double>(n) - 1e-9));
}

inline double delta_from(double mean_dev, double second_dev, double epsilon) {
  return std::max(mean_dev, std::sqrt(epsilon * second_dev));
}

// Unit directions: +-1 for D = 1, an even circle grid for D = 2, a Fibonacci
// sphere for D = 3. Rows are directions.
inline Matrix stability_directions(std::size_t D, std::size_t count = 10000) {
  if (D == 1) {
    Matrix V(2, 1);
    V << 1.0, -1.0;
    return V;
  }
  const auto N = static_cast<Eigen::Index>(count);
  if (D == 2) {
    Matrix V(N, 2);
    for (Eigen::Index k = 0; k < N; ++k) {
      const double a = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(N);
      V(k, 0) = std::cos(a);
      V(k, 1) = std::sin(a);
    }
    return V;
  }
  if (D == 3) {
    Matrix V(N, 3);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (Eigen::Index k = 0; k < N; ++k) {
      const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(N);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * static_cast<double>(k);
      V(k, 0) = r * std::cos(phi);
      V(k, 1) = r * std::sin(phi);
      V(k, 2) = z;
    }
    return V;
  }
  throw ConfigError("direction grid supports D <= 3");
}

// Distance from any unit vector to the nearest grid direction (upper estimate).
inline double grid_resolution(std::size_t D, std::size_t count) {
  if (D == 1) return 0.0;
  if (D == 2) return 2.0 * std::sin(M_PI / (2.0 * static_cast<double>(count)));
  return 4.0 / std::sqrt(static_cast<double>(count));
}

namespace detail {

struct DirectionalExtremes {
  double mean_dev = 0.0;
  double second_dev = 0.0;
  std::size_t mean_size = 0;
  bool mean_top = true;
  std::size_t second_size = 0;
  bool second_top = true;
};

// For one direction, the extremes over all subsets of size >= floor are
// attained by the top-s or bottom-s order statistics.
inline DirectionalExtremes directional_extremes(std::vector<double> p, std::size_t floor) {
  DirectionalExtremes out;
  const std::size_t n = p.size();
  std::vector<double> sq(n);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < n; ++i) sq[i] = p[i] * p[i];
  std::sort(sq.begin(), sq.end());
  std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    pre[i + 1] = pre[i] + p[i];
    pre2[i + 1] = pre2[i] + sq[i];
  }
  for (std::size_t s = std::max<std::size_t>(floor, 1); s <= n; ++s) {
    const double ds = static_cast<double>(s);
    const double low = pre[s] / ds, high = (pre[n] - pre[n - s]) / ds;
    const double low2 = pre2[s] / ds, high2 = (pre2[n] - pre2[n - s]) / ds;
    if (std::abs(high) > out.mean_dev) out = {std::abs(high), out.second_dev, s, true, out.second_size, out.second_top};
    if (std::abs(low) > out.mean_dev) out = {std::abs(low), out.second_dev, s, false, out.second_size, out.second_top};
    if (std::abs(high2 - 1.0) > out.second_dev) {
      out.second_dev = std::abs(high2 - 1.0);
      out.second_size = s;
      out.second_top = true;
    }
    if (std::abs(low2 - 1.0) > out.second_dev) {
      out.second_dev = std::abs(low2 - 1.0);
      out.second_size = s;
      out.second_top = false;
    }
  }
  return out;
}

inline std::vector<std::size_t> extreme_subset(const Vector& key, std::size_t keep, bool keep_top) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(key.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return key(static_cast<Eigen::Index>(a)) < key(static_cast<Eigen::Index>(b));
  });
  if (keep_top) return {idx.end() - static_cast<std::ptrdiff_t>(keep), idx.end()};
  return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep)};
}

}  // namespace detail

inline StabilityReport check_stability_exact(const Matrix& S, const Vector& mu, double epsilon,
                                             std::size_t grid_points = 10000) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon: must satisfy 0 < epsilon < 1/2");
  const auto D = static_cast<std::size_t>(S.cols());
  if (D == 0 || D > 3) throw ConfigError("exact stability check supports 1 <= D <= 3");
  if (S.rows() == 0) throw ConfigError("exact stability check needs a nonempty set");
  if (mu.size() != S.cols()) throw ConfigError("mu must have D entries");
  const std::size_t n = static_cast<std::size_t>(S.rows());
  const std::size_t floor = stability_floor(epsilon, n);
  const Matrix Y = S.rowwise() - mu.transpose();
  const Matrix V = stability_directions(D, grid_points);
  const Matrix P = Y * V.transpose();

  StabilityReport rep;
  rep.mode = StabilityMode::Exact;
  rep.epsilon = epsilon;
  Eigen::Index best_mean = 0, best_second = 0;
  detail::DirectionalExtremes em, es;
  for (Eigen::Index k = 0; k < V.rows(); ++k) {
    std::vector<double> p(P.col(k).data(), P.col(k).data() + P.rows());
    const auto e = detail::directional_extremes(std::move(p), floor);
    if (e.mean_dev > rep.mean_deviation) {
      rep.mean_deviation = e.mean_dev;
      best_mean = k;
      em = e;
    }
    if (e.second_dev > rep.second_deviation) {
      rep.second_deviation = e.second_dev;
      best_second = k;
      es = e;
    }
  }
  rep.delta_required = delta_from(rep.mean_deviation, rep.second_deviation, epsilon);
  const double h = grid_resolution(D, grid_points);
  const double R = Y.rowwise().norm().maxCoeff();
  const double upper = delta_from(rep.mean_deviation + h * R, rep.second_deviation + 2.0 * h * R * R, epsilon);
  rep.grid_slack = h > 0.0 ? upper - rep.delta_required : 0.0;

  // Witness for the binding condition.
  StabilityWitness w;
  if (rep.mean_deviation >= std::sqrt(epsilon * rep.second_deviation)) {
    w.direction = V.row(best_mean).transpose();
    w.subset = detail::extreme_subset(P.col(best_mean), em.mean_size, em.mean_top);
    w.condition = 1;
    w.deviation = rep.mean_deviation;
  } else {
    w.direction = V.row(best_second).transpose();
    w.subset = detail::extreme_subset(P.col(best_second).cwiseAbs2(), es.second_size, es.second_top);
    w.condition = 2;
    w.deviation = rep.second_deviation;
  }
  rep.witness = std::move(w);
  return rep;
}

struct HeuristicOptions {
  std::size_t eigen_directions = 5;
  std::size_t random_directions = 50;
  std::uint64_t seed = 0x57AB1E;
};

// Removes the K = n - ceil((1 - eps) n) most extreme points along top
// eigendirections and random directions, and measures each resulting subset
// exactly over all directions. The result is a lower bound on the deviations,
// hence on delta; it is not a certificate of stability.
inline StabilityReport check_stability_heuristic(const Matrix& S, const Vector& mu, double epsilon,
                                                 std::optional<double> claimed_delta = std::nullopt,
                                                 HeuristicOptions opts = {}) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon: must satisfy 0 < epsilon < 1/2");
  if (mu.size() != S.cols()) throw ConfigError("mu must have D entries");
  const auto n = static_cast<std::size_t>(S.rows());
  const auto D = S.cols();
  if (n == 0) throw ConfigError("stability check needs a nonempty set");
  const std::size_t keep = stability_floor(epsilon, n);
  const Matrix Y = S.rowwise() - mu.transpose();

  std::vector<Vector> dirs;
  {
    const Matrix M2 = (Y.transpose() * Y) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> es(M2);
    const std::size_t ne = std::min<std::size_t>(opts.eigen_directions, static_cast<std::size_t>(D));
    for (std::size_t k = 0; k < ne; ++k) dirs.push_back(es.eigenvectors().col(D - 1 - static_cast<Eigen::Index>(k)));
    if (ne < static_cast<std::size_t>(D)) dirs.push_back(es.eigenvectors().col(0));
    Rng rng(opts.seed);
    for (std::size_t k = 0; k < opts.random_directions; ++k) {
      Vector v(D);
      for (Eigen::Index j = 0; j < D; ++j) v(j) = rng.normal();
      dirs.push_back(v.normalized());
    }
  }

  StabilityReport rep;
  rep.mode = StabilityMode::Heuristic;
  rep.epsilon = epsilon;
  std::optional<StabilityWitness> best1, best2;

  // Moments of a kept subset from the full sums minus the removed rows.
  const Matrix full2 = Y.transpose() * Y;
  const Vector full1 = Y.colwise().sum().transpose();
  auto evaluate = [&](const std::vector<std::size_t>& subset) {
    std::vector<bool> kept(n, false);
    for (std::size_t i : subset) kept[i] = true;
    std::vector<Eigen::Index> removed;
    for (std::size_t i = 0; i < n; ++i)
      if (!kept[i]) removed.push_back(static_cast<Eigen::Index>(i));
    Matrix Yr(static_cast<Eigen::Index>(removed.size()), D);
    for (std::size_t r = 0; r < removed.size(); ++r) Yr.row(static_cast<Eigen::Index>(r)) = Y.row(removed[r]);
    const double s = static_cast<double>(subset.size());
    const Vector m = (full1 - Yr.colwise().sum().transpose()) / s;
    const Matrix M2 = (full2 - Yr.transpose() * Yr) / s;
    const double md = m.norm();
    if (md > rep.mean_deviation) {
      rep.mean_deviation = md;
      best1 = StabilityWitness{subset, md > 0 ? Vector(m / md) : Vector(Vector::Unit(D, 0)), 1, md};
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(M2);
    const double hi = es.eigenvalues()(D - 1) - 1.0, lo = 1.0 - es.eigenvalues()(0);
    const double sd = std::max(hi, lo);
    if (sd > rep.second_deviation) {
      rep.second_deviation = sd;
      best2 = StabilityWitness{subset, hi >= lo ? Vector(es.eigenvectors().col(D - 1)) : Vector(es.eigenvectors().col(0)),
                               2, sd};
    }
  };

  for (const auto& v : dirs) {
    const Vector p = Y * v;
    evaluate(detail::extreme_subset(p, keep, true));
    evaluate(detail::extreme_subset(p, keep, false));
    const Vector p2 = p.cwiseAbs2();
    evaluate(detail::extreme_subset(p2, keep, true));
    evaluate(detail::extreme_subset(p2, keep, false));
  }
  rep.delta_required = delta_from(rep.mean_deviation, rep.second_deviation, epsilon);

  if (claimed_delta) {
    const double dc = *claimed_delta;
    if (best2 && rep.second_deviation > dc * dc / epsilon)
      rep.witness = best2;
    else if (best1 && rep.mean_deviation > dc)
      rep.witness = best1;
  }
  return rep;
}

}  // namespace orme
