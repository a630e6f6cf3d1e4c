#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "orme/core.hpp"
#include "orme/rng.hpp"

namespace orme {

struct WeightedMoments {
  Vector mean;
  Matrix cov;
};

inline double checked_total(const Vector& w, Eigen::Index rows) {
  if (w.size() != rows) throw ConfigError("weight vector length must equal the row count");
  if ((w.array() < 0.0).any()) throw ConfigError("weights must be nonnegative");
  const double total = w.sum();
  if (!(total > 0.0)) throw ConfigError("weights sum to zero");
  return total;
}

template <class Derived>
Vector weighted_mean(const Vector& w, const Eigen::MatrixBase<Derived>& X) {
  const double total = checked_total(w, X.rows());
  return (X.transpose() * w) / total;
}

template <class Derived>
WeightedMoments weighted_cov(const Vector& w, const Eigen::MatrixBase<Derived>& X) {
  const double total = checked_total(w, X.rows());
  WeightedMoments out;
  out.mean = (X.transpose() * w) / total;
  Matrix scaled = X.rowwise() - out.mean.transpose();
  scaled.array().colwise() *= (w.array() / total).sqrt();
  const auto D = X.cols();
  out.cov = Matrix::Zero(D, D);
  out.cov.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
  out.cov.triangularView<Eigen::StrictlyUpper>() = out.cov.transpose();
  return out;
}

struct Eigenpair {
  double value = 0.0;
  Vector vector;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||S v - value v||
  bool converged = false;
};

inline void require_symmetric(const Matrix& S) {
  if (S.rows() != S.cols()) throw ConfigError("matrix must be square");
  const double scale = 1.0 + S.cwiseAbs().maxCoeff();
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) throw ConfigError("matrix must be symmetric");
}

inline std::size_t power_iteration_cap(Eigen::Index D) {
  const double d = static_cast<double>(D);
  return static_cast<std::size_t>(10.0 * d * std::log(d + 2.0)) + 500;
}

// Power iteration from a random start; converges to the eigenvalue of largest
// magnitude. Non-convergence is reported, not thrown.
inline Eigenpair top_eigenpair(const Matrix& S, Rng rng = Rng(0x5eed)) {
  require_symmetric(S);
  const auto D = S.rows();
  Eigenpair out;
  if (D == 0) throw ConfigError("empty matrix");
  Vector v(D);
  for (Eigen::Index i = 0; i < D; ++i) v(i) = rng.normal();
  v.normalize();

  const std::size_t cap = power_iteration_cap(D);
  double rq = v.dot(S * v);
  for (std::size_t it = 1; it <= cap; ++it) {
    Vector Sv = S * v;
    const double norm = Sv.norm();
    out.iterations = it;
    if (norm == 0.0) {  // v in the kernel; S v = 0 v
      out.value = 0.0;
      out.vector = v;
      out.residual = 0.0;
      out.converged = true;
      return out;
    }
    v = Sv / norm;
    const double next = v.dot(S * v);
    const double tol = 1e-10 * (1.0 + std::abs(next));
    out.residual = (S * v - next * v).norm();
    const bool settled = std::abs(next - rq) <= tol;
    rq = next;
    if (settled && out.residual <= 1e-8 * (1.0 + std::abs(rq))) {
      out.converged = true;
      break;
    }
  }
  out.value = rq;
  out.vector = v;
  return out;
}

// Largest algebraic eigenvalue of a symmetric PSD matrix and, on request,
// its eigenvector. Dense tridiagonal solve; robust on clustered spectra.
inline Eigenpair dominant_eigenpair(const Matrix& S, bool want_vector) {
  Eigenpair out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, want_vector ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw AssumptionViolation("eigensolver failed");
  const auto D = S.rows();
  out.value = es.eigenvalues()(D - 1);
  if (want_vector) {
    out.vector = es.eigenvectors().col(D - 1);
    out.residual = (S * out.vector - out.value * out.vector).norm();
  }
  out.converged = true;
  return out;
}

// Lower weighted median: smallest value whose cumulative weight reaches half.
inline double weighted_median(const std::vector<double>& values, const std::vector<double>& weights) {
  if (values.empty()) throw ConfigError("weighted_median of empty input");
  if (values.size() != weights.size()) throw ConfigError("values and weights differ in length");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("weighted_median weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("weighted_median weights sum to zero");
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    acc += weights[idx[k]];
    // Equal values are one atom of the distribution.
    if (k + 1 < idx.size() && values[idx[k + 1]] == values[idx[k]]) continue;
    if (acc >= 0.5 * total) return values[idx[k]];
  }
  return values[idx.back()];
}

// Lower median of the values (unweighted).
inline double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of empty input");
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

}  // namespace orme
