#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "orme/orme.hpp"

namespace orme::testing {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng r(seed);
  Matrix X(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) X(i, j) = scale * r.normal();
  return X;
}

inline SampleStream clean_stream(const Matrix& X, std::size_t T, std::size_t d, double eps = 0.1) {
  return SampleStream(X, T, d, std::vector<bool>(static_cast<std::size_t>(X.rows()), false),
                      Vector::Zero(X.cols()), eps);
}

inline ExperimentConfig small_config() {
  ExperimentConfig c;
  c.n = 200;
  c.T = 4;
  c.epsilon = 0.1;
  return c;
}

}  // namespace orme::testing
