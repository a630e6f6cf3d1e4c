#include "support.hpp"

using namespace orme;

namespace {

double column_moment(const Matrix& X, const Vector& mu, Eigen::Index j, double k) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) acc += std::pow(std::abs(X(i, j) - mu(j)), k);
  return acc / static_cast<double>(X.rows());
}

SampleStream staircase_stream(std::size_t n, std::size_t T, double eps, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.n = n, cfg.T = T, cfg.epsilon = eps, cfg.seed = seed;
  cfg.adversary = "staircase";
  return make_trial_stream(cfg, 0);
}

}  // namespace

TEST(Generators, GaussianMomentsAndDeterminism) {
  const auto g = make_generator("gaussian", {{"mean", 1.5}, {"mean_spread", 0.5}});
  const CleanData a = g->generate(20000, 3, 2, Rng(1));
  ASSERT_EQ(a.X.cols(), 6);
  for (Eigen::Index j = 0; j < 6; ++j) {
    EXPECT_GE(a.true_mean(j), 1.0);
    EXPECT_LE(a.true_mean(j), 2.0);
    EXPECT_NEAR(a.X.col(j).mean(), a.true_mean(j), 5.0 / std::sqrt(20000.0));
    EXPECT_NEAR(column_moment(a.X, a.true_mean, j, 2), 1.0, 0.05);
  }
  const CleanData b = g->generate(20000, 3, 2, Rng(1));
  EXPECT_TRUE(a.X == b.X);
  EXPECT_THROW(make_generator("cauchy"), ConfigError);
}

TEST(Generators, BinaryProductBitsAndMeans) {
  const auto g = make_generator("binary_product", {{"p_lo", 0.2}, {"p_hi", 0.3}});
  const CleanData c = g->generate(20000, 5, 1, Rng(2));
  EXPECT_TRUE(((c.X.array() == 0.0) || (c.X.array() == 1.0)).all());
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_GE(c.true_mean(j), 0.2);
    EXPECT_LE(c.true_mean(j), 0.3);
    EXPECT_NEAR(c.X.col(j).mean(), c.true_mean(j), 5 * 0.5 / std::sqrt(20000.0));
  }
  EXPECT_THROW(make_generator("binary_product", {{"p_lo", 0.5}, {"p_hi", 0.4}}), ConfigError);
}

TEST(Generators, BoundedMomentUnitKthMoment) {
  BoundedMomentGenerator two({{"k", 4}, {"p", 0.2}});
  EXPECT_NEAR(two.mass() * std::pow(two.atom(), 4.0), 1.0, 1e-12);
  const CleanData c = two.generate(50000, 2, 1, Rng(3));
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(column_moment(c.X, c.true_mean, j, 4), 1.0, 0.05);
    EXPECT_NEAR(c.X.col(j).mean(), c.true_mean(j), 5 * std::sqrt(0.2 * two.atom() * two.atom() / 50000));
  }
  // t with 5 degrees of freedom has E t^4 = 3 nu^2 / ((nu - 2)(nu - 4)) = 25.
  BoundedMomentGenerator st({{"k", 4}, {"student", 1}});
  EXPECT_NEAR(st.student_scale(), std::pow(25.0, -0.25), 1e-12);
  // k = 2, nu = 3: E t^2 = nu / (nu - 2) = 3.
  BoundedMomentGenerator st2({{"k", 2}, {"student", 1}});
  EXPECT_NEAR(st2.student_scale(), 1.0 / std::sqrt(3.0), 1e-12);
  const CleanData s = st2.generate(100000, 1, 1, Rng(4));
  EXPECT_NEAR(column_moment(s.X, s.true_mean, 0, 2), 1.0, 0.1);
  EXPECT_THROW(BoundedMomentGenerator({{"k", 1}}), ConfigError);
  EXPECT_THROW(BoundedMomentGenerator({{"p", 0.0}}), ConfigError);
}

TEST(Generators, SubgaussianUnitVariance) {
  const CleanData c = make_generator("subgaussian")->generate(50000, 2, 1, Rng(5));
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(c.X.col(j).mean(), c.true_mean(j), 0.03);
    EXPECT_NEAR(column_moment(c.X, c.true_mean, j, 2), 1.0, 0.03);
    // Fourth moment of (R + Z)/sqrt 2 is (1 + 6 + 3) / 4 = 2.5.
    EXPECT_NEAR(column_moment(c.X, c.true_mean, j, 4), 2.5, 0.15);
  }
}

TEST(Generators, GaussianBlocksCovariance) {
  GaussianBlockGenerator g({{"correlation", 0.7}});
  const auto covs = g.block_covariances(3, 3, Rng(6).split("x"));
  for (const auto& C : covs) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), 1.0, 1e-8);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
  const Rng rng(7);
  const CleanData c = g.generate(60000, 3, 3, rng);
  const auto want = g.block_covariances(3, 3, rng);
  for (std::size_t t = 0; t < 3; ++t) {
    const Matrix B = c.X.middleCols(static_cast<Eigen::Index>(3 * t), 3);
    const Matrix Z = B.rowwise() - c.true_mean.segment(static_cast<Eigen::Index>(3 * t), 3).transpose();
    const Matrix emp = Z.transpose() * Z / static_cast<double>(B.rows());
    EXPECT_LE((emp - want[t]).cwiseAbs().maxCoeff(), 0.03);
  }
  EXPECT_THROW(GaussianBlockGenerator({{"correlation", 1.5}}), ConfigError);
}

TEST(Adversaries, IdentityAndMeanShift) {
  const Matrix X = orme::testing::gaussian_matrix(200, 6, 1);
  Rng r(2);
  EXPECT_TRUE(make_adversary("identity")->corrupt(X, Vector::Zero(6), 0.1, 3, 2, r).rows.empty());

  const Vector dir = Eigen::Vector2d(0.6, 0.8);
  MeanShiftAdversary shift(5.0, dir);
  const auto rep = shift.corrupt(X, Vector::Zero(6), 0.1, 3, 2, r);
  ASSERT_EQ(rep.rows.size(), 20u);
  std::vector<std::size_t> sorted = rep.rows;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  for (std::size_t k = 0; k < rep.rows.size(); ++k)
    for (Eigen::Index j = 0; j < 6; ++j)
      EXPECT_NEAR(rep.values(static_cast<Eigen::Index>(k), j) - X(static_cast<Eigen::Index>(rep.rows[k]), j),
                  0.5 * dir(j % 2), 1e-12);
  EXPECT_THROW(MeanShiftAdversary(1.0, Eigen::Vector2d(1, 1)).corrupt(X, Vector::Zero(6), 0.1, 3, 2, r), ConfigError);
  EXPECT_THROW(MeanShiftAdversary(1.0, Vector::Ones(3)).corrupt(X, Vector::Zero(6), 0.1, 3, 2, r), ConfigError);
  EXPECT_THROW(make_adversary("nope"), ConfigError);
}

TEST(Adversaries, MedianAttackShape) {
  ExperimentConfig cfg;
  cfg.n = 1000, cfg.T = 5, cfg.epsilon = 0.1;
  cfg.generator = "binary_product";
  cfg.generator_params = {{"p_lo", 0.6}, {"p_hi", 0.9}};
  cfg.adversary = "median_attack";
  const SampleStream s = make_trial_stream(cfg, 0);
  EXPECT_EQ(s.corrupted_count(), 100u);
  for (std::size_t i = 0; i < s.n(); ++i) {
    if (!s.corrupted_mask()[i]) continue;
    EXPECT_EQ(s.data()(static_cast<Eigen::Index>(i), 0), 1.0);
    for (Eigen::Index t = 1; t < 5; ++t) EXPECT_EQ(s.data()(static_cast<Eigen::Index>(i), t), 1.0);  // majority is 1
  }
  Rng r(1);
  EXPECT_THROW(MedianAttackAdversary().corrupt(Matrix::Constant(10, 2, 0.5), Vector::Zero(2), 0.1, 2, 1, r),
               ConfigError);
  EXPECT_THROW(MedianAttackAdversary().corrupt(Matrix::Zero(10, 4), Vector::Zero(4), 0.1, 2, 2, r), ConfigError);
}

TEST(Staircase, PointsBlocksAndTags) {
  EXPECT_EQ(StaircaseAdversary::block_size(0.1, 1000, 16), 6u);
  EXPECT_EQ(StaircaseAdversary::block_size(0.1, 1600, 16), 10u);
  const Vector p = StaircaseAdversary::point(3, 4);
  EXPECT_NEAR(p(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0, 1e-15);
  EXPECT_NEAR(p(2), 2.0, 1e-15);
  EXPECT_EQ(p(3), 0.0);

  const SampleStream s = staircase_stream(1600, 8, 0.1, 3);
  const std::size_t b = 20;
  std::vector<std::size_t> per_tag(9, 0);
  for (std::size_t i = 0; i < s.n(); ++i) {
    const int tag = s.tags()[i];
    EXPECT_EQ(tag >= 1, static_cast<bool>(s.corrupted_mask()[i]));
    if (tag < 1) continue;
    ++per_tag[static_cast<std::size_t>(tag)];
    const Vector want = StaircaseAdversary::point(static_cast<std::size_t>(tag), 8) + s.true_mean();
    EXPECT_LE((s.data().row(static_cast<Eigen::Index>(i)).transpose() - want).cwiseAbs().maxCoeff(), 1e-12);
  }
  for (std::size_t i = 1; i <= 8; ++i) EXPECT_EQ(per_tag[i], b);
  EXPECT_THROW(staircase_stream(50, 8, 0.1, 3), ConfigError);
}

TEST(Staircase, LowerBoundSumAndGrowth) {
  for (std::size_t T : {1u, 4u, 16u, 256u}) {
    double direct = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      double H = 0.0;
      for (std::size_t k = 1; k <= T - t + 1; ++k) H += 1.0 / static_cast<double>(k);
      direct += 0.01 / static_cast<double>(T) * H * H;
    }
    EXPECT_NEAR(staircase_lower_bound_sq(0.1, T), direct, 1e-12);
    if (T > 1) {
      EXPECT_GE(std::sqrt(direct), 0.2 * 0.1 * std::log(static_cast<double>(T)));
    }
  }
}

TEST(Staircase, ProbeMatchesMemberMeans) {
  const SampleStream s = staircase_stream(3200, 8, 0.1, 5);
  StaircaseProbe probe;
  probe.set_tags(&s.tags());
  const auto tr = replay(s, probe);
  for (std::size_t t = 1; t <= 8; ++t) {
    const auto keep = staircase_members(s.tags(), t);
    double sum = 0.0, cnt = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i)
      if (keep[i]) sum += s.data()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t - 1)), cnt += 1;
    EXPECT_NEAR(tr.estimates[t - 1](0), sum / cnt, 1e-12);
  }
  StaircaseProbe blind;
  EXPECT_THROW(replay(s, blind), ConfigError);
}

TEST(Staircase, TruncatedCovarianceMatchesDirectComputation) {
  const std::size_t T = 6, n = 1200;
  const double eps = 0.1;
  const SampleStream s = staircase_stream(n, T, eps, 9);
  Matrix clean(static_cast<Eigen::Index>(s.n() - s.corrupted_count()), static_cast<Eigen::Index>(T));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < s.n(); ++i)
    if (!s.corrupted_mask()[i]) clean.row(r++) = s.data().row(static_cast<Eigen::Index>(i));
  const auto fast = staircase_truncated_cov_norms(clean, s.true_mean(), eps, T, n);
  ASSERT_EQ(fast.size(), T);
  for (std::size_t t = 1; t <= T; ++t) {
    const auto keep = staircase_members(s.tags(), t);
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < s.n(); ++i)
      if (keep[i]) rows.push_back(static_cast<Eigen::Index>(i));
    const auto k = static_cast<Eigen::Index>(t);
    Matrix Y(static_cast<Eigen::Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) Y.row(static_cast<Eigen::Index>(i)) = s.data().row(rows[i]).head(k);
    const Matrix Z = Y.rowwise() - Y.colwise().mean();
    const Matrix cov = Z.transpose() * Z / static_cast<double>(Y.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    EXPECT_NEAR(fast[t - 1], es.eigenvalues().maxCoeff(), 1e-9 * (1 + es.eigenvalues().maxCoeff()));
  }
}
