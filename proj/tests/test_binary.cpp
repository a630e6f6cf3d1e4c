#include "support.hpp"

#include <map>

using namespace orme;

namespace {

// Independent re-implementation of the estimator: groups are explicit
// histories (strings of noisy bits), means capped at gamma, lower weighted
// median over groups, and the inverse noise map.
struct ReferenceBinary {
  double gamma;
  std::vector<std::string> history;

  ReferenceBinary(std::size_t n, double g) : gamma(g), history(n) {}

  double step(const std::vector<std::uint8_t>& bits, const std::vector<double>& coins) {
    std::vector<int> noisy(bits.size());
    for (std::size_t j = 0; j < bits.size(); ++j)
      noisy[j] = coins[j] < gamma / 4 ? 1 : (coins[j] < 0.5 ? 0 : bits[j]);
    std::map<std::string, std::pair<double, double>> groups;  // sum, size
    for (std::size_t j = 0; j < bits.size(); ++j) {
      auto& g = groups[history[j]];
      g.first += noisy[j];
      g.second += 1;
    }
    std::vector<std::pair<double, double>> est;  // (capped mean, size)
    for (auto& [k, g] : groups) est.emplace_back(std::min(gamma, g.first / g.second), g.second);
    std::sort(est.begin(), est.end());
    double total = 0, acc = 0, med = est.back().first;
    for (auto& e : est) total += e.second;
    for (auto& e : est) {
      acc += e.second;
      if (acc >= total / 2) {
        med = e.first;
        break;
      }
    }
    for (std::size_t j = 0; j < bits.size(); ++j) history[j] += static_cast<char>('0' + noisy[j]);
    return 2 * med - gamma / 2;
  }
};

std::vector<std::uint8_t> random_bits(std::size_t n, double p, Rng& r) {
  std::vector<std::uint8_t> b(n);
  for (auto& x : b) x = r.uniform() < p;
  return b;
}

SampleStream median_attack_stream(std::size_t T, double eps, double factor, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.T = T, cfg.epsilon = eps, cfg.seed = seed;
  cfg.n_pow2_factor = factor;
  cfg.generator = "binary_product";
  cfg.adversary = "median_attack";
  return make_trial_stream(cfg, 0);
}

}  // namespace

TEST(NoiseStep, Thresholds) {
  EXPECT_EQ(apply_noise(0, 0.0, 0.5), 1);
  EXPECT_EQ(apply_noise(0, 0.1249, 0.5), 1);
  EXPECT_EQ(apply_noise(1, 0.125, 0.5), 0);
  EXPECT_EQ(apply_noise(1, 0.4999, 0.5), 0);
  EXPECT_EQ(apply_noise(1, 0.5, 0.5), 1);
  EXPECT_EQ(apply_noise(0, 0.9, 0.5), 0);
}

TEST(NoiseStep, InverseMapAndFrequencies) {
  for (double g : {0.1, 0.5, 0.9})
    for (double m : {0.0, 0.3, 1.0}) EXPECT_NEAR(noise_inverse(noise_forward(m, g), g), m, 1e-15);
  std::vector<std::vector<std::uint8_t>> bits{std::vector<std::uint8_t>(200000, 0),
                                              std::vector<std::uint8_t>(200000, 1)};
  const auto noisy = add_label_noise(bits, 0.4, Rng(3));
  double ones0 = 0, ones1 = 0;
  for (auto b : noisy.bits[0]) ones0 += b;
  for (auto b : noisy.bits[1]) ones1 += b;
  EXPECT_NEAR(ones0 / 200000, 0.1, 0.003);        // gamma / 4
  EXPECT_NEAR(ones1 / 200000, 0.6, 0.003);        // gamma / 4 + 1/2
  EXPECT_NEAR(noisy.inverse(ones1 / 200000), 1.0, 0.01);
}

TEST(Potential, KernelAndAggregation) {
  const double g = 0.5, e = 0.02, r = e / g;  // knot at 0.4
  EXPECT_DOUBLE_EQ(g_gamma(0.5 * r, g, e), 0.25 * r * r);
  EXPECT_NEAR(g_gamma(10 * r, g, e), 100 * r * r, 1e-15);  // continuous at the knot
  EXPECT_DOUBLE_EQ(g_gamma(0.9, g, e), 20 * r * 0.9 - 100 * r * r);
  EXPECT_THROW(g_gamma(1.5, g, e), ConfigError);
  // Convexity on a grid.
  for (double x = 0.01; x < 0.99; x += 0.01)
    EXPECT_LE(g_gamma(x, g, e), 0.5 * (g_gamma(x - 0.01, g, e) + g_gamma(x + 0.01, g, e)) + 1e-15);
  const double phi = potential({10, 30}, {5, 0}, g, e);
  EXPECT_NEAR(phi, (g_gamma(0.5, g, e) * 10) / 40, 1e-15);
  EXPECT_THROW(potential({1}, {1, 2}, g, e), ConfigError);
}

TEST(GroupEstimate, CapsAtGamma) {
  EXPECT_DOUBLE_EQ(group_estimate({0, 1, 2}, {1, 1, 0}, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(group_estimate({0, 1, 2}, {1, 0, 0}, 0.5), 1.0 / 3.0);
  EXPECT_THROW(group_estimate({}, {1}, 0.5), ConfigError);
}

TEST(BinaryProductCore, MatchesReferenceImplementation) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const std::size_t n = 600;
    Rng data(seed);
    BinaryProductCore core(n, 0.5, 0.05, Rng(seed + 10));
    ReferenceBinary ref(n, 0.5);
    Rng coins(seed + 20);
    for (std::size_t t = 0; t < 8; ++t) {
      const auto bits = random_bits(n, 0.1 + 0.03 * static_cast<double>(t), data);
      std::vector<double> u(n);
      for (auto& x : u) x = coins.uniform();
      EXPECT_DOUBLE_EQ(core.step(bits, u), ref.step(bits, u));
      std::map<std::string, int> distinct;
      for (auto& h : ref.history) distinct[h]++;
      EXPECT_EQ(core.group_count(), distinct.size());
    }
  }
}

TEST(BinaryProductCore, GroupTreeProperties) {
  const std::size_t n = 2000;
  BinaryProductCore core(n, 0.5, 0.05, Rng(1));
  Rng data(2);
  for (std::size_t t = 1; t <= 10; ++t) {
    core.step(random_bits(n, 0.3, data));
    EXPECT_LE(core.group_count(), std::size_t{1} << t);
    std::size_t total = 0;
    for (auto s : core.group_sizes()) total += s;
    EXPECT_EQ(total, n);
  }
  EXPECT_THROW(BinaryProductCore(0, 0.5, 0.05, Rng(1)), ConfigError);
  EXPECT_THROW(BinaryProductCore(5, 1.0, 0.05, Rng(1)), ConfigError);
  EXPECT_THROW(core.step(std::vector<std::uint8_t>(3)), ConfigError);
  EXPECT_THROW(core.step(std::vector<std::uint8_t>(n, 2)), ConfigError);
}

TEST(BinaryProductCore, RoundCap) {
  BinaryProductCore core(4, 0.5, 0.05, Rng(1));
  for (std::size_t t = 0; t < kMaxBinaryRounds; ++t) core.step({0, 1, 0, 1});
  EXPECT_THROW(core.step({0, 1, 0, 1}), ConfigError);
}

TEST(BinaryProductEstimator, CleanDataIsAccurate) {
  ExperimentConfig cfg;
  cfg.T = 8, cfg.n = 20000, cfg.generator = "binary_product";
  const SampleStream s = make_trial_stream(cfg, 0);
  const auto tr = run_binary_product(s, 0.5, 0.05, Rng(4));
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(tr.estimates[t](0), s.true_mean()(static_cast<Eigen::Index>(t)), 0.03);
}

TEST(BinaryProductEstimator, RejectsNonBinaryAndWideBlocks) {
  const auto s = orme::testing::clean_stream(orme::testing::gaussian_matrix(50, 2, 1), 2, 1);
  BinaryProductEstimator est(0.5, 0.05, Rng(1));
  EXPECT_THROW(replay(s, est), ConfigError);
  const SampleStream w(Matrix::Zero(10, 2), 1, 2, std::vector<bool>(10), Vector::Zero(2), 0.1);
  BinaryProductEstimator est2(0.5, 0.05, Rng(1));
  EXPECT_THROW(replay(w, est2), ConfigError);
}

TEST(BinaryProductEstimator, PotentialMechanicsUnderMedianAttack) {
  const double eps = 0.05, gamma = 0.5;
  double min_ratio = INFINITY;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SampleStream s = median_attack_stream(8, eps, 100, seed);
    BinaryProductEstimator est(gamma, eps, Rng(seed));
    const auto tr = replay(s, est);
    const auto& phi = est.core().potentials();
    ASSERT_EQ(phi.size(), s.T() + 1);
    for (std::size_t k = 1; k < phi.size(); ++k) EXPECT_GE(phi[k], phi[k - 1] - 1e-12);
    EXPECT_LE(phi.back(), 25 * std::min(eps, eps * eps / gamma));
    for (std::size_t t = 1; t < s.T(); ++t) {
      const double err = std::abs(tr.estimates[t - 1](0) - s.true_mean()(static_cast<Eigen::Index>(t - 1)));
      if (err < 2 * std::min(eps, gamma) / static_cast<double>(s.T())) continue;
      const double eta = err / 2;  // noisy scale
      min_ratio = std::min(min_ratio, (phi[t] - phi[t - 1]) * gamma / (eta * eta));
    }
    // Diagnostics expose Phi of the partition used in round t.
    for (std::size_t t = 1; t <= s.T(); ++t) EXPECT_DOUBLE_EQ(*tr.diagnostics[t - 1].potential, phi[t - 1]);
    EXPECT_LE(l2_error(tr, s.true_mean()), 5 * std::min(eps, std::sqrt(gamma * eps)));
  }
  if (std::isfinite(min_ratio)) RecordProperty("min_increment_ratio", std::to_string(min_ratio));
}

TEST(BinaryProductEstimator, Deterministic) {
  const SampleStream s = median_attack_stream(6, 0.05, 50, 3);
  const auto a = run_binary_product(s, 0.5, 0.05, Rng(9));
  const auto b = run_binary_product(s, 0.5, 0.05, Rng(9));
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(a.estimates[t](0), b.estimates[t](0));
}

TEST(ColumnBits, RejectsNonBits) {
  Matrix B(3, 1);
  B << 0, 1, 0.5;
  EXPECT_THROW(column_bits(B), ConfigError);
  B(2, 0) = 1;
  EXPECT_EQ(column_bits(B), (std::vector<std::uint8_t>{0, 1, 1}));
}
