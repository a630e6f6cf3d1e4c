#include "support.hpp"

using namespace orme;
using orme::testing::clean_stream;
using orme::testing::gaussian_matrix;

namespace {

SampleStream shifted_stream(std::size_t n, std::size_t T, double eps, std::uint64_t seed, double magnitude = 10.0) {
  ExperimentConfig cfg;
  cfg.n = n, cfg.T = T, cfg.epsilon = eps, cfg.seed = seed;
  cfg.adversary = "mean_shift";
  cfg.adversary_params = {{"magnitude", magnitude}};
  return make_trial_stream(cfg, 0);
}

FilterOptions default_options(double eps = 0.1) {
  ExperimentConfig cfg;
  cfg.epsilon = eps;
  FilterOptions o = filter_options(cfg);
  o.keep_history = true;
  return o;
}

}  // namespace

TEST(WFilterStep, ZeroesArgmaxAndScalesOthers) {
  const auto w = wfilter_step({4.0, 1.0, 0.0, 2.0}, {0.25, 0.25, 0.25, 0.1});
  EXPECT_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[1], 0.25 * 0.75);
  EXPECT_DOUBLE_EQ(w[2], 0.25);
  EXPECT_DOUBLE_EQ(w[3], 0.1 * 0.5);
  EXPECT_THROW(wfilter_step({0.0, 0.0}, {1.0, 1.0}), ConfigError);
  EXPECT_THROW(wfilter_step({1.0}, {1.0, 1.0}), ConfigError);
  EXPECT_THROW(wfilter_step({-1.0, 2.0}, {1.0, 1.0}), ConfigError);
}

TEST(SelectFilterSet, MatchesPrefixDefinition) {
  Rng r(5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + r.below(20);
    std::vector<double> s(n), w(n);
    for (auto& x : s) x = 5.0 * r.uniform();
    for (auto& x : w) x = r.uniform() / static_cast<double>(n);
    std::sort(s.rbegin(), s.rend());
    const double eps = 0.05 + 0.4 * r.uniform(), lambda = 2.0 * r.uniform();
    for (BetaRule rule : {BetaRule::Literal, BetaRule::Weighted}) {
      double total = 0.0;
      for (double x : w) total += x;
      const double thr = rule == BetaRule::Literal ? 2 * eps : 2 * eps * total * (1 + lambda);
      std::size_t want = n;
      for (std::size_t b = 1; b <= n; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < b; ++i) acc += rule == BetaRule::Literal ? s[i] : s[i] * w[i];
        if (acc > thr) {
          want = b;
          break;
        }
      }
      EXPECT_EQ(select_filter_set(s, w, eps, rule, lambda), want);
    }
  }
}

TEST(BetaRule, Parse) {
  EXPECT_EQ(parse_beta_rule("weighted"), BetaRule::Weighted);
  EXPECT_EQ(parse_beta_rule("literal"), BetaRule::Literal);
  EXPECT_THROW(parse_beta_rule("other"), ConfigError);
}

TEST(FilterState, NoFilteringWhenCovarianceIsSmall) {
  const Matrix X = gaussian_matrix(500, 3, 2);
  FilterOptions o = default_options();
  o.lambda = 100.0;
  FilterState f(500, 3, o);
  const Vector mu = f.round(X);
  EXPECT_EQ(f.iterations(), 0u);
  EXPECT_LE((mu - X.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(f.weights().sum(), 1.0, 1e-12);
}

TEST(FilterState, RejectsBadOptions) {
  FilterOptions o;
  o.lambda = 0.0;
  EXPECT_THROW(FilterState(10, 1, o), ConfigError);
  o.lambda = 1.0;
  o.epsilon = 0.5;
  EXPECT_THROW(FilterState(10, 1, o), ConfigError);
}

TEST(FilterState, WeightCollapseIsAnAssumptionViolation) {
  // Variance 9 everywhere: no subset with half the mass has covariance <= 1.01.
  const Matrix X = gaussian_matrix(200, 1, 3, 3.0);
  FilterOptions o = default_options();
  o.lambda = 0.01;
  FilterState f(200, 1, o);
  EXPECT_THROW(f.round(X), AssumptionViolation);
}

TEST(OnlineFilter, InvariantsUnderMeanShift) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SampleStream s = shifted_stream(1000, 16, 0.1, seed, 30.0);
    OnlineFilterEstimator est(default_options());
    Vector prev = Vector::Constant(1000, 1.0 / 1000);
    for (std::size_t t = 1; t <= s.T(); ++t) {
      est.observe_block(t, RevealedView(s, t));
      const auto& st = est.state();
      EXPECT_LE(st.cov_norm(), 1.0 + st.options().lambda + 1e-9);
      EXPECT_TRUE(((st.weights() - prev).array() <= 0.0).all()) << "weights grew at round " << t;
      EXPECT_GE(st.weights().sum(), 0.5);
      prev = st.weights();
    }
    // Mass removed from corrupted rows dominates the clean loss.
    double clean_removed = 0.0, bad_removed = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) {
      const double lost = 1.0 / 1000 - prev(static_cast<Eigen::Index>(i));
      (s.corrupted_mask()[i] ? bad_removed : clean_removed) += lost;
    }
    EXPECT_GT(bad_removed, 0.0);
    EXPECT_LE(clean_removed, bad_removed);
  }
}

TEST(OnlineFilter, BeatsSampleMeanUnderShift) {
  const SampleStream s = shifted_stream(2000, 32, 0.1, 9, 30.0);
  const auto filt = run_online_filter(s, default_options());
  SampleMeanEstimator sm;
  const auto base = replay(s, sm);
  EXPECT_LT(l2_error(filt, s.true_mean()), 0.6 * l2_error(base, s.true_mean()));
}

TEST(OnlineFilter, WeightDifferenceBound) {
  // ||mu(w_t, x_t) - mu(w_t', x_t)||^2 <= C0 (delta^2 / eps) ||w_t - w_t'||_1.
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SampleStream s = shifted_stream(1000, 24, 0.1, seed, 30.0);
    FilterOptions o = default_options();
    OnlineFilterEstimator est(o);
    replay(s, est);
    const auto& H = est.state().history();
    const double delta = 0.1 * std::sqrt(std::log(10.0));
    for (std::size_t t = 0; t < H.size(); ++t)
      for (std::size_t u = t + 1; u < H.size(); ++u) {
        const double dw = (H[t] - H[u]).lpNorm<1>();
        if (dw <= 1e-12) continue;
        const auto X = s.data().leftCols(static_cast<Eigen::Index>(t + 1));
        const double diff = (weighted_mean(H[t], X) - weighted_mean(H[u], X)).squaredNorm();
        worst = std::max(worst, diff / (delta * delta / 0.1 * dw));
      }
  }
  RecordProperty("fitted_C0", std::to_string(worst));
  EXPECT_TRUE(std::isfinite(worst));
  EXPECT_LE(worst, 50.0);
}

TEST(OnlineFilter, DeterministicAndMatchesOfflineForOneRound) {
  const SampleStream s = shifted_stream(400, 1, 0.1, 4);
  const auto a = run_online_filter(s, default_options());
  const auto off = offline_filter(s.data(), default_options());
  EXPECT_LE((a.estimates[0] - off.mean).cwiseAbs().maxCoeff(), 1e-14);
  const auto b = run_online_filter(s, default_options());
  EXPECT_EQ(a.estimates[0](0), b.estimates[0](0));
}

TEST(NaiveFilter, EachRoundIsAnIndependentOfflineFilter) {
  const SampleStream s = shifted_stream(500, 6, 0.1, 8);
  const auto tr = run_naive_per_round_filter(s, default_options());
  for (std::size_t t = 1; t <= s.T(); ++t) {
    const auto off = offline_filter(Matrix(s.block(t)), default_options());
    EXPECT_LE((tr.estimates[t - 1] - off.mean).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(*tr.diagnostics[t - 1].total_weight, off.weights.sum(), 1e-14);
  }
}

TEST(OnlineFilter, ReportsDiagnostics) {
  const SampleStream s = clean_stream(gaussian_matrix(300, 4, 1), 4, 1);
  const auto tr = run_online_filter(s, default_options());
  for (const auto& d : tr.diagnostics) {
    ASSERT_TRUE(d.cov_norm.has_value());
    ASSERT_TRUE(d.total_weight.has_value());
    EXPECT_FALSE(d.potential.has_value());
  }
}

TEST(OnlineFilter, LiteralRuleAlsoCertifies) {
  const SampleStream s = shifted_stream(800, 8, 0.1, 2, 30.0);
  FilterOptions o = default_options();
  o.rule = BetaRule::Literal;
  OnlineFilterEstimator est(o);
  const auto tr = replay(s, est);
  for (const auto& d : tr.diagnostics) EXPECT_LE(*d.cov_norm, 1.0 + o.lambda + 1e-9);
}
