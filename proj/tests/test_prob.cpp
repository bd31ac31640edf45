#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "urnlab/prob.hpp"
#include "urnlab/rng.hpp"

using namespace urnlab;

namespace {

Categorical random_categorical(SplitMix64 &rng, int k, bool sparse = false) {
  std::vector<double> w(k);
  for (double &x : w) {
    x = rng.exponential();
    if (sparse && rng.uniform() < 0.3)
      x = 0.0;
  }
  if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0)
    w[0] = 1.0;
  return Categorical::normalized(w);
}

} // namespace

TEST(Rng, SplitMixReferenceValues) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  SplitMix64 a(42), b(42);
  for (int i = 0; i < 100; ++i)
    EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformInHalfOpenUnitInterval) {
  SplitMix64 rng(7);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Rng, InverseCdfSkipsZeroWeights) {
  const std::vector<double> w{0.0, 0.5, 0.0, 0.5};
  EXPECT_EQ(inverse_cdf(w, 0.0), 1u);
  EXPECT_EQ(inverse_cdf(w, 0.49), 1u);
  EXPECT_EQ(inverse_cdf(w, 0.5), 3u);
  EXPECT_EQ(inverse_cdf(w, 0.999999), 3u);
}

TEST(Categorical, RejectsInvalidWeights) {
  EXPECT_THROW(Categorical(std::vector<double>{}), ContractError);
  EXPECT_THROW(Categorical(std::vector<double>{0.5, 0.6}), ContractError);
  EXPECT_THROW(Categorical(std::vector<double>{1.5, -0.5}), ContractError);
  EXPECT_NO_THROW(Categorical(std::vector<double>{0.25, 0.75}));
}

TEST(Kl, Examples) {
  const auto u4 = Categorical::uniform(4);
  EXPECT_EQ(kl_divergence(u4, u4), 0.0);
  EXPECT_NEAR(kl_divergence(Categorical({1.0, 0.0}), Categorical({0.5, 0.5})), std::log(2.0), 1e-12);
  const double expect = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  EXPECT_NEAR(kl_divergence(Categorical({0.75, 0.25}), Categorical({0.5, 0.5})), expect, 1e-15);
  EXPECT_NEAR(expect, 0.1308120, 1e-7);
}

TEST(Kl, ZeroQUnderPositivePIsInfinite) {
  EXPECT_EQ(kl_divergence(Categorical({0.5, 0.5}), Categorical({1.0, 0.0})), std::numeric_limits<double>::infinity());
}

TEST(Kl, DimensionMismatchIsContractViolation) {
  EXPECT_THROW(kl_divergence(Categorical::uniform(2), Categorical::uniform(3)), ContractError);
}

TEST(Kl, GibbsAndIdentityOnRandomPairs) {
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + static_cast<int>(rng.uniform() * 16);
    const auto p = random_categorical(rng, k, true);
    const auto q = random_categorical(rng, k);
    EXPECT_EQ(kl_divergence(p, p), 0.0);
    EXPECT_GE(kl_divergence(p, q), -1e-12);
    if (!(p == q)) {
      EXPECT_GT(kl_divergence(p, q), 0.0);
    }
  }
}

TEST(DirichletMean, Examples) {
  const auto u = dirichlet_mean(TallyVector(8), 1.0);
  for (std::size_t j = 0; j < 8; ++j)
    EXPECT_DOUBLE_EQ(u[j], 0.125);
  const auto a = dirichlet_mean(TallyVector({3, 1}), 1.0);
  EXPECT_DOUBLE_EQ(a[0], 4.0 / 6);
  EXPECT_DOUBLE_EQ(a[1], 2.0 / 6);
  const auto b = dirichlet_mean(TallyVector({15, 1, 0, 0, 0, 0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(b[0], 16.0 / 24);
  EXPECT_DOUBLE_EQ(b[1], 2.0 / 24);
  for (std::size_t j = 2; j < 8; ++j)
    EXPECT_DOUBLE_EQ(b[j], 1.0 / 24);
}

TEST(DirichletMean, FractionalCountsAndBadPseudocount) {
  const std::vector<double> c{0.5, 1.5};
  const auto q = dirichlet_mean(c, 1.0);
  EXPECT_DOUBLE_EQ(q[0], 1.5 / 4);
  EXPECT_THROW(dirichlet_mean(TallyVector(2), 0.0), ContractError);
}

TEST(DirichletMean, ConvergesToFrequenciesMonotonically) {
  const Categorical p({0.5, 0.3, 0.15, 0.05});
  double prev = std::numeric_limits<double>::infinity();
  for (std::int64_t n : {20, 100, 1000, 10000, 100000, 1000000}) {
    std::vector<std::int64_t> counts(4);
    for (int j = 0; j < 4; ++j)
      counts[j] = std::llround(static_cast<double>(n) * p[j]);
    const double kl = kl_divergence(p, dirichlet_mean(TallyVector(counts), 1.0));
    EXPECT_LT(kl, prev);
    prev = kl;
  }
  EXPECT_LT(prev, 1e-10);
}

TEST(TallyVector, TotalTracksCounts) {
  TallyVector t(3);
  t.add(0);
  t.add(2, 5);
  EXPECT_EQ(t.total(), 6);
  EXPECT_EQ(t.counts()[2], 5);
  EXPECT_THROW(t.add(3), ContractError);
  EXPECT_THROW(TallyVector({1, -1}), ContractError);
}

TEST(LogLikelihood, Examples) {
  EXPECT_EQ(log_likelihood(TallyVector(3), Categorical::uniform(3)), 0.0);
  EXPECT_NEAR(log_likelihood(TallyVector({2, 1}), Categorical({0.5, 0.5})), 3 * std::log(0.5), 1e-15);
  EXPECT_NEAR(log_likelihood(TallyVector({3, 1}), Categorical({0.75, 0.25})), -2.2493406, 1e-7);
  EXPECT_EQ(log_likelihood(TallyVector({1, 1}), Categorical({1.0, 0.0})), -std::numeric_limits<double>::infinity());
}

TEST(JointFromBits, Examples) {
  const auto fair = joint_from_independent_bits(std::vector<double>{0.5, 0.5});
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_DOUBLE_EQ(fair[j], 0.25);
  // Variable 0 is the most significant bit, so pattern "10" is index 2.
  const auto det = joint_from_independent_bits(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(std::vector<double>(det.weights().begin(), det.weights().end()), (std::vector<double>{0, 0, 1, 0}));
  const auto mix = joint_from_independent_bits(std::vector<double>{0.75, 0.25, 0.5});
  EXPECT_DOUBLE_EQ(mix[0b101], 0.75 * 0.75 * 0.5);
}

TEST(JointFromBits, CapacityError) {
  EXPECT_THROW(joint_from_independent_bits(std::vector<double>(kMaxJointVars + 1, 0.5)), CapacityError);
}

TEST(Grouping, Validation) {
  EXPECT_THROW(Grouping({{0, 1}, {1, 2}}), ContractError);
  EXPECT_THROW(Grouping({{0, 1}, {2}}), ContractError);
  EXPECT_THROW(Grouping({{0, 3}}), ContractError);
  const Grouping g({{2, 0}, {1, 3}});
  EXPECT_EQ(g.num_vars(), 4);
  EXPECT_EQ(g.num_groups(), 2);
  // pattern 0b1010: var0=1, var1=0, var2=1, var3=0
  EXPECT_EQ(g.outcome(0b1010, 0), 0b11);
  EXPECT_EQ(g.outcome(0b1010, 1), 0b00);
}

TEST(JointFromGrouping, Examples) {
  const Categorical d({0.1, 0.2, 0.3, 0.4});
  const auto single = joint_from_grouping(Grouping::identity(2, 2), std::vector<Categorical>{d});
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_DOUBLE_EQ(single[j], d[j]);

  const Grouping g({{1}, {0}});
  const auto j2 = joint_from_grouping(g, std::vector<Categorical>{Categorical({0.9, 0.1}), Categorical({0.6, 0.4})});
  // var0=1 (group 1 outcome 1, weight 0.4), var1=0 (group 0 outcome 0, weight 0.9)
  EXPECT_DOUBLE_EQ(j2[0b10], 0.9 * 0.4);

  const Grouping g3({{4, 0, 2}, {5, 1, 3}});
  const auto uni = joint_from_grouping(g3, std::vector<Categorical>(2, Categorical::uniform(8)));
  for (std::size_t j = 0; j < 64; ++j)
    EXPECT_NEAR(uni[j], 1.0 / 64, 1e-15);
}

TEST(JointFromGrouping, MatchesIndependentBitsWithSingletonGroups) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int v = 1 + static_cast<int>(rng.uniform() * 10);
    std::vector<double> p(v);
    std::vector<Categorical> dists;
    for (double &x : p) {
      x = rng.uniform();
      dists.push_back(Categorical({1.0 - x, x}));
    }
    const auto a = joint_from_independent_bits(p);
    const auto b = joint_from_grouping(Grouping::identity(v, 1), dists);
    for (std::size_t j = 0; j < a.size(); ++j)
      EXPECT_NEAR(a[j], b[j], 1e-15);
  }
}

TEST(JointFromGrouping, GroupedKlDecomposes) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int s = 1 + static_cast<int>(rng.uniform() * 3);
    const int gcount = 1 + static_cast<int>(rng.uniform() * 3);
    const int v = s * gcount;
    std::vector<int> perm(v);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = v - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<int>(rng.uniform() * (i + 1))]);
    std::vector<std::vector<int>> groups(gcount);
    for (int i = 0; i < v; ++i)
      groups[i / s].push_back(perm[i]);
    const Grouping g(groups);
    std::vector<Categorical> truth, model;
    double sum = 0;
    for (int j = 0; j < gcount; ++j) {
      truth.push_back(random_categorical(rng, 1 << s, true));
      model.push_back(random_categorical(rng, 1 << s));
      sum += kl_divergence(truth[j], model[j]);
    }
    EXPECT_NEAR(kl_divergence(joint_from_grouping(g, truth), joint_from_grouping(g, model)), sum, 1e-9);
  }
}

TEST(BitMarginals, OfIndependentJointRecoversProbabilities) {
  const std::vector<double> p{0.1, 0.7, 0.4};
  const auto m = bit_marginals(joint_from_independent_bits(p), 3);
  for (int v = 0; v < 3; ++v)
    EXPECT_NEAR(m[v], p[v], 1e-15);
}

TEST(TotalVariation, Basic) {
  EXPECT_DOUBLE_EQ(total_variation(Categorical({1.0, 0.0}), Categorical({0.0, 1.0})), 1.0);
  EXPECT_DOUBLE_EQ(total_variation(Categorical({0.5, 0.5}), Categorical({0.75, 0.25})), 0.25);
}
