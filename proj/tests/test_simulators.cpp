#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>

#include "urnlab/io.hpp"
#include "urnlab/simulators.hpp"

using namespace urnlab;

namespace {

// Pearson statistic against the (1 - alpha) chi-square quantile.
bool chi_square_passes(const std::vector<std::int64_t> &observed, std::span<const double> p, double alpha) {
  double n = 0;
  for (auto o : observed)
    n += static_cast<double>(o);
  double stat = 0;
  int cells = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0) {
      if (observed[j] != 0)
        return false;
      continue;
    }
    const double e = n * p[j];
    stat += (observed[j] - e) * (observed[j] - e) / e;
    ++cells;
  }
  const boost::math::chi_squared dist(cells - 1);
  return stat < boost::math::quantile(dist, 1.0 - alpha);
}

std::string temp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / ("urnlab_sim_" + name)).string();
}

} // namespace

TEST(UrnTruth, ExplicitDistsPassThrough) {
  UrnTruthConfig cfg;
  std::vector<double> a(8, 0.0), b(8, 0.0);
  a[0] = 1.0;
  b[1] = 1.0;
  cfg.type_dists = TypePair{Categorical(a), Categorical(b)};
  const auto t = build_urn_truth(cfg, 99);
  EXPECT_EQ(t.type_dists[0], Categorical(a));
  EXPECT_EQ(t.type_dists[1], Categorical(b));
  EXPECT_EQ(t.assignment, (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(t.urn_dist(2), Categorical(a));
}

TEST(UrnTruth, DeterministicInSeed) {
  const UrnTruthConfig cfg;
  const auto a = build_urn_truth(cfg, 5);
  const auto b = build_urn_truth(cfg, 5);
  EXPECT_EQ(a.type_dists[0], b.type_dists[0]);
  EXPECT_EQ(a.type_dists[1], b.type_dists[1]);
  EXPECT_FALSE(build_urn_truth(cfg, 6).type_dists[0] == a.type_dists[0]);
}

TEST(UrnTruth, RandomTruthsRespectSeparation) {
  const UrnTruthConfig cfg;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto t = build_urn_truth(cfg, s);
    ASSERT_GE(total_variation(t.type_dists[0], t.type_dists[1]), 0.3);
  }
}

TEST(UrnTruth, UnsatisfiableSeparation) {
  UrnTruthConfig cfg;
  cfg.min_separation = 1.0;
  EXPECT_THROW(build_urn_truth(cfg, 1), ConfigError);
  cfg.min_separation = 0.999;
  cfg.max_retries = 20;
  EXPECT_THROW(build_urn_truth(cfg, 1), ConfigError);
}

TEST(UrnSample, DegenerateWeights) {
  UrnTruthConfig cfg;
  cfg.urn_weights = {1, 0, 0, 0};
  const auto t = build_urn_truth(cfg, 1);
  SplitMix64 rng(3);
  for (int i = 0; i < 1000; ++i)
    EXPECT_EQ(draw_urn_sample(t, rng).urn, 0);
}

TEST(UrnSample, TwoAdvancesPerDraw) {
  const auto t = build_urn_truth(UrnTruthConfig{}, 1);
  SplitMix64 rng(3), ref(3);
  draw_urn_sample(t, rng);
  ref.next();
  ref.next();
  EXPECT_EQ(rng.state(), ref.state());
}

TEST(UrnSample, RareUrnCountInBinomialBand) {
  const auto t = build_urn_truth(UrnTruthConfig{}, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed);
    int rare = 0;
    for (int i = 0; i < 10000; ++i)
      rare += draw_urn_sample(t, rng).urn == 0;
    EXPECT_GE(rare, 207);
    EXPECT_LE(rare, 293);
  }
}

TEST(UrnSample, DeterministicColor) {
  UrnTruthConfig cfg;
  std::vector<double> a(8, 0.0);
  a[0] = 1.0;
  cfg.type_dists = TypePair{Categorical(a), Categorical::uniform(8)};
  cfg.assignment = {0, 0, 0, 0};
  const auto t = build_urn_truth(cfg, 1);
  SplitMix64 rng(4);
  for (int i = 0; i < 500; ++i)
    EXPECT_EQ(draw_urn_sample(t, rng).color, 0);
}

TEST(UrnSample, EmpiricalColorsConverge) {
  UrnTruthConfig cfg;
  cfg.urn_weights = {0.25, 0.25, 0.25, 0.25};
  const auto t = build_urn_truth(cfg, 8);
  SplitMix64 rng(8);
  std::vector<TallyVector> tallies(4, TallyVector(8));
  for (int i = 0; i < 200000; ++i) {
    const auto s = draw_urn_sample(t, rng);
    tallies[s.urn].add(s.color);
  }
  for (int u = 0; u < 4; ++u) {
    ASSERT_GE(tallies[u].total(), 45000);
    EXPECT_LT(kl_divergence(t.urn_dist(u), dirichlet_mean(tallies[u])), 0.01);
  }
}

TEST(BitTruth, ExplicitGroupingStoredVerbatim) {
  BitVectorTruthConfig cfg;
  const Grouping g({{4, 0, 10}, {1, 7, 11}, {3, 6, 2}, {9, 5, 8}});
  cfg.grouping = g;
  const auto t = build_bitvector_truth(cfg, 3);
  EXPECT_EQ(t.grouping, g);
  EXPECT_EQ(t.assignment, (std::vector<int>{0, 1, 0, 1}));
}

TEST(BitTruth, DeterministicAndCovering) {
  const BitVectorTruthConfig cfg;
  const auto a = build_bitvector_truth(cfg, 17);
  const auto b = build_bitvector_truth(cfg, 17);
  EXPECT_EQ(a.grouping, b.grouping);
  EXPECT_EQ(a.type_dists[0], b.type_dists[0]);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto t = build_bitvector_truth(cfg, s);
    std::vector<int> seen(12, 0);
    for (const auto &grp : t.grouping.groups())
      for (int x : grp)
        ++seen[x];
    for (int c : seen)
      ASSERT_EQ(c, 1);
    ASSERT_GE(total_variation(t.type_dists[0], t.type_dists[1]), 0.3);
  }
}

TEST(BitTruth, RandomProductIsIndependentWithinGroup) {
  BitVectorTruthConfig cfg;
  cfg.mode = TypeDistMode::random_product;
  cfg.min_separation = 0.1;
  const auto t = build_bitvector_truth(cfg, 2);
  for (const auto &d : t.type_dists) {
    const auto m = bit_marginals(d, 3);
    const auto prod = joint_from_independent_bits(m);
    EXPECT_LT(kl_divergence(d, prod), 1e-12);
  }
}

TEST(BitTruth, RejectsBadShape) {
  BitVectorTruthConfig cfg;
  cfg.num_vars = 11;
  EXPECT_THROW(build_bitvector_truth(cfg, 1), ConfigError);
}

TEST(DrawBitvector, PointMassOutcomeSix) {
  BitVectorTruthConfig cfg;
  cfg.mode = TypeDistMode::explicit_dists;
  const auto six = Categorical::point_mass(8, 6);
  cfg.type_dists = TypePair{six, six};
  const auto t = build_bitvector_truth(cfg, 4);
  SplitMix64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto x = draw_bitvector(t, rng);
    for (const auto &grp : t.grouping.groups()) {
      EXPECT_EQ(bit_of(x, grp[0], 12), 1);
      EXPECT_EQ(bit_of(x, grp[1], 12), 1);
      EXPECT_EQ(bit_of(x, grp[2], 12), 0);
    }
  }
}

TEST(DrawBitvector, GAdvancesAndDeterminism) {
  const auto t = build_bitvector_truth(BitVectorTruthConfig{}, 4);
  SplitMix64 a(9), b(9), ref(9);
  EXPECT_EQ(draw_bitvector(t, a), draw_bitvector(t, b));
  for (int i = 0; i < 4; ++i)
    ref.next();
  EXPECT_EQ(a.state(), ref.state());
}

TEST(DrawBitvector, UniformTypesGiveUniformJoint) {
  BitVectorTruthConfig cfg;
  cfg.mode = TypeDistMode::explicit_dists;
  cfg.type_dists = TypePair{Categorical::uniform(8), Categorical::uniform(8)};
  const auto t = build_bitvector_truth(cfg, 4);
  SplitMix64 rng(21);
  std::vector<std::int64_t> counts(4096, 0);
  for (int i = 0; i < 40960; ++i)
    ++counts[draw_bitvector(t, rng)];
  EXPECT_TRUE(chi_square_passes(counts, std::vector<double>(4096, 1.0 / 4096), 0.001));
}

TEST(DrawBitvector, GroupMarginalMatchesTypeDist) {
  const auto t = build_bitvector_truth(BitVectorTruthConfig{}, 12);
  SplitMix64 rng(22);
  std::vector<std::vector<std::int64_t>> counts(4, std::vector<std::int64_t>(8, 0));
  for (int i = 0; i < 40960; ++i) {
    const auto x = draw_bitvector(t, rng);
    for (int j = 0; j < 4; ++j)
      ++counts[j][t.grouping.outcome(x, j)];
  }
  for (int j = 0; j < 4; ++j)
    EXPECT_TRUE(chi_square_passes(counts[j], t.group_dist(j).weights(), 0.001)) << "group " << j;
}

TEST(TrueJoint, Examples) {
  BitVectorTruthConfig cfg;
  cfg.num_vars = 3;
  cfg.num_groups = 1;
  cfg.group_size = 3;
  cfg.grouping = Grouping::identity(3, 3);
  const auto single = build_bitvector_truth(cfg, 1);
  EXPECT_EQ(true_joint(single), single.type_dists[0]);

  BitVectorTruthConfig u;
  u.mode = TypeDistMode::explicit_dists;
  u.type_dists = TypePair{Categorical::uniform(8), Categorical::uniform(8)};
  const auto uj = true_joint(build_bitvector_truth(u, 1));
  for (std::size_t x = 0; x < uj.size(); ++x)
    EXPECT_NEAR(uj[x], 1.0 / 4096, 1e-18);

  const auto full = true_joint(build_bitvector_truth(BitVectorTruthConfig{}, 77));
  double sum = 0;
  for (double w : full.weights())
    sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Dataset, EmptyRoundTrip) {
  const auto path = temp_path("empty.jsonl");
  write_dataset(path, std::span<const UrnSample>{});
  EXPECT_EQ(read_file(path), "");
  const auto d = read_dataset(path);
  EXPECT_EQ(d.kind, DatasetKind::empty);
  EXPECT_TRUE(d.urns.empty());
  EXPECT_TRUE(d.bits.empty());
}

TEST(Dataset, UrnRoundTrip) {
  const std::vector<UrnSample> s{{0, 4}, {1, 2}, {0, 6}};
  const auto path = temp_path("urns.jsonl");
  write_dataset(path, s);
  EXPECT_EQ(read_file(path), "{\"urn\":1,\"color\":5}\n{\"urn\":2,\"color\":3}\n{\"urn\":1,\"color\":7}\n");
  const auto d = read_dataset(path);
  EXPECT_EQ(d.kind, DatasetKind::urns);
  EXPECT_EQ(d.urns, s);
}

TEST(Dataset, BitRoundTrip) {
  const auto t = build_bitvector_truth(BitVectorTruthConfig{}, 5);
  SplitMix64 rng(5);
  std::vector<BitPattern> data;
  for (int i = 0; i < 10000; ++i)
    data.push_back(draw_bitvector(t, rng));
  const auto path = temp_path("bits.jsonl");
  write_dataset(path, data, 12);
  const auto d = read_dataset(path);
  EXPECT_EQ(d.kind, DatasetKind::bits);
  EXPECT_EQ(d.num_vars, 12);
  EXPECT_EQ(d.bits, data);
  EXPECT_EQ(bits_to_string(0b100000000001, 12), "100000000001");
}

TEST(Dataset, MalformedLineNamesLine) {
  try {
    parse_dataset("{\"urn\":1,\"color\":2}\n{\"urn\":1}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError &e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_dataset("{\"bits\":\"0102\"}\n"), ParseError);
  EXPECT_THROW(parse_dataset("{\"bits\":\"01\"}\n{\"bits\":\"011\"}\n"), ParseError);
  EXPECT_THROW(parse_dataset("not json\n"), ParseError);
}

TEST(ModelFile, RoundTripAndDeterministicBytes) {
  const auto t = build_bitvector_truth(BitVectorTruthConfig{}, 31);
  const auto a = model_to_json(t).dump(2);
  EXPECT_EQ(a, model_to_json(build_bitvector_truth(BitVectorTruthConfig{}, 31)).dump(2));
  const auto back = std::get<BitVectorTruth>(model_from_json(json::parse(a)));
  EXPECT_EQ(back.grouping, t.grouping);
  EXPECT_EQ(back.assignment, t.assignment);
  EXPECT_EQ(back.type_dists[0], t.type_dists[0]);
  EXPECT_EQ(back.type_dists[1], t.type_dists[1]);

  const auto u = build_urn_truth(UrnTruthConfig{}, 31);
  const auto ub = std::get<UrnTruth>(model_from_json(model_to_json(u)));
  EXPECT_EQ(ub.type_dists[0], u.type_dists[0]);
  EXPECT_EQ(ub.urn_weights, u.urn_weights);
}

TEST(ModelFile, BadFieldsAreNamed) {
  auto j = model_to_json(build_urn_truth(UrnTruthConfig{}, 1));
  j["assignment"] = {"a", "c", "a", "b"};
  try {
    model_from_json(j);
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_NE(std::string(e.what()).find("assignment"), std::string::npos) << e.what();
  }
  j = model_to_json(build_urn_truth(UrnTruthConfig{}, 1));
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), ParseError);
}
