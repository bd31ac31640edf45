#pragma once
// Hidden ground truths for the four-urns and bit-vector setups, plus the
// samplers that stream observations out of them.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "urnlab/error.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/rng.hpp"

namespace urnlab {

inline constexpr int kNumTypes = 2;

inline char type_name(int label) { return static_cast<char>('a' + label); }

using TypePair = std::array<Categorical, kNumTypes>;

//==============================================================================
// Four urns

struct UrnTruthConfig {
  int num_colors = 8;
  std::vector<double> urn_weights{0.025, 0.325, 0.325, 0.325};
  double min_separation = 0.3;
  //! Explicit type distributions are used verbatim; the separation check
  //! applies only to random draws.
  std::optional<TypePair> type_dists;
  std::vector<int> assignment{0, 1, 0, 1};
  int max_retries = 1000;
};

struct UrnTruth {
  TypePair type_dists;
  std::vector<int> assignment;
  Categorical urn_weights;

  int num_urns() const { return static_cast<int>(assignment.size()); }
  int num_colors() const { return static_cast<int>(type_dists[0].size()); }
  const Categorical &urn_dist(int urn) const { return type_dists[assignment[urn]]; }
};

struct UrnSample {
  int urn = 0;
  int color = 0;
  bool operator==(const UrnSample &) const = default;
};

//==============================================================================
// Bit vectors

enum class TypeDistMode {
  random,         //!< flat Dirichlet over 2^S outcomes
  random_product, //!< product of S independent bits, P(bit) ~ U(0,1)
  explicit_dists,
};

struct BitVectorTruthConfig {
  int num_vars = 12;
  int num_groups = 4;
  int group_size = 3;
  double min_separation = 0.3;
  TypeDistMode mode = TypeDistMode::random;
  std::optional<TypePair> type_dists;
  //! Empty means alternating a, b, a, b, ...
  std::vector<int> assignment;
  //! Empty means a uniformly random ordered grouping.
  std::optional<Grouping> grouping;
  int max_retries = 1000;
};

struct BitVectorTruth {
  Grouping grouping;
  TypePair type_dists;
  std::vector<int> assignment;

  int num_vars() const { return grouping.num_vars(); }
  const Categorical &group_dist(int j) const { return type_dists[assignment[j]]; }
};

//==============================================================================

namespace detail {

inline Categorical flat_dirichlet(SplitMix64 &rng, int k) {
  std::vector<double> w(k);
  for (double &x : w)
    x = rng.exponential();
  return Categorical::normalized(std::move(w));
}

inline Categorical random_product(SplitMix64 &rng, int bits) {
  std::vector<double> p(bits);
  for (double &x : p)
    x = rng.uniform();
  return joint_from_independent_bits(p);
}

template <class Draw>
TypePair draw_separated_pair(Draw &&draw, double min_separation, int max_retries) {
  if (min_separation >= 1.0)
    throw ConfigError("min_separation " + std::to_string(min_separation) +
                      " is unsatisfiable (total variation is always below 1)");
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    Categorical pa = draw();
    Categorical pb = draw();
    if (total_variation(pa, pb) >= min_separation)
      return {std::move(pa), std::move(pb)};
  }
  throw ConfigError("could not draw type distributions with total variation >= " +
                    std::to_string(min_separation) + " in " + std::to_string(max_retries) +
                    " attempts");
}

inline void check_assignment(const std::vector<int> &a, std::size_t n) {
  if (a.size() != n)
    throw ConfigError("assignment must have " + std::to_string(n) + " entries");
  for (int x : a)
    if (x < 0 || x >= kNumTypes)
      throw ConfigError("assignment labels must be 'a' or 'b'");
}

} // namespace detail

//! Deterministic in (config, seed).
inline UrnTruth build_urn_truth(const UrnTruthConfig &cfg, std::uint64_t seed) {
  if (cfg.num_colors < 1)
    throw ConfigError("num_colors must be positive");
  detail::check_assignment(cfg.assignment, cfg.urn_weights.size());
  UrnTruth truth{.type_dists = {}, .assignment = cfg.assignment, .urn_weights = Categorical(cfg.urn_weights)};
  if (cfg.type_dists) {
    for (const auto &d : *cfg.type_dists)
      if (static_cast<int>(d.size()) != cfg.num_colors)
        throw ConfigError("type_dists must have num_colors entries");
    truth.type_dists = *cfg.type_dists;
    return truth;
  }
  SplitMix64 rng(seed);
  truth.type_dists = detail::draw_separated_pair(
      [&] { return detail::flat_dirichlet(rng, cfg.num_colors); }, cfg.min_separation,
      cfg.max_retries);
  return truth;
}

//! Two RNG advances: urn by inverse CDF over the urn weights, then color.
inline UrnSample draw_urn_sample(const UrnTruth &truth, SplitMix64 &rng) {
  const double u_urn = rng.uniform();
  const double u_color = rng.uniform();
  UrnSample s;
  s.urn = static_cast<int>(inverse_cdf(truth.urn_weights.weights(), u_urn));
  s.color = static_cast<int>(inverse_cdf(truth.urn_dist(s.urn).weights(), u_color));
  return s;
}

//! Seeded Fisher-Yates over 0..V-1, chunked into G ordered groups.
inline Grouping random_grouping(SplitMix64 &rng, int num_vars, int group_size) {
  std::vector<int> idx(num_vars);
  for (int i = 0; i < num_vars; ++i)
    idx[i] = i;
  for (int i = num_vars - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::vector<int>> g(num_vars / group_size);
  for (int i = 0; i < num_vars; ++i)
    g[i / group_size].push_back(idx[i]);
  return Grouping(std::move(g));
}

inline BitVectorTruth build_bitvector_truth(const BitVectorTruthConfig &cfg, std::uint64_t seed) {
  if (cfg.group_size < 1 || cfg.num_groups < 1 || cfg.num_vars != cfg.num_groups * cfg.group_size)
    throw ConfigError("bit-vector truth requires V = G * S with G, S >= 1");
  if (cfg.num_vars > 64)
    throw CapacityError("bit patterns are limited to 64 variables");

  SplitMix64 rng(seed);
  BitVectorTruth truth;
  if (cfg.grouping) {
    if (cfg.grouping->num_vars() != cfg.num_vars || cfg.grouping->group_size() != cfg.group_size)
      throw ConfigError("grouping does not match V, G, S");
    truth.grouping = *cfg.grouping;
  } else {
    truth.grouping = random_grouping(rng, cfg.num_vars, cfg.group_size);
  }

  if (cfg.assignment.empty()) {
    truth.assignment.resize(cfg.num_groups);
    for (int j = 0; j < cfg.num_groups; ++j)
      truth.assignment[j] = j % kNumTypes;
  } else {
    detail::check_assignment(cfg.assignment, cfg.num_groups);
    truth.assignment = cfg.assignment;
  }

  const int k = 1 << cfg.group_size;
  switch (cfg.mode) {
  case TypeDistMode::explicit_dists:
    if (!cfg.type_dists)
      throw ConfigError("explicit type_dists mode without distributions");
    for (const auto &d : *cfg.type_dists)
      if (static_cast<int>(d.size()) != k)
        throw ConfigError("type_dists must have 2^S entries");
    truth.type_dists = *cfg.type_dists;
    break;
  case TypeDistMode::random:
    truth.type_dists = detail::draw_separated_pair(
        [&] { return detail::flat_dirichlet(rng, k); }, cfg.min_separation, cfg.max_retries);
    break;
  case TypeDistMode::random_product:
    truth.type_dists = detail::draw_separated_pair(
        [&] { return detail::random_product(rng, cfg.group_size); }, cfg.min_separation,
        cfg.max_retries);
    break;
  }
  return truth;
}

//! G RNG advances, one outcome per group, bits scattered MSB-first into the
//! group's variable positions.
inline BitPattern draw_bitvector(const BitVectorTruth &truth, SplitMix64 &rng) {
  const int v = truth.num_vars();
  const int s = truth.grouping.group_size();
  BitPattern x = 0;
  for (int j = 0; j < truth.grouping.num_groups(); ++j) {
    const auto o = inverse_cdf(truth.group_dist(j).weights(), rng.uniform());
    const auto slots = truth.grouping.group(j);
    for (int k = 0; k < s; ++k)
      if ((o >> (s - 1 - k)) & 1U)
        x |= BitPattern{1} << (v - 1 - slots[k]);
  }
  return x;
}

inline Categorical true_joint(const BitVectorTruth &truth) {
  std::vector<Categorical> dists;
  for (int j = 0; j < truth.grouping.num_groups(); ++j)
    dists.push_back(truth.group_dist(j));
  return joint_from_grouping(truth.grouping, dists);
}

} // namespace urnlab
