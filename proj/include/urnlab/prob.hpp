#pragma once
// Categorical / Dirichlet arithmetic, KL divergence and the bit-pattern joint
// tables shared by every estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "urnlab/error.hpp"

namespace urnlab {

//! Joint tables over 2^V outcomes are materialized only up to this V.
inline constexpr int kMaxJointVars = 20;

//! A V-bit observation. Variable 0 is the most significant of the V bits.
using BitPattern = std::uint64_t;

inline int bit_of(BitPattern pattern, int var, int num_vars) {
  return static_cast<int>((pattern >> (num_vars - 1 - var)) & 1U);
}

//==============================================================================
//! Probability vector over K outcomes. Weights are nonnegative and sum to 1.
class Categorical {
 public:
  static constexpr double kTolerance = 1e-12;

  Categorical() = default;

  //! Validates nonnegativity and normalization.
  explicit Categorical(std::vector<double> weights) : w_(std::move(weights)) {
    require(!w_.empty(), "Categorical: K must be at least 1");
    double sum = 0.0;
    for (double x : w_) {
      require(x >= 0.0 && std::isfinite(x),
              "Categorical: weights must be finite and nonnegative");
      sum += x;
    }
    require(std::abs(sum - 1.0) <= kTolerance * std::max<double>(1.0, w_.size() / 1024.0),
            "Categorical: weights must sum to 1 (got " + std::to_string(sum) + ")");
  }

  //! Scales nonnegative weights to sum 1.
  static Categorical normalized(std::vector<double> weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(sum > 0.0, "Categorical::normalized: weights sum to zero");
    for (double &x : weights)
      x /= sum;
    Categorical c;
    c.w_ = std::move(weights);
    return c;
  }

  static Categorical uniform(std::size_t k) {
    require(k >= 1, "Categorical::uniform: K must be at least 1");
    Categorical c;
    c.w_.assign(k, 1.0 / static_cast<double>(k));
    return c;
  }

  static Categorical point_mass(std::size_t k, std::size_t at) {
    require(at < k, "Categorical::point_mass: outcome out of range");
    std::vector<double> w(k, 0.0);
    w[at] = 1.0;
    return Categorical(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> weights() const { return w_; }

  bool operator==(const Categorical &) const = default;

 private:
  std::vector<double> w_;
};

//==============================================================================
//! Integer outcome counts with a cached total.
class TallyVector {
 public:
  TallyVector() = default;
  explicit TallyVector(std::size_t k) : counts_(k, 0) {}
  explicit TallyVector(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {
    for (auto c : counts_) {
      require(c >= 0, "TallyVector: counts must be nonnegative");
      total_ += c;
    }
  }

  void add(std::size_t outcome, std::int64_t n = 1) {
    require(outcome < counts_.size(), "TallyVector::add: outcome out of range");
    counts_[outcome] += n;
    total_ += n;
  }

  std::size_t size() const { return counts_.size(); }
  std::int64_t total() const { return total_; }
  std::int64_t operator[](std::size_t i) const { return counts_[i]; }
  std::span<const std::int64_t> counts() const { return counts_; }

  bool operator==(const TallyVector &) const = default;

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

//==============================================================================
//! Ordered partition of V variables into G ordered groups of S slots each.
//! Reading a group's slots in order, first slot = most significant bit, gives
//! that group's outcome in [0, 2^S).
class Grouping {
 public:
  Grouping() = default;

  explicit Grouping(std::vector<std::vector<int>> groups) : groups_(std::move(groups)) {
    require(!groups_.empty(), "Grouping: at least one group required");
    const std::size_t s = groups_.front().size();
    require(s >= 1, "Grouping: groups must be nonempty");
    const std::size_t v = s * groups_.size();
    std::vector<char> seen(v, 0);
    for (const auto &g : groups_) {
      require(g.size() == s, "Grouping: all groups must have the same size");
      for (int x : g) {
        require(x >= 0 && static_cast<std::size_t>(x) < v,
                "Grouping: variable index out of range");
        require(!seen[x], "Grouping: variable " + std::to_string(x) + " appears twice");
        seen[x] = 1;
      }
    }
  }

  //! Consecutive chunks (0..S-1), (S..2S-1), ...
  static Grouping identity(int num_vars, int group_size) {
    require(group_size >= 1 && num_vars % group_size == 0,
            "Grouping::identity: V must be a multiple of S");
    std::vector<std::vector<int>> g(num_vars / group_size);
    for (int v = 0; v < num_vars; ++v)
      g[v / group_size].push_back(v);
    return Grouping(std::move(g));
  }

  int num_vars() const { return num_groups() * group_size(); }
  int num_groups() const { return static_cast<int>(groups_.size()); }
  int group_size() const { return groups_.empty() ? 0 : static_cast<int>(groups_[0].size()); }
  std::span<const int> group(int j) const { return groups_[j]; }
  const std::vector<std::vector<int>> &groups() const { return groups_; }

  //! Outcome of group j for a full V-bit pattern.
  int outcome(BitPattern pattern, int j) const {
    const int v = num_vars();
    int o = 0;
    for (int var : groups_[j])
      o = (o << 1) | bit_of(pattern, var, v);
    return o;
  }

  bool operator==(const Grouping &) const = default;

 private:
  std::vector<std::vector<int>> groups_;
};

//==============================================================================

//! KL(p || q) in nats. 0 ln(0/q) = 0; p_j > 0 with q_j = 0 gives +infinity.
inline double kl_divergence(const Categorical &p, const Categorical &q) {
  require(p.size() == q.size(), "kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double pj = p[j];
    if (pj <= 0.0)
      continue;
    if (q[j] <= 0.0)
      return std::numeric_limits<double>::infinity();
    kl += pj * std::log(pj / q[j]);
  }
  return std::max(kl, 0.0);
}

//! Posterior mean of a symmetric Dirichlet: (c_j + a) / (N + K a).
//! Real-valued counts are accepted for responsibility-weighted tallies.
inline Categorical dirichlet_mean(std::span<const double> counts, double pseudocount = 1.0) {
  require(pseudocount > 0.0, "dirichlet_mean: pseudocount must be positive");
  require(!counts.empty(), "dirichlet_mean: K must be at least 1");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double denom = total + static_cast<double>(counts.size()) * pseudocount;
  std::vector<double> w(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) {
    require(counts[j] >= 0.0, "dirichlet_mean: counts must be nonnegative");
    w[j] = (counts[j] + pseudocount) / denom;
  }
  return Categorical(std::move(w));
}

inline Categorical dirichlet_mean(const TallyVector &t, double pseudocount = 1.0) {
  std::vector<double> c(t.counts().begin(), t.counts().end());
  return dirichlet_mean(std::span<const double>(c), pseudocount);
}

//! Sum_j counts_j ln q_j; -infinity when q_j = 0 under a positive count.
inline double log_likelihood(std::span<const double> counts, const Categorical &q) {
  require(counts.size() == q.size(), "log_likelihood: dimension mismatch");
  double ll = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0.0)
      continue;
    if (q[j] <= 0.0)
      return -std::numeric_limits<double>::infinity();
    ll += counts[j] * std::log(q[j]);
  }
  return ll;
}

inline double log_likelihood(const TallyVector &t, const Categorical &q) {
  require(t.size() == q.size(), "log_likelihood: dimension mismatch");
  double ll = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] == 0)
      continue;
    if (q[j] <= 0.0)
      return -std::numeric_limits<double>::infinity();
    ll += static_cast<double>(t[j]) * std::log(q[j]);
  }
  return ll;
}

namespace detail {
inline void check_joint_capacity(int num_vars) {
  if (num_vars > kMaxJointVars)
    throw CapacityError("joint over 2^" + std::to_string(num_vars) +
                        " outcomes exceeds the 2^" + std::to_string(kMaxJointVars) +
                        " capacity");
}
} // namespace detail

//! Joint over 2^V outcomes of V independent bits.
inline Categorical joint_from_independent_bits(std::span<const double> bit_probs) {
  const int v = static_cast<int>(bit_probs.size());
  detail::check_joint_capacity(v);
  require(v >= 1, "joint_from_independent_bits: need at least one variable");
  for (double p : bit_probs)
    require(p >= 0.0 && p <= 1.0, "joint_from_independent_bits: probability outside [0,1]");
  // Built MSB-first by doubling: each new variable splits every entry in two.
  std::vector<double> w{1.0};
  for (int var = 0; var < v; ++var) {
    std::vector<double> next(w.size() * 2);
    for (std::size_t o = 0; o < w.size(); ++o) {
      next[2 * o] = w[o] * (1.0 - bit_probs[var]);
      next[2 * o + 1] = w[o] * bit_probs[var];
    }
    w = std::move(next);
  }
  return Categorical::normalized(std::move(w));
}

//! The implied joint of independent groups, each with its own distribution
//! over 2^S outcomes.
inline Categorical joint_from_grouping(const Grouping &g, std::span<const Categorical> group_dists) {
  const int v = g.num_vars();
  detail::check_joint_capacity(v);
  require(static_cast<int>(group_dists.size()) == g.num_groups(),
          "joint_from_grouping: need one distribution per group");
  const std::size_t k = std::size_t{1} << g.group_size();
  for (const auto &d : group_dists)
    require(d.size() == k, "joint_from_grouping: group distribution must have 2^S outcomes");

  const std::size_t n = std::size_t{1} << v;
  std::vector<double> w(n, 1.0);
  for (int j = 0; j < g.num_groups(); ++j) {
    const auto dist = group_dists[j].weights();
    for (std::size_t x = 0; x < n; ++x)
      w[x] *= dist[g.outcome(x, j)];
  }
  return Categorical::normalized(std::move(w));
}

//! Per-variable P(bit = 1) under a joint over 2^V outcomes.
inline std::vector<double> bit_marginals(const Categorical &joint, int num_vars) {
  require(joint.size() == (std::size_t{1} << num_vars), "bit_marginals: joint must have 2^V outcomes");
  std::vector<double> m(num_vars, 0.0);
  for (std::size_t x = 0; x < joint.size(); ++x)
    for (int var = 0; var < num_vars; ++var)
      if (bit_of(x, var, num_vars))
        m[var] += joint[x];
  for (double &p : m)
    p = std::clamp(p, 0.0, 1.0);
  return m;
}

//! Total-variation distance, half the L1 norm.
inline double total_variation(const Categorical &p, const Categorical &q) {
  require(p.size() == q.size(), "total_variation: dimension mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    d += std::abs(p[j] - q[j]);
  return 0.5 * d;
}

} // namespace urnlab
