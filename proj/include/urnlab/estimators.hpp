#pragma once
// The estimator ladder that needs no structure search: raw Dirichlet tallies,
// two-type EM clustering, independent bits, the full joint Dirichlet and the
// known-grouping estimators.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "urnlab/error.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/rng.hpp"
#include "urnlab/simulators.hpp"

namespace urnlab {

enum class Readout {
  mixture, //!< Q_i = r_ia Q_a + r_ib Q_b
  hard,    //!< Q_i = the more responsible type's Q
};

struct EstimatorConfig {
  double pseudocount = 1.0;
  double em_tol = 1e-9;
  int em_max_iters = 500;
  int em_restarts = 5;
  double em_init_noise = 0.05;
  Readout readout = Readout::mixture;
};

struct EmResult {
  Categorical q_a;
  Categorical q_b;
  //! Row i: (P(unit i is type a), P(unit i is type b)).
  std::vector<std::array<double, 2>> responsibilities;
  //! Observed-data log-likelihood under the uniform class prior.
  double log_likelihood = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  //! Per-iteration EM objective of the kept restart: observed log-likelihood
  //! plus the Dirichlet log-prior implied by the pseudocount. This is the
  //! quantity a smoothed M-step never decreases.
  std::vector<double> trace;
};

//! Per-unit Dirichlet means, no sharing.
inline std::vector<Categorical> raw_tally_estimate(std::span<const TallyVector> tallies,
                                                   const EstimatorConfig &cfg) {
  std::vector<Categorical> out;
  out.reserve(tallies.size());
  for (const auto &t : tallies) {
    require(t.size() == tallies.front().size(), "raw_tally_estimate: tallies must share K");
    out.push_back(dirichlet_mean(t, cfg.pseudocount));
  }
  return out;
}

namespace detail {

struct EmRun {
  std::array<std::vector<double>, 2> q;
  std::vector<std::array<double, 2>> r;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> trace;
};

class TwoTypeEm {
 public:
  TwoTypeEm(std::span<const TallyVector> tallies, const EstimatorConfig &cfg)
      : cfg_(cfg), n_(tallies.size()), k_(tallies.front().size()), counts_(n_ * k_) {
    for (std::size_t i = 0; i < n_; ++i) {
      require(tallies[i].size() == k_, "em_two_type: tallies must share K");
      for (std::size_t o = 0; o < k_; ++o)
        counts_[i * k_ + o] = static_cast<double>(tallies[i][o]);
    }
  }

  std::size_t units() const { return n_; }
  std::size_t outcomes() const { return k_; }

  std::vector<double> pooled_mean() const {
    std::vector<double> pooled(k_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t o = 0; o < k_; ++o)
        pooled[o] += counts_[i * k_ + o];
    const auto d = dirichlet_mean(std::span<const double>(pooled), cfg_.pseudocount);
    return {d.weights().begin(), d.weights().end()};
  }

  EmRun from_distributions(std::array<std::vector<double>, 2> q) const {
    EmRun run;
    run.q = std::move(q);
    iterate(run);
    return run;
  }

  EmRun from_responsibilities(std::vector<std::array<double, 2>> r) const {
    EmRun run;
    run.r = std::move(r);
    m_step(run);
    run.iterations = 1;
    iterate(run);
    return run;
  }

 private:
  void m_step(EmRun &run) const {
    for (int t = 0; t < 2; ++t) {
      std::vector<double> weighted(k_, 0.0);
      for (std::size_t i = 0; i < n_; ++i) {
        const double w = run.r[i][t];
        if (w == 0.0)
          continue;
        for (std::size_t o = 0; o < k_; ++o)
          weighted[o] += w * counts_[i * k_ + o];
      }
      double total = 0.0;
      for (double c : weighted)
        total += c;
      const double denom = total + static_cast<double>(k_) * cfg_.pseudocount;
      run.q[t].resize(k_);
      for (std::size_t o = 0; o < k_; ++o)
        run.q[t][o] = (weighted[o] + cfg_.pseudocount) / denom;
    }
  }

  //! E-step on the current q; returns the EM objective.
  double e_step(EmRun &run) const {
    std::array<std::vector<double>, 2> logq;
    double log_prior = 0.0;
    for (int t = 0; t < 2; ++t) {
      logq[t].resize(k_);
      for (std::size_t o = 0; o < k_; ++o) {
        logq[t][o] = std::log(run.q[t][o]);
        log_prior += cfg_.pseudocount * logq[t][o];
      }
    }
    run.r.resize(n_);
    double ll = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double *c = &counts_[i * k_];
      double la = 0.0, lb = 0.0;
      for (std::size_t o = 0; o < k_; ++o) {
        if (c[o] == 0.0)
          continue;
        la += c[o] * logq[0][o];
        lb += c[o] * logq[1][o];
      }
      const double m = std::max(la, lb);
      const double lse = m + std::log(std::exp(la - m) + std::exp(lb - m));
      ll += lse - std::log(2.0);
      const double ra = std::exp(la - lse);
      const double rb = std::exp(lb - lse);
      run.r[i] = {ra / (ra + rb), rb / (ra + rb)};
    }
    run.log_likelihood = ll;
    return ll + log_prior;
  }

  void iterate(EmRun &run) const {
    double prev = e_step(run);
    run.trace.push_back(prev);
    while (run.iterations < cfg_.em_max_iters) {
      const auto before = run.q;
      m_step(run);
      ++run.iterations;
      const double obj = e_step(run);
      run.trace.push_back(obj);
      // The objective is flat near a hard assignment, so the distributions
      // must settle too.
      double moved = 0.0;
      for (int t = 0; t < 2; ++t)
        for (std::size_t o = 0; o < k_ && !before[t].empty(); ++o)
          moved = std::max(moved, std::abs(run.q[t][o] - before[t][o]));
      const bool done = std::abs(obj - prev) < cfg_.em_tol && (before[0].empty() || moved < cfg_.em_tol);
      prev = obj;
      if (done)
        break;
    }
  }

  EstimatorConfig cfg_;
  std::size_t n_;
  std::size_t k_;
  std::vector<double> counts_;
};

inline EmResult to_result(EmRun run, int restarts_used) {
  EmResult res;
  res.q_a = Categorical::normalized(std::move(run.q[0]));
  res.q_b = Categorical::normalized(std::move(run.q[1]));
  res.responsibilities = std::move(run.r);
  res.log_likelihood = run.log_likelihood;
  res.iterations = run.iterations;
  res.restarts_used = restarts_used;
  res.trace = std::move(run.trace);
  return res;
}

} // namespace detail

//! Two latent types shared by N units. Restarts begin from the pooled Dirichlet
//! mean perturbed multiplicatively by (1 + noise * U(-1,1)), plus one start
//! with both types exactly at the pooled mean and one with every unit on type
//! a. The run with the highest final
//! objective (log-likelihood plus log prior) is kept, earliest on ties. When
//! hard_init is given (one label per unit) a single run starts from those
//! responsibilities instead.
inline EmResult em_two_type(std::span<const TallyVector> tallies, const EstimatorConfig &cfg,
                            std::uint64_t seed, std::span<const int> hard_init = {}) {
  require(!tallies.empty(), "em_two_type: need at least one unit");
  require(cfg.pseudocount > 0.0 && cfg.em_tol > 0.0 && cfg.em_max_iters > 0 && cfg.em_restarts > 0,
          "em_two_type: estimator config values must be positive");
  const detail::TwoTypeEm em(tallies, cfg);

  if (!hard_init.empty()) {
    require(hard_init.size() == tallies.size(), "em_two_type: one initial label per unit");
    std::vector<std::array<double, 2>> r(tallies.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = hard_init[i] == 0 ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
    return detail::to_result(em.from_responsibilities(std::move(r)), 1);
  }

  const auto pooled = em.pooled_mean();
  SplitMix64 rng(seed);
  std::optional<detail::EmRun> best;
  for (int restart = 0; restart <= cfg.em_restarts; ++restart) {
    std::array<std::vector<double>, 2> q{pooled, pooled};
    // The last start is the symmetric fixed point; identical units keep it.
    if (restart < cfg.em_restarts)
      for (auto &qt : q) {
        double sum = 0.0;
        for (double &x : qt) {
          x *= 1.0 + cfg.em_init_noise * (2.0 * rng.uniform() - 1.0);
          sum += x;
        }
        for (double &x : qt)
          x /= sum;
      }
    auto run = em.from_distributions(std::move(q));
    if (!best || run.trace.back() > best->trace.back())
      best = std::move(run);
  }
  auto lumped = em.from_responsibilities(std::vector<std::array<double, 2>>(tallies.size(), {1.0, 0.0}));
  if (lumped.trace.back() > best->trace.back())
    best = std::move(lumped);
  return detail::to_result(std::move(*best), cfg.em_restarts + 2);
}

inline std::vector<Categorical> per_unit_mixture(const EmResult &res) {
  std::vector<Categorical> out;
  out.reserve(res.responsibilities.size());
  const auto qa = res.q_a.weights();
  const auto qb = res.q_b.weights();
  for (const auto &r : res.responsibilities) {
    std::vector<double> w(qa.size());
    for (std::size_t o = 0; o < w.size(); ++o)
      w[o] = r[0] * qa[o] + r[1] * qb[o];
    out.push_back(Categorical::normalized(std::move(w)));
  }
  return out;
}

inline std::vector<Categorical> per_unit_hard(const EmResult &res) {
  std::vector<Categorical> out;
  for (const auto &r : res.responsibilities)
    out.push_back(r[0] >= r[1] ? res.q_a : res.q_b);
  return out;
}

inline std::vector<Categorical> per_unit_estimate(const EmResult &res, Readout readout) {
  return readout == Readout::mixture ? per_unit_mixture(res) : per_unit_hard(res);
}

//==============================================================================
// Bit-vector estimators

struct BitTally {
  std::int64_t ones = 0;
  std::int64_t total = 0;
};

inline std::vector<BitTally> bit_tallies(std::span<const BitPattern> data, int num_vars) {
  std::vector<BitTally> t(num_vars);
  for (BitPattern x : data)
    for (int v = 0; v < num_vars; ++v) {
      t[v].ones += bit_of(x, v, num_vars);
      ++t[v].total;
    }
  return t;
}

//! Beta(1,1) posterior mean per variable: (ones + 1) / (total + 2).
inline std::vector<double> independent_bits_estimate(std::span<const BitTally> tallies) {
  std::vector<double> p;
  p.reserve(tallies.size());
  for (const auto &t : tallies) {
    require(t.ones >= 0 && t.ones <= t.total, "independent_bits_estimate: ones must be <= total");
    p.push_back((static_cast<double>(t.ones) + 1.0) / (static_cast<double>(t.total) + 2.0));
  }
  return p;
}

inline TallyVector joint_tally(std::span<const BitPattern> data, int num_vars) {
  detail::check_joint_capacity(num_vars);
  TallyVector t(std::size_t{1} << num_vars);
  for (BitPattern x : data)
    t.add(static_cast<std::size_t>(x));
  return t;
}

inline Categorical joint_dirichlet_estimate(const TallyVector &joint, const EstimatorConfig &cfg) {
  const auto k = joint.size();
  require(k >= 1 && (k & (k - 1)) == 0, "joint_dirichlet_estimate: K must be a power of two");
  int v = 0;
  while ((std::size_t{1} << v) < k)
    ++v;
  detail::check_joint_capacity(v);
  return dirichlet_mean(joint, cfg.pseudocount);
}

//! One tally over 2^S outcomes per group.
inline std::vector<TallyVector> group_tallies(const Grouping &g, std::span<const BitPattern> data) {
  std::vector<TallyVector> t(g.num_groups(), TallyVector(std::size_t{1} << g.group_size()));
  for (BitPattern x : data)
    for (int j = 0; j < g.num_groups(); ++j)
      t[j].add(static_cast<std::size_t>(g.outcome(x, j)));
  return t;
}

struct GroupedEstimate {
  std::vector<Categorical> groups;
  std::optional<EmResult> em;
};

//! Known grouping. Without type sharing every group gets its own Dirichlet
//! mean; with sharing the groups are clustered into two types by EM.
inline GroupedEstimate grouped_known_estimate(const Grouping &g, std::span<const BitPattern> data,
                                              const EstimatorConfig &cfg, bool share_types,
                                              std::uint64_t seed,
                                              std::span<const int> hard_init = {}) {
  const auto tallies = group_tallies(g, data);
  GroupedEstimate out;
  if (!share_types) {
    out.groups = raw_tally_estimate(tallies, cfg);
    return out;
  }
  out.em = em_two_type(tallies, cfg, seed, hard_init);
  out.groups = per_unit_estimate(*out.em, cfg.readout);
  return out;
}

inline Categorical implied_joint(const Grouping &g, const GroupedEstimate &est) {
  return joint_from_grouping(g, est.groups);
}

} // namespace urnlab
