#pragma once
// Exhaustive search over variable groupings and group-to-type assignments.
//
// Candidates are enumerated as canonical orbit representatives. Two raw
// (permutation, assignment) pairs are equivalent when one maps to the other by
//   - a relabeling of the types, or
//   - one slot reordering per type applied simultaneously to every group of
//     that type.
// A candidate is canonical when
//   - ordering the nonempty type classes by their smallest variable gives the
//     labels 0, 1, 2, ... (so label 'a' holds variable 0), and
//   - within each class, the group holding the class's smallest variable
//     lists its variables in ascending order.
// In case1 mode there are no types; groups are interchangeable and canonical
// candidates list groups in ascending order of their smallest variable.
// Swapping two whole groups of the same type is not quotiented; such
// candidates are equal-score duplicates.
//
// Ranks follow a mixed-radix order: assignment pattern major (lexicographic,
// first group most significant), then class membership, then the placement of
// variables within each class.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "urnlab/error.hpp"
#include "urnlab/estimators.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/simulators.hpp"

namespace urnlab {

enum class SearchMode { case1, case12 };

enum class Scorer {
  paper_plugin,       //!< shared-tally plug-in, denominator 2^S + G|D|
  dirichlet_marginal, //!< exact Dirichlet(1)-multinomial marginal likelihood
  plugin_normalized,  //!< plug-in with denominator 2^S + (groups in class)|D|
};

struct SearchConfig {
  int num_vars = 12;
  int num_groups = 4;
  int group_size = 3;
  int num_types = 2;
  SearchMode mode = SearchMode::case12;
  Scorer scorer = Scorer::paper_plugin;
  int workers = 1;
  int top_k = 10;
  //! Ranks per work claim; 0 means 1/64 of the space.
  std::uint64_t chunk_size = 0;
};

struct Candidate {
  Grouping grouping;
  //! One type label per group; empty in case1 mode.
  std::vector<int> assignment;
  bool operator==(const Candidate &) const = default;
};

struct ScoredCandidate {
  Candidate candidate;
  double log_score = 0.0;
  std::uint64_t rank = 0;
};

inline void validate(const SearchConfig &cfg) {
  if (cfg.num_groups < 1 || cfg.group_size < 1 || cfg.num_vars != cfg.num_groups * cfg.group_size)
    throw ContractError("search config requires V = G * S with G, S >= 1");
  if (cfg.num_vars > 64)
    throw CapacityError("search supports at most 64 variables");
  if (cfg.group_size > 6)
    throw CapacityError("search supports groups of at most 6 variables");
  if (cfg.mode == SearchMode::case12 && (cfg.num_types < 1 || cfg.num_types > cfg.num_groups))
    throw ContractError("search config requires 1 <= num_types <= G");
  if (cfg.workers < 1 || cfg.top_k < 1)
    throw ContractError("search config requires workers >= 1 and top_k >= 1");
}

namespace detail {

using u128 = unsigned __int128;

inline u128 checked_mul(u128 a, u128 b) {
  u128 r;
  if (__builtin_mul_overflow(a, b, &r))
    throw CapacityError("candidate count overflows 128-bit intermediate");
  return r;
}

inline u128 factorial128(int n) {
  u128 f = 1;
  for (int i = 2; i <= n; ++i)
    f = checked_mul(f, static_cast<u128>(i));
  return f;
}

inline std::uint64_t to_u64(u128 x) {
  if (x > std::numeric_limits<std::uint64_t>::max())
    throw CapacityError("candidate count exceeds 64 bits");
  return static_cast<std::uint64_t>(x);
}

//! Pascal triangle up to n = 64.
struct Binomials {
  std::uint64_t c[65][65] = {};
  Binomials() {
    for (int n = 0; n <= 64; ++n) {
      c[n][0] = 1;
      for (int k = 1; k <= n; ++k)
        c[n][k] = c[n - 1][k - 1] + (k <= n - 1 ? c[n - 1][k] : 0);
    }
  }
  std::uint64_t operator()(int n, int k) const {
    return (k < 0 || k > n || n < 0) ? 0 : c[n][k];
  }
};

inline const Binomials &binomials() {
  static const Binomials b;
  return b;
}

//! k-subset of [0, n) with the given lexicographic rank, ascending.
inline void unrank_combination(std::uint64_t rank, int n, int k, int *out) {
  const auto &C = binomials();
  int x = 0;
  for (int i = 0; i < k; ++i) {
    while (true) {
      const std::uint64_t with_x = C(n - x - 1, k - i - 1);
      if (rank < with_x)
        break;
      rank -= with_x;
      ++x;
    }
    out[i] = x++;
  }
}

inline constexpr int kMaxVars = 64;

} // namespace detail

//! The closed-form size of the hypothesis space:
//! case12: T^G V! / (T! (S!)^T); case1: V! / G!.
inline std::uint64_t candidate_count(const SearchConfig &cfg) {
  validate(cfg);
  using detail::u128;
  const u128 vfact = detail::factorial128(cfg.num_vars);
  if (cfg.mode == SearchMode::case1)
    return detail::to_u64(vfact / detail::factorial128(cfg.num_groups));
  u128 num = vfact;
  for (int j = 0; j < cfg.num_groups; ++j)
    num = detail::checked_mul(num, static_cast<u128>(cfg.num_types));
  u128 den = detail::factorial128(cfg.num_types);
  const u128 sfact = detail::factorial128(cfg.group_size);
  for (int t = 0; t < cfg.num_types; ++t)
    den = detail::checked_mul(den, sfact);
  if (num % den != 0)
    throw ContractError("candidate_count: closed form is not an integer for this configuration");
  return detail::to_u64(num / den);
}

//==============================================================================
//! Rank <-> canonical candidate bijection over [0, size()).
class CandidateSpace {
 public:
  explicit CandidateSpace(const SearchConfig &cfg) : cfg_(cfg) {
    validate(cfg);
    if (cfg.mode == SearchMode::case1)
      build_case1();
    else
      build_case12();
  }

  std::uint64_t size() const { return total_; }
  const SearchConfig &config() const { return cfg_; }

  //! Writes group j's slots to slots[j*S .. j*S+S) and labels to assignment
  //! (case12 only).
  void unrank(std::uint64_t rank, int *slots, int *assignment) const {
    require(rank < total_, "CandidateSpace::unrank: rank out of range");
    if (cfg_.mode == SearchMode::case1)
      unrank_case1(rank, slots);
    else
      unrank_case12(rank, slots, assignment);
  }

  Candidate candidate(std::uint64_t rank) const {
    int slots[detail::kMaxVars];
    int assignment[detail::kMaxVars];
    unrank(rank, slots, assignment);
    const int s = cfg_.group_size;
    std::vector<std::vector<int>> g(cfg_.num_groups);
    for (int j = 0; j < cfg_.num_groups; ++j)
      g[j].assign(slots + j * s, slots + (j + 1) * s);
    Candidate c{Grouping(std::move(g)), {}};
    if (cfg_.mode == SearchMode::case12)
      c.assignment.assign(assignment, assignment + cfg_.num_groups);
    return c;
  }

 private:
  struct Pattern {
    std::vector<int> labels;
    std::vector<std::vector<int>> positions; // group positions per class
    std::uint64_t offset = 0;
    std::uint64_t count = 0;
  };

  void build_case1() {
    using detail::u128;
    total_ = detail::to_u64(detail::factorial128(cfg_.num_vars) /
                            detail::factorial128(cfg_.num_groups));
  }

  void build_case12() {
    const int g = cfg_.num_groups;
    const int t = cfg_.num_types;
    const int s = cfg_.group_size;
    const auto &C = detail::binomials();
    std::vector<int> labels(g, 0);
    std::uint64_t offset = 0;
    while (true) {
      int used = 0;
      std::vector<int> sizes(t, 0);
      for (int x : labels) {
        ++sizes[x];
        used = std::max(used, x + 1);
      }
      bool contiguous = true;
      for (int c = 0; c < used; ++c)
        contiguous = contiguous && sizes[c] > 0;
      if (contiguous) {
        Pattern p;
        p.labels = labels;
        p.positions.resize(used);
        for (int j = 0; j < g; ++j)
          p.positions[labels[j]].push_back(j);
        detail::u128 count = 1;
        int remaining = cfg_.num_vars;
        for (int c = 0; c < used; ++c) {
          const int members = sizes[c] * s;
          count = detail::checked_mul(count, C(remaining - 1, members - 1));
          remaining -= members;
          count = detail::checked_mul(count, detail::factorial128(members) / detail::factorial128(s));
        }
        p.count = detail::to_u64(count);
        p.offset = offset;
        if (offset + p.count < offset)
          throw CapacityError("canonical candidate space exceeds 64 bits");
        offset += p.count;
        patterns_.push_back(std::move(p));
      }
      int j = g - 1;
      while (j >= 0 && labels[j] == t - 1)
        labels[j--] = 0;
      if (j < 0)
        break;
      ++labels[j];
    }
    total_ = offset;
  }

  void unrank_case1(std::uint64_t rank, int *slots) const {
    const int g = cfg_.num_groups;
    const int s = cfg_.group_size;
    // Digits per group k (major first): anchor slot in [0,S), then S-1 picks
    // with radices R-1, R-2, ..., R-S+1 where R = V - kS.
    int radices[detail::kMaxVars * 2];
    int nd = 0;
    for (int k = 0; k < g; ++k) {
      const int r = cfg_.num_vars - k * s;
      radices[nd++] = s;
      for (int i = 1; i < s; ++i)
        radices[nd++] = r - i;
    }
    int digits[detail::kMaxVars * 2];
    for (int i = nd - 1; i >= 0; --i) {
      digits[i] = static_cast<int>(rank % radices[i]);
      rank /= radices[i];
    }
    int pool[detail::kMaxVars];
    int pool_size = cfg_.num_vars;
    for (int i = 0; i < pool_size; ++i)
      pool[i] = i;
    int d = 0;
    for (int k = 0; k < g; ++k) {
      int *grp = slots + k * s;
      const int anchor_slot = digits[d++];
      const int anchor = pool[0];
      std::copy(pool + 1, pool + pool_size, pool);
      --pool_size;
      for (int slot = 0; slot < s; ++slot) {
        if (slot == anchor_slot) {
          grp[slot] = anchor;
          continue;
        }
        const int pick = digits[d++];
        grp[slot] = pool[pick];
        std::copy(pool + pick + 1, pool + pool_size, pool + pick);
        --pool_size;
      }
    }
  }

  void unrank_case12(std::uint64_t rank, int *slots, int *assignment) const {
    const int s = cfg_.group_size;
    auto it = std::upper_bound(patterns_.begin(), patterns_.end(), rank,
                               [](std::uint64_t r, const Pattern &p) { return r < p.offset; });
    const Pattern &p = *(it - 1);
    rank -= p.offset;
    std::copy(p.labels.begin(), p.labels.end(), assignment);
    const int classes = static_cast<int>(p.positions.size());

    // Radices, major first: membership per class, then per class the anchor
    // group, the anchor group's other S-1 members, and a Lehmer code for the
    // rest of the class.
    const auto &C = detail::binomials();
    std::uint64_t radices[detail::kMaxVars * 3];
    int nd = 0;
    int remaining = cfg_.num_vars;
    for (int c = 0; c < classes; ++c) {
      const int members = static_cast<int>(p.positions[c].size()) * s;
      radices[nd++] = C(remaining - 1, members - 1);
      remaining -= members;
    }
    for (int c = 0; c < classes; ++c) {
      const int n = static_cast<int>(p.positions[c].size());
      const int members = n * s;
      radices[nd++] = static_cast<std::uint64_t>(n);
      radices[nd++] = C(members - 1, s - 1);
      for (int m = (n - 1) * s; m >= 1; --m)
        radices[nd++] = static_cast<std::uint64_t>(m);
    }
    std::uint64_t digits[detail::kMaxVars * 3];
    for (int i = nd - 1; i >= 0; --i) {
      digits[i] = rank % radices[i];
      rank /= radices[i];
    }

    int d = 0;
    int pool[detail::kMaxVars];
    int pool_size = cfg_.num_vars;
    for (int i = 0; i < pool_size; ++i)
      pool[i] = i;
    int members_of[detail::kMaxVars][detail::kMaxVars];
    int pick[detail::kMaxVars];
    for (int c = 0; c < classes; ++c) {
      const int members = static_cast<int>(p.positions[c].size()) * s;
      int *mem = members_of[c];
      mem[0] = pool[0];
      detail::unrank_combination(digits[d++], pool_size - 1, members - 1, pick);
      // pick indexes pool[1..]; split pool into chosen and the rest.
      int rest[detail::kMaxVars];
      int nr = 0, np = 0;
      for (int i = 1; i < pool_size; ++i) {
        if (np < members - 1 && pick[np] == i - 1)
          mem[1 + np++] = pool[i];
        else
          rest[nr++] = pool[i];
      }
      std::copy(rest, rest + nr, pool);
      pool_size = nr;
    }
    for (int c = 0; c < classes; ++c) {
      const auto &pos = p.positions[c];
      const int n = static_cast<int>(pos.size());
      const int members = n * s;
      const int *mem = members_of[c];
      const int anchor_group = static_cast<int>(digits[d++]);
      detail::unrank_combination(digits[d++], members - 1, s - 1, pick);
      int *anchor_slots = slots + pos[anchor_group] * s;
      anchor_slots[0] = mem[0];
      int rest[detail::kMaxVars];
      int nr = 0, np = 0;
      for (int i = 1; i < members; ++i) {
        if (np < s - 1 && pick[np] == i - 1)
          anchor_slots[1 + np++] = mem[i];
        else
          rest[nr++] = mem[i];
      }
      // Lehmer code fills the remaining groups of this class, in position
      // order, slot by slot.
      for (int gi = 0; gi < n; ++gi) {
        if (gi == anchor_group)
          continue;
        int *grp = slots + pos[gi] * s;
        for (int slot = 0; slot < s; ++slot) {
          const int k = static_cast<int>(digits[d++]);
          grp[slot] = rest[k];
          std::copy(rest + k + 1, rest + nr, rest + k);
          --nr;
        }
      }
    }
  }

  SearchConfig cfg_;
  std::uint64_t total_ = 0;
  std::vector<Pattern> patterns_;
};

//! Size of the canonical space actually enumerated (exact orbit count).
inline std::uint64_t canonical_count(const SearchConfig &cfg) { return CandidateSpace(cfg).size(); }

//! Candidates with ranks in [start, end), in rank order.
inline std::vector<Candidate> enumerate_candidates(const SearchConfig &cfg, std::uint64_t start,
                                                   std::uint64_t end) {
  const CandidateSpace space(cfg);
  require(start <= end && end <= space.size(), "enumerate_candidates: range out of bounds");
  std::vector<Candidate> out;
  out.reserve(end - start);
  for (std::uint64_t r = start; r < end; ++r)
    out.push_back(space.candidate(r));
  return out;
}

//==============================================================================
//! Precomputed per-tuple tallies and log tables for scoring many candidates
//! against one immutable dataset.
class CandidateScorer {
 public:
  CandidateScorer(std::span<const BitPattern> data, const SearchConfig &cfg)
      : cfg_(cfg), n_(static_cast<std::int64_t>(data.size())), k_(1 << cfg.group_size) {
    validate(cfg);
    require(!data.empty(), "CandidateScorer: dataset must be nonempty");
    const int v = cfg.num_vars;
    words_ = (data.size() + 63) / 64;
    columns_.assign(static_cast<std::size_t>(v) * words_, 0);
    for (std::size_t i = 0; i < data.size(); ++i)
      for (int var = 0; var < v; ++var)
        if (bit_of(data[i], var, v))
          columns_[var * words_ + i / 64] |= std::uint64_t{1} << (i % 64);

    const std::int64_t max_n = static_cast<std::int64_t>(cfg.num_groups) * n_ + k_ + 2;
    log_int_.resize(max_n + 1);
    log_fact_.resize(max_n + 1);
    log_int_[0] = 0.0;
    log_fact_[0] = 0.0;
    for (std::int64_t i = 1; i <= max_n; ++i) {
      log_int_[i] = std::log(static_cast<double>(i));
      log_fact_[i] = log_fact_[i - 1] + log_int_[i];
    }

    // Tally table over every ordered tuple code sum_k slot_k V^(S-1-k).
    std::uint64_t codes = 1;
    for (int k = 0; k < cfg.group_size; ++k)
      codes *= static_cast<std::uint64_t>(v);
    if (codes * k_ <= (std::uint64_t{1} << 25)) {
      table_.assign(codes * k_, -1);
      std::vector<int> tuple(cfg.group_size);
      fill_table(tuple, 0);
    }
  }

  std::int64_t samples() const { return n_; }

  static constexpr int kMaxOutcomes = 64;

  //! Tallies of one ordered group over all samples.
  void group_tally(const int *slots, std::int32_t *out) const {
    if (!table_.empty()) {
      const std::int32_t *t = &table_[tuple_code(slots) * k_];
      std::copy(t, t + k_, out);
      return;
    }
    compute_tally(slots, out);
  }

  //! Log score of a candidate given as flat slots plus labels.
  double score(const int *slots, const int *assignment) const {
    const int g = cfg_.num_groups;
    const int s = cfg_.group_size;
    const bool typed = cfg_.mode == SearchMode::case12;
    const int classes = typed ? cfg_.num_types : g;
    std::int64_t tallies[detail::kMaxVars][kMaxOutcomes];
    int group_count[detail::kMaxVars] = {};
    for (int c = 0; c < classes; ++c)
      std::fill(tallies[c], tallies[c] + k_, 0);
    std::int32_t scratch[kMaxOutcomes];
    for (int j = 0; j < g; ++j) {
      const int c = typed ? assignment[j] : j;
      ++group_count[c];
      const std::int32_t *one = scratch;
      if (!table_.empty())
        one = &table_[tuple_code(slots + j * s) * k_];
      else
        compute_tally(slots + j * s, scratch);
      std::int64_t *dst = tallies[c];
      for (int o = 0; o < k_; ++o)
        dst[o] += one[o];
    }
    // Sorted summation keeps scores bit-identical across orbit members.
    double terms[detail::kMaxVars];
    int nt = 0;
    for (int c = 0; c < classes; ++c) {
      if (group_count[c] == 0)
        continue;
      std::sort(tallies[c], tallies[c] + k_);
      terms[nt++] = class_term(tallies[c], group_count[c]);
    }
    std::sort(terms, terms + nt);
    double total = 0.0;
    for (int i = 0; i < nt; ++i)
      total += terms[i];
    return total;
  }

  double score(const Candidate &c) const {
    int slots[detail::kMaxVars];
    const int s = cfg_.group_size;
    for (int j = 0; j < cfg_.num_groups; ++j) {
      const auto grp = c.grouping.group(j);
      std::copy(grp.begin(), grp.end(), slots + j * s);
    }
    return score(slots, c.assignment.empty() ? nullptr : c.assignment.data());
  }

 private:
  //! Contribution of one class given its sorted tallies.
  double class_term(const std::int64_t *t, int groups_in_class) const {
    const std::int64_t n_class = groups_in_class * n_;
    if (cfg_.scorer == Scorer::dirichlet_marginal) {
      double v = log_fact_[k_ - 1] - log_fact_[k_ + n_class - 1];
      for (int o = 0; o < k_; ++o)
        v += log_fact_[t[o]];
      return v;
    }
    std::int64_t denom_groups = groups_in_class;
    if (cfg_.scorer == Scorer::paper_plugin && cfg_.mode == SearchMode::case12)
      denom_groups = cfg_.num_groups;
    const double log_den = std::log(static_cast<double>(k_ + denom_groups * n_));
    double v = 0.0;
    for (int o = 0; o < k_; ++o)
      if (t[o] > 0)
        v += static_cast<double>(t[o]) * log_int_[t[o] + 1];
    return v - static_cast<double>(n_class) * log_den;
  }

  std::uint64_t tuple_code(const int *slots) const {
    std::uint64_t code = 0;
    for (int k = 0; k < cfg_.group_size; ++k)
      code = code * static_cast<std::uint64_t>(cfg_.num_vars) + static_cast<std::uint64_t>(slots[k]);
    return code;
  }

  void fill_table(std::vector<int> &tuple, int depth) {
    if (depth == cfg_.group_size) {
      compute_tally(tuple.data(), &table_[tuple_code(tuple.data()) * k_]);
      return;
    }
    for (int v = 0; v < cfg_.num_vars; ++v) {
      if (std::find(tuple.begin(), tuple.begin() + depth, v) != tuple.begin() + depth)
        continue;
      tuple[depth] = v;
      fill_table(tuple, depth + 1);
    }
  }

  //! Splits the sample set bit by bit, MSB slot first, and popcounts the
  //! final 2^S masks.
  void compute_tally(const int *slots, std::int32_t *out) const {
    std::vector<std::uint64_t> masks(words_, ~std::uint64_t{0});
    if (n_ % 64)
      masks.back() = (std::uint64_t{1} << (n_ % 64)) - 1;
    for (int k = 0; k < cfg_.group_size; ++k) {
      const std::uint64_t *col = &columns_[slots[k] * words_];
      std::vector<std::uint64_t> next(masks.size() * 2);
      const std::size_t groups = masks.size() / words_;
      for (std::size_t m = 0; m < groups; ++m)
        for (std::size_t w = 0; w < words_; ++w) {
          next[(2 * m) * words_ + w] = masks[m * words_ + w] & ~col[w];
          next[(2 * m + 1) * words_ + w] = masks[m * words_ + w] & col[w];
        }
      masks = std::move(next);
    }
    for (int o = 0; o < k_; ++o) {
      std::int64_t c = 0;
      for (std::size_t w = 0; w < words_; ++w)
        c += std::popcount(masks[o * words_ + w]);
      out[o] = static_cast<std::int32_t>(c);
    }
  }

  SearchConfig cfg_;
  std::int64_t n_;
  int k_;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> columns_;
  std::vector<double> log_int_;
  std::vector<double> log_fact_;
  std::vector<std::int32_t> table_;
};

//! Shared-tally plug-in score of a case12 candidate (or of a case1 grouping
//! when the candidate has no assignment), using cfg.scorer.
inline double score_candidate_paper(std::span<const BitPattern> data, const Candidate &c,
                                    const SearchConfig &cfg) {
  return CandidateScorer(data, cfg).score(c);
}

inline double score_candidate_case1(std::span<const BitPattern> data, const Grouping &g,
                                    const SearchConfig &cfg) {
  SearchConfig c1 = cfg;
  c1.mode = SearchMode::case1;
  return CandidateScorer(data, c1).score(Candidate{g, {}});
}

//==============================================================================

//! Strict total order used for results: higher score first, then lower rank.
inline bool better(double score_a, std::uint64_t rank_a, double score_b, std::uint64_t rank_b) {
  if (score_a != score_b)
    return score_a > score_b;
  return rank_a < rank_b;
}

using SearchProgress = std::function<void(std::uint64_t done, std::uint64_t total)>;

//! Exact top-k over the canonical space. Workers claim contiguous rank
//! ranges; partial top-k lists merge under the (score desc, rank asc) order,
//! so the result does not depend on the worker count.
inline std::vector<ScoredCandidate> search(std::span<const BitPattern> data, const SearchConfig &cfg,
                                           const SearchProgress &progress = {}) {
  validate(cfg);
  require(!data.empty(), "search: dataset must be nonempty");
  const CandidateSpace space(cfg);
  const CandidateScorer scorer(data, cfg);
  const std::uint64_t total = space.size();
  const std::uint64_t chunk =
      cfg.chunk_size > 0 ? cfg.chunk_size : std::max<std::uint64_t>(1, (total + 63) / 64);
  const std::size_t k = static_cast<std::size_t>(cfg.top_k);

  struct Entry {
    double score;
    std::uint64_t rank;
  };
  auto worse_first = [](const Entry &a, const Entry &b) {
    return better(a.score, a.rank, b.score, b.rank);
  };

  std::atomic<std::uint64_t> next{0};
  std::mutex mu;
  std::uint64_t done = 0;
  std::vector<Entry> merged;

  auto work = [&] {
    std::vector<Entry> heap; // max-heap under worse_first: top is the worst kept
    int slots[detail::kMaxVars];
    int assignment[detail::kMaxVars];
    while (true) {
      const std::uint64_t begin = next.fetch_add(chunk);
      if (begin >= total)
        break;
      const std::uint64_t end = std::min(total, begin + chunk);
      for (std::uint64_t r = begin; r < end; ++r) {
        space.unrank(r, slots, assignment);
        const Entry e{scorer.score(slots, assignment), r};
        if (heap.size() < k) {
          heap.push_back(e);
          std::push_heap(heap.begin(), heap.end(), worse_first);
        } else if (worse_first(e, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), worse_first);
          heap.back() = e;
          std::push_heap(heap.begin(), heap.end(), worse_first);
        }
      }
      std::lock_guard lock(mu);
      done += end - begin;
      if (progress)
        progress(done, total);
    }
    std::lock_guard lock(mu);
    merged.insert(merged.end(), heap.begin(), heap.end());
  };

  const int workers = static_cast<int>(std::min<std::uint64_t>(cfg.workers, std::max<std::uint64_t>(1, total / chunk + 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(work);
    for (auto &t : pool)
      t.join();
  }

  std::sort(merged.begin(), merged.end(), worse_first);
  if (merged.size() > k)
    merged.resize(k);
  std::vector<ScoredCandidate> out;
  out.reserve(merged.size());
  for (const auto &e : merged)
    out.push_back({space.candidate(e.rank), e.score, e.rank});
  return out;
}

//==============================================================================

//! Re-estimates the model implied by a candidate and returns its joint over
//! 2^V outcomes. case12 clusters the groups with the same shared-type EM used
//! when the structure is known, so the searched assignment only ranks
//! groupings; case1 fits each group independently.
inline Categorical estimate_from_candidate(std::span<const BitPattern> data, const Candidate &c,
                                           const SearchConfig &cfg, const EstimatorConfig &est,
                                           std::uint64_t seed) {
  const bool share = cfg.mode == SearchMode::case12 && !c.assignment.empty();
  const auto fit = grouped_known_estimate(c.grouping, data, est, share, seed);
  return joint_from_grouping(c.grouping, fit.groups);
}

//==============================================================================

namespace detail {

//! dist over a truth group re-read in the candidate's slot order; empty when
//! the variable sets differ.
inline std::optional<Categorical> reindexed(const Grouping &truth_g, int truth_j,
                                            std::span<const int> cand_slots, const Categorical &dist) {
  const auto tg = truth_g.group(truth_j);
  const int s = static_cast<int>(tg.size());
  std::vector<int> where(s);
  for (int k = 0; k < s; ++k) {
    const auto it = std::find(tg.begin(), tg.end(), cand_slots[k]);
    if (it == tg.end())
      return std::nullopt;
    where[k] = static_cast<int>(it - tg.begin());
  }
  std::vector<double> w(dist.size());
  for (std::size_t o = 0; o < w.size(); ++o) {
    std::size_t truth_o = 0;
    for (int k = 0; k < s; ++k)
      if ((o >> (s - 1 - k)) & 1U)
        truth_o |= std::size_t{1} << (s - 1 - where[k]);
    w[o] = dist[truth_o];
  }
  return Categorical::normalized(std::move(w));
}

inline int matching_group(const Grouping &truth_g, std::span<const int> cand_slots) {
  for (int j = 0; j < truth_g.num_groups(); ++j) {
    const auto tg = truth_g.group(j);
    if (std::is_permutation(tg.begin(), tg.end(), cand_slots.begin(), cand_slots.end()))
      return j;
  }
  return -1;
}

} // namespace detail

//! True when the candidate, filled with the truth's own distributions, implies
//! exactly the true joint (to 1e-12). In case12 mode every group of a class
//! shares the distribution read off the class's first group.
inline bool in_truth_orbit(const Candidate &c, const BitVectorTruth &truth, SearchMode mode,
                           double tol = 1e-12) {
  const Grouping &cg = c.grouping;
  if (cg.num_vars() != truth.num_vars() || cg.group_size() != truth.grouping.group_size())
    return false;
  std::vector<Categorical> dists(cg.num_groups());
  std::vector<int> class_first(detail::kMaxVars, -1);
  for (int j = 0; j < cg.num_groups(); ++j) {
    int source = j;
    if (mode == SearchMode::case12 && !c.assignment.empty()) {
      int &first = class_first[c.assignment[j]];
      if (first < 0)
        first = j;
      source = first;
    }
    const int tj = detail::matching_group(truth.grouping, cg.group(source));
    if (tj < 0)
      return false;
    auto d = detail::reindexed(truth.grouping, tj, cg.group(source), truth.group_dist(tj));
    if (!d)
      return false;
    dists[j] = std::move(*d);
  }
  if (truth.num_vars() <= kMaxJointVars) {
    const auto implied = joint_from_grouping(cg, dists);
    const auto target = true_joint(truth);
    for (std::size_t x = 0; x < target.size(); ++x)
      if (std::abs(implied[x] - target[x]) > tol)
        return false;
    return true;
  }
  // Same partition: the joints agree iff every group marginal agrees.
  for (int j = 0; j < cg.num_groups(); ++j) {
    const int tj = detail::matching_group(truth.grouping, cg.group(j));
    const auto own = detail::reindexed(truth.grouping, tj, cg.group(j), truth.group_dist(tj));
    for (std::size_t o = 0; o < own->size(); ++o)
      if (std::abs((*own)[o] - dists[j][o]) > tol)
        return false;
  }
  return true;
}

} // namespace urnlab
