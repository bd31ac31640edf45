#pragma once
// Experiment harness: streams samples from seeded truths, evaluates every
// requested estimator at each checkpoint and records KL-vs-samples curves.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "urnlab/error.hpp"
#include "urnlab/estimators.hpp"
#include "urnlab/io.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/search.hpp"
#include "urnlab/simulators.hpp"

namespace urnlab {

struct CurvePoint {
  std::int64_t samples = 0;
  double kl = 0.0;
  bool operator==(const CurvePoint &) const = default;
};

struct KlCurve {
  std::string label;
  //! Run index, or -1 for an average over runs.
  int run = -1;
  std::vector<CurvePoint> points;
  //! Optional per-unit breakdown (one sub-curve per urn).
  std::vector<KlCurve> per_unit;
  //! Sample counts at which the rare unit (urn 1) was drawn.
  std::vector<std::int64_t> markers;

  bool operator==(const KlCurve &) const = default;
};

//! Pointwise mean. Curves must share the checkpoint grid; +inf propagates.
inline KlCurve average_curves(std::span<const KlCurve> curves) {
  require(!curves.empty(), "average_curves: need at least one curve");
  KlCurve out;
  out.label = curves.front().label;
  out.run = -1;
  out.points = curves.front().points;
  for (const auto &c : curves) {
    require(c.points.size() == out.points.size(), "average_curves: checkpoint grids differ");
    for (std::size_t i = 0; i < c.points.size(); ++i)
      require(c.points[i].samples == out.points[i].samples, "average_curves: checkpoint grids differ");
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    double sum = 0.0;
    for (const auto &c : curves)
      sum += c.points[i].kl;
    out.points[i].kl = sum / static_cast<double>(curves.size());
  }
  const std::size_t units = curves.front().per_unit.size();
  bool all_have_units = units > 0;
  for (const auto &c : curves)
    all_have_units = all_have_units && c.per_unit.size() == units;
  if (all_have_units) {
    for (std::size_t u = 0; u < units; ++u) {
      std::vector<KlCurve> sub;
      for (const auto &c : curves)
        sub.push_back(c.per_unit[u]);
      out.per_unit.push_back(average_curves(sub));
    }
  }
  return out;
}

//! Every sample to 100, every 10 to 1000, then every 100; n itself is always
//! included.
inline std::vector<std::int64_t> default_checkpoints(std::int64_t n) {
  std::vector<std::int64_t> c;
  for (std::int64_t i = 1; i <= n; ++i) {
    if (i <= 100 || (i <= 1000 && i % 10 == 0) || i % 100 == 0)
      c.push_back(i);
  }
  if (n > 0 && (c.empty() || c.back() != n))
    c.push_back(n);
  return c;
}

//==============================================================================

enum class ExperimentKind { four_urns, bit_vectors };

struct SearchCaseConfig {
  Scorer case1_scorer = Scorer::paper_plugin;
  Scorer case12_scorer = Scorer::dirichlet_marginal;
  //! Sample counts at which the search is re-run; empty means every
  //! checkpoint. Between searches the previous best candidate is re-fitted.
  std::vector<std::int64_t> checkpoints;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::four_urns;
  std::vector<std::string> cases;
  std::int64_t n_samples = 1000;
  int n_runs = 1;
  //! Empty means default_checkpoints(n_samples).
  std::vector<std::int64_t> checkpoints;
  std::uint64_t seed = 0;
  bool resample_truth = true;
  UrnTruthConfig urn_truth;
  BitVectorTruthConfig bit_truth;
  EstimatorConfig estimator;
  SearchCaseConfig search;
  int workers = 1;
  bool allow_expensive = false;
  //! Candidate scorings allowed without allow_expensive.
  double expensive_budget = 5e8;
  bool log_y = true;
};

class ExpensiveRunRefused : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline const std::vector<std::string> &four_urns_cases() {
  static const std::vector<std::string> c{"raw", "ours", "ours_hard"};
  return c;
}

inline const std::vector<std::string> &bitvector_cases() {
  static const std::vector<std::string> c{"c0", "c0p", "c13", "c123", "c1", "c12"};
  return c;
}

//! Best candidate per search checkpoint for one structure-search case.
struct SearchTrace {
  std::string label;
  std::vector<std::int64_t> samples;
  std::vector<Candidate> best;
  std::vector<bool> in_truth_orbit;

  //! First sample count from which every later search lands in the truth
  //! orbit; -1 when that never happens.
  std::int64_t lock_in() const {
    std::int64_t lock = -1;
    for (std::size_t i = samples.size(); i-- > 0;) {
      if (!in_truth_orbit[i])
        break;
      lock = samples[i];
    }
    return lock;
  }
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<KlCurve> curves; // one per case, in spec order
  std::vector<SearchTrace> searches;
};

struct ExperimentResult {
  std::vector<std::string> labels;
  std::vector<RunRecord> runs;
  std::vector<KlCurve> mean; // one per case
  double wall_seconds = 0.0;
};

inline std::uint64_t run_seed(std::uint64_t base, int run) {
  return splitmix64(base + static_cast<std::uint64_t>(run));
}

namespace detail {

inline std::vector<std::int64_t> checkpoints_of(const ExperimentSpec &spec) {
  auto c = spec.checkpoints.empty() ? default_checkpoints(spec.n_samples) : spec.checkpoints;
  for (std::size_t i = 0; i < c.size(); ++i) {
    require(c[i] >= 1 && c[i] <= spec.n_samples, "experiment: checkpoints must lie in [1, n_samples]");
    require(i == 0 || c[i] > c[i - 1], "experiment: checkpoints must be strictly increasing");
  }
  c.insert(c.begin(), 0);
  return c;
}

inline std::vector<std::string> cases_of(const ExperimentSpec &spec) {
  const auto &allowed = spec.kind == ExperimentKind::four_urns ? four_urns_cases() : bitvector_cases();
  const auto cases = spec.cases.empty() ? allowed : spec.cases;
  for (const auto &c : cases)
    if (std::find(allowed.begin(), allowed.end(), c) == allowed.end())
      throw ConfigError("unknown case id '" + c + "'");
  return cases;
}

struct SeedSet {
  std::uint64_t truth;
  std::uint64_t stream;
  std::uint64_t em;
};

inline SeedSet seeds_for(const ExperimentSpec &spec, std::uint64_t rs) {
  return {spec.resample_truth ? rs : splitmix64(spec.seed ^ 0x7275746855ULL), splitmix64(rs ^ 0x73616d706c65ULL),
          splitmix64(rs ^ 0x656dULL)};
}

template <class Fn> void for_each_run(int n_runs, int workers, Fn &&fn) {
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < n_runs; r = next++)
      fn(r);
  };
  const int w = std::max(1, std::min(workers, n_runs));
  if (w == 1) {
    work();
    return;
  }
  std::vector<std::thread> pool;
  for (int i = 0; i < w; ++i)
    pool.emplace_back(work);
  for (auto &t : pool)
    t.join();
}

inline void finish(ExperimentResult &res, std::chrono::steady_clock::time_point start) {
  for (std::size_t c = 0; c < res.labels.size(); ++c) {
    std::vector<KlCurve> per_run;
    for (const auto &r : res.runs)
      per_run.push_back(r.curves[c]);
    res.mean.push_back(average_curves(per_run));
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

//==============================================================================

//! Four urns: raw per-urn tallies against two-type EM sharing. Total error is
//! the unweighted sum of the per-urn KLs.
inline ExperimentResult run_four_urns(const ExperimentSpec &spec) {
  require(spec.kind == ExperimentKind::four_urns, "run_four_urns: spec kind must be four_urns");
  require(spec.n_runs >= 1 && spec.n_samples >= 0, "run_four_urns: n_runs >= 1 and n_samples >= 0");
  const auto start = std::chrono::steady_clock::now();
  const auto checkpoints = detail::checkpoints_of(spec);
  ExperimentResult res;
  res.labels = detail::cases_of(spec);
  res.runs.resize(spec.n_runs);

  detail::for_each_run(spec.n_runs, spec.workers, [&](int r) {
    RunRecord &rec = res.runs[r];
    rec.seed = run_seed(spec.seed, r);
    const auto seeds = detail::seeds_for(spec, rec.seed);
    const UrnTruth truth = build_urn_truth(spec.urn_truth, seeds.truth);
    const int urns = truth.num_urns();
    SplitMix64 rng(seeds.stream);

    std::vector<TallyVector> tallies(urns, TallyVector(truth.num_colors()));
    std::vector<std::int64_t> markers;
    for (const auto &label : res.labels) {
      KlCurve c;
      c.label = label;
      c.run = r;
      c.per_unit.resize(urns);
      for (int u = 0; u < urns; ++u) {
        c.per_unit[u].label = label;
        c.per_unit[u].run = r;
      }
      rec.curves.push_back(std::move(c));
    }

    std::int64_t seen = 0;
    for (std::int64_t cp : checkpoints) {
      while (seen < cp) {
        const auto s = draw_urn_sample(truth, rng);
        tallies[s.urn].add(s.color);
        ++seen;
        if (s.urn == 0)
          markers.push_back(seen);
      }
      std::optional<EmResult> em;
      for (std::size_t ci = 0; ci < res.labels.size(); ++ci) {
        const auto &label = res.labels[ci];
        std::vector<Categorical> est;
        if (label == "raw") {
          est = raw_tally_estimate(tallies, spec.estimator);
        } else {
          if (!em)
            em = em_two_type(tallies, spec.estimator, seeds.em);
          est = per_unit_estimate(*em, label == "ours" ? Readout::mixture : Readout::hard);
        }
        double total = 0.0;
        for (int u = 0; u < urns; ++u) {
          const double kl = kl_divergence(truth.urn_dist(u), est[u]);
          rec.curves[ci].per_unit[u].points.push_back({cp, kl});
          total += kl;
        }
        rec.curves[ci].points.push_back({cp, total});
      }
    }
    for (auto &c : rec.curves)
      c.markers = markers;
  });
  detail::finish(res, start);
  return res;
}

inline SearchConfig search_config_for(const ExperimentSpec &spec, SearchMode mode) {
  SearchConfig cfg;
  cfg.num_vars = spec.bit_truth.num_vars;
  cfg.num_groups = spec.bit_truth.num_groups;
  cfg.group_size = spec.bit_truth.group_size;
  cfg.num_types = kNumTypes;
  cfg.mode = mode;
  cfg.scorer = mode == SearchMode::case1 ? spec.search.case1_scorer : spec.search.case12_scorer;
  cfg.top_k = 1;
  cfg.workers = spec.n_runs >= spec.workers ? 1 : spec.workers;
  return cfg;
}

//! Candidate scorings a bit-vector spec would perform for its search cases.
inline double search_cost(const ExperimentSpec &spec) {
  const auto cases = detail::cases_of(spec);
  const auto checkpoints = detail::checkpoints_of(spec);
  double n_search = 0;
  if (spec.search.checkpoints.empty())
    n_search = static_cast<double>(checkpoints.size() - 1);
  else
    n_search = static_cast<double>(spec.search.checkpoints.size());
  double cost = 0;
  for (const auto &c : cases) {
    if (c != "c1" && c != "c12")
      continue;
    const auto mode = c == "c1" ? SearchMode::case1 : SearchMode::case12;
    cost += static_cast<double>(canonical_count(search_config_for(spec, mode))) * n_search * spec.n_runs;
  }
  return cost;
}

//! The six bit-vector cases over one shared sample stream per run.
inline ExperimentResult run_bitvectors(const ExperimentSpec &spec) {
  require(spec.kind == ExperimentKind::bit_vectors, "run_bitvectors: spec kind must be bit_vectors");
  require(spec.n_runs >= 1 && spec.n_samples >= 0, "run_bitvectors: n_runs >= 1 and n_samples >= 0");
  const auto start = std::chrono::steady_clock::now();
  const auto checkpoints = detail::checkpoints_of(spec);
  ExperimentResult res;
  res.labels = detail::cases_of(spec);

  const double cost = search_cost(spec);
  if (cost > spec.expensive_budget && !spec.allow_expensive) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "structure search would score %.3g candidates (about %.1f CPU-hours at 1e6/s); "
                  "pass allow_expensive to run it",
                  cost, cost / 1e6 / 3600.0);
    throw ExpensiveRunRefused(buf);
  }

  const int v = spec.bit_truth.num_vars;
  std::vector<std::int64_t> search_points = spec.search.checkpoints;
  res.runs.resize(spec.n_runs);

  detail::for_each_run(spec.n_runs, spec.workers, [&](int r) {
    RunRecord &rec = res.runs[r];
    rec.seed = run_seed(spec.seed, r);
    const auto seeds = detail::seeds_for(spec, rec.seed);
    const BitVectorTruth truth = build_bitvector_truth(spec.bit_truth, seeds.truth);
    const Categorical target = true_joint(truth);
    SplitMix64 rng(seeds.stream);
    std::vector<BitPattern> data;
    data.reserve(static_cast<std::size_t>(spec.n_samples));

    struct SearchState {
      SearchConfig cfg;
      std::optional<Candidate> best;
      SearchTrace trace;
    };
    std::map<std::string, SearchState> state;
    for (const auto &label : res.labels) {
      KlCurve c;
      c.label = label;
      c.run = r;
      rec.curves.push_back(std::move(c));
      if (label == "c1" || label == "c12") {
        SearchState st;
        st.cfg = search_config_for(spec, label == "c1" ? SearchMode::case1 : SearchMode::case12);
        st.trace.label = label;
        state.emplace(label, std::move(st));
      }
    }

    const Categorical uniform = Categorical::uniform(std::size_t{1} << v);
    for (std::int64_t cp : checkpoints) {
      while (static_cast<std::int64_t>(data.size()) < cp)
        data.push_back(draw_bitvector(truth, rng));
      const std::span<const BitPattern> seen(data);
      for (std::size_t ci = 0; ci < res.labels.size(); ++ci) {
        const auto &label = res.labels[ci];
        Categorical est;
        if (label == "c0") {
          const auto t = bit_tallies(seen, v);
          est = joint_from_independent_bits(independent_bits_estimate(t));
        } else if (label == "c0p") {
          est = joint_dirichlet_estimate(joint_tally(seen, v), spec.estimator);
        } else if (label == "c13" || label == "c123") {
          const auto fit = grouped_known_estimate(truth.grouping, seen, spec.estimator, label == "c123", seeds.em);
          est = joint_from_grouping(truth.grouping, fit.groups);
        } else {
          auto &st = state.at(label);
          const bool rerun = search_points.empty() ||
                             std::binary_search(search_points.begin(), search_points.end(), cp);
          if (cp > 0 && rerun) {
            st.best = search(seen, st.cfg).front().candidate;
            st.trace.samples.push_back(cp);
            st.trace.best.push_back(*st.best);
            st.trace.in_truth_orbit.push_back(in_truth_orbit(*st.best, truth, st.cfg.mode));
          }
          est = st.best ? estimate_from_candidate(seen, *st.best, st.cfg, spec.estimator, seeds.em) : uniform;
        }
        rec.curves[ci].points.push_back({cp, kl_divergence(target, est)});
      }
    }
    for (auto &[label, st] : state)
      rec.searches.push_back(std::move(st.trace));
  });
  detail::finish(res, start);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentSpec &spec) {
  return spec.kind == ExperimentKind::four_urns ? run_four_urns(spec) : run_bitvectors(spec);
}

//==============================================================================
// CSV

inline std::string format_double(double x) {
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

//! Columns case,run,samples,kl,urn. run is "mean" for averages; urn is empty
//! for totals and 1-indexed for per-unit rows.
inline std::string curves_to_csv(std::span<const KlCurve> curves) {
  std::string out = "case,run,samples,kl,urn\n";
  auto emit = [&](const KlCurve &c, const std::string &urn) {
    const std::string run = c.run < 0 ? "mean" : std::to_string(c.run);
    for (const auto &p : c.points)
      out += c.label + "," + run + "," + std::to_string(p.samples) + "," + format_double(p.kl) + "," + urn + "\n";
  };
  for (const auto &c : curves) {
    emit(c, "");
    for (std::size_t u = 0; u < c.per_unit.size(); ++u) {
      KlCurve sub = c.per_unit[u];
      sub.label = c.label;
      sub.run = c.run;
      emit(sub, std::to_string(u + 1));
    }
  }
  return out;
}

inline std::vector<KlCurve> curves_from_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<KlCurve> out;
  std::map<std::pair<std::string, int>, std::size_t> index;
  auto fail = [&](const std::string &why) {
    throw ParseError("csv line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (lineno == 1) {
      if (line != "case,run,samples,kl,urn")
        fail("expected header case,run,samples,kl,urn");
      continue;
    }
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos)
        break;
      pos = comma + 1;
    }
    if (f.size() != 5)
      fail("expected 5 columns");
    int run = -1;
    try {
      if (f[1] != "mean")
        run = std::stoi(f[1]);
    } catch (...) {
      fail("column 'run' must be an integer or 'mean'");
    }
    CurvePoint p;
    char *end = nullptr;
    p.samples = std::strtoll(f[2].c_str(), &end, 10);
    if (f[2].empty() || *end)
      fail("column 'samples' must be an integer");
    p.kl = std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || *end)
      fail("column 'kl' must be a number");
    const auto key = std::make_pair(f[0], run);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      KlCurve c;
      c.label = f[0];
      c.run = run;
      out.push_back(std::move(c));
    }
    KlCurve &c = out[it->second];
    if (f[4].empty()) {
      c.points.push_back(p);
    } else {
      const int urn = std::atoi(f[4].c_str());
      if (urn < 1)
        fail("column 'urn' must be empty or a positive integer");
      if (static_cast<int>(c.per_unit.size()) < urn)
        c.per_unit.resize(urn);
      c.per_unit[urn - 1].label = c.label;
      c.per_unit[urn - 1].run = c.run;
      c.per_unit[urn - 1].points.push_back(p);
    }
  }
  return out;
}

inline void write_curves_csv(std::span<const KlCurve> curves, const std::string &path) {
  write_file(path, curves_to_csv(curves));
}

inline std::vector<KlCurve> read_curves_csv(const std::string &path) {
  return curves_from_csv(read_file(path));
}

//==============================================================================
// SVG

struct SvgOptions {
  bool log_y = false;
  std::string title;
  int width = 720;
  int height = 440;
};

//! One polyline per curve, legend from labels, markers as dots on the curve.
//! Output depends only on the inputs.
namespace detail {

inline std::string xml_escape(const std::string &in) {
  std::string out;
  for (char ch : in) {
    switch (ch) {
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '&': out += "&amp;"; break;
    case '"': out += "&quot;"; break;
    default: out += ch;
    }
  }
  return out;
}

} // namespace detail

inline std::string render_svg(std::span<const KlCurve> curves, const SvgOptions &opt = {}) {
  static const char *palette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double left = 70, right = 170, top = 40, bottom = 50;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;

  double xmax = 1, ymin = std::numeric_limits<double>::infinity(), ymax = 0;
  for (const auto &c : curves)
    for (const auto &p : c.points) {
      xmax = std::max<double>(xmax, static_cast<double>(p.samples));
      if (!std::isfinite(p.kl))
        continue;
      ymax = std::max(ymax, p.kl);
      if (p.kl > 0)
        ymin = std::min(ymin, p.kl);
    }
  if (!(ymax > 0))
    ymax = 1;
  double lo = 0, hi = ymax;
  if (opt.log_y) {
    if (!std::isfinite(ymin))
      ymin = ymax / 10;
    lo = std::floor(std::log10(ymin));
    hi = std::ceil(std::log10(ymax));
    if (hi <= lo)
      hi = lo + 1;
  }
  auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };
  auto sx = [&](double x) { return left + pw * x / xmax; };
  auto sy = [&](double y) {
    double t;
    if (opt.log_y)
      t = y > 0 ? (std::log10(y) - lo) / (hi - lo) : 0.0;
    else
      t = y / hi;
    t = std::clamp(t, 0.0, 1.0);
    return top + ph * (1.0 - t);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    s << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(opt.title)
      << "</text>\n";
  s << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double x = xmax * i / 5.0;
    s << "<text x=\"" << fmt(sx(x)) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">"
      << static_cast<long long>(std::llround(x)) << "</text>\n";
  }
  if (opt.log_y) {
    for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); ++e)
      s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(sy(std::pow(10.0, e)) + 4)
        << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  } else {
    for (int i = 0; i <= 5; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", hi * i / 5.0);
      s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(sy(hi * i / 5.0) + 4) << "\" text-anchor=\"end\">"
        << buf << "</text>\n";
    }
  }
  s << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << opt.height - 10
    << "\" text-anchor=\"middle\">samples seen</text>\n";
  s << "<text x=\"16\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt(top + ph / 2) << ")\">KL(P || Q) (nats)</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto &c = curves[i];
    const char *color = palette[i % 10];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto &p : c.points) {
      if (!std::isfinite(p.kl))
        continue;
      s << (first ? "" : " ") << fmt(sx(static_cast<double>(p.samples))) << "," << fmt(sy(p.kl));
      first = false;
    }
    s << "\"/>\n";
    for (std::int64_t m : c.markers) {
      const auto it = std::lower_bound(c.points.begin(), c.points.end(), m,
                                       [](const CurvePoint &p, std::int64_t x) { return p.samples < x; });
      if (it == c.points.end() || !std::isfinite(it->kl))
        continue;
      s << "<circle cx=\"" << fmt(sx(static_cast<double>(m))) << "\" cy=\"" << fmt(sy(it->kl))
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 14 + 16.0 * static_cast<double>(i);
    s << "<line x1=\"" << fmt(left + pw + 10) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(left + pw + 30)
      << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    std::string name = c.label;
    if (c.run >= 0)
      name += " (run " + std::to_string(c.run) + ")";
    s << "<text x=\"" << fmt(left + pw + 34) << "\" y=\"" << fmt(ly) << "\">" << detail::xml_escape(name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

inline void write_svg(std::span<const KlCurve> curves, const std::string &path, const SvgOptions &opt = {}) {
  write_file(path, render_svg(curves, opt));
}

//! Per-unit sub-curves flattened into labeled curves ("ours urn1", ...).
inline std::vector<KlCurve> unit_curves(const KlCurve &c) {
  std::vector<KlCurve> out;
  for (std::size_t u = 0; u < c.per_unit.size(); ++u) {
    KlCurve sub = c.per_unit[u];
    sub.label = c.label + " urn" + std::to_string(u + 1);
    sub.run = -1;
    if (u == 0)
      sub.markers = c.markers;
    out.push_back(std::move(sub));
  }
  return out;
}

//==============================================================================
// Spec files

namespace detail {

inline std::vector<std::int64_t> int_list(const json &j, const char *name) {
  return get_as<std::vector<std::int64_t>>(j, name);
}

inline Readout readout_from(const std::string &s) {
  if (s == "mixture")
    return Readout::mixture;
  if (s == "hard")
    return Readout::hard;
  throw ParseError("field 'estimator.readout' must be \"mixture\" or \"hard\"");
}

} // namespace detail

inline ExperimentSpec experiment_spec_from_json(const json &j) {
  using detail::get_or;
  if (!j.is_object())
    throw ParseError("experiment spec must be a JSON object");
  ExperimentSpec spec;
  const auto kind = detail::get_as<std::string>(detail::field(j, "kind"), "kind");
  if (kind == "four_urns")
    spec.kind = ExperimentKind::four_urns;
  else if (kind == "bit_vectors")
    spec.kind = ExperimentKind::bit_vectors;
  else
    throw ParseError("field 'kind' must be \"four_urns\" or \"bit_vectors\"");
  spec.cases = get_or<std::vector<std::string>>(j, "cases", {});
  spec.n_samples = get_or<std::int64_t>(j, "n_samples", spec.n_samples);
  spec.n_runs = get_or<int>(j, "n_runs", spec.n_runs);
  if (j.contains("checkpoints") && !(j.at("checkpoints") == "default"))
    spec.checkpoints = detail::int_list(j.at("checkpoints"), "checkpoints");
  spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
  spec.resample_truth = get_or<bool>(j, "resample_truth", spec.resample_truth);
  spec.workers = get_or<int>(j, "workers", spec.workers);
  spec.allow_expensive = get_or<bool>(j, "allow_expensive", spec.allow_expensive);
  spec.log_y = get_or<bool>(j, "log_y", spec.log_y);
  if (j.contains("truth")) {
    if (spec.kind == ExperimentKind::four_urns)
      spec.urn_truth = urn_config_from_json(j.at("truth"));
    else
      spec.bit_truth = bit_config_from_json(j.at("truth"));
  }
  if (j.contains("estimator")) {
    const auto &e = j.at("estimator");
    auto &est = spec.estimator;
    est.pseudocount = get_or<double>(e, "pseudocount", est.pseudocount);
    est.em_tol = get_or<double>(e, "em_tol", est.em_tol);
    est.em_max_iters = get_or<int>(e, "em_max_iters", est.em_max_iters);
    est.em_restarts = get_or<int>(e, "em_restarts", est.em_restarts);
    est.em_init_noise = get_or<double>(e, "em_init_noise", est.em_init_noise);
    if (e.contains("readout"))
      est.readout = detail::readout_from(detail::get_as<std::string>(e.at("readout"), "estimator.readout"));
  }
  if (j.contains("search")) {
    const auto &s = j.at("search");
    if (s.contains("case1_scorer"))
      spec.search.case1_scorer = scorer_from_name(detail::get_as<std::string>(s.at("case1_scorer"), "search.case1_scorer"));
    if (s.contains("case12_scorer"))
      spec.search.case12_scorer =
          scorer_from_name(detail::get_as<std::string>(s.at("case12_scorer"), "search.case12_scorer"));
    if (s.contains("checkpoints"))
      spec.search.checkpoints = detail::int_list(s.at("checkpoints"), "search.checkpoints");
  }
  if (spec.n_runs < 1)
    throw ParseError("field 'n_runs' must be at least 1");
  if (spec.n_samples < 0)
    throw ParseError("field 'n_samples' must be nonnegative");
  if (spec.workers < 1)
    throw ParseError("field 'workers' must be at least 1");
  for (std::size_t i = 0; i < spec.checkpoints.size(); ++i)
    if (spec.checkpoints[i] < 1 || spec.checkpoints[i] > spec.n_samples ||
        (i > 0 && spec.checkpoints[i] <= spec.checkpoints[i - 1]))
      throw ParseError("field 'checkpoints' must be strictly increasing within [1, n_samples]");
  const auto &allowed = spec.kind == ExperimentKind::four_urns ? four_urns_cases() : bitvector_cases();
  for (const auto &c : spec.cases)
    if (std::find(allowed.begin(), allowed.end(), c) == allowed.end())
      throw ParseError("field 'cases': unknown case id '" + c + "'");
  return spec;
}

//==============================================================================
// Output directory

struct ExperimentOutputs {
  std::vector<std::string> files;
  json manifest;
};

//! Writes curves.csv, the figure SVGs and manifest.json into out_dir.
//! Everything except the manifest's wall_seconds is a function of the spec.
inline ExperimentOutputs write_experiment(const ExperimentSpec &spec, const ExperimentResult &res,
                                          const std::string &spec_text, const std::string &out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  ExperimentOutputs out;
  auto path = [&](const char *name) {
    out.files.emplace_back(name);
    return (fs::path(out_dir) / name).string();
  };

  std::vector<KlCurve> all;
  for (const auto &r : res.runs)
    for (const auto &c : r.curves)
      all.push_back(c);
  for (const auto &m : res.mean)
    all.push_back(m);
  write_curves_csv(all, path("curves.csv"));

  SvgOptions opt;
  opt.log_y = spec.log_y;
  std::vector<KlCurve> total = res.mean;
  for (const auto &c : res.runs.front().curves) {
    KlCurve single = c;
    single.per_unit.clear();
    single.markers.clear();
    total.push_back(std::move(single));
  }
  opt.title = "Total error vs samples seen";
  write_svg(total, path("fig_total.svg"), opt);

  if (spec.kind == ExperimentKind::four_urns) {
    std::vector<KlCurve> split;
    for (const auto &c : res.runs.front().curves) {
      if (c.label == "ours_hard")
        continue;
      for (auto &u : unit_curves(c))
        split.push_back(std::move(u));
    }
    opt.title = "Per-urn error, run 0";
    write_svg(split, path("fig_per_urn.svg"), opt);
  }

  json m;
  m["version"] = kFormatVersion;
  m["spec_digest"] = hex64(fnv1a64(spec_text));
  m["base_seed"] = spec.seed;
  json seeds = json::array();
  for (const auto &r : res.runs)
    seeds.push_back(r.seed);
  m["run_seeds"] = seeds;
  m["cases"] = res.labels;
  json lock = json::object();
  for (const auto &r : res.runs)
    for (const auto &t : r.searches)
      lock[t.label].push_back(t.lock_in());
  if (!lock.empty())
    m["lock_in_samples"] = lock;
  m["files"] = out.files;
  m["wall_seconds"] = res.wall_seconds;
  write_file(path("manifest.json"), m.dump(2) + "\n");
  out.manifest = m;
  return out;
}

} // namespace urnlab
