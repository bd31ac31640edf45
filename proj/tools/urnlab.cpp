// Command-line front end. Every subcommand parses flags, calls into the
// library, and writes data to a file or stdout. Diagnostics go to stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "urnlab/urnlab.hpp"

using namespace urnlab;

namespace {

int default_workers() {
  if (const char *env = std::getenv("LSL_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1)
      return w;
  }
  return 1;
}

void emit(const std::string &out, const std::string &bytes) {
  if (out.empty() || out == "-")
    std::cout << bytes << std::flush;
  else
    write_file(out, bytes);
}

json load_json(const std::string &path) { return parse_json(read_file(path), path); }

//------------------------------------------------------------------------------

struct GenModelArgs {
  std::string kind;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

void gen_model(const GenModelArgs &a) {
  const json cfg = a.config.empty() ? json::object() : load_json(a.config);
  if (a.kind == "urns")
    emit(a.out, model_to_json(build_urn_truth(urn_config_from_json(cfg), a.seed)).dump(2) + "\n");
  else
    emit(a.out, model_to_json(build_bitvector_truth(bit_config_from_json(cfg), a.seed)).dump(2) + "\n");
}

struct SampleArgs {
  std::string model;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void sample(const SampleArgs &a) {
  const Model m = read_model(a.model);
  SplitMix64 rng(a.seed);
  if (const auto *u = std::get_if<UrnTruth>(&m)) {
    std::vector<UrnSample> s;
    for (std::int64_t i = 0; i < a.n; ++i)
      s.push_back(draw_urn_sample(*u, rng));
    emit(a.out, dataset_to_jsonl(s));
  } else {
    const auto &b = std::get<BitVectorTruth>(m);
    std::vector<BitPattern> s;
    for (std::int64_t i = 0; i < a.n; ++i)
      s.push_back(draw_bitvector(b, rng));
    emit(a.out, dataset_to_jsonl(s, b.num_vars()));
  }
}

struct EstimateArgs {
  std::string case_id;
  std::string data;
  std::string model;
  std::string out;
  std::string estimator;
  std::uint64_t seed = 0;
  int g = 0;
  int s = 0;
  std::string scorer;
  int workers = 1;
};

EstimatorConfig estimator_from(const std::string &path) {
  if (path.empty())
    return {};
  json spec = {{"kind", "four_urns"}, {"estimator", load_json(path)}};
  return experiment_spec_from_json(spec).estimator;
}

void estimate(const EstimateArgs &a) {
  const Dataset d = read_dataset(a.data);
  const EstimatorConfig est = estimator_from(a.estimator);
  std::optional<Model> model;
  if (!a.model.empty())
    model = read_model(a.model);
  json out;
  out["version"] = kFormatVersion;
  out["case"] = a.case_id;

  const bool urn_case = a.case_id == "raw" || a.case_id == "ours" || a.case_id == "ours_hard";
  const auto &bit_cases = bitvector_cases();
  if (!urn_case && std::find(bit_cases.begin(), bit_cases.end(), a.case_id) == bit_cases.end())
    throw ParseError("field 'case': unknown case id '" + a.case_id + "'");

  if (urn_case) {
    if (d.kind == DatasetKind::bits)
      throw ParseError("field 'case': '" + a.case_id + "' needs urn data");
    const UrnTruth *truth = model ? std::get_if<UrnTruth>(&*model) : nullptr;
    if (model && !truth)
      throw ParseError("field 'kind': model must be an urn model");
    int urns = 4, colors = 8;
    if (truth) {
      urns = truth->num_urns();
      colors = truth->num_colors();
    }
    for (const auto &s : d.urns) {
      urns = std::max(urns, s.urn + 1);
      colors = std::max(colors, s.color + 1);
    }
    if (truth && (urns != truth->num_urns() || colors != truth->num_colors()))
      throw ParseError("field 'urn'/'color': data exceeds the model's urns or colors");
    std::vector<TallyVector> tallies(urns, TallyVector(colors));
    for (const auto &s : d.urns)
      tallies[s.urn].add(s.color);
    std::vector<Categorical> q;
    if (a.case_id == "raw") {
      q = raw_tally_estimate(tallies, est);
    } else {
      const auto em = em_two_type(tallies, est, a.seed);
      q = per_unit_estimate(em, a.case_id == "ours" ? Readout::mixture : Readout::hard);
      out["em"] = em_result_json(em);
    }
    json units = json::array();
    for (const auto &c : q)
      units.push_back(detail::categorical_to(c));
    out["unit_dists"] = units;
    if (truth) {
      double total = 0;
      json per = json::array();
      for (int u = 0; u < urns; ++u) {
        const double kl = kl_divergence(truth->urn_dist(u), q[u]);
        per.push_back(kl);
        total += kl;
      }
      out["kl_per_unit"] = per;
      out["kl"] = total;
    }
  } else {
    if (d.kind == DatasetKind::urns)
      throw ParseError("field 'case': '" + a.case_id + "' needs bit-vector data");
    const BitVectorTruth *truth = model ? std::get_if<BitVectorTruth>(&*model) : nullptr;
    if (model && !truth)
      throw ParseError("field 'kind': model must be a bit-vector model");
    const int v = truth ? truth->num_vars() : d.num_vars;
    if (d.kind == DatasetKind::bits && d.num_vars != v)
      throw ParseError("field 'bits': data width does not match the model");
    if (v < 1)
      throw ParseError("field 'bits': cannot infer V from empty data without --model");
    const std::span<const BitPattern> data(d.bits);
    Categorical q;
    if (a.case_id == "c0") {
      const auto p = independent_bits_estimate(bit_tallies(data, v));
      out["bit_probs"] = p;
      q = joint_from_independent_bits(p);
    } else if (a.case_id == "c0p") {
      q = joint_dirichlet_estimate(joint_tally(data, v), est);
    } else if (a.case_id == "c13" || a.case_id == "c123") {
      if (!truth)
        throw ParseError("field 'model': case '" + a.case_id + "' needs the true grouping from --model");
      const auto fit = grouped_known_estimate(truth->grouping, data, est, a.case_id == "c123", a.seed);
      json groups = json::array();
      for (const auto &c : fit.groups)
        groups.push_back(detail::categorical_to(c));
      out["grouping"] = detail::grouping_to(truth->grouping);
      out["group_dists"] = groups;
      if (fit.em)
        out["em"] = em_result_json(*fit.em);
      q = implied_joint(truth->grouping, fit);
    } else {
      SearchConfig cfg;
      cfg.num_vars = v;
      cfg.group_size = a.s > 0 ? a.s : (truth ? truth->grouping.group_size() : 0);
      cfg.num_groups = a.g > 0 ? a.g : (truth ? truth->grouping.num_groups() : 0);
      if (cfg.group_size < 1 || cfg.num_groups < 1)
        throw ParseError("field 'g'/'s': search cases need --g and --s or a --model");
      cfg.mode = a.case_id == "c1" ? SearchMode::case1 : SearchMode::case12;
      cfg.scorer = a.scorer.empty() ? (cfg.mode == SearchMode::case1 ? Scorer::paper_plugin : ExperimentSpec{}.search.case12_scorer)
                                    : scorer_from_name(a.scorer);
      cfg.workers = a.workers;
      cfg.top_k = 1;
      if (data.empty())
        throw ParseError("field 'data': search cases need at least one sample");
      const auto best = search(data, cfg).front();
      out["grouping"] = detail::grouping_to(best.candidate.grouping);
      out["assignment"] = detail::labels_to(best.candidate.assignment);
      out["log_score"] = best.log_score;
      q = estimate_from_candidate(data, best.candidate, cfg, est, a.seed);
      if (truth)
        out["in_truth_orbit"] = in_truth_orbit(best.candidate, *truth, cfg.mode);
    }
    out["joint"] = detail::categorical_to(q);
    if (truth)
      out["kl"] = kl_divergence(true_joint(*truth), q);
  }

  emit(a.out, out.dump(2) + "\n");
  if (out.contains("kl")) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", out["kl"].get<double>());
    if (a.out.empty() || a.out == "-")
      std::cerr << "kl " << buf << "\n";
    else
      std::cout << buf << "\n";
  }
}

struct SearchArgs {
  std::string data;
  int v = 0, g = 0, s = 0, types = 2;
  std::string mode = "case12";
  std::string scorer = "paper";
  int workers = 1;
  int top_k = 10;
  std::string out;
};

void search_cmd(const SearchArgs &a) {
  const Dataset d = read_dataset(a.data);
  if (d.kind == DatasetKind::urns)
    throw ParseError("field 'bits': search needs bit-vector data");
  if (d.kind == DatasetKind::bits && d.num_vars != a.v)
    throw ParseError("field 'bits': data has " + std::to_string(d.num_vars) + " variables but --v is " +
                     std::to_string(a.v));
  SearchConfig cfg;
  cfg.num_vars = a.v;
  cfg.num_groups = a.g;
  cfg.group_size = a.s;
  cfg.num_types = a.types;
  cfg.mode = mode_from_name(a.mode);
  cfg.scorer = scorer_from_name(a.scorer);
  cfg.workers = a.workers;
  cfg.top_k = a.top_k;
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t last_pct = 0;
  const auto top = search(d.bits, cfg, [&](std::uint64_t done, std::uint64_t total) {
    const std::uint64_t pct = total ? done * 100 / total : 100;
    if (pct >= last_pct + 10) {
      last_pct = pct;
      std::cerr << "search: " << pct << "%\n";
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "search: scored " << canonical_count(cfg) << " candidates in " << secs << " s\n";
  emit(a.out, search_result_json(cfg, data_digest(d.bits, a.v), top).dump(2) + "\n");
}

struct ExperimentArgs {
  std::string spec;
  std::string out_dir;
  bool allow_expensive = false;
  int workers = 1;
};

void experiment_cmd(const ExperimentArgs &a) {
  const std::string text = read_file(a.spec);
  ExperimentSpec spec = experiment_spec_from_json(parse_json(text, a.spec));
  spec.workers = a.workers;
  spec.allow_expensive = spec.allow_expensive || a.allow_expensive;
  const auto res = run_experiment(spec);
  const auto outputs = write_experiment(spec, res, text, a.out_dir);
  std::cerr << "experiment: " << res.runs.size() << " runs in " << res.wall_seconds << " s; wrote";
  for (const auto &f : outputs.files)
    std::cerr << " " << f;
  std::cerr << " to " << a.out_dir << "\n";
}

struct PlotArgs {
  std::string csv;
  std::string out;
  bool log_y = false;
  std::string title;
  bool mean_only = false;
  bool per_unit = false;
};

void plot_cmd(const PlotArgs &a) {
  const auto curves = read_curves_csv(a.csv);
  std::vector<KlCurve> shown;
  for (const auto &c : curves) {
    if (a.mean_only && c.run >= 0)
      continue;
    if (a.per_unit && !c.per_unit.empty()) {
      for (auto &u : unit_curves(c))
        shown.push_back(std::move(u));
    } else {
      shown.push_back(c);
    }
  }
  SvgOptions opt;
  opt.log_y = a.log_y;
  opt.title = a.title;
  emit(a.out, render_svg(shown, opt));
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"urnlab: structural priors and sample complexity"};
  app.require_subcommand(1, 1);
  const int workers = default_workers();

  GenModelArgs gm;
  auto *c_gm = app.add_subcommand("gen-model", "Draw a hidden ground-truth model");
  c_gm->add_option("--kind", gm.kind, "urns or bits")->required()->check(CLI::IsMember({"urns", "bits"}));
  c_gm->add_option("--config", gm.config, "truth config JSON");
  c_gm->add_option("--seed", gm.seed, "RNG seed");
  c_gm->add_option("--out", gm.out, "output model JSON (default stdout)");

  SampleArgs sa;
  auto *c_sa = app.add_subcommand("sample", "Draw samples from a model");
  c_sa->add_option("--model", sa.model)->required();
  c_sa->add_option("--n", sa.n)->required()->check(CLI::NonNegativeNumber);
  c_sa->add_option("--seed", sa.seed);
  c_sa->add_option("--out", sa.out, "output JSON lines (default stdout)");

  EstimateArgs ea;
  ea.workers = workers;
  auto *c_ea = app.add_subcommand("estimate", "Fit one estimator case to a dataset");
  c_ea->add_option("--case", ea.case_id, "raw, ours, ours_hard, c0, c0p, c13, c123, c1 or c12")->required();
  c_ea->add_option("--data", ea.data)->required();
  c_ea->add_option("--model", ea.model, "true model; enables KL reporting");
  c_ea->add_option("--out", ea.out);
  c_ea->add_option("--estimator", ea.estimator, "estimator config JSON");
  c_ea->add_option("--seed", ea.seed, "EM restart seed");
  c_ea->add_option("--g", ea.g, "groups, for c1/c12 without --model");
  c_ea->add_option("--s", ea.s, "group size, for c1/c12 without --model");
  c_ea->add_option("--scorer", ea.scorer, "paper, marginal or normalized");
  c_ea->add_option("--workers", ea.workers)->check(CLI::PositiveNumber);

  SearchArgs se;
  se.workers = workers;
  auto *c_se = app.add_subcommand("search", "Exhaustive structure search");
  c_se->add_option("--data", se.data)->required();
  c_se->add_option("--v", se.v)->required();
  c_se->add_option("--g", se.g)->required();
  c_se->add_option("--s", se.s)->required();
  c_se->add_option("--types", se.types);
  c_se->add_option("--mode", se.mode)->check(CLI::IsMember({"case1", "case12"}));
  c_se->add_option("--scorer", se.scorer)->check(CLI::IsMember({"paper", "marginal", "normalized"}));
  c_se->add_option("--workers", se.workers)->check(CLI::PositiveNumber);
  c_se->add_option("--top-k", se.top_k)->check(CLI::PositiveNumber);
  c_se->add_option("--out", se.out);

  ExperimentArgs ex;
  ex.workers = workers;
  auto *c_ex = app.add_subcommand("experiment", "Run a KL-vs-samples experiment");
  c_ex->add_option("--spec", ex.spec)->required();
  c_ex->add_option("--out-dir", ex.out_dir)->required();
  c_ex->add_flag("--allow-expensive", ex.allow_expensive);
  c_ex->add_option("--workers", ex.workers)->check(CLI::PositiveNumber);

  PlotArgs pl;
  auto *c_pl = app.add_subcommand("plot", "Render curves CSV as SVG");
  c_pl->add_option("--csv", pl.csv)->required();
  c_pl->add_option("--out", pl.out)->required();
  c_pl->add_flag("--log-y", pl.log_y);
  c_pl->add_option("--title", pl.title);
  c_pl->add_flag("--mean-only", pl.mean_only);
  c_pl->add_flag("--per-unit", pl.per_unit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*c_gm)
      gen_model(gm);
    else if (*c_sa)
      sample(sa);
    else if (*c_ea)
      estimate(ea);
    else if (*c_se)
      search_cmd(se);
    else if (*c_ex)
      experiment_cmd(ex);
    else if (*c_pl)
      plot_cmd(pl);
  } catch (const ParseError &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 2;
  } catch (const ContractError &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "urnlab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
