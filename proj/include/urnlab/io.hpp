#pragma once
// JSON model files, JSON-lines datasets, truth configs and search results.
// Files use 1-indexed urn, color and variable labels; the library is
// 0-indexed throughout.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "urnlab/error.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/search.hpp"
#include "urnlab/simulators.hpp"

namespace urnlab {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

//! 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write " + path);
  out << bytes;
  if (!out)
    throw std::runtime_error("write failed for " + path);
}

inline json parse_json(const std::string &text, const std::string &what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(what + ": " + e.what());
  }
}

//==============================================================================
// Field helpers. Every error names the offending field.

namespace detail {

inline const json &field(const json &obj, const char *name) {
  if (!obj.is_object() || !obj.contains(name))
    throw ParseError("missing field '" + std::string(name) + "'");
  return obj.at(name);
}

template <class T> T get_as(const json &j, const std::string &name) {
  try {
    return j.get<T>();
  } catch (const json::exception &) {
    throw ParseError("field '" + name + "' has the wrong type");
  }
}

template <class T> T get_or(const json &obj, const char *name, T fallback) {
  if (!obj.contains(name))
    return fallback;
  return get_as<T>(obj.at(name), name);
}

inline Categorical categorical_from(const json &j, const std::string &name) {
  try {
    return Categorical(get_as<std::vector<double>>(j, name));
  } catch (const ContractError &e) {
    throw ParseError("field '" + name + "': " + e.what());
  }
}

inline TypePair type_pair_from(const json &j) {
  if (!j.is_array() || j.size() != kNumTypes)
    throw ParseError("field 'type_dists' must hold two distributions");
  return {categorical_from(j[0], "type_dists[0]"), categorical_from(j[1], "type_dists[1]")};
}

inline std::vector<int> labels_from(const json &j, const std::string &name) {
  if (!j.is_array())
    throw ParseError("field '" + name + "' must be an array");
  std::vector<int> out;
  for (const auto &x : j) {
    const auto s = get_as<std::string>(x, name);
    if (s.size() != 1 || s[0] < 'a' || s[0] >= 'a' + kMaxVars)
      throw ParseError("field '" + name + "' has an invalid type label '" + s + "'");
    out.push_back(s[0] - 'a');
  }
  return out;
}

inline json labels_to(const std::vector<int> &labels) {
  json j = json::array();
  for (int x : labels)
    j.push_back(std::string(1, type_name(x)));
  return j;
}

inline Grouping grouping_from(const json &j, const std::string &name) {
  auto groups = get_as<std::vector<std::vector<int>>>(j, name);
  for (auto &g : groups)
    for (int &v : g)
      --v;
  try {
    return Grouping(std::move(groups));
  } catch (const ContractError &e) {
    throw ParseError("field '" + name + "': " + e.what());
  }
}

inline json grouping_to(const Grouping &g) {
  json j = json::array();
  for (const auto &grp : g.groups()) {
    json row = json::array();
    for (int v : grp)
      row.push_back(v + 1);
    j.push_back(row);
  }
  return j;
}

inline json categorical_to(const Categorical &c) {
  return json(std::vector<double>(c.weights().begin(), c.weights().end()));
}

inline void check_version(const json &j) {
  const int v = get_or<int>(j, "version", kFormatVersion);
  if (v != kFormatVersion)
    throw ParseError("field 'version': unsupported version " + std::to_string(v));
}

} // namespace detail

//==============================================================================
// Model files

inline json model_to_json(const UrnTruth &t) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "urns";
  j["type_dists"] = {detail::categorical_to(t.type_dists[0]), detail::categorical_to(t.type_dists[1])};
  j["assignment"] = detail::labels_to(t.assignment);
  j["urn_weights"] = detail::categorical_to(t.urn_weights);
  return j;
}

inline json model_to_json(const BitVectorTruth &t) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "bits";
  j["type_dists"] = {detail::categorical_to(t.type_dists[0]), detail::categorical_to(t.type_dists[1])};
  j["assignment"] = detail::labels_to(t.assignment);
  j["grouping"] = detail::grouping_to(t.grouping);
  return j;
}

using Model = std::variant<UrnTruth, BitVectorTruth>;

inline Model model_from_json(const json &j) {
  detail::check_version(j);
  const auto kind = detail::get_as<std::string>(detail::field(j, "kind"), "kind");
  const TypePair dists = detail::type_pair_from(detail::field(j, "type_dists"));
  const auto assignment = detail::labels_from(detail::field(j, "assignment"), "assignment");
  for (int x : assignment)
    if (x >= kNumTypes)
      throw ParseError("field 'assignment': labels must be 'a' or 'b'");
  if (dists[0].size() != dists[1].size())
    throw ParseError("field 'type_dists': distributions differ in size");
  if (kind == "urns") {
    UrnTruth t{dists, assignment, detail::categorical_from(detail::field(j, "urn_weights"), "urn_weights")};
    if (t.urn_weights.size() != assignment.size())
      throw ParseError("field 'urn_weights' must have one entry per urn");
    return t;
  }
  if (kind == "bits") {
    BitVectorTruth t{detail::grouping_from(detail::field(j, "grouping"), "grouping"), dists, assignment};
    if (static_cast<int>(assignment.size()) != t.grouping.num_groups())
      throw ParseError("field 'assignment' must have one label per group");
    if (dists[0].size() != (std::size_t{1} << t.grouping.group_size()))
      throw ParseError("field 'type_dists' must have 2^S entries");
    return t;
  }
  throw ParseError("field 'kind' must be \"urns\" or \"bits\"");
}

inline void write_model(const std::string &path, const Model &m) {
  const json j = std::visit([](const auto &t) { return model_to_json(t); }, m);
  write_file(path, j.dump(2) + "\n");
}

inline Model read_model(const std::string &path) {
  return model_from_json(parse_json(read_file(path), path));
}

//==============================================================================
// Truth configs

inline UrnTruthConfig urn_config_from_json(const json &j) {
  UrnTruthConfig cfg;
  cfg.num_colors = detail::get_or<int>(j, "num_colors", cfg.num_colors);
  cfg.urn_weights = detail::get_or<std::vector<double>>(j, "urn_weights", cfg.urn_weights);
  cfg.min_separation = detail::get_or<double>(j, "min_separation", cfg.min_separation);
  if (j.contains("assignment"))
    cfg.assignment = detail::labels_from(j.at("assignment"), "assignment");
  if (j.contains("type_dists") && !j.at("type_dists").is_string())
    cfg.type_dists = detail::type_pair_from(j.at("type_dists"));
  else if (j.contains("type_dists") && j.at("type_dists") != "random")
    throw ParseError("field 'type_dists' must be \"random\" or two distributions");
  return cfg;
}

inline BitVectorTruthConfig bit_config_from_json(const json &j) {
  BitVectorTruthConfig cfg;
  cfg.num_vars = detail::get_or<int>(j, "V", cfg.num_vars);
  cfg.num_groups = detail::get_or<int>(j, "G", cfg.num_groups);
  cfg.group_size = detail::get_or<int>(j, "S", cfg.group_size);
  cfg.min_separation = detail::get_or<double>(j, "min_separation", cfg.min_separation);
  if (j.contains("assignment"))
    cfg.assignment = detail::labels_from(j.at("assignment"), "assignment");
  if (j.contains("type_dists")) {
    const auto &td = j.at("type_dists");
    if (td == "random")
      cfg.mode = TypeDistMode::random;
    else if (td == "random_product")
      cfg.mode = TypeDistMode::random_product;
    else if (td.is_array()) {
      cfg.mode = TypeDistMode::explicit_dists;
      cfg.type_dists = detail::type_pair_from(td);
    } else
      throw ParseError("field 'type_dists' must be \"random\", \"random_product\" or two distributions");
  }
  if (j.contains("grouping") && !(j.at("grouping") == "random"))
    cfg.grouping = detail::grouping_from(j.at("grouping"), "grouping");
  return cfg;
}

//==============================================================================
// Datasets (JSON lines)

enum class DatasetKind { empty, urns, bits };

struct Dataset {
  DatasetKind kind = DatasetKind::empty;
  std::vector<UrnSample> urns;
  std::vector<BitPattern> bits;
  int num_vars = 0;
};

inline std::string bits_to_string(BitPattern x, int num_vars) {
  std::string s(num_vars, '0');
  for (int v = 0; v < num_vars; ++v)
    if (bit_of(x, v, num_vars))
      s[v] = '1';
  return s;
}

inline std::string dataset_to_jsonl(std::span<const UrnSample> samples) {
  std::string out;
  for (const auto &s : samples)
    out += "{\"urn\":" + std::to_string(s.urn + 1) + ",\"color\":" + std::to_string(s.color + 1) + "}\n";
  return out;
}

inline std::string dataset_to_jsonl(std::span<const BitPattern> data, int num_vars) {
  std::string out;
  for (BitPattern x : data)
    out += "{\"bits\":\"" + bits_to_string(x, num_vars) + "\"}\n";
  return out;
}

inline void write_dataset(const std::string &path, std::span<const UrnSample> samples) {
  write_file(path, dataset_to_jsonl(samples));
}

inline void write_dataset(const std::string &path, std::span<const BitPattern> data, int num_vars) {
  write_file(path, dataset_to_jsonl(data, num_vars));
}

inline Dataset parse_dataset(const std::string &text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string &why) {
    throw ParseError("dataset line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error &) {
      fail("not valid JSON");
    }
    if (!j.is_object())
      fail("expected an object");
    if (j.contains("bits")) {
      if (d.kind == DatasetKind::urns)
        fail("mixes bit-vector and urn samples");
      if (!j.at("bits").is_string())
        fail("field 'bits' must be a string");
      const auto s = j.at("bits").get<std::string>();
      if (s.empty() || s.size() > 64 || s.find_first_not_of("01") != std::string::npos)
        fail("field 'bits' must be 1-64 characters of 0/1");
      if (d.kind == DatasetKind::bits && static_cast<int>(s.size()) != d.num_vars)
        fail("field 'bits' has length " + std::to_string(s.size()) + ", expected " +
             std::to_string(d.num_vars));
      d.kind = DatasetKind::bits;
      d.num_vars = static_cast<int>(s.size());
      BitPattern x = 0;
      for (char c : s)
        x = (x << 1) | static_cast<BitPattern>(c == '1');
      d.bits.push_back(x);
    } else if (j.contains("urn") && j.contains("color")) {
      if (d.kind == DatasetKind::bits)
        fail("mixes bit-vector and urn samples");
      if (!j.at("urn").is_number_integer() || !j.at("color").is_number_integer())
        fail("fields 'urn' and 'color' must be integers");
      const int urn = j.at("urn").get<int>();
      const int color = j.at("color").get<int>();
      if (urn < 1 || color < 1)
        fail("fields 'urn' and 'color' are 1-indexed");
      d.kind = DatasetKind::urns;
      d.urns.push_back({urn - 1, color - 1});
    } else {
      fail("expected field 'bits' or fields 'urn' and 'color'");
    }
  }
  return d;
}

inline Dataset read_dataset(const std::string &path) { return parse_dataset(read_file(path)); }

inline std::uint64_t data_digest(std::span<const BitPattern> data, int num_vars) {
  return fnv1a64(dataset_to_jsonl(data, num_vars));
}

//==============================================================================
// Search results

inline const char *mode_name(SearchMode m) { return m == SearchMode::case1 ? "case1" : "case12"; }

inline const char *scorer_name(Scorer s) {
  switch (s) {
  case Scorer::paper_plugin:
    return "paper";
  case Scorer::dirichlet_marginal:
    return "marginal";
  case Scorer::plugin_normalized:
    return "normalized";
  }
  return "?";
}

inline Scorer scorer_from_name(const std::string &s) {
  if (s == "paper" || s == "paper_plugin")
    return Scorer::paper_plugin;
  if (s == "marginal" || s == "dirichlet_marginal")
    return Scorer::dirichlet_marginal;
  if (s == "normalized" || s == "plugin_normalized")
    return Scorer::plugin_normalized;
  throw ParseError("unknown scorer '" + s + "'");
}

inline SearchMode mode_from_name(const std::string &s) {
  if (s == "case1")
    return SearchMode::case1;
  if (s == "case12")
    return SearchMode::case12;
  throw ParseError("unknown search mode '" + s + "'");
}

//! Worker count and chunking are deliberately absent: they never change results.
inline json search_result_json(const SearchConfig &cfg, std::uint64_t digest,
                               const std::vector<ScoredCandidate> &top) {
  json j;
  j["version"] = kFormatVersion;
  j["config"] = {{"V", cfg.num_vars},     {"G", cfg.num_groups},        {"S", cfg.group_size},
                 {"types", cfg.num_types}, {"mode", mode_name(cfg.mode)}, {"scorer", scorer_name(cfg.scorer)},
                 {"top_k", cfg.top_k}};
  j["data_digest"] = hex64(digest);
  j["candidate_count"] = candidate_count(cfg);
  j["canonical_count"] = canonical_count(cfg);
  json arr = json::array();
  for (const auto &sc : top) {
    json e;
    e["rank"] = sc.rank;
    e["log_score"] = sc.log_score;
    e["grouping"] = detail::grouping_to(sc.candidate.grouping);
    e["assignment"] = detail::labels_to(sc.candidate.assignment);
    arr.push_back(e);
  }
  j["top_k"] = arr;
  return j;
}

inline json em_result_json(const EmResult &r) {
  json j;
  j["q_a"] = detail::categorical_to(r.q_a);
  j["q_b"] = detail::categorical_to(r.q_b);
  json resp = json::array();
  for (const auto &row : r.responsibilities)
    resp.push_back({row[0], row[1]});
  j["responsibilities"] = resp;
  j["log_likelihood"] = r.log_likelihood;
  j["iterations"] = r.iterations;
  j["restarts_used"] = r.restarts_used;
  j["trace"] = r.trace;
  return j;
}

} // namespace urnlab
