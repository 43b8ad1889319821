// SPDX-License-Identifier: Apache-2.0
//
// Corpora, ingestion, and the few-shot split protocol: one utterance per
// delexicalised act group, acts shared across domains dropped, then k groups
// per domain sampled for training.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/text.hpp"

namespace scgpt {

struct Example {
  DialogActSet acts;
  std::string response;
  std::string domain;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Corpus {
  std::string name;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  // Distinct domain tags, sorted.
  std::vector<std::string> domains() const {
    std::set<std::string> d;
    for (const auto& e : examples) d.insert(e.domain);
    return {d.begin(), d.end()};
  }

  Corpus filter_domain(std::string_view domain) const {
    Corpus out{name + ":" + std::string(domain), {}};
    for (const auto& e : examples)
      if (e.domain == domain) out.examples.push_back(e);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* field, std::size_t lineno) {
  if (!obj.is_object() || !obj.contains(field))
    throw ParseError("line " + std::to_string(lineno) + ": missing field \"" + field + "\"", lineno, field);
  return obj.at(field);
}

inline std::string require_string(const nlohmann::json& obj, const char* field, std::size_t lineno) {
  const auto& v = require_field(obj, field, lineno);
  if (!v.is_string())
    throw ParseError("line " + std::to_string(lineno) + ": field \"" + field + "\" must be a string", lineno, field);
  return v.get<std::string>();
}

inline Example parse_jsonl_v1_line(std::string_view line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("line " + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")", lineno,
                     std::string(line.substr(0, 40)));
  }
  Example ex;
  ex.domain = require_string(j, "domain", lineno);
  ex.response = require_string(j, "response", lineno);
  const auto& acts = require_field(j, "acts", lineno);
  if (!acts.is_array())
    throw ParseError("line " + std::to_string(lineno) + ": \"acts\" must be an array", lineno, "acts");
  for (const auto& a : acts) {
    DialogAct act;
    act.intent = require_string(a, "intent", lineno);
    if (a.contains("slots")) {
      const auto& slots = a.at("slots");
      if (!slots.is_array())
        throw ParseError("line " + std::to_string(lineno) + ": \"slots\" must be an array", lineno, "slots");
      for (const auto& s : slots) act.pairs.push_back({require_string(s, "name", lineno), require_string(s, "value", lineno)});
    }
    if (!ex.domain.empty()) act.domain = ex.domain;
    ex.acts.acts.push_back(std::move(act));
  }
  try {
    validate(ex.acts);
  } catch (const Error& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno, "acts");
  }
  if (text::trim(ex.response).empty())
    throw ParseError("line " + std::to_string(lineno) + ": empty response", lineno, "response");
  return ex;
}

// "<linearized act> & <response>"
inline Example parse_scgpt_txt_line(std::string_view line, std::size_t lineno, const std::string& domain) {
  const auto amp = line.find(" & ");
  if (amp == std::string_view::npos)
    throw ParseError("line " + std::to_string(lineno) + ": expected '<act> & <response>'", lineno,
                     std::string(line.substr(0, 40)));
  Example ex;
  ex.domain = domain;
  try {
    ex.acts = parse_linearized(line.substr(0, amp));
  } catch (const ParseError& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno, e.token());
  }
  for (auto& a : ex.acts.acts)
    if (!domain.empty()) a.domain = domain;
  ex.response = std::string(text::trim(line.substr(amp + 3)));
  if (ex.response.empty())
    throw ParseError("line " + std::to_string(lineno) + ": empty response", lineno, "response");
  return ex;
}

inline std::string file_stem(const std::string& path) {
  auto slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace detail

// Supported formats: "jsonl_v1" (one JSON object per line with "domain",
// "response", "acts"), "scgpt_txt" ("<act> & <response>" per line; the domain
// is `domain` or, if empty, the file stem). Blank lines are skipped.
inline Corpus ingest(std::istream& is, std::string_view format, const std::string& name,
                     const std::string& domain = "") {
  if (format != "jsonl_v1" && format != "scgpt_txt")
    throw InvalidArgument("unknown corpus format '" + std::string(format) + "' (expected jsonl_v1 or scgpt_txt)");
  Corpus c{name, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    if (format == "jsonl_v1") c.examples.push_back(detail::parse_jsonl_v1_line(line, lineno));
    else c.examples.push_back(detail::parse_scgpt_txt_line(line, lineno, domain));
  }
  return c;
}

inline Corpus ingest(const std::string& path, std::string_view format = "jsonl_v1", const std::string& domain = "") {
  if (format != "jsonl_v1" && format != "scgpt_txt")
    throw InvalidArgument("unknown corpus format '" + std::string(format) + "' (expected jsonl_v1 or scgpt_txt)");
  std::ifstream f(path);
  if (!f) throw IoError("cannot open corpus " + path);
  return ingest(f, format, path, domain.empty() && format == "scgpt_txt" ? detail::file_stem(path) : domain);
}

inline nlohmann::json to_json(const Example& ex) {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : ex.acts.acts) {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& p : a.pairs) slots.push_back({{"name", p.name}, {"value", p.value}});
    acts.push_back({{"intent", a.intent}, {"slots", std::move(slots)}});
  }
  return {{"domain", ex.domain}, {"response", ex.response}, {"acts", std::move(acts)}};
}

inline void write_jsonl(const Corpus& c, std::ostream& os) {
  for (const auto& ex : c.examples) os << to_json(ex).dump() << '\n';
}

inline void write_jsonl(const Corpus& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write corpus " + path);
  write_jsonl(c, f);
}

// Plain text for LM pre-training: each non-blank line becomes one example with
// no acts.
inline Corpus from_plain_text(std::istream& is, const std::string& name) {
  Corpus c{name, {}};
  std::string line;
  while (std::getline(is, line)) {
    const auto t = text::trim(line);
    if (!t.empty()) c.examples.push_back({{}, std::string(t), ""});
  }
  return c;
}

inline Corpus from_plain_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open text file " + path);
  return from_plain_text(f, path);
}

// ---------------------------------------------------------------------------
// Few-shot protocol

struct FewShotSplit {
  Corpus train;
  Corpus test;
};

inline std::map<std::string, std::size_t> default_k_per_domain(const std::vector<std::string>& domains) {
  std::map<std::string, std::size_t> k;
  for (const auto& d : domains) k[d] = d == "taxi" ? 40 : 50;
  return k;
}

inline FewShotSplit build_fewshot(const Corpus& source, const std::map<std::string, std::size_t>& k_per_domain,
                                  std::uint64_t seed) {
  // Domains in which each canonical key occurs.
  std::unordered_map<std::string, std::set<std::string>> key_domains;
  std::vector<std::string> keys;
  keys.reserve(source.examples.size());
  for (const auto& ex : source.examples) {
    keys.push_back(canonicalize(ex.acts).key);
    key_domains[keys.back()].insert(ex.domain);
  }

  FewShotSplit out{{source.name + ":train", {}}, {source.name + ":test", {}}};
  for (const auto& [domain, k] : k_per_domain) {
    // First utterance per group, in corpus order.
    std::vector<std::size_t> groups;
    std::unordered_set<std::string> seen;
    bool present = false;
    for (std::size_t i = 0; i < source.examples.size(); ++i) {
      if (source.examples[i].domain != domain) continue;
      present = true;
      if (key_domains[keys[i]].size() > 1) continue;
      if (seen.insert(keys[i]).second) groups.push_back(i);
    }
    if (!present) throw InsufficientGroupsError("domain '" + domain + "' does not occur in corpus " + source.name);
    if (groups.size() < k)
      throw InsufficientGroupsError("domain '" + domain + "' has " + std::to_string(groups.size()) +
                                    " single-domain act groups, fewer than k=" + std::to_string(k));

    std::mt19937_64 rng(seed ^ text::fnv1a64(domain));
    std::vector<std::size_t> order(groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> in_train(groups.size(), false);
    for (std::size_t i = 0; i < k; ++i) in_train[order[i]] = true;
    for (std::size_t g = 0; g < groups.size(); ++g)
      (in_train[g] ? out.train : out.test).examples.push_back(source.examples[groups[g]]);
  }
  return out;
}

inline std::set<std::string> canonical_keys(const Corpus& c) {
  std::set<std::string> keys;
  for (const auto& ex : c.examples) keys.insert(canonicalize(ex.acts).key);
  return keys;
}

// Percentage of distinct test keys that also occur in train.
inline double overlap_pct(const Corpus& train, const Corpus& test) {
  if (test.empty()) throw EmptyCorpusError("overlap_pct: test corpus is empty");
  const auto tr = canonical_keys(train);
  const auto te = canonical_keys(test);
  std::size_t hit = 0;
  for (const auto& k : te) hit += tr.count(k);
  return 100.0 * static_cast<double>(hit) / static_cast<double>(te.size());
}

struct DatasetStats {
  std::size_t n_intents = 0;
  std::size_t n_slots = 0;
  std::size_t n_train_das = 0;
  std::size_t n_test_das = 0;
  double overlap_pct = 0;
  double avg_das_per_instance = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

inline DatasetStats stats(const Corpus& train, const Corpus& test) {
  DatasetStats s;
  std::set<std::string> intents, slots;
  std::size_t acts = 0;
  for (const Corpus* c : {&train, &test}) {
    for (const auto& ex : c->examples) {
      acts += ex.acts.acts.size();
      for (const auto& a : ex.acts.acts) {
        intents.insert(a.intent);
        for (const auto& p : a.pairs) slots.insert(p.name);
      }
    }
  }
  s.n_intents = intents.size();
  s.n_slots = slots.size();
  s.n_train_das = canonical_keys(train).size();
  s.n_test_das = canonical_keys(test).size();
  s.overlap_pct = test.empty() ? 0.0 : overlap_pct(train, test);
  s.n_train = train.size();
  s.n_test = test.size();
  const std::size_t n = s.n_train + s.n_test;
  s.avg_das_per_instance = n ? static_cast<double>(acts) / static_cast<double>(n) : 0.0;
  return s;
}

// Aligned table, one column per (label, stats) entry.
inline std::string render_stats_table(const std::vector<std::pair<std::string, DatasetStats>>& columns) {
  static const char* kRows[] = {"# Intent",
                                "# Slot",
                                "# DAs in training",
                                "# DAs in testing",
                                "Overlap Percentage",
                                "Avg. #DAs per Instance",
                                "# Training Instances",
                                "# Testing Instances"};
  auto cell = [](const DatasetStats& s, int row) {
    std::ostringstream os;
    switch (row) {
      case 0: os << s.n_intents; break;
      case 1: os << s.n_slots; break;
      case 2: os << s.n_train_das; break;
      case 3: os << s.n_test_das; break;
      case 4: os << std::fixed << std::setprecision(2) << s.overlap_pct << '%'; break;
      case 5: os << std::fixed << std::setprecision(2) << s.avg_das_per_instance; break;
      case 6: os << s.n_train; break;
      default: os << s.n_test; break;
    }
    return os.str();
  };
  std::size_t label_w = 0;
  for (const char* r : kRows) label_w = std::max(label_w, std::string_view(r).size());
  std::vector<std::size_t> widths;
  for (const auto& [label, s] : columns) {
    std::size_t w = label.size();
    for (int r = 0; r < 8; ++r) w = std::max(w, cell(s, r).size());
    widths.push_back(w);
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "Statistics";
  for (std::size_t c = 0; c < columns.size(); ++c)
    os << "  " << std::right << std::setw(static_cast<int>(widths[c])) << columns[c].first;
  os << '\n';
  for (int r = 0; r < 8; ++r) {
    os << std::left << std::setw(static_cast<int>(label_w)) << kRows[r];
    for (std::size_t c = 0; c < columns.size(); ++c)
      os << "  " << std::right << std::setw(static_cast<int>(widths[c])) << cell(columns[c].second, r);
    os << '\n';
  }
  return os.str();
}

}  // namespace scgpt
