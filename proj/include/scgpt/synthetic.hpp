// SPDX-License-Identifier: Apache-2.0
//
// Templated multi-domain (act, response) generator.
//
// Grammar file format, one directive per line, '#' comments:
//
//   domain hotel
//   multi_act 0.25                      # chance of a second act per example
//   slot name = alder lodge ; the birch ; ...
//   slot stars = 1..5                   # integer range lexicon
//   slot ref = @code 6..8               # generated: @words, @code or @digits
//   intent inform
//   template inform : the {name} has {stars} stars .
//   template request : how many stars would you like ? | stars=?
//
// Placeholders become (slot, value) pairs in order of appearance; the part
// after '|' adds non-lexical pairs. Several domains may share one file.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scgpt/dataset.hpp"
#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/metrics.hpp"
#include "scgpt/text.hpp"

namespace scgpt {

struct Template {
  std::string intent;
  // Alternating literal text and slot names: literals[i] precedes slots[i];
  // literals has one more entry than slots.
  std::vector<std::string> literals;
  std::vector<std::string> slots;
  std::vector<SlotValuePair> extras;
  std::string source;
};

// Draws fresh values at sampling time: @words gives lo..hi pronounceable
// pseudo-words, @code a lowercase alphanumeric string and @digits a digit
// string, both of length lo..hi.
struct ValueGenerator {
  enum class Kind { words, code, digits };
  Kind kind = Kind::words;
  std::size_t lo = 1;
  std::size_t hi = 1;

  std::string operator()(std::mt19937_64& rng) const {
    static constexpr std::string_view onset = "bcdfghjklmnprstvz";
    static constexpr std::string_view vowel = "aeiou";
    static constexpr std::string_view alnum = "abcdefghijklmnopqrstuvwxyz0123456789";
    auto pick = [&](std::string_view from) { return from[rng() % from.size()]; };
    const std::size_t n = lo + rng() % (hi - lo + 1);
    std::string out;
    if (kind == Kind::words) {
      for (std::size_t w = 0; w < n; ++w) {
        if (w) out += ' ';
        const std::size_t syllables = 2 + rng() % 2;
        for (std::size_t k = 0; k < syllables; ++k) {
          out += pick(onset);
          out += pick(vowel);
        }
        if (rng() % 2) out += pick(onset);
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) out += kind == Kind::code ? pick(alnum) : pick("0123456789");
    }
    return out;
  }
};

struct DomainGrammar {
  std::string domain;
  double multi_act = 0.0;
  std::vector<std::string> intents;
  std::map<std::string, std::vector<std::string>> lexicon;
  std::map<std::string, ValueGenerator> generators;
  std::vector<Template> templates;

  bool has_slot(const std::string& s) const { return lexicon.count(s) || generators.count(s); }

  void validate() const {
    auto fail = [&](const std::string& msg) { throw GrammarError("domain '" + domain + "': " + msg); };
    if (domain.empty()) throw GrammarError("grammar without a domain name");
    if (templates.empty()) fail("no templates");
    if (!(multi_act >= 0.0 && multi_act <= 1.0)) fail("multi_act must lie in [0, 1]");
    for (const auto& [slot, values] : lexicon) {
      if (values.empty()) fail("slot '" + slot + "' has an empty lexicon");
      if (generators.count(slot)) fail("slot '" + slot + "' is both listed and generated");
      for (const auto& v : values)
        if (is_non_lexical(v)) fail("slot '" + slot + "' lists non-lexical value '" + v + "'");
    }
    for (const auto& [slot, gen] : generators)
      if (gen.lo < 1 || gen.hi < gen.lo) fail("slot '" + slot + "' has a bad generator length range");
    std::vector<std::string> all_values;
    for (const auto& [slot, values] : lexicon)
      for (const auto& v : values) all_values.push_back(text::to_lower(v));
    for (const auto& t : templates) {
      if (std::find(intents.begin(), intents.end(), t.intent) == intents.end())
        fail("template uses undeclared intent '" + t.intent + "': " + t.source);
      std::set<std::string> used;
      for (const auto& s : t.slots) {
        if (!has_slot(s)) fail("template references undeclared slot '" + s + "': " + t.source);
        if (!used.insert(s).second) fail("slot '" + s + "' used twice in one template: " + t.source);
      }
      for (const auto& e : t.extras) {
        if (!has_slot(e.name)) fail("template references undeclared slot '" + e.name + "': " + t.source);
        if (!is_non_lexical(e.value)) fail("extra pair " + e.name + "=" + e.value + " must be non-lexical: " + t.source);
      }
      for (const auto& lit : t.literals) {
        const std::string low = text::to_lower(lit);
        for (const auto& v : all_values)
          for (std::size_t pos = low.find(v); pos != std::string::npos; pos = low.find(v, pos + 1))
            if (text::word_match_at(low, v, pos)) fail("template text contains lexicon value '" + v + "': " + t.source);
      }
    }
  }
};

namespace detail {

inline Template parse_template(std::string_view body, std::size_t lineno) {
  Template t;
  t.source = std::string(body);
  const auto colon = body.find(" : ");
  if (colon == std::string_view::npos)
    throw GrammarError("line " + std::to_string(lineno) + ": template needs '<intent> : <text>'");
  t.intent = std::string(text::trim(body.substr(0, colon)));
  std::string_view rest = body.substr(colon + 3);
  std::string_view extras;
  if (auto bar = rest.find(" | "); bar != std::string_view::npos) {
    extras = rest.substr(bar + 3);
    rest = rest.substr(0, bar);
  }
  rest = text::trim(rest);
  std::string cur;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == '{') {
      const auto close = rest.find('}', i);
      if (close == std::string_view::npos)
        throw GrammarError("line " + std::to_string(lineno) + ": unterminated placeholder");
      t.literals.push_back(cur);
      cur.clear();
      t.slots.emplace_back(rest.substr(i + 1, close - i - 1));
      i = close;
    } else {
      cur += rest[i];
    }
  }
  t.literals.push_back(cur);
  for (const auto& tok : text::split_ws(extras)) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
      throw GrammarError("line " + std::to_string(lineno) + ": bad extra pair '" + tok + "'");
    t.extras.push_back({tok.substr(0, eq), tok.substr(eq + 1)});
  }
  return t;
}

inline ValueGenerator parse_generator(std::string_view body, std::size_t lineno) {
  const auto words = text::split_ws(body);
  const auto bad = [&] { return GrammarError("line " + std::to_string(lineno) + ": generator needs '@kind lo..hi'"); };
  if (words.size() != 2) throw bad();
  ValueGenerator g;
  if (words[0] == "@words") g.kind = ValueGenerator::Kind::words;
  else if (words[0] == "@code") g.kind = ValueGenerator::Kind::code;
  else if (words[0] == "@digits") g.kind = ValueGenerator::Kind::digits;
  else throw GrammarError("line " + std::to_string(lineno) + ": unknown generator '" + words[0] + "'");
  const auto dots = words[1].find("..");
  if (dots == std::string::npos) throw bad();
  try {
    g.lo = std::stoul(words[1].substr(0, dots));
    g.hi = std::stoul(words[1].substr(dots + 2));
  } catch (const std::logic_error&) {
    throw bad();
  }
  if (g.lo < 1 || g.hi < g.lo) throw bad();
  return g;
}

inline std::vector<std::string> parse_lexicon(std::string_view body, std::size_t lineno) {
  const auto dots = body.find("..");
  if (dots != std::string_view::npos && body.find(';') == std::string_view::npos) {
    try {
      const long lo = std::stol(std::string(text::trim(body.substr(0, dots))));
      const long hi = std::stol(std::string(text::trim(body.substr(dots + 2))));
      if (hi < lo) throw GrammarError("line " + std::to_string(lineno) + ": empty range");
      std::vector<std::string> out;
      for (long v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
      return out;
    } catch (const std::logic_error&) {
      // not a range; fall through to a plain list
    }
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto semi = body.find(';', start);
    if (semi == std::string_view::npos) semi = body.size();
    const auto v = text::trim(body.substr(start, semi - start));
    if (!v.empty()) out.emplace_back(v);
    start = semi + 1;
  }
  return out;
}

}  // namespace detail

inline std::vector<DomainGrammar> parse_grammars(std::istream& is) {
  std::vector<DomainGrammar> out;
  std::string line;
  std::size_t lineno = 0;
  auto current = [&]() -> DomainGrammar& {
    if (out.empty()) throw GrammarError("line " + std::to_string(lineno) + ": directive before 'domain'");
    return out.back();
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto sp = body.find(' ');
    const auto word = body.substr(0, sp);
    const auto rest = sp == std::string_view::npos ? std::string_view{} : text::trim(body.substr(sp + 1));
    if (word == "domain") {
      out.push_back({});
      out.back().domain = std::string(rest);
    } else if (word == "multi_act") {
      try {
        current().multi_act = std::stod(std::string(rest));
      } catch (const std::logic_error&) {
        throw GrammarError("line " + std::to_string(lineno) + ": bad multi_act value");
      }
    } else if (word == "slot") {
      const auto eq = rest.find(" = ");
      if (eq == std::string_view::npos) throw GrammarError("line " + std::to_string(lineno) + ": slot needs '<name> = <values>'");
      const std::string name(text::trim(rest.substr(0, eq)));
      const auto values = text::trim(rest.substr(eq + 3));
      if (!values.empty() && values.front() == '@') {
        current().generators[name] = detail::parse_generator(values, lineno);
      } else {
        auto& lex = current().lexicon[name];
        for (auto& v : detail::parse_lexicon(values, lineno)) lex.push_back(std::move(v));
      }
    } else if (word == "intent") {
      for (auto& i : text::split_ws(rest)) current().intents.push_back(std::move(i));
    } else if (word == "template") {
      current().templates.push_back(detail::parse_template(rest, lineno));
    } else {
      throw GrammarError("line " + std::to_string(lineno) + ": unknown directive '" + std::string(word) + "'");
    }
  }
  for (const auto& g : out) g.validate();
  return out;
}

inline std::vector<DomainGrammar> load_grammars(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open grammar file " + path);
  return parse_grammars(f);
}

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline std::pair<DialogAct, std::string> render(const DomainGrammar& g, const Template& t, std::mt19937_64& rng) {
  DialogAct act;
  act.intent = t.intent;
  act.domain = g.domain;
  std::string out = t.literals[0];
  for (std::size_t i = 0; i < t.slots.size(); ++i) {
    std::string v;
    if (auto gen = g.generators.find(t.slots[i]); gen != g.generators.end()) {
      v = gen->second(rng);
    } else {
      const auto& values = g.lexicon.at(t.slots[i]);
      v = values[uniform_index(rng, values.size())];
    }
    act.pairs.push_back({t.slots[i], v});
    out += v;
    out += t.literals[i + 1];
  }
  for (const auto& e : t.extras) act.pairs.push_back(e);
  return {std::move(act), std::string(text::trim(out))};
}

}  // namespace detail

// Samples one example from a domain. Renderings that would not score zero slot
// error (e.g. one value happening to contain another) are redrawn.
inline Example sample_example(const DomainGrammar& g, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Example ex;
    ex.domain = g.domain;
    const auto& t1 = g.templates[detail::uniform_index(rng, g.templates.size())];
    auto [a1, r1] = detail::render(g, t1, rng);
    ex.acts.acts.push_back(std::move(a1));
    ex.response = std::move(r1);
    if (g.multi_act > 0 && static_cast<double>(rng() >> 11) * 0x1.0p-53 < g.multi_act) {
      std::vector<const Template*> others;
      for (const auto& t : g.templates)
        if (t.intent != t1.intent) others.push_back(&t);
      if (!others.empty()) {
        auto [a2, r2] = detail::render(g, *others[detail::uniform_index(rng, others.size())], rng);
        ex.acts.acts.push_back(std::move(a2));
        ex.response += ' ';
        ex.response += r2;
      }
    }
    if (slot_error(ex.acts, ex.response).err == 0.0) return ex;
  }
  throw GrammarError("domain '" + g.domain + "': could not render a zero-error example in 100 attempts");
}

// Each domain draws from its own stream seeded by (seed, domain name), so a
// domain's examples do not depend on which other grammars are present.
inline Corpus generate(const std::vector<DomainGrammar>& grammars, std::size_t n_per_domain, std::uint64_t seed) {
  if (n_per_domain < 1) throw InvalidArgument("n_per_domain must be at least 1");
  Corpus c{"synthetic", {}};
  for (const auto& g : grammars) {
    g.validate();
    std::mt19937_64 rng(seed ^ text::fnv1a64(g.domain));
    for (std::size_t i = 0; i < n_per_domain; ++i) c.examples.push_back(sample_example(g, rng));
  }
  return c;
}

inline const DomainGrammar& find_grammar(const std::vector<DomainGrammar>& grammars, std::string_view domain) {
  for (const auto& g : grammars)
    if (g.domain == domain) return g;
  throw InvalidArgument("no grammar for domain '" + std::string(domain) + "'");
}

}  // namespace scgpt
