// SPDX-License-Identifier: Apache-2.0
//
// Dialog acts: an intent plus ordered slot-value pairs, and the symbolic
// operations the rest of the library builds on (control-code serialization,
// parsing, canonical keys, delexicalization and act editing).
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "scgpt/error.hpp"
#include "scgpt/text.hpp"

namespace scgpt {

struct SlotValuePair {
  std::string name;
  std::string value;

  friend bool operator==(const SlotValuePair&, const SlotValuePair&) = default;
};

struct DialogAct {
  std::string intent;
  std::vector<SlotValuePair> pairs;
  std::optional<std::string> domain;

  friend bool operator==(const DialogAct&, const DialogAct&) = default;
};

struct DialogActSet {
  std::vector<DialogAct> acts;

  friend bool operator==(const DialogActSet&, const DialogActSet&) = default;
};

struct CanonicalDA {
  std::string key;

  friend bool operator==(const CanonicalDA&, const CanonicalDA&) = default;
  friend auto operator<=>(const CanonicalDA&, const CanonicalDA&) = default;
};

namespace detail {

inline constexpr std::string_view kReserved = "()=,;[]";

inline bool has_reserved_or_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return text::is_space(c) || kReserved.find(c) != std::string_view::npos;
  });
}

inline bool is_name_char(char c) {
  return !text::is_space(c) && kReserved.find(c) == std::string_view::npos;
}

}  // namespace detail

// Values that have no canonical surface string and therefore never count as
// lexical content (compared case-insensitively).
inline bool is_non_lexical(std::string_view value) {
  static constexpr std::array<std::string_view, 7> kNonLexical = {
      "?", "yes", "no", "dontcare", "true", "false", "none"};
  const std::string v = text::to_lower(value);
  return std::find(kNonLexical.begin(), kNonLexical.end(), v) != kNonLexical.end();
}

inline void validate(const SlotValuePair& p) {
  if (p.name.empty()) throw InvalidArgument("slot name is empty");
  if (detail::has_reserved_or_space(p.name))
    throw InvalidArgument("slot name '" + p.name + "' contains whitespace or a reserved delimiter");
  if (text::to_lower(p.name) != p.name)
    throw InvalidArgument("slot name '" + p.name + "' is not lowercase");
  if (p.value.empty()) throw InvalidArgument("slot '" + p.name + "' has an empty value");
  if (p.value.find_first_of(";)") != std::string::npos)
    throw InvalidArgument("value of slot '" + p.name + "' contains ';' or ')'");
  if (text::trim(p.value).size() != p.value.size())
    throw InvalidArgument("value of slot '" + p.name + "' has surrounding whitespace");
}

inline void validate(const DialogAct& act) {
  if (act.intent.empty()) throw InvalidArgument("intent is empty");
  if (detail::has_reserved_or_space(act.intent))
    throw InvalidArgument("intent '" + act.intent + "' contains whitespace or a reserved delimiter");
  for (const auto& p : act.pairs) validate(p);
}

inline void validate(const DialogActSet& set) {
  if (set.acts.empty()) throw InvalidArgument("dialog act set is empty");
  for (const auto& a : set.acts) validate(a);
}

// "intent ( s1 = v1 ; s2 = v2 ) intent2 ( ... )"
inline std::string linearize(const DialogActSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.acts.size(); ++i) {
    const DialogAct& act = set.acts[i];
    if (i > 0) out += ' ';
    out += act.intent;
    out += " (";
    for (std::size_t j = 0; j < act.pairs.size(); ++j) {
      out += j == 0 ? " " : " ; ";
      out += act.pairs[j].name;
      out += " = ";
      out += act.pairs[j].value;
    }
    out += " )";
  }
  return out;
}

namespace detail {

class LinearizedParser {
 public:
  explicit LinearizedParser(std::string_view s) : s_(s) {}

  DialogActSet parse() {
    DialogActSet set;
    skip_space();
    while (pos_ < s_.size()) {
      set.acts.push_back(parse_act());
      skip_space();
    }
    if (set.acts.empty()) fail("expected an intent", pos_);
    return set;
  }

 private:
  DialogAct parse_act() {
    DialogAct act;
    act.intent = read_name("intent");
    skip_space();
    expect('(');
    skip_space();
    if (peek() == ')') {
      ++pos_;
      return act;
    }
    for (;;) {
      SlotValuePair pair;
      pair.name = read_name("slot name");
      skip_space();
      expect('=');
      skip_space();
      const std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ';' && s_[pos_] != ')') ++pos_;
      if (pos_ >= s_.size()) fail("unterminated act, expected ')'", pos_);
      pair.value = std::string(text::trim(s_.substr(start, pos_ - start)));
      if (pair.value.empty()) fail("empty slot value", start);
      act.pairs.push_back(std::move(pair));
      const char delim = s_[pos_++];
      if (delim == ')') return act;
      skip_space();
    }
  }

  std::string read_name(const char* what) {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && is_name_char(s_[pos_])) ++pos_;
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    std::size_t end = at;
    while (end < s_.size() && !text::is_space(s_[end])) ++end;
    std::string token(s_.substr(std::min(at, s_.size()), end - std::min(at, s_.size())));
    throw ParseError(msg + " at position " + std::to_string(at) +
                         (token.empty() ? std::string(" (end of input)") : ", found '" + token + "'"),
                     at, token);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Inverse of linearize(). Also accepts the compact "confirm(name=Hilton;area=center)"
// spelling since whitespace between tokens is optional to the parser.
inline DialogActSet parse_linearized(std::string_view s) {
  return detail::LinearizedParser(s).parse();
}

// Delexicalised key: values dropped, slot names sorted within each act, acts
// sorted by (intent, slot list) and joined with '|'.
inline CanonicalDA canonicalize(const DialogActSet& set) {
  std::vector<std::pair<std::string, std::vector<std::string>>> parts;
  parts.reserve(set.acts.size());
  for (const auto& act : set.acts) {
    std::vector<std::string> slots;
    slots.reserve(act.pairs.size());
    for (const auto& p : act.pairs) slots.push_back(p.name);
    std::sort(slots.begin(), slots.end());
    parts.emplace_back(act.intent, std::move(slots));
  }
  std::sort(parts.begin(), parts.end());
  CanonicalDA out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.key += '|';
    out.key += parts[i].first;
    out.key += '(';
    for (std::size_t j = 0; j < parts[i].second.size(); ++j) {
      if (j > 0) out.key += ',';
      out.key += parts[i].second[j];
    }
    out.key += ')';
  }
  return out;
}

// A lexical (value, slot) entry in matching order: longest value first, ties
// by slot name. Duplicated (slot, value) pairs collapse to one entry.
struct LexicalEntry {
  std::string value_lower;
  std::string slot;
};

inline std::vector<LexicalEntry> lexical_entries(const DialogActSet& set) {
  std::vector<LexicalEntry> entries;
  for (const auto& act : set.acts)
    for (const auto& p : act.pairs)
      if (!is_non_lexical(p.value)) entries.push_back({text::to_lower(p.value), p.name});
  std::sort(entries.begin(), entries.end(), [](const LexicalEntry& a, const LexicalEntry& b) {
    if (a.value_lower.size() != b.value_lower.size()) return a.value_lower.size() > b.value_lower.size();
    if (a.slot != b.slot) return a.slot < b.slot;
    return a.value_lower < b.value_lower;
  });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const LexicalEntry& a, const LexicalEntry& b) {
                              return a.value_lower == b.value_lower && a.slot == b.slot;
                            }),
                entries.end());
  return entries;
}

// Replaces each lexical slot value in `utterance` with "[slot]". Existing
// placeholders for the act's slots are left alone, which makes the operation
// idempotent.
inline std::string delexicalize(std::string_view utterance, const DialogActSet& set) {
  const std::vector<LexicalEntry> entries = lexical_entries(set);
  if (entries.empty()) return std::string(utterance);

  const std::string lower = text::to_lower(utterance);
  std::vector<bool> claimed(lower.size(), false);

  std::vector<std::string> placeholders;
  for (const auto& act : set.acts)
    for (const auto& p : act.pairs) placeholders.push_back("[" + p.name + "]");
  for (const auto& ph : placeholders) {
    for (std::size_t pos = lower.find(ph); pos != std::string::npos; pos = lower.find(ph, pos + 1))
      std::fill(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                claimed.begin() + static_cast<std::ptrdiff_t>(pos + ph.size()), true);
  }

  std::vector<std::string> needles;
  needles.reserve(entries.size());
  for (const auto& e : entries) needles.push_back(e.value_lower);
  const auto spans = text::claim_matches(lower, needles, claimed);

  std::vector<std::pair<text::Span, std::size_t>> hits;
  for (std::size_t i = 0; i < spans.size(); ++i)
    for (const auto& sp : spans[i]) hits.emplace_back(sp, i);
  std::sort(hits.begin(), hits.end(),
            [](const auto& a, const auto& b) { return a.first.begin < b.first.begin; });

  std::string out;
  std::size_t cursor = 0;
  for (const auto& [span, idx] : hits) {
    out.append(utterance.substr(cursor, span.begin - cursor));
    out += '[';
    out += entries[idx].slot;
    out += ']';
    cursor = span.end;
  }
  out.append(utterance.substr(cursor));
  return out;
}

// Act editing (simulates an extending domain whose acts change over time).
struct InsertSlot {
  std::string slot;
  std::string value;
  std::size_t act_index = 0;
};
struct DeleteSlot {
  std::string slot;
};
struct SubstituteSlot {
  std::string slot;
  std::string new_value;
};
using ActEdit = std::variant<InsertSlot, DeleteSlot, SubstituteSlot>;

namespace detail {

// Locates the single pair carrying `slot`; throws when absent or repeated.
inline std::pair<std::size_t, std::size_t> locate_slot(const DialogActSet& set, const std::string& slot) {
  std::optional<std::pair<std::size_t, std::size_t>> found;
  std::size_t count = 0;
  for (std::size_t a = 0; a < set.acts.size(); ++a)
    for (std::size_t p = 0; p < set.acts[a].pairs.size(); ++p)
      if (set.acts[a].pairs[p].name == slot) {
        ++count;
        found = {a, p};
      }
  if (count == 0) throw UnknownSlotError("slot '" + slot + "' is not present in the dialog act");
  if (count > 1)
    throw AmbiguousSlotError("slot '" + slot + "' occurs " + std::to_string(count) + " times");
  return *found;
}

}  // namespace detail

inline DialogActSet edit_act(const DialogActSet& set, const ActEdit& edit) {
  DialogActSet out = set;
  std::visit(
      [&](const auto& op) {
        using Op = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<Op, InsertSlot>) {
          if (op.act_index >= out.acts.size())
            throw InvalidArgument("insert target act " + std::to_string(op.act_index) + " out of range");
          for (const auto& act : out.acts)
            for (const auto& p : act.pairs)
              if (p.name == op.slot)
                throw AmbiguousSlotError("slot '" + op.slot + "' already present; insert would duplicate it");
          SlotValuePair pair{op.slot, op.value};
          validate(pair);
          out.acts[op.act_index].pairs.push_back(std::move(pair));
        } else if constexpr (std::is_same_v<Op, DeleteSlot>) {
          const auto [a, p] = detail::locate_slot(out, op.slot);
          out.acts[a].pairs.erase(out.acts[a].pairs.begin() + static_cast<std::ptrdiff_t>(p));
        } else {
          const auto [a, p] = detail::locate_slot(out, op.slot);
          SlotValuePair pair{op.slot, op.new_value};
          validate(pair);
          out.acts[a].pairs[p] = std::move(pair);
        }
      },
      edit);
  return out;
}

}  // namespace scgpt
