// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "scgpt/dataset.hpp"
#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/text.hpp"

namespace scgpt {

// ---------------------------------------------------------------------------
// Slot error rate

struct SlotErrorReport {
  std::size_t M = 0;  // countable (lexical) slots
  std::size_t p = 0;  // missing
  std::size_t q = 0;  // redundant
  double err = 0.0;
  std::vector<SlotValuePair> excluded;  // non-lexical pairs left out of M
};

// Counts each lexical value by case-insensitive word-boundary matches. Values
// are claimed longest first so "city centre" does not also count as "centre".
// With r the number of times a value is required by the acts and m its match
// count, missing adds max(0, r - m) and redundant adds max(0, m - r).
inline SlotErrorReport slot_error(const DialogActSet& acts, std::string_view text) {
  SlotErrorReport rep;
  std::map<std::string, std::size_t> required;
  for (const auto& a : acts.acts) {
    for (const auto& pr : a.pairs) {
      if (is_non_lexical(pr.value)) {
        rep.excluded.push_back(pr);
        continue;
      }
      ++rep.M;
      ++required[text::to_lower(text::trim(pr.value))];
    }
  }
  if (rep.M == 0) return rep;

  std::vector<std::string> needles;
  for (const auto& [v, n] : required) needles.push_back(v);
  std::stable_sort(needles.begin(), needles.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  const std::string hay = text::to_lower(text);
  std::vector<bool> claimed;
  const auto spans = text::claim_matches(hay, needles, claimed);
  for (std::size_t i = 0; i < needles.size(); ++i) {
    const std::size_t r = required[needles[i]];
    const std::size_t m = spans[i].size();
    if (m < r) rep.p += r - m;
    if (m > r) rep.q += m - r;
  }
  rep.err = static_cast<double>(rep.p + rep.q) / static_cast<double>(rep.M);
  return rep;
}

// ---------------------------------------------------------------------------
// BLEU

// Lowercases, splits every ASCII punctuation character into its own token,
// and splits on whitespace.
inline std::vector<std::string> bleu_tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++c[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                 toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

}  // namespace detail

// Corpus BLEU-4 with clipped n-gram counts pooled over the corpus. The
// reference length per sentence is the closest one (shorter wins ties). A
// zero precision for n >= 2 is replaced by (0 + 1) / (total + 1).
inline double corpus_bleu(const std::vector<std::string>& candidates,
                          const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size())
    throw InvalidArgument("corpus_bleu: " + std::to_string(candidates.size()) + " candidates but " +
                          std::to_string(references.size()) + " reference sets");
  constexpr std::size_t kMaxN = 4;
  std::size_t match[kMaxN] = {0, 0, 0, 0};
  std::size_t total[kMaxN] = {0, 0, 0, 0};
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw InvalidArgument("corpus_bleu: candidate " + std::to_string(i) + " has no reference");
    const auto cand = bleu_tokenize(candidates[i]);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[i]) refs.push_back(bleu_tokenize(r));
    cand_len += cand.size();
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += best;
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto cc = detail::ngram_counts(cand, n);
      std::map<std::vector<std::string>, std::size_t> max_ref;
      for (const auto& r : refs)
        for (const auto& [g, k] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : cc) {
        total[n - 1] += k;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) match[n - 1] += std::min(k, it->second);
      }
    }
  }
  if (cand_len == 0 || match[0] == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    double prec = match[n] > 0 ? static_cast<double>(match[n]) / static_cast<double>(total[n])
                               : 1.0 / static_cast<double>(total[n] + 1);
    log_p += std::log(prec) / static_cast<double>(kMaxN);
  }
  const double bp =
      cand_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_p);
}

inline double corpus_bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back({r});
  return corpus_bleu(candidates, refs);
}

// ---------------------------------------------------------------------------
// Entity F1

using EntityExtractor = std::function<std::vector<std::string>(std::string_view)>;

// Extracts every lexical slot value found in `corpus` acts (longest first,
// word-boundary, case-insensitive) plus any remaining all-digit tokens.
inline EntityExtractor default_entity_extractor(const Corpus& corpus) {
  std::set<std::string> values;
  for (const auto& ex : corpus.examples)
    for (const auto& a : ex.acts.acts)
      for (const auto& p : a.pairs)
        if (!is_non_lexical(p.value)) values.insert(text::to_lower(text::trim(p.value)));
  std::vector<std::string> needles(values.begin(), values.end());
  std::stable_sort(needles.begin(), needles.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  return [needles = std::move(needles)](std::string_view s) {
    const std::string hay = text::to_lower(s);
    std::vector<bool> claimed;
    const auto spans = text::claim_matches(hay, needles, claimed);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < needles.size(); ++i)
      for (std::size_t k = 0; k < spans[i].size(); ++k) out.push_back(needles[i]);
    for (std::size_t i = 0; i < hay.size();) {
      if (!std::isdigit(static_cast<unsigned char>(hay[i])) || claimed[i] ||
          (i > 0 && text::is_word_char(hay[i - 1]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < hay.size() && std::isdigit(static_cast<unsigned char>(hay[j])) && !claimed[j]) ++j;
      if (j == hay.size() || !text::is_word_char(hay[j])) out.push_back(hay.substr(i, j - i));
      i = j;
    }
    std::sort(out.begin(), out.end());
    return out;
  };
}

// Micro-averaged F1 over per-example multiset intersections. When neither
// side yields any entity the score is 1.
inline double entity_f1(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                        const EntityExtractor& extract) {
  if (candidates.size() != references.size())
    throw InvalidArgument("entity_f1: " + std::to_string(candidates.size()) + " candidates but " +
                          std::to_string(references.size()) + " references");
  std::size_t tp = 0, n_gen = 0, n_ref = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto g = extract(candidates[i]);
    auto r = extract(references[i]);
    n_gen += g.size();
    n_ref += r.size();
    std::unordered_map<std::string, std::size_t> rc;
    for (auto& e : r) ++rc[e];
    for (auto& e : g) {
      auto it = rc.find(e);
      if (it != rc.end() && it->second > 0) {
        --it->second;
        ++tp;
      }
    }
  }
  if (n_gen == 0 && n_ref == 0) return 1.0;
  if (tp == 0) return 0.0;
  const double prec = static_cast<double>(tp) / static_cast<double>(n_gen);
  const double rec = static_cast<double>(tp) / static_cast<double>(n_ref);
  return 2 * prec * rec / (prec + rec);
}

// ---------------------------------------------------------------------------
// Seen / unseen

struct SeenUnseen {
  Corpus seen;
  Corpus unseen;
  std::vector<std::size_t> seen_index;  // positions in the test corpus
  std::vector<std::size_t> unseen_index;
};

inline SeenUnseen seen_unseen_split(const Corpus& train, const Corpus& test) {
  const auto keys = canonical_keys(train);
  SeenUnseen out{{test.name + ":seen", {}}, {test.name + ":unseen", {}}, {}, {}};
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    const bool seen = keys.count(canonicalize(test.examples[i].acts).key) > 0;
    (seen ? out.seen : out.unseen).examples.push_back(test.examples[i]);
    (seen ? out.seen_index : out.unseen_index).push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct SubsetScores {
  std::size_t n = 0;
  std::optional<double> bleu;
  std::optional<double> err;
};

struct EvalReport {
  std::string domain;
  double corpus_bleu = 0;
  double mean_err = 0;
  double entity_f1 = 0;
  SubsetScores seen;
  SubsetScores unseen;
  std::size_t n = 0;

  // {domain, bleu, err, entity_f1, n_seen, n_unseen, bleu_seen, err_seen, bleu_unseen, err_unseen}
  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["domain"] = domain;
    j["bleu"] = corpus_bleu;
    j["err"] = mean_err;
    j["entity_f1"] = entity_f1;
    j["n_seen"] = seen.n;
    j["n_unseen"] = unseen.n;
    j["bleu_seen"] = opt(seen.bleu);
    j["err_seen"] = opt(seen.err);
    j["bleu_unseen"] = opt(unseen.bleu);
    j["err_unseen"] = opt(unseen.err);
    return j;
  }

  std::string to_text() const {
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("-");
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << *v;
      return os.str();
    };
    std::ostringstream os;
    os << "domain     " << domain << '\n'
       << "n          " << n << " (seen " << seen.n << ", unseen " << unseen.n << ")\n"
       << "BLEU       " << fmt(corpus_bleu) << "  seen " << fmt(seen.bleu) << "  unseen " << fmt(unseen.bleu) << '\n'
       << "ERR        " << fmt(mean_err) << "  seen " << fmt(seen.err) << "  unseen " << fmt(unseen.err) << '\n'
       << "Entity F1  " << fmt(entity_f1) << '\n';
    return os.str();
  }
};

inline double mean_slot_error(const std::vector<std::string>& candidates, const Corpus& test,
                              std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double s = 0;
  for (std::size_t i : idx) s += slot_error(test.examples[i].acts, candidates[i]).err;
  return s / static_cast<double>(idx.size());
}

// Scores generations (aligned with `test`) against the test responses; the
// seen/unseen split is taken relative to `train`.
inline EvalReport evaluate(const std::string& domain, const std::vector<std::string>& candidates, const Corpus& test,
                           const Corpus& train, const EntityExtractor& extract = {}) {
  if (candidates.size() != test.size())
    throw InvalidArgument("evaluate: " + std::to_string(candidates.size()) + " generations but " +
                          std::to_string(test.size()) + " test examples");
  EvalReport r;
  r.domain = domain;
  r.n = test.size();
  std::vector<std::string> refs;
  for (const auto& ex : test.examples) refs.push_back(ex.response);
  std::vector<std::size_t> all(test.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  r.corpus_bleu = corpus_bleu(candidates, refs);
  r.mean_err = mean_slot_error(candidates, test, all);
  r.entity_f1 = entity_f1(candidates, refs, extract ? extract : default_entity_extractor(test));

  const auto split = seen_unseen_split(train, test);
  auto subset = [&](const std::vector<std::size_t>& idx) {
    SubsetScores s;
    s.n = idx.size();
    if (idx.empty()) return s;
    std::vector<std::string> c, rf;
    for (std::size_t i : idx) {
      c.push_back(candidates[i]);
      rf.push_back(refs[i]);
    }
    s.bleu = corpus_bleu(c, rf);
    s.err = mean_slot_error(candidates, test, idx);
    return s;
  };
  r.seen = subset(split.seen_index);
  r.unseen = subset(split.unseen_index);
  return r;
}

}  // namespace scgpt
