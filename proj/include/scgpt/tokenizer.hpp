// SPDX-License-Identifier: Apache-2.0
//
// Byte-level BPE. Ids [0, 256) are raw bytes, learned tokens follow in merge
// order, and the three specials (BOS, EOS, PAD) take the last three ids.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scgpt/error.hpp"

namespace scgpt {

using TokenId = std::int32_t;

struct TokenSequence {
  std::vector<TokenId> ids;
};

enum class Wrap { none, bos_eos };

struct Merge {
  TokenId left;
  TokenId right;
  TokenId result;
};

class Vocab {
 public:
  static constexpr int kBase = 256;
  static constexpr int kNumSpecials = 3;

  Vocab() {
    tokens_.reserve(kBase);
    for (int b = 0; b < kBase; ++b) tokens_.emplace_back(1, static_cast<char>(b));
    reindex();
  }

  std::size_t size() const { return tokens_.size() + kNumSpecials; }
  std::size_t num_byte_tokens() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }

  TokenId bos() const { return static_cast<TokenId>(tokens_.size()); }
  TokenId eos() const { return static_cast<TokenId>(tokens_.size() + 1); }
  TokenId pad() const { return static_cast<TokenId>(tokens_.size() + 2); }
  bool is_special(TokenId id) const { return id >= bos() && id <= pad(); }

  // Byte string of a non-special token.
  const std::string& token(TokenId id) const {
    check_id(id);
    if (is_special(id)) throw InvalidArgument("special token has no byte form");
    return tokens_[static_cast<std::size_t>(id)];
  }

  // Adds a merge of two existing tokens. If the concatenation already exists
  // as a token the merge maps onto it, keeping id_to_token free of duplicates.
  const Merge& add_merge(TokenId left, TokenId right) {
    const std::string joined = token(left) + token(right);
    auto it = index_.find(joined);
    TokenId result;
    if (it != index_.end()) {
      result = it->second;
    } else {
      result = static_cast<TokenId>(tokens_.size());
      tokens_.push_back(joined);
      index_.emplace(joined, result);
    }
    merges_.push_back({left, right, result});
    rank_[pair_key(left, right)] = merges_.size() - 1;
    return merges_.back();
  }

  TokenSequence encode(std::string_view s, Wrap wrap = Wrap::none) const {
    std::vector<TokenId> ids;
    ids.reserve(s.size() + 2);
    for (unsigned char c : s) ids.push_back(static_cast<TokenId>(c));
    apply_merges(ids);
    TokenSequence out;
    if (wrap == Wrap::bos_eos) {
      out.ids.reserve(ids.size() + 2);
      out.ids.push_back(bos());
      out.ids.insert(out.ids.end(), ids.begin(), ids.end());
      out.ids.push_back(eos());
    } else {
      out.ids = std::move(ids);
    }
    return out;
  }

  std::string decode(const TokenSequence& t) const { return decode(t.ids); }

  std::string decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
      check_id(id);
      if (is_special(id)) continue;
      out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  // Text format: "BPEVOCAB v1 <base> <n_merges>", one merge per line as two
  // hex-encoded tokens, then "SPECIAL <name> <id>" lines.
  void save(std::ostream& os) const {
    os << "BPEVOCAB v1 " << kBase << ' ' << merges_.size() << '\n';
    for (const Merge& m : merges_) os << to_hex(token(m.left)) << ' ' << to_hex(token(m.right)) << '\n';
    os << "SPECIAL BOS " << bos() << '\n';
    os << "SPECIAL EOS " << eos() << '\n';
    os << "SPECIAL PAD " << pad() << '\n';
  }

  static Vocab load(std::istream& is) {
    std::string magic, version;
    int base = 0;
    std::size_t n_merges = 0;
    if (!(is >> magic >> version >> base >> n_merges) || magic != "BPEVOCAB" || version != "v1")
      throw ParseError("bad vocab header", 0, magic);
    if (base != kBase) throw ParseError("unsupported vocab base " + std::to_string(base), 0, "");
    Vocab v;
    for (std::size_t i = 0; i < n_merges; ++i) {
      std::string a, b;
      if (!(is >> a >> b)) throw ParseError("truncated merge list at merge " + std::to_string(i), i + 1, "");
      v.add_merge(v.lookup(from_hex(a)), v.lookup(from_hex(b)));
    }
    const std::pair<const char*, TokenId> expected[] = {{"BOS", v.bos()}, {"EOS", v.eos()}, {"PAD", v.pad()}};
    for (const auto& [name, id] : expected) {
      std::string tag, got_name;
      long long got_id = -1;
      if (!(is >> tag >> got_name >> got_id) || tag != "SPECIAL" || got_name != name || got_id != id)
        throw ParseError(std::string("special ") + name + " missing or inconsistent", n_merges + 1, got_name);
    }
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write vocab file " + path);
    save(f);
  }

  static Vocab load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open vocab file " + path);
    return load(f);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.merges_.size() == b.merges_.size() &&
           std::equal(a.merges_.begin(), a.merges_.end(), b.merges_.begin(), [](const Merge& x, const Merge& y) {
             return x.left == y.left && x.right == y.right && x.result == y.result;
           });
  }

 private:
  static std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  void check_id(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size())
      throw InvalidArgument("invalid token id " + std::to_string(id) + " for vocab of size " + std::to_string(size()));
  }

  TokenId lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) throw ParseError("merge references unknown token " + to_hex(tok), 0, to_hex(tok));
    return it->second;
  }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
  }

  // Repeatedly applies the earliest-learned merge present, left to right.
  void apply_merges(std::vector<TokenId>& ids) const {
    if (merges_.empty()) return;
    while (ids.size() >= 2) {
      std::size_t best_rank = merges_.size();
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        auto it = rank_.find(pair_key(ids[i], ids[i + 1]));
        if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == merges_.size()) break;
      const Merge& m = merges_[best_rank];
      std::size_t w = 0;
      for (std::size_t r = 0; r < ids.size();) {
        if (r + 1 < ids.size() && ids[r] == m.left && ids[r + 1] == m.right) {
          ids[w++] = m.result;
          r += 2;
        } else {
          ids[w++] = ids[r++];
        }
      }
      ids.resize(w);
    }
  }

  static std::string to_hex(const std::string& s) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (unsigned char c : s) {
      out += kDigits[c >> 4];
      out += kDigits[c & 15];
    }
    return out;
  }

  static std::string from_hex(const std::string& h) {
    auto nibble = [&](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw ParseError("bad hex token '" + h + "'", 0, h);
    };
    if (h.empty() || h.size() % 2 != 0) throw ParseError("bad hex token '" + h + "'", 0, h);
    std::string out;
    for (std::size_t i = 0; i < h.size(); i += 2) out += static_cast<char>(nibble(h[i]) * 16 + nibble(h[i + 1]));
    return out;
  }

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::uint64_t, std::size_t> rank_;
};

// Learns merges until the vocabulary (bytes + learned tokens + specials)
// reaches `target_vocab_size` or no adjacent pair occurs at least twice.
// Ties go to the lexicographically smaller (left bytes, right bytes) pair.
inline Vocab train_bpe(const std::vector<std::string>& corpus, std::size_t target_vocab_size) {
  if (corpus.empty()) throw EmptyCorpusError("cannot train BPE on an empty corpus");
  if (target_vocab_size <= static_cast<std::size_t>(Vocab::kBase + Vocab::kNumSpecials))
    throw InvalidArgument("target vocab size must exceed " +
                          std::to_string(Vocab::kBase + Vocab::kNumSpecials));

  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<TokenId> ids;
    ids.reserve(s.size());
    for (unsigned char c : s) ids.push_back(static_cast<TokenId>(c));
    if (ids.size() >= 2) seqs.push_back(std::move(ids));
  }

  Vocab vocab;
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  auto split = [](std::uint64_t key) {
    return std::make_pair(static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffu));
  };
  while (vocab.size() < target_vocab_size) {
    counts.clear();
    for (const auto& ids : seqs)
      for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        ++counts[(static_cast<std::uint64_t>(ids[i]) << 32) | static_cast<std::uint32_t>(ids[i + 1])];

    bool found = false;
    std::pair<TokenId, TokenId> best{};
    std::int64_t best_count = 1;
    for (const auto& [key, count] : counts) {
      if (count < 2 || count < best_count) continue;
      const auto pair = split(key);
      if (count > best_count || !found ||
          std::make_pair(vocab.token(pair.first), vocab.token(pair.second)) <
              std::make_pair(vocab.token(best.first), vocab.token(best.second))) {
        best = pair;
        best_count = count;
        found = true;
      }
    }
    if (!found) break;

    const Merge m = vocab.add_merge(best.first, best.second);
    for (auto& ids : seqs) {
      std::size_t w = 0;
      for (std::size_t r = 0; r < ids.size();) {
        if (r + 1 < ids.size() && ids[r] == m.left && ids[r + 1] == m.right) {
          ids[w++] = m.result;
          r += 2;
        } else {
          ids[w++] = ids[r++];
        }
      }
      ids.resize(w);
    }
  }
  return vocab;
}

}  // namespace scgpt
