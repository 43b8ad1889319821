// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/metrics.hpp"
#include "scgpt/tokenizer.hpp"
#include "scgpt/transformer.hpp"

namespace scgpt {

enum class Strategy { greedy, top_k, temperature };

struct SamplingStrategy {
  Strategy kind = Strategy::greedy;
  std::size_t k = 20;
  double temperature = 1.0;

  static SamplingStrategy greedy() { return {}; }
  static SamplingStrategy top_k(std::size_t k, double t = 1.0) { return {Strategy::top_k, k, t}; }
  static SamplingStrategy with_temperature(double t) { return {Strategy::temperature, 0, t}; }
};

struct DecodeConfig {
  std::size_t n_candidates = 5;
  std::size_t max_new_tokens = 128;
  std::size_t top_k = 20;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_candidates < 1) throw InvalidArgument("n_candidates must be at least 1");
    if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be at least 1");
    if (top_k < 1) throw InvalidArgument("top_k must be at least 1");
  }

  // Candidate 0 is greedy; the rest are top-k samples.
  SamplingStrategy strategy_for(std::size_t index) const {
    return index == 0 ? SamplingStrategy::greedy() : SamplingStrategy::top_k(top_k, temperature);
  }
};

struct Candidate {
  std::string text;
  double token_logprob_mean = 0.0;
  double err = 0.0;
  std::vector<TokenId> ids;  // generated ids, EOS excluded
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
std::vector<double> log_softmax(const std::vector<T>& logits, std::span<const TokenId> banned) {
  std::vector<double> out(logits.begin(), logits.end());
  for (TokenId b : banned) out[static_cast<std::size_t>(b)] = -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0;
  for (double v : out) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (double& v : out) v -= lz;
  return out;
}

// Samples from exp(logp / t) restricted to `allowed`.
inline std::size_t sample_from(const std::vector<double>& logp, const std::vector<std::size_t>& allowed, double t,
                               std::mt19937_64& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : allowed) mx = std::max(mx, logp[i] / t);
  std::vector<double> w(allowed.size());
  double z = 0;
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    w[j] = std::exp(logp[allowed[j]] / t - mx);
    z += w[j];
  }
  double u = uniform01(rng) * z;
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    u -= w[j];
    if (u < 0) return allowed[j];
  }
  for (std::size_t j = allowed.size(); j-- > 0;)
    if (w[j] > 0) return allowed[j];
  return allowed.front();
}

inline std::size_t pick(const std::vector<double>& logp, const SamplingStrategy& s, std::mt19937_64& rng) {
  const std::size_t V = logp.size();
  auto argmax = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < V; ++i)
      if (logp[i] > logp[best]) best = i;
    return best;
  };
  if (s.kind == Strategy::greedy || s.temperature <= 0.0) return argmax();
  std::vector<std::size_t> allowed;
  for (std::size_t i = 0; i < V; ++i)
    if (std::isfinite(logp[i])) allowed.push_back(i);
  if (s.kind == Strategy::top_k && s.k < allowed.size()) {
    std::stable_sort(allowed.begin(), allowed.end(), [&](std::size_t a, std::size_t b) { return logp[a] > logp[b]; });
    allowed.resize(s.k);
    std::sort(allowed.begin(), allowed.end());
  }
  return sample_from(logp, allowed, s.temperature, rng);
}

}  // namespace detail

inline std::vector<TokenId> decode_prefix(const DialogActSet& acts, const Vocab& vocab) {
  auto ids = vocab.encode(linearize(acts)).ids;
  ids.push_back(vocab.bos());
  return ids;
}

// Feeds linearize(acts) + [BOS] and extends until EOS, max_new_tokens, or a
// full context. BOS and PAD are never emitted. The mean log-probability is
// taken under the untempered model over every emitted token including EOS.
template <typename T>
Candidate generate_one(const ModelParams<T>& params, const Vocab& vocab, const DialogActSet& acts,
                       const SamplingStrategy& strategy, std::size_t max_new_tokens, std::mt19937_64& rng) {
  if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be at least 1");
  if (params.config.vocab_size != vocab.size())
    throw ConfigMismatch("model vocab_size " + std::to_string(params.config.vocab_size) + " differs from vocab size " +
                         std::to_string(vocab.size()));
  const auto prefix = decode_prefix(acts, vocab);
  const std::size_t C = params.config.max_context;
  if (prefix.size() > C)
    throw ContextOverflow("dialog-act prefix needs " + std::to_string(prefix.size()) + " tokens but max_context is " +
                              std::to_string(C),
                          prefix.size(), C);
  IncrementalDecoder<T> dec(params);
  std::vector<T> logits;
  for (TokenId t : prefix) logits = dec.step(t);

  const TokenId banned[] = {vocab.bos(), vocab.pad()};
  Candidate c;
  double lp_sum = 0;
  std::size_t n_lp = 0;
  for (std::size_t i = 0; i < max_new_tokens; ++i) {
    const auto logp = detail::log_softmax(logits, banned);
    const auto tok = static_cast<TokenId>(detail::pick(logp, strategy, rng));
    lp_sum += logp[static_cast<std::size_t>(tok)];
    ++n_lp;
    if (tok == vocab.eos()) break;
    c.ids.push_back(tok);
    if (i + 1 == max_new_tokens || dec.length() >= C) break;
    logits = dec.step(tok);
  }
  c.text = vocab.decode(c.ids);
  c.token_logprob_mean = n_lp ? lp_sum / static_cast<double>(n_lp) : 0.0;
  c.err = slot_error(acts, c.text).err;
  return c;
}

// Lowest err, then higher mean log-probability, then lower index.
inline std::size_t select_best(std::span<const Candidate> cands) {
  if (cands.empty()) throw InvalidArgument("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    const auto& a = cands[i];
    const auto& b = cands[best];
    if (a.err < b.err || (a.err == b.err && a.token_logprob_mean > b.token_logprob_mean)) best = i;
  }
  return best;
}

struct Reranked {
  Candidate best;
  std::size_t index = 0;
  std::vector<Candidate> candidates;
};

template <typename T>
Reranked generate_reranked(const ModelParams<T>& params, const Vocab& vocab, const DialogActSet& acts,
                           const DecodeConfig& cfg) {
  cfg.validate();
  Reranked r;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.n_candidates; ++i)
    r.candidates.push_back(generate_one(params, vocab, acts, cfg.strategy_for(i), cfg.max_new_tokens, rng));
  r.index = select_best(r.candidates);
  r.best = r.candidates[r.index];
  return r;
}

// Generates for every act set. Item i uses seed cfg.seed + i, so the output is
// the same for any thread count.
template <typename T>
std::vector<Reranked> generate_all(const ModelParams<T>& params, const Vocab& vocab,
                                   const std::vector<DialogActSet>& acts, const DecodeConfig& cfg,
                                   std::size_t threads = 1) {
  cfg.validate();
  std::vector<Reranked> out(acts.size());
  auto run = [&](std::size_t i) {
    DecodeConfig c = cfg;
    c.seed = cfg.seed + i;
    out[i] = generate_reranked(params, vocab, acts[i], c);
  };
  threads = std::max<std::size_t>(1, std::min(threads, acts.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < acts.size(); ++i) run(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < acts.size(); i += threads) run(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// {canonical_da, linearized_da, text, err, logprob_mean}
inline nlohmann::json generation_record(const DialogActSet& acts, const Candidate& c) {
  nlohmann::json j;
  j["canonical_da"] = canonicalize(acts).key;
  j["linearized_da"] = linearize(acts);
  j["text"] = c.text;
  j["err"] = c.err;
  j["logprob_mean"] = c.token_logprob_mean;
  return j;
}

}  // namespace scgpt
