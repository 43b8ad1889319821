// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer (pre-layernorm blocks, learned absolute positions,
// output head tied to the token embedding) over control-code-prefixed
// sequences: linearize(acts) [BOS] response [EOS].
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/tensor.hpp"
#include "scgpt/tokenizer.hpp"

namespace scgpt {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t max_context = 256;
  std::size_t vocab_size = 512 + Vocab::kNumSpecials;
  double dropout = 0.1;

  void validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0 || max_context == 0 || vocab_size == 0)
      throw InvalidArgument("model dimensions must be positive");
    if (d_model % n_heads != 0)
      throw InvalidArgument("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                            std::to_string(n_heads));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  }

  std::string to_string() const {
    std::ostringstream os;
    os << "n_layers=" << n_layers << " n_heads=" << n_heads << " d_model=" << d_model << " d_ff=" << d_ff
       << " max_context=" << max_context << " vocab_size=" << vocab_size << " dropout=" << std::setprecision(17)
       << dropout;
    return os.str();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct LayerParams {
  ag::TensorPtr<T> ln1_g, ln1_b;
  ag::TensorPtr<T> attn_w, attn_b;  // [D, 3D], [3D]
  ag::TensorPtr<T> proj_w, proj_b;  // [D, D], [D]
  ag::TensorPtr<T> ln2_g, ln2_b;
  ag::TensorPtr<T> fc_w, fc_b;    // [D, F], [F]
  ag::TensorPtr<T> out_w, out_b;  // [F, D], [D]
};

template <typename T>
class ModelParams {
 public:
  ModelConfig config;
  ag::TensorPtr<T> wte;  // [V, D], also the output head
  ag::TensorPtr<T> wpe;  // [C, D]
  std::vector<LayerParams<T>> layers;
  ag::TensorPtr<T> lnf_g, lnf_b;

  // Every tensor filled with zero (the model then predicts a uniform distribution).
  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    const std::size_t D = cfg.d_model, F = cfg.d_ff;
    auto t = [](ag::Shape s) { return ag::make_tensor<T>(std::move(s), T(0), true); };
    p.wte = t({cfg.vocab_size, D});
    p.wpe = t({cfg.max_context, D});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      LayerParams<T> L;
      L.ln1_g = t({D});
      L.ln1_b = t({D});
      L.attn_w = t({D, 3 * D});
      L.attn_b = t({3 * D});
      L.proj_w = t({D, D});
      L.proj_b = t({D});
      L.ln2_g = t({D});
      L.ln2_b = t({D});
      L.fc_w = t({D, F});
      L.fc_b = t({F});
      L.out_w = t({F, D});
      L.out_b = t({D});
      p.layers.push_back(std::move(L));
    }
    p.lnf_g = t({D});
    p.lnf_b = t({D});
    return p;
  }

  // normal(0, 0.02) weight matrices and embeddings, zero biases, unit gains.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    auto fill = [&](const ag::TensorPtr<T>& t) {
      for (auto& v : t->data) v = static_cast<T>(normal(rng));
    };
    auto ones = [](const ag::TensorPtr<T>& t) { std::fill(t->data.begin(), t->data.end(), T(1)); };
    fill(p.wte);
    fill(p.wpe);
    for (auto& L : p.layers) {
      ones(L.ln1_g);
      ones(L.ln2_g);
      fill(L.attn_w);
      fill(L.proj_w);
      fill(L.fc_w);
      fill(L.out_w);
    }
    ones(p.lnf_g);
    return p;
  }

  std::vector<std::pair<std::string, ag::TensorPtr<T>>> named() const {
    std::vector<std::pair<std::string, ag::TensorPtr<T>>> out;
    out.emplace_back("wte", wte);
    out.emplace_back("wpe", wpe);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string p = "h" + std::to_string(l) + ".";
      out.emplace_back(p + "ln1.g", L.ln1_g);
      out.emplace_back(p + "ln1.b", L.ln1_b);
      out.emplace_back(p + "attn.w", L.attn_w);
      out.emplace_back(p + "attn.b", L.attn_b);
      out.emplace_back(p + "proj.w", L.proj_w);
      out.emplace_back(p + "proj.b", L.proj_b);
      out.emplace_back(p + "ln2.g", L.ln2_g);
      out.emplace_back(p + "ln2.b", L.ln2_b);
      out.emplace_back(p + "fc.w", L.fc_w);
      out.emplace_back(p + "fc.b", L.fc_b);
      out.emplace_back(p + "out.w", L.out_w);
      out.emplace_back(p + "out.b", L.out_b);
    }
    out.emplace_back("lnf.g", lnf_g);
    out.emplace_back("lnf.b", lnf_b);
    return out;
  }

  // Deep copy; the result shares no storage with *this.
  ModelParams clone() const { return cast<T>(); }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out = ModelParams<U>::zeros(config);
    auto src = named();
    auto dst = out.named();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t j = 0; j < src[i].second->data.size(); ++j)
        dst[i].second->data[j] = static_cast<U>(src[i].second->data[j]);
    return out;
  }

  void zero_grad() const {
    for (auto& [name, t] : named()) t->zero_grad();
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (auto& [name, t] : named()) n += t->numel();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Training sequences

// ids = A' [BOS] x [EOS]. loss_mask[t] refers to the prediction of ids[t+1]
// made at position t; it is 1 exactly when ids[t+1] is a response token or
// the final EOS. The last position has no target and is always 0.
struct LinearizedExample {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> loss_mask;
};

inline LinearizedExample build_example(const DialogActSet& acts, std::string_view response, const Vocab& vocab,
                                       std::size_t max_context) {
  LinearizedExample ex;
  ex.ids = vocab.encode(linearize(acts)).ids;
  const std::size_t bos_at = ex.ids.size();
  ex.ids.push_back(vocab.bos());
  const auto body = vocab.encode(response).ids;
  ex.ids.insert(ex.ids.end(), body.begin(), body.end());
  ex.ids.push_back(vocab.eos());
  if (ex.ids.size() > max_context)
    throw ContextOverflow("example needs " + std::to_string(ex.ids.size()) + " tokens (prefix " +
                              std::to_string(bos_at + 1) + ", response " + std::to_string(body.size() + 1) +
                              ") but max_context is " + std::to_string(max_context),
                          ex.ids.size(), max_context);
  ex.loss_mask.assign(ex.ids.size(), 0);
  for (std::size_t t = bos_at; t + 1 < ex.ids.size(); ++t) ex.loss_mask[t] = 1;
  return ex;
}

// Plain language-model examples: [BOS] text [EOS], every target counted.
// Text longer than the context is cut into consecutive windows.
inline std::vector<LinearizedExample> build_plain_examples(std::string_view text, const Vocab& vocab,
                                                           std::size_t max_context) {
  if (max_context < 2) throw InvalidArgument("max_context must be at least 2");
  const auto ids = vocab.encode(text, Wrap::bos_eos).ids;
  std::vector<LinearizedExample> out;
  for (std::size_t start = 0; start + 1 < ids.size(); start += max_context - 1) {
    const std::size_t end = std::min(ids.size(), start + max_context);
    LinearizedExample ex;
    ex.ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(start), ids.begin() + static_cast<std::ptrdiff_t>(end));
    ex.loss_mask.assign(ex.ids.size(), 1);
    ex.loss_mask.back() = 0;
    out.push_back(std::move(ex));
  }
  return out;
}

// A right-padded [batch, seq] block.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;
  std::vector<std::int32_t> positions;
  std::vector<std::uint8_t> key_valid;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> lengths;
};

inline Batch pack_batch(std::span<const LinearizedExample* const> examples, TokenId pad) {
  if (examples.empty()) throw InvalidArgument("cannot pack an empty batch");
  Batch b;
  b.batch = examples.size();
  for (const auto* ex : examples) {
    if (ex->ids.empty() || ex->ids.size() != ex->loss_mask.size())
      throw InvalidArgument("example has empty ids or a mask of the wrong length");
    b.seq = std::max(b.seq, ex->ids.size());
  }
  const std::size_t n = b.batch * b.seq;
  b.ids.assign(n, pad);
  b.targets.assign(n, pad);
  b.positions.resize(n);
  b.key_valid.assign(n, 0);
  b.mask.assign(n, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& ex = *examples[i];
    b.lengths.push_back(ex.ids.size());
    for (std::size_t t = 0; t < b.seq; ++t) {
      const std::size_t k = i * b.seq + t;
      b.positions[k] = static_cast<std::int32_t>(t);
      if (t < ex.ids.size()) {
        b.ids[k] = ex.ids[t];
        b.key_valid[k] = 1;
        if (t + 1 < ex.ids.size()) {
          b.targets[k] = ex.ids[t + 1];
          b.mask[k] = ex.loss_mask[t];
        }
      }
    }
  }
  return b;
}

inline Batch pack_batch(std::span<const LinearizedExample> examples, TokenId pad) {
  std::vector<const LinearizedExample*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  return pack_batch(std::span<const LinearizedExample* const>(ptrs), pad);
}

// ---------------------------------------------------------------------------
// Forward pass

// Logits [batch*seq, vocab]. Dropout is applied only when `dropout_rng` is given.
template <typename T, typename Rng = std::mt19937_64>
ag::TensorPtr<T> compute_logits(ag::Tape<T>& tape, const ModelParams<T>& p, const Batch& b,
                                Rng* dropout_rng = nullptr) {
  const ModelConfig& cfg = p.config;
  if (b.seq > cfg.max_context)
    throw ContextOverflow("batch sequence length " + std::to_string(b.seq) + " exceeds max_context " +
                              std::to_string(cfg.max_context),
                          b.seq, cfg.max_context);
  const double pdrop = dropout_rng ? cfg.dropout : 0.0;
  auto drop = [&](const ag::TensorPtr<T>& x) {
    return pdrop > 0.0 ? ag::dropout(tape, x, pdrop, *dropout_rng) : x;
  };

  auto x = ag::add(tape, ag::embed_lookup(tape, p.wte, std::span<const TokenId>(b.ids)),
                   ag::embed_lookup(tape, p.wpe, std::span<const std::int32_t>(b.positions)));
  x = drop(x);
  for (const auto& L : p.layers) {
    auto h = ag::layernorm(tape, x, L.ln1_g, L.ln1_b);
    auto qkv = ag::add_bias(tape, ag::matmul(tape, h, L.attn_w), L.attn_b);
    auto a = ag::causal_attention(tape, qkv, b.batch, b.seq, cfg.n_heads, std::span<const std::uint8_t>(b.key_valid));
    a = ag::add_bias(tape, ag::matmul(tape, a, L.proj_w), L.proj_b);
    x = ag::add(tape, x, drop(a));
    h = ag::layernorm(tape, x, L.ln2_g, L.ln2_b);
    auto f = ag::gelu(tape, ag::add_bias(tape, ag::matmul(tape, h, L.fc_w), L.fc_b));
    f = ag::add_bias(tape, ag::matmul(tape, f, L.out_w), L.out_b);
    x = ag::add(tape, x, drop(f));
  }
  x = ag::layernorm(tape, x, p.lnf_g, p.lnf_b);
  return ag::matmul_nt(tape, x, p.wte);
}

// Mean -log p(target) over masked-in positions.
template <typename T, typename Rng = std::mt19937_64>
ag::TensorPtr<T> nll_loss(ag::Tape<T>& tape, const ModelParams<T>& p, const Batch& b, Rng* dropout_rng = nullptr) {
  auto logits = compute_logits(tape, p, b, dropout_rng);
  return ag::cross_entropy_masked(tape, logits, std::span<const TokenId>(b.targets),
                                  std::span<const std::uint8_t>(b.mask));
}

// Loss value without recording a tape.
template <typename T>
T nll_loss_value(const ModelParams<T>& p, const Batch& b) {
  ag::NoGradGuard guard;
  ag::Tape<T> tape;
  return nll_loss<T>(tape, p, b)->data[0];
}

// Next-token distributions for each example: element i holds ids[i].size()
// rows of vocab_size probabilities, row t being p(. | ids[0..t]).
template <typename T>
std::vector<std::vector<T>> next_token_distributions(const ModelParams<T>& p,
                                                     std::span<const LinearizedExample> examples, TokenId pad) {
  ag::NoGradGuard guard;
  ag::Tape<T> tape;
  const Batch b = pack_batch(examples, pad);
  auto probs = ag::softmax_lastdim(tape, compute_logits<T>(tape, p, b));
  const std::size_t V = p.config.vocab_size;
  std::vector<std::vector<T>> out(b.batch);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto first = probs->data.begin() + static_cast<std::ptrdiff_t>(i * b.seq * V);
    out[i].assign(first, first + static_cast<std::ptrdiff_t>(b.lengths[i] * V));
  }
  return out;
}

// Single-sequence decoding with per-layer key/value caches. Produces the same
// logits as a full re-forward of the prefix.
template <typename T>
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelParams<T>& p) : p_(p) {
    const std::size_t D = p.config.d_model, C = p.config.max_context;
    keys_.assign(p.layers.size(), std::vector<T>(C * D));
    values_.assign(p.layers.size(), std::vector<T>(C * D));
  }

  std::size_t length() const { return len_; }

  // Appends `token` and returns the logits for the following position.
  std::vector<T> step(TokenId token) {
    const ModelConfig& cfg = p_.config;
    if (len_ >= cfg.max_context)
      throw ContextOverflow("decoder context full at " + std::to_string(len_) + " tokens", len_ + 1, cfg.max_context);
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size)
      throw InvalidArgument("token id " + std::to_string(token) + " outside vocab");
    const std::size_t D = cfg.d_model, F = cfg.d_ff, H = cfg.n_heads, dh = D / H;
    std::vector<T> x(D), h(D), qkv(3 * D), a(D), proj(D), fc(F), out(D);
    for (std::size_t d = 0; d < D; ++d)
      x[d] = p_.wte->data[static_cast<std::size_t>(token) * D + d] + p_.wpe->data[len_ * D + d];
    const T sc = T(1) / std::sqrt(T(dh));
    std::vector<T> scores(len_ + 1);
    for (std::size_t l = 0; l < p_.layers.size(); ++l) {
      const auto& L = p_.layers[l];
      norm(x, *L.ln1_g, *L.ln1_b, h);
      affine(h, *L.attn_w, *L.attn_b, qkv);
      std::copy_n(qkv.begin() + static_cast<std::ptrdiff_t>(D), D, keys_[l].begin() + static_cast<std::ptrdiff_t>(len_ * D));
      std::copy_n(qkv.begin() + static_cast<std::ptrdiff_t>(2 * D), D,
                  values_[l].begin() + static_cast<std::ptrdiff_t>(len_ * D));
      std::fill(a.begin(), a.end(), T(0));
      for (std::size_t hd = 0; hd < H; ++hd) {
        const T* q = qkv.data() + hd * dh;
        T mx = 0;
        for (std::size_t j = 0; j <= len_; ++j) {
          const T* k = keys_[l].data() + j * D + hd * dh;
          T s = 0;
          for (std::size_t d = 0; d < dh; ++d) s += q[d] * k[d];
          scores[j] = s * sc;
          mx = j == 0 ? scores[j] : std::max(mx, scores[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j <= len_; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        T* o = a.data() + hd * dh;
        for (std::size_t j = 0; j <= len_; ++j) {
          const T pj = scores[j] / z;
          const T* v = values_[l].data() + j * D + hd * dh;
          for (std::size_t d = 0; d < dh; ++d) o[d] += pj * v[d];
        }
      }
      affine(a, *L.proj_w, *L.proj_b, proj);
      for (std::size_t d = 0; d < D; ++d) x[d] = x[d] + proj[d];
      norm(x, *L.ln2_g, *L.ln2_b, h);
      affine(h, *L.fc_w, *L.fc_b, fc);
      for (auto& v : fc) v = ag::kernels::gelu(v);
      affine(fc, *L.out_w, *L.out_b, out);
      for (std::size_t d = 0; d < D; ++d) x[d] = x[d] + out[d];
    }
    norm(x, *p_.lnf_g, *p_.lnf_b, h);
    std::vector<T> logits(cfg.vocab_size);
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
      const T* e = p_.wte->data.data() + v * D;
      T s = 0;
      for (std::size_t d = 0; d < D; ++d) s += h[d] * e[d];
      logits[v] = s;
    }
    for (T v : logits)
      if (!std::isfinite(v)) throw NumericFault("non-finite logit during decoding");
    ++len_;
    return logits;
  }

 private:
  static void norm(const std::vector<T>& in, const ag::Tensor<T>& g, const ag::Tensor<T>& b, std::vector<T>& out) {
    ag::kernels::layernorm_row(in.data(), out.data(), in.size(), T(1e-5));
    for (std::size_t d = 0; d < in.size(); ++d) out[d] = out[d] * g.data[d] + b.data[d];
  }

  static void affine(const std::vector<T>& in, const ag::Tensor<T>& w, const ag::Tensor<T>& b, std::vector<T>& out) {
    std::fill(out.begin(), out.end(), T(0));
    ag::kernels::gemm_nn(1, in.size(), out.size(), in.data(), w.data.data(), out.data());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = out[j] + b.data[j];
  }

  const ModelParams<T>& p_;
  std::vector<std::vector<T>> keys_, values_;
  std::size_t len_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: "SCGPT-CKPT v1", the config line, then named tensors stored as
// little-endian float32.

template <typename T>
void save_checkpoint(const ModelParams<T>& p, std::ostream& os) {
  os << "SCGPT-CKPT v1\n";
  os << "config " << p.config.to_string() << '\n';
  const auto named = p.named();
  os << "tensors " << named.size() << '\n';
  std::vector<char> buf;
  for (const auto& [name, t] : named) {
    os << name << ' ' << t->shape.size();
    for (auto d : t->shape) os << ' ' << d;
    os << '\n';
    buf.resize(t->numel() * 4);
    for (std::size_t i = 0; i < t->numel(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t->data[i]));
      for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    os << '\n';
  }
  if (!os) throw IoError("failed while writing checkpoint");
}

template <typename T>
void save_checkpoint(const ModelParams<T>& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  save_checkpoint(p, f);
}

inline ModelConfig parse_model_config(const std::string& line) {
  std::istringstream is(line);
  std::string word;
  is >> word;
  if (word != "config") throw ParseError("checkpoint config line missing", 0, word);
  ModelConfig cfg;
  bool seen[7] = {};
  while (is >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ParseError("bad config entry '" + word + "'", 0, word);
    const std::string key = word.substr(0, eq), val = word.substr(eq + 1);
    try {
      if (key == "n_layers") cfg.n_layers = std::stoul(val), seen[0] = true;
      else if (key == "n_heads") cfg.n_heads = std::stoul(val), seen[1] = true;
      else if (key == "d_model") cfg.d_model = std::stoul(val), seen[2] = true;
      else if (key == "d_ff") cfg.d_ff = std::stoul(val), seen[3] = true;
      else if (key == "max_context") cfg.max_context = std::stoul(val), seen[4] = true;
      else if (key == "vocab_size") cfg.vocab_size = std::stoul(val), seen[5] = true;
      else if (key == "dropout") cfg.dropout = std::stod(val), seen[6] = true;
      else throw ParseError("unknown config key '" + key + "'", 0, key);
    } catch (const std::logic_error&) {
      throw ParseError("bad config value '" + word + "'", 0, word);
    }
  }
  for (bool s : seen)
    if (!s) throw ParseError("checkpoint config is incomplete", 0, "");
  cfg.validate();
  return cfg;
}

template <typename T = float>
ModelParams<T> load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "SCGPT-CKPT v1") throw ParseError("not an SCGPT-CKPT v1 file", 0, line);
  if (!std::getline(is, line)) throw ParseError("truncated checkpoint", 0, "");
  ModelParams<T> p = ModelParams<T>::zeros(parse_model_config(line));
  std::string tag;
  std::size_t count = 0;
  if (!(is >> tag >> count) || tag != "tensors") throw ParseError("missing tensor count", 0, tag);
  auto named = p.named();
  if (count != named.size())
    throw ConfigMismatch("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                         std::to_string(named.size()));
  std::vector<char> buf;
  for (auto& [name, t] : named) {
    std::string got;
    std::size_t ndim = 0;
    if (!(is >> got >> ndim)) throw ParseError("truncated tensor header", 0, "");
    ag::Shape shape(ndim);
    for (auto& d : shape) is >> d;
    if (got != name || shape != t->shape)
      throw ConfigMismatch("tensor '" + got + "' " + ag::shape_str(shape) + " does not match expected '" + name +
                           "' " + ag::shape_str(t->shape));
    if (is.get() != '\n') throw ParseError("malformed tensor header for " + name, 0, name);
    buf.resize(t->numel() * 4);
    if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size())))
      throw ParseError("truncated data for tensor " + name, 0, name);
    for (std::size_t i = 0; i < t->numel(); ++i) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i * 4 + k])) << (8 * k);
      t->data[i] = static_cast<T>(std::bit_cast<float>(bits));
      if (!std::isfinite(t->data[i])) throw NumericFault("non-finite value in checkpoint tensor " + name);
    }
    is.get();
  }
  return p;
}

template <typename T = float>
ModelParams<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  return load_checkpoint<T>(f);
}

}  // namespace scgpt
