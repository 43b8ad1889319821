// SPDX-License-Identifier: Apache-2.0
//
// The three-stage recipe: plain LM pre-training, dialog-act controlled
// pre-training and few-shot fine-tuning all run through run_stage(); they
// differ only in how examples are built and in their default budgets.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "scgpt/dataset.hpp"
#include "scgpt/error.hpp"
#include "scgpt/tensor.hpp"
#include "scgpt/transformer.hpp"

namespace scgpt {

enum class Stage { plain, da_pretrain, finetune };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::plain: return "plain";
    case Stage::da_pretrain: return "da_pretrain";
    case Stage::finetune: return "finetune";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "plain") return Stage::plain;
  if (s == "da_pretrain") return Stage::da_pretrain;
  if (s == "finetune") return Stage::finetune;
  throw InvalidArgument("unknown stage '" + std::string(s) + "'");
}

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  Stage stage = Stage::da_pretrain;
  double start_lr = 5e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  std::size_t batch_size = 8;
  std::size_t max_epochs = 20;
  std::size_t max_steps = 0;  // 0 = bounded by epochs only
  std::size_t early_stop_patience = 3;
  double val_fraction = 0.1;  // 0 disables validation and early stopping
  std::uint64_t seed = 0;

  // Pre-training runs up to 20 epochs; fine-tuning runs five epochs per domain.
  static TrainConfig defaults(Stage stage) {
    TrainConfig c;
    c.stage = stage;
    if (stage == Stage::finetune) c.max_epochs = 5;
    return c;
  }

  AdamWHyper adamw() const { return {beta1, beta2, eps, weight_decay}; }

  void validate() const {
    if (!(start_lr > 0)) throw InvalidArgument("start_lr must be positive");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
    if (weight_decay < 0) throw InvalidArgument("weight_decay must be non-negative");
    if (!(val_fraction >= 0 && val_fraction < 1)) throw InvalidArgument("val_fraction must lie in [0, 1)");
    if (grad_clip < 0) throw InvalidArgument("grad_clip must be non-negative");
  }

  // key=value lines, '#' starts a comment.
  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "stage=" << stage_name(stage) << '\n'
       << "start_lr=" << start_lr << '\n'
       << "weight_decay=" << weight_decay << '\n'
       << "beta1=" << beta1 << '\n'
       << "beta2=" << beta2 << '\n'
       << "eps=" << eps << '\n'
       << "grad_clip=" << grad_clip << '\n'
       << "batch_size=" << batch_size << '\n'
       << "max_epochs=" << max_epochs << '\n'
       << "max_steps=" << max_steps << '\n'
       << "early_stop_patience=" << early_stop_patience << '\n'
       << "val_fraction=" << val_fraction << '\n'
       << "seed=" << seed << '\n';
    return os.str();
  }

  // Applies key=value overrides on top of *this. Unknown keys are errors.
  void apply(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const auto body = text::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        throw ParseError("config line " + std::to_string(lineno) + ": expected key=value", lineno, std::string(body));
      const std::string key(text::trim(body.substr(0, eq)));
      const std::string val(text::trim(body.substr(eq + 1)));
      try {
        set(key, val);
      } catch (const std::logic_error&) {
        throw ParseError("config line " + std::to_string(lineno) + ": bad value '" + val + "' for " + key, lineno,
                         val);
      }
    }
    validate();
  }

  void set(const std::string& key, const std::string& val) {
    if (key == "stage") stage = parse_stage(val);
    else if (key == "start_lr") start_lr = std::stod(val);
    else if (key == "weight_decay") weight_decay = std::stod(val);
    else if (key == "beta1") beta1 = std::stod(val);
    else if (key == "beta2") beta2 = std::stod(val);
    else if (key == "eps") eps = std::stod(val);
    else if (key == "grad_clip") grad_clip = std::stod(val);
    else if (key == "batch_size") batch_size = std::stoul(val);
    else if (key == "max_epochs") max_epochs = std::stoul(val);
    else if (key == "max_steps") max_steps = std::stoul(val);
    else if (key == "early_stop_patience") early_stop_patience = std::stoul(val);
    else if (key == "val_fraction") val_fraction = std::stod(val);
    else if (key == "seed") seed = std::stoull(val);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }
};

inline TrainConfig load_train_config(const std::string& path, Stage stage) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  TrainConfig c = TrainConfig::defaults(stage);
  c.apply(f);
  return c;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

template <typename T>
OptimizerState<T> make_optimizer_state(std::span<const ag::TensorPtr<T>> params) {
  OptimizerState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p->numel(), T(0));
    s.v.emplace_back(p->numel(), T(0));
  }
  return s;
}

// Adam with decoupled weight decay and bias correction:
//   p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * wd * p
// A parameter with no gradient buffer is treated as having zero gradient.
template <typename T>
void adamw_step(std::span<const ag::TensorPtr<T>> params, OptimizerState<T>& state, double lr,
                const AdamWHyper& hp) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].size() != p->numel() || state.v[i].size() != p->numel())
      throw ShapeError("optimizer moment for tensor " + std::to_string(i) + " has " +
                       std::to_string(state.m[i].size()) + " entries, parameter " + ag::shape_str(p->shape));
    if (!p->grad.empty() && p->grad.size() != p->numel())
      throw ShapeError("gradient size " + std::to_string(p->grad.size()) + " does not match parameter " +
                       ag::shape_str(p->shape));
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has_grad = !p.grad.empty();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = has_grad ? static_cast<double>(p.grad[j]) : 0.0;
      m[j] = static_cast<T>(hp.beta1 * m[j] + (1.0 - hp.beta1) * g);
      v[j] = static_cast<T>(hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      const double old = p.data[j];
      p.data[j] = static_cast<T>(old - lr * (mhat / (std::sqrt(vhat) + hp.eps)) - lr * hp.weight_decay * old);
    }
  }
}

// Rescales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<const ag::TensorPtr<T>> params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    for (T g : p->grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-12));
    for (const auto& p : params)
      for (T& g : p->grad) g *= s;
  }
  return norm;
}

// Linear decay from start_lr at step 0 to zero at total_steps, no warmup.
inline double lr_at(std::size_t step, std::size_t total_steps, double start_lr) {
  if (total_steps == 0 || step > total_steps)
    throw InvalidArgument("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  return std::max(0.0, start_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps)));
}

// ---------------------------------------------------------------------------
// Stage runner

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  double lr = 0;

  // {"epoch":..,"train_loss":..,"val_loss":..,"lr":..}
  std::string to_json_line() const {
    std::ostringstream os;
    os << std::setprecision(9) << "{\"epoch\":" << epoch << ",\"train_loss\":" << train_loss << ",\"val_loss\":";
    if (val_loss) os << *val_loss;
    else os << "null";
    os << ",\"lr\":" << lr << "}";
    return os.str();
  }
};

template <typename T>
struct StageResult {
  ModelParams<T> params;
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
};

// Turns a corpus into training sequences for the given stage. Plain stage
// ignores the acts and counts every target.
inline std::vector<LinearizedExample> build_stage_examples(Stage stage, const Corpus& corpus, const Vocab& vocab,
                                                           std::size_t max_context) {
  std::vector<LinearizedExample> out;
  out.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    if (stage == Stage::plain) {
      for (auto& e : build_plain_examples(ex.response, vocab, max_context)) out.push_back(std::move(e));
    } else {
      out.push_back(build_example(ex.acts, ex.response, vocab, max_context));
    }
  }
  return out;
}

template <typename T>
double mean_loss(const ModelParams<T>& params, const std::vector<LinearizedExample>& examples,
                 std::span<const std::size_t> order, std::size_t batch_size, TokenId pad) {
  if (order.empty()) return 0.0;
  double total = 0;
  std::size_t weight = 0;
  std::vector<const LinearizedExample*> chunk;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    chunk.clear();
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) chunk.push_back(&examples[order[j]]);
    const Batch b = pack_batch(std::span<const LinearizedExample* const>(chunk), pad);
    std::size_t n = 0;
    for (auto m : b.mask) n += m;
    total += static_cast<double>(nll_loss_value(params, b)) * static_cast<double>(n);
    weight += n;
  }
  return weight ? total / static_cast<double>(weight) : 0.0;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename T>
StageResult<T> run_stage(const TrainConfig& cfg, const std::vector<LinearizedExample>& examples, const Vocab& vocab,
                         const ModelParams<T>& init, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (examples.empty()) throw EmptyCorpusError(std::string("no training examples for stage ") + stage_name(cfg.stage));
  if (init.config.vocab_size != vocab.size())
    throw ConfigMismatch("model vocab_size " + std::to_string(init.config.vocab_size) + " differs from vocab size " +
                         std::to_string(vocab.size()));

  std::mt19937_64 split_rng(cfg.seed);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);

  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::size_t n_val = 0;
  if (cfg.val_fraction > 0 && examples.size() >= 2)
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.val_fraction * examples.size())));
  std::shuffle(all.begin(), all.end(), split_rng);
  std::vector<std::size_t> val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  StageResult<T> result{init.clone(), {}, 0, 0};
  ModelParams<T>& params = result.params;
  std::optional<ModelParams<T>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  const auto named = params.named();
  std::vector<ag::TensorPtr<T>> tensors;
  for (const auto& [name, t] : named) tensors.push_back(t);
  auto state = make_optimizer_state<T>(tensors);

  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total = per_epoch * cfg.max_epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  std::vector<const LinearizedExample*> chunk;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && result.steps < total; ++epoch) {
    std::shuffle(train.begin(), train.end(), shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < train.size() && result.steps < total; i += cfg.batch_size) {
      chunk.clear();
      for (std::size_t j = i; j < std::min(train.size(), i + cfg.batch_size); ++j) chunk.push_back(&examples[train[j]]);
      const Batch b = pack_batch(std::span<const LinearizedExample* const>(chunk), vocab.pad());
      const double lr = lr_at(result.steps, total, cfg.start_lr);
      params.zero_grad();
      ag::Tape<T> tape;
      auto loss = nll_loss<T>(tape, params, b, &dropout_rng);
      tape.backward(loss);
      clip_grad_norm<T>(tensors, cfg.grad_clip);
      adamw_step<T>(tensors, state, lr, cfg.adamw());
      loss_sum += static_cast<double>(loss->data[0]);
      ++batches;
      ++result.steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.lr = lr_at(result.steps, total, cfg.start_lr);
    if (!val.empty()) rec.val_loss = mean_loss(params, examples, val, cfg.batch_size, vocab.pad());
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss) {
      if (*rec.val_loss < best_val) {
        best_val = *rec.val_loss;
        best = params.clone();
        result.best_epoch = epoch;
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  params.zero_grad();
  if (best) result.params = std::move(*best);
  return result;
}

template <typename T>
StageResult<T> run_stage(const TrainConfig& cfg, const Corpus& data, const Vocab& vocab, const ModelParams<T>& init,
                         const EpochCallback& on_epoch = {}) {
  if (data.examples.empty())
    throw EmptyCorpusError(std::string("corpus '") + data.name + "' is empty for stage " + stage_name(cfg.stage));
  return run_stage(cfg, build_stage_examples(cfg.stage, data, vocab, init.config.max_context), vocab, init, on_epoch);
}

}  // namespace scgpt
