// SPDX-License-Identifier: Apache-2.0
//
// Sample a small corpus from the shipped grammars, learn a vocabulary, train a
// tiny model for a few hundred steps and realize one dialog act.
#include <cstdio>
#include <string>
#include <vector>

#include "scgpt/decoding.hpp"
#include "scgpt/synthetic.hpp"
#include "scgpt/training.hpp"

int main() {
  using namespace scgpt;
  const auto grammars = load_grammars(std::string(SCGPT_DATA_DIR) + "/grammars/pretrain.grammar");
  const Corpus corpus = generate({find_grammar(grammars, "restaurant")}, 200, 7);

  std::vector<std::string> lines;
  for (const auto& ex : corpus.examples) {
    lines.push_back(linearize(ex.acts));
    lines.push_back(ex.response);
  }
  const Vocab vocab = train_bpe(lines, 400);

  ModelConfig mc;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_model = 48;
  mc.d_ff = 192;
  mc.max_context = 128;
  mc.vocab_size = vocab.size();
  mc.dropout = 0.0;

  TrainConfig tc = TrainConfig::defaults(Stage::da_pretrain);
  tc.start_lr = 3e-3;
  tc.max_epochs = 4;
  tc.batch_size = 16;
  const auto result = run_stage<float>(tc, corpus, vocab, ModelParams<float>::init(mc, 1),
                                       [](const EpochRecord& r) { std::printf("%s\n", r.to_json_line().c_str()); });

  const auto acts = parse_linearized("inform ( name = the golden wok ; food = thai ; area = north )");
  DecodeConfig dc;
  const auto out = generate_reranked(result.params, vocab, acts, dc);
  std::printf("%s\n  -> %s  (err %.2f)\n", linearize(acts).c_str(), out.best.text.c_str(), out.best.err);
  return 0;
}
