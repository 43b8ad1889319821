// SPDX-License-Identifier: Apache-2.0
//
// The `scgpt` command line. run() is the whole program minus main(), so it
// can be driven in-process.
//
// Exit codes: 0 success, 1 internal error, 2 usage, input or I/O error.
#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "scgpt/dataset.hpp"
#include "scgpt/decoding.hpp"
#include "scgpt/dialog_act.hpp"
#include "scgpt/error.hpp"
#include "scgpt/manifest.hpp"
#include "scgpt/metrics.hpp"
#include "scgpt/synthetic.hpp"
#include "scgpt/tokenizer.hpp"
#include "scgpt/training.hpp"
#include "scgpt/transformer.hpp"

namespace scgpt::cli {

inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kUsage = 2;

inline std::size_t env_threads() {
  const char* s = std::getenv("SCGPT_THREADS");
  if (!s || !*s) return 1;
  try {
    const long v = std::stol(s);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw InvalidArgument(std::string("SCGPT_THREADS must be a positive integer, got '") + s + "'");
  }
}

inline std::string vocab_path_for(const std::string& ckpt) { return ckpt + ".vocab"; }

inline std::string dump_line(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// key=value overrides for ModelConfig; '#' comments.
inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open model config " + path);
  ModelConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value", lineno, std::string(body));
    const std::string key(text::trim(body.substr(0, eq))), val(text::trim(body.substr(eq + 1)));
    try {
      if (key == "n_layers") c.n_layers = std::stoul(val);
      else if (key == "n_heads") c.n_heads = std::stoul(val);
      else if (key == "d_model") c.d_model = std::stoul(val);
      else if (key == "d_ff") c.d_ff = std::stoul(val);
      else if (key == "max_context") c.max_context = std::stoul(val);
      else if (key == "vocab_size") c.vocab_size = std::stoul(val);
      else if (key == "dropout") c.dropout = std::stod(val);
      else throw ParseError(path + ":" + std::to_string(lineno) + ": unknown model key '" + key + "'", lineno, key);
    } catch (const std::logic_error&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad value for " + key, lineno, val);
    }
  }
  return c;
}

inline nlohmann::json config_json(const std::string& kv_text) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream is(kv_text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

inline nlohmann::json model_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"d_model", c.d_model}, {"d_ff", c.d_ff},
          {"max_context", c.max_context}, {"vocab_size", c.vocab_size}, {"dropout", c.dropout}};
}

inline std::string guess_format(const std::string& path, const std::string& format) {
  if (!format.empty()) return format;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".txt") return "scgpt_txt";
  return "jsonl_v1";
}

struct Io {
  std::ostream& out;
  std::ostream& err;
  std::istream& in;
};

class Program {
 public:
  Program(std::vector<std::string> args, Io io) : args_(std::move(args)), io_(io) {}

  int run() {
    CLI::App app{"scgpt: dialog-act conditioned generation with a small GPT"};
    app.require_subcommand(1);
    register_commands(app);
    std::vector<const char*> cargv;
    cargv.push_back("scgpt");
    for (const auto& a : args_) cargv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp&) {
      io_.out << app.help();
      return kOk;
    } catch (const CLI::CallForAllHelp&) {
      io_.out << app.help("", CLI::AppFormatMode::All);
      return kOk;
    } catch (const CLI::ParseError& e) {
      io_.err << "error: " << e.what() << '\n';
      return kUsage;
    }
    try {
      return action_();
    } catch (const IoError& e) {
      io_.err << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const NumericFault& e) {
      io_.err << "internal error: " << e.what() << '\n';
      return kInternal;
    } catch (const ShapeError& e) {
      io_.err << "internal error: " << e.what() << '\n';
      return kInternal;
    } catch (const Error& e) {
      io_.err << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const std::exception& e) {
      io_.err << "internal error: " << e.what() << '\n';
      return kInternal;
    }
  }

 private:
  struct TrainOpts {
    std::string corpus, format, domain, ckpt, vocab, model, config, out, metrics, manifest;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_epochs, max_steps;
    std::optional<double> lr;
  };

  void add_train_options(CLI::App* sub, TrainOpts& o, bool with_domain) {
    sub->add_option("--corpus", o.corpus, "training data")->required()->check(CLI::ExistingFile);
    if (with_domain) {
      sub->add_option("--format", o.format, "jsonl_v1 or scgpt_txt (default: by extension)");
      sub->add_option("--domain", o.domain, "keep only this domain");
    }
    sub->add_option("--ckpt", o.ckpt, "initial checkpoint (its vocab is read from <ckpt>.vocab)");
    sub->add_option("--vocab", o.vocab, "vocab file when starting from random weights");
    sub->add_option("--model", o.model, "model config (key=value) when starting from random weights");
    sub->add_option("--config", o.config, "training config (key=value)");
    sub->add_option("--seed", o.seed, "overrides the config seed");
    sub->add_option("--max-epochs", o.max_epochs, "overrides max_epochs");
    sub->add_option("--max-steps", o.max_steps, "overrides max_steps");
    sub->add_option("--lr", o.lr, "overrides start_lr");
    sub->add_option("--out", o.out, "output checkpoint")->required();
    sub->add_option("--metrics", o.metrics, "epoch log (default <out>.metrics.jsonl)");
    sub->add_option("--manifest", o.manifest, "run manifest (default <out>.manifest.json)");
  }

  void register_commands(CLI::App& app) {
    // tokenizer
    {
      auto* sub = app.add_subcommand("tokenizer", "learn a byte-level BPE vocabulary");
      sub->add_option("--corpus", tok_.corpus, "jsonl_v1 / scgpt_txt corpus or plain text")->required()->check(CLI::ExistingFile);
      sub->add_option("--format", tok_.format, "jsonl_v1, scgpt_txt or text");
      sub->add_option("--vocab-size", tok_.size, "target size including BOS/EOS/PAD")->capture_default_str();
      sub->add_option("--out", tok_.out, "vocab file")->required();
      sub->add_option("--manifest", tok_.manifest, "run manifest");
      sub->callback([this] { action_ = [this] { return cmd_tokenizer(); }; });
    }
    // training stages
    {
      auto* sub = app.add_subcommand("pretrain-plain", "language-model pre-training on plain text");
      add_train_options(sub, train_, false);
      sub->callback([this] { action_ = [this] { return cmd_train(Stage::plain, "pretrain-plain"); }; });
    }
    {
      auto* sub = app.add_subcommand("pretrain-da", "dialog-act conditioned pre-training");
      add_train_options(sub, train_, true);
      sub->callback([this] { action_ = [this] { return cmd_train(Stage::da_pretrain, "pretrain-da"); }; });
    }
    {
      auto* sub = app.add_subcommand("finetune", "few-shot fine-tuning on one domain");
      add_train_options(sub, train_, true);
      sub->callback([this] { action_ = [this] { return cmd_train(Stage::finetune, "finetune"); }; });
    }
    // generate
    {
      auto* sub = app.add_subcommand("generate", "realize dialog acts as text");
      sub->add_option("--ckpt", gen_.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
      auto* da = sub->add_option("--da", gen_.da, "one linearized dialog act");
      auto* corpus = sub->add_option("--corpus", gen_.corpus, "generate for every example")->check(CLI::ExistingFile);
      auto* inter = sub->add_flag("--interactive", gen_.interactive, "read one linearized act per stdin line");
      da->excludes(corpus)->excludes(inter);
      corpus->excludes(inter);
      sub->add_option("--format", gen_.format, "corpus format");
      sub->add_option("--domain", gen_.domain, "keep only this domain of --corpus");
      sub->add_option("--n-candidates", gen_.decode.n_candidates, "candidates per act")->capture_default_str();
      sub->add_option("--max-new-tokens", gen_.decode.max_new_tokens, "token budget")->capture_default_str();
      sub->add_option("--top-k", gen_.decode.top_k, "k for sampled candidates")->capture_default_str();
      sub->add_option("--temperature", gen_.decode.temperature, "temperature for sampled candidates")->capture_default_str();
      sub->add_option("--seed", gen_.decode.seed, "sampling seed")->capture_default_str();
      sub->add_option("--out", gen_.out, "output JSONL (default stdout)");
      sub->add_option("--manifest", gen_.manifest, "run manifest (default <out>.manifest.json)");
      sub->callback([this] { action_ = [this] { return cmd_generate(); }; });
    }
    // evaluate
    {
      auto* sub = app.add_subcommand("evaluate", "BLEU, ERR and entity F1 of a generations file");
      sub->add_option("--generations", eval_.generations, "output of `generate --corpus`")->required()->check(CLI::ExistingFile);
      sub->add_option("--corpus", eval_.test, "test corpus the generations align with")->required()->check(CLI::ExistingFile);
      sub->add_option("--train", eval_.train, "training corpus for the seen/unseen split")->check(CLI::ExistingFile);
      sub->add_option("--format", eval_.format, "corpus format");
      sub->add_option("--domain", eval_.domain, "domain label for the report and corpus filter");
      sub->add_option("--out", eval_.out, "report JSON (default stdout)");
      sub->add_option("--manifest", eval_.manifest, "run manifest");
      sub->callback([this] { action_ = [this] { return cmd_evaluate(); }; });
    }
    // build-fewshot
    {
      auto* sub = app.add_subcommand("build-fewshot", "group, filter and sample a few-shot split");
      sub->add_option("--corpus", fs_.corpus, "source corpus")->required()->check(CLI::ExistingFile);
      sub->add_option("--format", fs_.format, "corpus format");
      sub->add_option("--k", fs_.k, "domain=count (repeatable; default 50 per domain, 40 for taxi)");
      sub->add_option("--domain", fs_.domains, "restrict to these domains (repeatable)");
      sub->add_option("--seed", fs_.seed, "sampling seed")->capture_default_str();
      sub->add_option("--out", fs_.out, "output prefix: <out>.train.jsonl and <out>.test.jsonl")->required();
      sub->add_option("--manifest", fs_.manifest, "run manifest (default <out>.manifest.json)");
      sub->callback([this] { action_ = [this] { return cmd_build_fewshot(); }; });
    }
    // stats
    {
      auto* sub = app.add_subcommand("stats", "dataset statistics table");
      sub->add_option("--corpus", st_.train, "training corpus")->required()->check(CLI::ExistingFile);
      sub->add_option("--test", st_.test, "test corpus")->check(CLI::ExistingFile);
      sub->add_option("--format", st_.format, "corpus format");
      sub->add_option("--domain", st_.domain, "column label (and domain filter when present in the data)");
      sub->add_option("--out", st_.out, "also write the table here");
      sub->add_option("--manifest", st_.manifest, "run manifest");
      sub->callback([this] { action_ = [this] { return cmd_stats(); }; });
    }
    // synth
    {
      auto* sub = app.add_subcommand("synth", "sample a corpus from grammar files");
      sub->add_option("--grammar", syn_.grammars, "grammar file (repeatable)")->required()->check(CLI::ExistingFile);
      sub->add_option("--n", syn_.n, "examples per domain")->capture_default_str();
      sub->add_option("--domain", syn_.domains, "only these domains (repeatable)");
      sub->add_option("--seed", syn_.seed, "seed")->capture_default_str();
      sub->add_option("--out", syn_.out, "output jsonl_v1 corpus")->required();
      sub->add_option("--manifest", syn_.manifest, "run manifest (default <out>.manifest.json)");
      sub->callback([this] { action_ = [this] { return cmd_synth(); }; });
    }
    // replay
    {
      auto* sub = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
      sub->add_option("manifest", replay_.manifest, "manifest file")->required()->check(CLI::ExistingFile);
      sub->callback([this] { action_ = [this] { return cmd_replay(); }; });
    }
  }

  // -- manifest helpers ------------------------------------------------------

  RunManifest begin_manifest(const std::string& command, std::uint64_t seed) const {
    RunManifest m;
    m.command = command;
    m.argv = args_;
    m.seed = seed;
    m.git_describe = git_describe();
    m.started_at = utc_timestamp();
    m.threads = env_threads();
    return m;
  }

  static std::string manifest_path(const std::string& explicit_path, const std::string& out) {
    if (!explicit_path.empty()) return explicit_path;
    if (!out.empty()) return out + ".manifest.json";
    return {};
  }

  static void finish_manifest(RunManifest& m, const std::string& path) {
    if (path.empty()) return;
    m.finished_at = utc_timestamp();
    m.write(path);
  }

  // -- commands --------------------------------------------------------------

  std::vector<std::string> tokenizer_lines(const std::string& path, const std::string& format) const {
    std::vector<std::string> lines;
    if (format == "text") {
      for (auto& ex : from_plain_text(path).examples) lines.push_back(std::move(ex.response));
    } else {
      for (const auto& ex : ingest(path, format).examples) {
        lines.push_back(linearize(ex.acts));
        lines.push_back(ex.response);
      }
    }
    return lines;
  }

  int cmd_tokenizer() {
    std::string format = tok_.format;
    if (format.empty()) format = guess_format(tok_.corpus, "") == "scgpt_txt" ? "text" : "jsonl_v1";
    auto m = begin_manifest("tokenizer", 0);
    m.config = {{"format", format}, {"vocab_size", tok_.size}};
    m.add_input(tok_.corpus);
    const auto mpath = manifest_path(tok_.manifest, tok_.out);
    if (!mpath.empty()) m.write(mpath);
    const Vocab v = train_bpe(tokenizer_lines(tok_.corpus, format), tok_.size);
    v.save(tok_.out);
    m.add_output(tok_.out);
    finish_manifest(m, mpath);
    io_.err << "vocab: " << v.size() << " tokens (" << v.merges().size() << " merges) -> " << tok_.out << '\n';
    return kOk;
  }

  int cmd_train(Stage stage, const std::string& name) {
    TrainConfig cfg = train_.config.empty() ? TrainConfig::defaults(stage) : load_train_config(train_.config, stage);
    cfg.stage = stage;
    if (train_.seed) cfg.seed = *train_.seed;
    if (train_.max_epochs) cfg.max_epochs = *train_.max_epochs;
    if (train_.max_steps) cfg.max_steps = *train_.max_steps;
    if (train_.lr) cfg.start_lr = *train_.lr;
    cfg.validate();

    auto m = begin_manifest(name, cfg.seed);
    m.add_input(train_.corpus);
    if (!train_.config.empty()) m.add_input(train_.config);

    Vocab vocab;
    ModelParams<float> init;
    if (!train_.ckpt.empty()) {
      m.add_input(train_.ckpt);
      init = load_checkpoint<float>(train_.ckpt);
      const std::string vp = train_.vocab.empty() ? vocab_path_for(train_.ckpt) : train_.vocab;
      vocab = Vocab::load(vp);
      m.add_input(vp);
      if (init.config.vocab_size != vocab.size())
        throw ConfigMismatch("checkpoint " + train_.ckpt + " has vocab_size " + std::to_string(init.config.vocab_size) +
                             " but vocab " + vp + " has " + std::to_string(vocab.size()) + " tokens");
    } else {
      if (train_.vocab.empty()) throw InvalidArgument("either --ckpt or --vocab is required");
      vocab = Vocab::load(train_.vocab);
      m.add_input(train_.vocab);
      ModelConfig mc;
      if (!train_.model.empty()) {
        mc = load_model_config(train_.model);
        m.add_input(train_.model);
        std::ifstream probe(train_.model);
        std::string all((std::istreambuf_iterator<char>(probe)), {});
        if (all.find("vocab_size") != std::string::npos && mc.vocab_size != vocab.size())
          throw ConfigMismatch("model config vocab_size " + std::to_string(mc.vocab_size) + " differs from vocab size " +
                               std::to_string(vocab.size()));
      }
      mc.vocab_size = vocab.size();
      mc.validate();
      init = ModelParams<float>::init(mc, cfg.seed);
    }
    m.config = {{"train", config_json(cfg.to_text())}, {"model", model_json(init.config)}};

    Corpus data;
    if (stage == Stage::plain) {
      data = from_plain_text(train_.corpus);
    } else {
      data = ingest(train_.corpus, guess_format(train_.corpus, train_.format));
      if (!train_.domain.empty()) data = data.filter_domain(train_.domain);
    }

    const auto mpath = manifest_path(train_.manifest, train_.out);
    m.write(mpath);
    const std::string metrics = train_.metrics.empty() ? train_.out + ".metrics.jsonl" : train_.metrics;
    std::ofstream mlog(metrics);
    if (!mlog) throw IoError("cannot write metrics log " + metrics);
    auto result = run_stage<float>(cfg, data, vocab, init, [&](const EpochRecord& r) {
      mlog << r.to_json_line() << '\n';
      mlog.flush();
      io_.err << name << ' ' << r.to_json_line() << '\n';
    });
    mlog.close();
    save_checkpoint(result.params, train_.out);
    vocab.save(vocab_path_for(train_.out));
    m.add_output(train_.out);
    m.add_output(vocab_path_for(train_.out));
    m.add_output(metrics);
    finish_manifest(m, mpath);
    io_.err << name << ": " << result.steps << " steps, best epoch " << result.best_epoch << " -> " << train_.out << '\n';
    return kOk;
  }

  int cmd_generate() {
    const auto& d = gen_.decode;
    d.validate();
    if (gen_.da.empty() && gen_.corpus.empty() && !gen_.interactive)
      throw InvalidArgument("one of --da, --corpus or --interactive is required");
    auto m = begin_manifest("generate", d.seed);
    m.config = {{"n_candidates", d.n_candidates}, {"max_new_tokens", d.max_new_tokens}, {"top_k", d.top_k},
                {"temperature", d.temperature}, {"seed", d.seed}};
    m.add_input(gen_.ckpt);
    m.add_input(vocab_path_for(gen_.ckpt));
    const auto params = load_checkpoint<float>(gen_.ckpt);
    const auto vocab = Vocab::load(vocab_path_for(gen_.ckpt));

    if (gen_.interactive) {
      std::string line;
      std::size_t i = 0;
      while (std::getline(io_.in, line)) {
        if (text::trim(line).empty()) continue;
        try {
          const auto acts = parse_linearized(line);
          DecodeConfig c = d;
          c.seed = d.seed + i++;
          const auto r = generate_reranked(params, vocab, acts, c);
          io_.out << dump_line(generation_record(acts, r.best)) << std::endl;
        } catch (const ParseError& e) {
          io_.out << "parse error at " << e.position() << " near '" << e.token() << "': " << e.what() << std::endl;
        } catch (const ContextOverflow& e) {
          io_.out << "error: " << e.what() << std::endl;
        }
      }
      return kOk;
    }

    std::vector<DialogActSet> acts;
    if (!gen_.da.empty()) {
      acts.push_back(parse_linearized(gen_.da));
    } else {
      m.add_input(gen_.corpus);
      auto c = ingest(gen_.corpus, guess_format(gen_.corpus, gen_.format));
      if (!gen_.domain.empty()) c = c.filter_domain(gen_.domain);
      for (auto& ex : c.examples) acts.push_back(std::move(ex.acts));
    }
    const auto mpath = manifest_path(gen_.manifest, gen_.out);
    if (!mpath.empty()) m.write(mpath);
    const auto results = generate_all(params, vocab, acts, d, env_threads());
    std::ofstream file;
    if (!gen_.out.empty()) {
      file.open(gen_.out);
      if (!file) throw IoError("cannot write " + gen_.out);
    }
    std::ostream& os = gen_.out.empty() ? io_.out : file;
    for (std::size_t i = 0; i < acts.size(); ++i) os << dump_line(generation_record(acts[i], results[i].best)) << '\n';
    if (!gen_.out.empty()) {
      file.close();
      m.add_output(gen_.out);
    }
    finish_manifest(m, mpath);
    return kOk;
  }

  static std::vector<std::string> read_generations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open generations " + path);
    std::vector<std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      try {
        out.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), lineno, "text");
      }
    }
    return out;
  }

  int cmd_evaluate() {
    auto m = begin_manifest("evaluate", 0);
    m.add_input(eval_.generations);
    m.add_input(eval_.test);
    auto test = ingest(eval_.test, guess_format(eval_.test, eval_.format));
    Corpus train{"empty", {}};
    if (!eval_.train.empty()) {
      m.add_input(eval_.train);
      train = ingest(eval_.train, guess_format(eval_.train, eval_.format));
    }
    std::string label = eval_.domain;
    if (!label.empty()) {
      const auto doms = test.domains();
      if (std::find(doms.begin(), doms.end(), label) != doms.end()) {
        test = test.filter_domain(label);
        train = train.filter_domain(label);
      }
    } else {
      const auto doms = test.domains();
      label = doms.size() == 1 ? doms[0] : "all";
    }
    const auto gens = read_generations(eval_.generations);
    const auto mpath = manifest_path(eval_.manifest, eval_.out);
    if (!mpath.empty()) m.write(mpath);
    const auto report = evaluate(label, gens, test, train);
    io_.err << report.to_text();
    if (eval_.out.empty()) {
      io_.out << report.to_json().dump() << '\n';
    } else {
      std::ofstream f(eval_.out);
      if (!f) throw IoError("cannot write " + eval_.out);
      f << report.to_json().dump(2) << '\n';
      f.close();
      m.add_output(eval_.out);
    }
    finish_manifest(m, mpath);
    return kOk;
  }

  int cmd_build_fewshot() {
    auto m = begin_manifest("build-fewshot", fs_.seed);
    m.add_input(fs_.corpus);
    auto src = ingest(fs_.corpus, guess_format(fs_.corpus, fs_.format));
    std::vector<std::string> domains = fs_.domains.empty() ? src.domains() : fs_.domains;
    auto k = default_k_per_domain(domains);
    for (const auto& spec : fs_.k) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw InvalidArgument("--k expects domain=count, got '" + spec + "'");
      try {
        k[spec.substr(0, eq)] = std::stoul(spec.substr(eq + 1));
      } catch (const std::logic_error&) {
        throw InvalidArgument("--k expects domain=count, got '" + spec + "'");
      }
    }
    nlohmann::json kj = nlohmann::json::object();
    for (const auto& [dom, n] : k) kj[dom] = n;
    m.config = {{"k", kj}, {"seed", fs_.seed}};
    const auto mpath = manifest_path(fs_.manifest, fs_.out);
    m.write(mpath);
    const auto split = build_fewshot(src, k, fs_.seed);
    const std::string tr = fs_.out + ".train.jsonl", te = fs_.out + ".test.jsonl";
    write_jsonl(split.train, tr);
    write_jsonl(split.test, te);
    m.add_output(tr);
    m.add_output(te);
    finish_manifest(m, mpath);
    io_.err << "train " << split.train.size() << ", test " << split.test.size() << '\n';
    return kOk;
  }

  int cmd_stats() {
    auto m = begin_manifest("stats", 0);
    m.add_input(st_.train);
    auto train = ingest(st_.train, guess_format(st_.train, st_.format));
    Corpus test{"empty", {}};
    if (!st_.test.empty()) {
      m.add_input(st_.test);
      test = ingest(st_.test, guess_format(st_.test, st_.format));
    }
    std::string label = st_.domain;
    if (!label.empty()) {
      const auto doms = train.domains();
      if (std::find(doms.begin(), doms.end(), label) != doms.end()) {
        train = train.filter_domain(label);
        test = test.filter_domain(label);
      }
    } else {
      const auto doms = train.domains();
      label = doms.size() == 1 ? doms[0] : "all";
    }
    const auto mpath = manifest_path(st_.manifest, st_.out);
    if (!mpath.empty()) m.write(mpath);
    const auto table = render_stats_table({{label, stats(train, test)}});
    io_.out << table;
    if (!st_.out.empty()) {
      std::ofstream f(st_.out);
      if (!f) throw IoError("cannot write " + st_.out);
      f << table;
      f.close();
      m.add_output(st_.out);
    }
    finish_manifest(m, mpath);
    return kOk;
  }

  int cmd_synth() {
    auto m = begin_manifest("synth", syn_.seed);
    m.config = {{"n", syn_.n}, {"seed", syn_.seed}, {"domains", syn_.domains}};
    std::vector<DomainGrammar> grammars;
    for (const auto& path : syn_.grammars) {
      m.add_input(path);
      for (auto& g : load_grammars(path)) grammars.push_back(std::move(g));
    }
    if (!syn_.domains.empty()) {
      std::vector<DomainGrammar> keep;
      for (const auto& d : syn_.domains) keep.push_back(find_grammar(grammars, d));
      grammars = std::move(keep);
    }
    const auto mpath = manifest_path(syn_.manifest, syn_.out);
    m.write(mpath);
    const auto corpus = generate(grammars, syn_.n, syn_.seed);
    write_jsonl(corpus, syn_.out);
    m.add_output(syn_.out);
    finish_manifest(m, mpath);
    io_.err << "wrote " << corpus.size() << " examples to " << syn_.out << '\n';
    return kOk;
  }

  int cmd_replay() {
    const auto recorded = RunManifest::read(replay_.manifest);
    if (recorded.outputs.empty()) throw InvalidArgument("manifest records no outputs to compare");
    io_.err << "replaying: scgpt";
    for (const auto& a : recorded.argv) io_.err << ' ' << a;
    io_.err << '\n';
    const int rc = Program(recorded.argv, io_).run();
    if (rc != kOk) return rc;
    bool same = true;
    for (const auto& o : recorded.outputs) {
      const auto now = hash_file(o.path);
      const bool eq = now == o.fnv1a64;
      same = same && eq;
      io_.out << (eq ? "identical " : "DIFFERENT ") << o.path << ' ' << now << '\n';
    }
    return same ? kOk : kInternal;
  }

  std::vector<std::string> args_;
  Io io_;
  std::function<int()> action_;

  struct {
    std::string corpus, format, out, manifest;
    std::size_t size = 512 + Vocab::kNumSpecials;
  } tok_;
  TrainOpts train_;
  struct {
    std::string ckpt, da, corpus, format, domain, out, manifest;
    bool interactive = false;
    DecodeConfig decode;
  } gen_;
  struct {
    std::string generations, test, train, format, domain, out, manifest;
  } eval_;
  struct {
    std::string corpus, format, out, manifest;
    std::vector<std::string> k, domains;
    std::uint64_t seed = 0;
  } fs_;
  struct {
    std::string train, test, format, domain, out, manifest;
  } st_;
  struct {
    std::vector<std::string> grammars, domains;
    std::size_t n = 100;
    std::uint64_t seed = 0;
    std::string out, manifest;
  } syn_;
  struct {
    std::string manifest;
  } replay_;
};

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               std::istream& in = std::cin) {
  return Program(args, Io{out, err, in}).run();
}

}  // namespace scgpt::cli
