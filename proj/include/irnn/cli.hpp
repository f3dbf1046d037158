#pragma once

// The irnn command-line tool: generate, pretrain, train, tag, eval.
// run_cli() is the whole program; main() only forwards argv.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "irnn/irnn.hpp"

namespace irnn {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kConfigEnvVar = "IRNN_CONFIG";

namespace cli {

// exit codes
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kFailure = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

inline std::string file_digest(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

inline std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return o.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

// Preset, then the config file (--config, else $IRNN_CONFIG), then --set
// overrides, then explicit flags.
struct ConfigSources {
  std::string preset;
  std::string config_path;
  std::vector<std::string> overrides;
};

inline TrainConfig resolve_config(const ConfigSources& src) {
  TrainConfig cfg = src.preset.empty() ? TrainConfig{} : preset_config(src.preset);
  std::string path = src.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
  }
  if (!path.empty()) cfg = load_config_file(path, cfg);
  for (const auto& kv : src.overrides) {
    auto eq = kv.find('=');
    if (eq == kv.npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
  }
  return cfg;
}

inline void add_config_options(CLI::App* cmd, ConfigSources& src) {
  cmd->add_option("--config", src.config_path, "key=value config file (default: $IRNN_CONFIG)");
  cmd->add_option("--preset", src.preset, "atis-like or media-like");
  cmd->add_option("--set", src.overrides, "override one config key (key=value), repeatable");
}

// Everything needed to rerun a training command. `digest` covers all fields
// except the timestamp.
inline nlohmann::json run_manifest(const std::string& command, const TrainConfig& cfg,
                                   const std::vector<std::pair<std::string, std::string>>& inputs) {
  nlohmann::json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["seed"] = cfg.seed;
  m["config"] = config_to_text(cfg);
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [role, path] : inputs) {
    if (path.empty()) continue;
    in[role] = {{"path", path}, {"fnv1a64", file_digest(path)}};
  }
  m["inputs"] = in;
  m["digest"] = hex64(fnv1a64(m.dump()));
  m["started_at"] = utc_now();
  return m;
}

inline nlohmann::json log_json(const std::vector<EpochLog>& log) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : log) {
    a.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"dev_acc", e.dev_acc},
                 {"dev_f1", e.dev_f1}});
  }
  return a;
}

class LogSink {
 public:
  LogSink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigError("cannot write log '" + path + "'");
      out_ = &file_;
    }
  }
  void operator()(const EpochLog& e) { *out_ << format_log_line(e) << std::endl; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out_dir;
  std::size_t size = 2000, dev_size = 200, test_size = 200;
  std::uint64_t seed = 1;
  std::string grammar = "flights";
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.size < 1) throw UsageError("--size must be >= 1");
  Grammar g = parse_grammar(a.grammar == "flights" ? std::string(builtin_flights_grammar()) : read_file(a.grammar));
  Rng rng(a.seed);
  auto splits = generate_synthetic_corpus(g, a.size, a.dev_size, a.test_size, rng);
  write_synthetic_corpus(splits, a.out_dir);
  out << "wrote " << a.size << '/' << a.dev_size << '/' << a.test_size << " sentences to " << a.out_dir << '\n';
  return kOk;
}

struct PretrainArgs {
  std::string train, target = "words", out;
  std::size_t epochs = 0;  // 0: per-target default
  ConfigSources src;
};

inline int cmd_pretrain(const PretrainArgs& a, std::ostream& out) {
  TrainConfig cfg = resolve_config(a.src);
  cfg.validate();
  EmbeddingSection section;
  if (a.target == "words") section = EmbeddingSection::Words;
  else if (a.target == "labels") section = EmbeddingSection::Labels;
  else throw UsageError("--target must be words or labels");
  ColumnCorpus train = load_column_file(a.train);
  Vocabulary vocab = build_vocabulary(train.sentences, cfg.min_count, cfg.lowercase);
  NnlmConfig nc = nnlm_config_from(cfg, section);
  if (a.epochs > 0) nc.epochs = a.epochs;
  NnlmResult r = train_nnlm(nnlm_corpus(train, vocab, section), nc);
  save_embeddings(a.out, vocab, section, r.params.emb.table);
  out << std::setprecision(6) << "nnlm " << a.target << ": loss " << r.initial_loss << " -> "
      << r.epoch_loss.back() << " after " << nc.epochs << " epochs; wrote " << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  std::string variant = "irnn", direction = "fwd";
  std::string train, dev, word_emb, label_emb, out, fwd_model, bwd_model, log, summary;
  std::optional<std::uint64_t> seed;
  ConfigSources src;
};

inline ModelParams initial_model(const TrainConfig& cfg, const Vocabulary& vocab, Variant v, Direction d) {
  Rng rng(cfg.seed);
  return ModelParams::init(make_model_config(cfg, vocab, v, d), rng);
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = resolve_config(a.src);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  auto variant = parse_variant(a.variant);
  if (!variant) throw UsageError("--variant must be irnn, irnn-gru or irnn-deep");
  const bool bidir = a.direction == "bidir";
  if (!bidir && a.direction != "fwd" && a.direction != "bwd") throw UsageError("--direction must be fwd, bwd or bidir");
  if (bidir && (a.fwd_model.empty() || a.bwd_model.empty())) {
    throw UsageError("--direction bidir requires --fwd-model and --bwd-model");
  }

  nlohmann::json manifest = run_manifest("train " + a.variant + " " + a.direction, cfg,
                                         {{"train", a.train},
                                          {"dev", a.dev},
                                          {"word_emb", a.word_emb},
                                          {"label_emb", a.label_emb},
                                          {"fwd_model", a.fwd_model},
                                          {"bwd_model", a.bwd_model}});
  write_text(a.out + ".manifest.json", manifest.dump(2) + "\n");

  ColumnCorpus train_c = load_column_file(a.train);
  ColumnCorpus dev_c = a.dev.empty() ? ColumnCorpus{} : load_column_file(a.dev);
  LogSink sink(a.log, out);
  EpochCallback cb = [&](const EpochLog& e) { sink(e); };
  TaggerBundle bundle;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;

  if (bidir) {
    TaggerBundle f = load_model(a.fwd_model), b = load_model(a.bwd_model, &f.vocab);
    if (f.bidirectional() || b.bidirectional()) throw UsageError("component models must be single-direction");
    bundle.vocab = f.vocab;
    const bool classes = f.models[0].config.use_classes;
    auto tr = encode_all(train_c, bundle.vocab, LabelPolicy::Strict, classes);
    auto dv = encode_all(dev_c, bundle.vocab, LabelPolicy::Lenient, classes);
    BidirResult r = train_bidirectional(f.models[0], b.models[0], tr, dv, bundle.vocab, cfg, cb);
    bundle.models = {r.fwd, r.bwd};
    log = r.log;
    best_epoch = r.best_epoch;
  } else {
    if (cfg.use_classes && !train_c.has_classes()) throw DataError("use_classes is set but the training file has no class column");
    const Direction dir = a.direction == "fwd" ? Direction::Forward : Direction::Backward;
    bundle.vocab = build_vocabulary(train_c.sentences, cfg.min_count, cfg.lowercase);
    auto tr = encode_all(train_c, bundle.vocab, LabelPolicy::Strict, cfg.use_classes);
    auto dv = encode_all(dev_c, bundle.vocab, LabelPolicy::Lenient, cfg.use_classes);
    std::optional<Matrix> wi, li;
    if (!a.word_emb.empty() || !a.label_emb.empty()) {
      ModelParams init = initial_model(cfg, bundle.vocab, *variant, dir);
      if (!a.word_emb.empty()) {
        wi = init.words.table;
        auto n = load_external_embeddings(a.word_emb, bundle.vocab, EmbeddingSection::Words, *wi);
        err << "word embeddings: " << n << " rows from " << a.word_emb << '\n';
      }
      if (!a.label_emb.empty()) {
        li = init.labels.table;
        auto n = load_external_embeddings(a.label_emb, bundle.vocab, EmbeddingSection::Labels, *li);
        err << "label embeddings: " << n << " rows from " << a.label_emb << '\n';
      }
    }
    TrainResult r = train_tagger(tr, dv, bundle.vocab, cfg, *variant, dir, wi ? &*wi : nullptr,
                                 li ? &*li : nullptr, cb);
    bundle.models = {r.model};
    log = r.log;
    best_epoch = r.best_epoch;
  }

  save_model(bundle, a.out);
  write_text(a.out + ".vocab", bundle.vocab.serialize());
  nlohmann::json summary;
  summary["model"] = a.out;
  summary["variant"] = a.variant;
  summary["direction"] = a.direction;
  summary["manifest_digest"] = manifest["digest"];
  summary["vocab_hash"] = hex64(bundle.vocab.hash());
  summary["parameters"] = bundle.models[0].parameter_count() * bundle.models.size();
  summary["best_epoch"] = best_epoch;
  summary["best_dev_acc"] = log[best_epoch].dev_acc;
  summary["best_dev_f1"] = log[best_epoch].dev_f1;
  summary["epochs"] = log_json(log);
  write_text(a.summary.empty() ? a.out + ".summary.json" : a.summary, summary.dump(2) + "\n");
  err << "saved " << a.out << " (best epoch " << best_epoch << ")\n";
  return kOk;
}

struct TagArgs {
  std::string model, input, output, vocab;
};

inline int cmd_tag(const TagArgs& a, std::ostream& out) {
  std::optional<Vocabulary> expected;
  if (!a.vocab.empty()) expected = Vocabulary::deserialize(read_file(a.vocab));
  TaggerBundle b = load_model(a.model, expected ? &*expected : nullptr);
  ColumnCorpus c = load_column_file(a.input);
  const bool classes = b.models[0].config.use_classes;
  if (classes && !c.has_classes()) throw DataError("model uses word classes but '" + a.input + "' has no class column");
  for (auto& sent : c.sentences) {
    EncodedSequence seq = encode(sent, b.vocab, LabelPolicy::Lenient, classes);
    auto labels = decode_labels(tag_with_bundle(b, seq).labels, b.vocab);
    for (std::size_t i = 0; i < sent.size(); ++i) sent[i].label = labels[i];
  }
  if (a.output.empty() || a.output == "-") {
    write_column_stream(out, c);
  } else {
    write_column_file(a.output, c);
  }
  return kOk;
}

struct EvalArgs {
  std::string gold, pred, kv, scheme = "suffix";
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto scheme = parse_bio_scheme(a.scheme);
  if (!scheme) throw UsageError("--scheme must be suffix, prefix or plain");
  ColumnCorpus g = load_column_file(a.gold), p = load_column_file(a.pred);
  LabelSeqs gl = label_columns(g), pl = label_columns(p);
  check_parallel(gl, pl);
  for (std::size_t i = 0; i < g.sentences.size(); ++i) {
    for (std::size_t j = 0; j < g.sentences[i].size(); ++j) {
      if (g.sentences[i][j].word != p.sentences[i][j].word) {
        throw DataError("eval: sentence " + std::to_string(i + 1) + " token " + std::to_string(j + 1) +
                        ": words differ ('" + g.sentences[i][j].word + "' vs '" + p.sentences[i][j].word + "')");
      }
    }
  }
  EvalReport r = evaluate(gl, pl, *scheme);
  out << format_report_text(r);
  if (!a.kv.empty()) write_text(a.kv, format_report_kv(r));
  return kOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Label-embedding recurrent taggers for slot filling"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "write a synthetic slot-filling corpus (train/dev/test)");
  gen->add_option("--out-dir", ga.out_dir, "output directory")->required();
  gen->add_option("--size", ga.size, "training sentences");
  gen->add_option("--dev-size", ga.dev_size, "dev sentences");
  gen->add_option("--test-size", ga.test_size, "test sentences");
  gen->add_option("--seed", ga.seed, "random seed");
  gen->add_option("--grammar", ga.grammar, "'flights' or a grammar file");

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "train word or label embeddings with a neural language model");
  pre->add_option("--train", pa.train, "training corpus")->required();
  pre->add_option("--target", pa.target, "words or labels");
  pre->add_option("--epochs", pa.epochs, "epochs (default: epochs_nnlm_word / epochs_nnlm_label)");
  pre->add_option("--out", pa.out, "embedding file to write")->required();
  add_config_options(pre, pa.src);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a tagger");
  tr->add_option("--variant", ta.variant, "irnn, irnn-gru or irnn-deep");
  tr->add_option("--direction", ta.direction, "fwd, bwd or bidir");
  tr->add_option("--train", ta.train, "training corpus")->required();
  tr->add_option("--dev", ta.dev, "development corpus (model selection)");
  tr->add_option("--word-emb", ta.word_emb, "pretrained word embeddings");
  tr->add_option("--label-emb", ta.label_emb, "pretrained label embeddings");
  tr->add_option("--fwd-model", ta.fwd_model, "forward model (bidir)");
  tr->add_option("--bwd-model", ta.bwd_model, "backward model (bidir)");
  tr->add_option("--out", ta.out, "model file to write")->required();
  tr->add_option("--log", ta.log, "per-epoch log file (default: stdout)");
  tr->add_option("--summary", ta.summary, "JSON summary (default: <out>.summary.json)");
  tr->add_option("--seed", ta.seed, "random seed");
  add_config_options(tr, ta.src);

  TagArgs tga;
  auto* tag = app.add_subcommand("tag", "label a column file");
  tag->add_option("--model", tga.model, "model file")->required();
  tag->add_option("--input", tga.input, "column file")->required();
  tag->add_option("--output", tga.output, "output file (default: stdout)");
  tag->add_option("--vocab", tga.vocab, "check the model against this vocabulary file");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score predicted labels against gold");
  ev->add_option("gold", ea.gold, "gold column file")->required();
  ev->add_option("pred", ea.pred, "predicted column file")->required();
  ev->add_option("--kv", ea.kv, "also write key=value metrics here");
  ev->add_option("--scheme", ea.scheme, "suffix (X-B), prefix (B-X) or plain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_generate(ga, out);
    if (*pre) return cmd_pretrain(pa, out);
    if (*tr) return cmd_train(ta, out, err);
    if (*tag) return cmd_tag(tga, out);
    if (*ev) return cmd_eval(ea, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.help() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace irnn
