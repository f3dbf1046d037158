#pragma once

// Training hyperparameters, corpus presets and the key=value config format.

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "irnn/corpus.hpp"
#include "irnn/math.hpp"
#include "irnn/model.hpp"

namespace irnn {

struct TrainConfig {
  std::string preset = "atis-like";
  // epochs
  std::size_t epochs_fwd_bwd = 30;
  std::size_t epochs_bidir = 8;
  std::size_t epochs_nnlm_word = 30;
  std::size_t epochs_nnlm_label = 20;
  // optimization
  double lr0 = 0.5;
  double momentum = 0.3;
  bool length_normalized_lr = true;
  double lambda_l2 = 0.01;
  double lambda_l2_bidir = 3e-4;
  double dropout_hidden = 0.5;
  double dropout_embed = 0.2;
  double max_grad_norm = 0.0;  // 0 disables clipping
  bool l2_embeddings = false;
  // contexts
  std::size_t d_w = 5;
  std::size_t d_l = 5;
  std::size_t d_c = 0;
  // sizes
  std::size_t embed_size = 200;
  std::size_t hidden_size = 200;
  std::size_t hidden_size_all = 256;  // when words, labels, classes and chars are all used
  std::size_t deep_first_size = 200;
  std::size_t char_embed_size = 30;
  std::size_t conv_size = 50;
  std::size_t nnlm_context = 4;
  std::size_t nnlm_hidden = 200;
  // inputs and data
  bool use_classes = false;
  bool use_chars = false;
  std::size_t min_count = 1;
  bool lowercase = true;
  std::string bio_scheme = "suffix";
  // ablations and switches
  double predicted_label_prob = 0.0;  // chance of feeding the model's own label as context in training
  bool label_ablation = false;
  bool gru_literal_input = false;
  bool freeze_embeddings_bidir = false;
  std::string select_by = "accuracy";  // dev model selection: accuracy | f1
  std::uint64_t seed = 1;

  std::size_t resolved_hidden() const { return use_classes && use_chars ? hidden_size_all : hidden_size; }

  BioScheme scheme() const {
    auto s = parse_bio_scheme(bio_scheme);
    if (!s) throw ConfigError("unknown bio_scheme '" + bio_scheme + "'");
    return *s;
  }

  void validate() const {
    auto in01 = [](double p, const char* name, bool allow_one) {
      if (!(p >= 0.0) || p > 1.0 || (!allow_one && p == 1.0)) {
        throw ConfigError(std::string(name) + " out of range: " + std::to_string(p));
      }
    };
    in01(dropout_hidden, "dropout_hidden", false);
    in01(dropout_embed, "dropout_embed", false);
    in01(momentum, "momentum", false);
    in01(predicted_label_prob, "predicted_label_prob", true);
    if (lr0 < 0.0) throw ConfigError("lr0 must be >= 0");
    if (lambda_l2 < 0.0 || lambda_l2_bidir < 0.0) throw ConfigError("L2 coefficients must be >= 0");
    if (d_l < 1) throw ConfigError("d_l must be >= 1");
    if (nnlm_context < 1) throw ConfigError("nnlm_context must be >= 1");
    if (embed_size == 0 || hidden_size == 0 || hidden_size_all == 0) throw ConfigError("layer sizes must be >= 1");
    if (select_by != "accuracy" && select_by != "f1") throw ConfigError("select_by must be accuracy or f1");
    scheme();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per-task bests: ATIS-like uses an 11-word window and conv 50, MEDIA-like a
// 7-word window, conv 80 and lower embedding dropout.
inline TrainConfig preset_config(const std::string& name) {
  TrainConfig c;
  if (name == "atis-like") {
    c.preset = name;
    c.d_w = 5;
    c.d_l = 5;
    c.conv_size = 50;
    c.dropout_embed = 0.2;
  } else if (name == "media-like") {
    c.preset = name;
    c.d_w = 3;
    c.d_l = 5;
    c.conv_size = 80;
    c.dropout_embed = 0.15;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected atis-like or media-like)");
  }
  return c;
}

using ConfigField =
    std::conditional_t<std::is_same_v<std::size_t, std::uint64_t>,
                       std::variant<std::size_t*, double*, bool*, std::string*>,
                       std::variant<std::size_t*, double*, bool*, std::string*, std::uint64_t*>>;

inline std::vector<std::pair<std::string, ConfigField>> config_fields(TrainConfig& c) {
  return {
      {"preset", &c.preset},
      {"epochs_fwd_bwd", &c.epochs_fwd_bwd},
      {"epochs_bidir", &c.epochs_bidir},
      {"epochs_nnlm_word", &c.epochs_nnlm_word},
      {"epochs_nnlm_label", &c.epochs_nnlm_label},
      {"lr0", &c.lr0},
      {"momentum", &c.momentum},
      {"length_normalized_lr", &c.length_normalized_lr},
      {"lambda_l2", &c.lambda_l2},
      {"lambda_l2_bidir", &c.lambda_l2_bidir},
      {"dropout_hidden", &c.dropout_hidden},
      {"dropout_embed", &c.dropout_embed},
      {"max_grad_norm", &c.max_grad_norm},
      {"l2_embeddings", &c.l2_embeddings},
      {"d_w", &c.d_w},
      {"d_l", &c.d_l},
      {"d_c", &c.d_c},
      {"embed_size", &c.embed_size},
      {"hidden_size", &c.hidden_size},
      {"hidden_size_all", &c.hidden_size_all},
      {"deep_first_size", &c.deep_first_size},
      {"char_embed_size", &c.char_embed_size},
      {"conv_size", &c.conv_size},
      {"nnlm_context", &c.nnlm_context},
      {"nnlm_hidden", &c.nnlm_hidden},
      {"use_classes", &c.use_classes},
      {"use_chars", &c.use_chars},
      {"min_count", &c.min_count},
      {"lowercase", &c.lowercase},
      {"bio_scheme", &c.bio_scheme},
      {"predicted_label_prob", &c.predicted_label_prob},
      {"label_ablation", &c.label_ablation},
      {"gru_literal_input", &c.gru_literal_input},
      {"freeze_embeddings_bidir", &c.freeze_embeddings_bidir},
      {"select_by", &c.select_by},
      {"seed", &c.seed},
  };
}

inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  for (auto& [name, field] : config_fields(c)) {
    if (name != key) continue;
    try {
      std::visit(
          [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            std::size_t used = 0;
            if constexpr (std::is_same_v<T, std::string>) {
              *p = value;
              used = value.size();
            } else if constexpr (std::is_same_v<T, bool>) {
              if (value == "1" || value == "true") *p = true;
              else if (value == "0" || value == "false") *p = false;
              else throw ConfigError("expected a boolean");
              used = value.size();
            } else if constexpr (std::is_same_v<T, double>) {
              *p = std::stod(value, &used);
            } else {
              if (!value.empty() && value[0] == '-') throw ConfigError("expected a non-negative integer");
              *p = T(std::stoull(value, &used));
            }
            if (used != value.size()) throw ConfigError("trailing characters");
          },
          field);
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + key + "': bad value '" + value + "' (" + e.what() + ")");
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == s.npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Flat key=value lines; '#' starts a comment. A "preset" key, if present,
// resets to that preset before the remaining keys apply.
inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::string, std::string>> kv;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != line.npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == line.npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    kv.emplace_back(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
  for (const auto& [k, v] : kv) {
    if (k == "preset") base = preset_config(v);
  }
  for (const auto& [k, v] : kv) {
    if (k != "preset") set_config_value(base, k, v);
  }
  return base;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

inline std::string config_to_text(const TrainConfig& cfg) {
  TrainConfig c = cfg;
  std::ostringstream o;
  o.precision(17);
  for (auto& [name, field] : config_fields(c)) {
    o << name << '=';
    std::visit([&](auto* p) { o << *p; }, field);
    o << '\n';
  }
  return o.str();
}

inline ModelConfig make_model_config(const TrainConfig& tc, const Vocabulary& vocab, Variant variant,
                                     Direction direction) {
  ModelConfig m;
  m.variant = variant;
  m.direction = direction;
  m.window = {tc.d_w, tc.d_l, tc.d_c};
  m.word_vocab = vocab.words.size();
  m.class_vocab = vocab.classes.size();
  m.char_vocab = vocab.chars.size();
  m.num_labels = vocab.num_labels();
  m.embed_dim = tc.embed_size;
  m.char_dim = tc.char_embed_size;
  m.conv_size = tc.conv_size;
  m.hidden = tc.resolved_hidden();
  m.deep_first = tc.deep_first_size;
  m.use_classes = tc.use_classes;
  m.use_chars = tc.use_chars;
  m.gru_literal_input = tc.gru_literal_input;
  m.label_ablation = tc.label_ablation;
  return m;
}

}  // namespace irnn
