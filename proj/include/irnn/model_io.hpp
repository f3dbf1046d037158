#pragma once

// Binary model files.
//
//   magic      8 bytes  "IRNNMDL\0"
//   version    u32      kModelFormatVersion
//   variant    u8       Variant
//   direction  u8       0 forward, 1 backward, 2 bidirectional (forward + backward)
//   vocab hash u64      FNV-1a 64 of the serialized vocabulary
//   config     u32 length + key=value text
//   vocabulary u32 length + serialized vocabulary text
//   shapes     u32 count, then per tensor: u32 name length, name, u64 rows, u64 cols
//   payload    little-endian IEEE-754 doubles, tensors in shape-table order
//
// Integers are little-endian.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "irnn/corpus.hpp"
#include "irnn/model.hpp"

namespace irnn {

inline constexpr char kModelMagic[8] = {'I', 'R', 'N', 'N', 'M', 'D', 'L', '\0'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A saved tagger: one model, or a forward/backward pair.
struct TaggerBundle {
  Vocabulary vocab;
  std::vector<ModelParams> models;

  bool bidirectional() const { return models.size() == 2; }
};

inline std::string model_config_text(const ModelConfig& c) {
  std::ostringstream o;
  o << "d_w=" << c.window.d_w << "\nd_l=" << c.window.d_l << "\nd_c=" << c.window.d_c
    << "\nword_vocab=" << c.word_vocab << "\nclass_vocab=" << c.class_vocab << "\nchar_vocab=" << c.char_vocab
    << "\nnum_labels=" << c.num_labels << "\nembed_dim=" << c.embed_dim << "\nchar_dim=" << c.char_dim
    << "\nconv_size=" << c.conv_size << "\nhidden=" << c.hidden << "\ndeep_first=" << c.deep_first
    << "\nuse_classes=" << c.use_classes << "\nuse_chars=" << c.use_chars
    << "\ngru_literal_input=" << c.gru_literal_input << "\nlabel_ablation=" << c.label_ablation
    << "\ndeep_top_activation=" << int(c.deep_top_activation) << '\n';
  return o.str();
}

inline ModelConfig parse_model_config_text(const std::string& text, Variant variant) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == line.npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const char* key) -> std::size_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw LoadError(std::string("model config: missing ") + key);
    return std::stoul(it->second);
  };
  ModelConfig c;
  c.variant = variant;
  c.window = {num("d_w"), num("d_l"), num("d_c")};
  c.word_vocab = num("word_vocab");
  c.class_vocab = num("class_vocab");
  c.char_vocab = num("char_vocab");
  c.num_labels = num("num_labels");
  c.embed_dim = num("embed_dim");
  c.char_dim = num("char_dim");
  c.conv_size = num("conv_size");
  c.hidden = num("hidden");
  c.deep_first = num("deep_first");
  c.use_classes = num("use_classes") != 0;
  c.use_chars = num("use_chars") != 0;
  c.gru_literal_input = num("gru_literal_input") != 0;
  c.label_ablation = num("label_ablation") != 0;
  c.deep_top_activation = Activation(num("deep_top_activation"));
  return c;
}

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }

inline void put_str(std::string& out, const std::string& s) {
  put_le(out, std::uint32_t(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_str() {
    auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LoadError("model file truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_bundle(const TaggerBundle& b) {
  if (b.models.empty() || b.models.size() > 2) throw ConfigError("save_model: expected one or two models");
  if (b.bidirectional()) check_bidirectional_pair(b.models[0], b.models[1]);
  const ModelConfig& cfg = b.models[0].config;
  std::string out(kModelMagic, sizeof(kModelMagic));
  detail::put_le(out, kModelFormatVersion);
  out.push_back(char(cfg.variant));
  out.push_back(char(b.bidirectional() ? 2 : int(cfg.direction)));
  const std::string vocab_text = b.vocab.serialize();
  detail::put_le(out, fnv1a64(vocab_text));
  detail::put_str(out, model_config_text(cfg));
  detail::put_str(out, vocab_text);
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (std::size_t k = 0; k < b.models.size(); ++k) {
    std::string prefix = b.bidirectional() ? (k == 0 ? "fwd." : "bwd.") : "";
    b.models[k].for_each_param(
        [&](const std::string& name, const Matrix& m, ParamKind) { tensors.emplace_back(prefix + name, &m); });
  }
  detail::put_le(out, std::uint32_t(tensors.size()));
  for (const auto& [name, m] : tensors) {
    detail::put_str(out, name);
    detail::put_le(out, std::uint64_t(m->rows()));
    detail::put_le(out, std::uint64_t(m->cols()));
  }
  for (const auto& [_, m] : tensors)
    for (double v : m->flat()) detail::put_f64(out, v);
  return out;
}

// Throws LoadError on any malformed, truncated or mismatched input; nothing
// partial is returned.
inline TaggerBundle deserialize_bundle(std::string bytes, const Vocabulary* expected_vocab = nullptr) {
  detail::Reader r(std::move(bytes));
  if (r.get_raw(sizeof(kModelMagic)) != std::string(kModelMagic, sizeof(kModelMagic))) {
    throw LoadError("not a model file (bad magic)");
  }
  auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) throw LoadError("unsupported model format version " + std::to_string(version));
  auto variant_byte = r.get<std::uint8_t>();
  auto dir_byte = r.get<std::uint8_t>();
  if (variant_byte > 2) throw LoadError("bad variant tag");
  if (dir_byte > 2) throw LoadError("bad direction tag");
  auto vocab_hash = r.get<std::uint64_t>();
  std::string cfg_text = r.get_str();
  std::string vocab_text = r.get_str();
  if (fnv1a64(vocab_text) != vocab_hash) throw LoadError("vocabulary hash mismatch inside model file");
  if (expected_vocab && expected_vocab->hash() != vocab_hash) {
    throw LoadError("vocabulary hash mismatch: model was trained with a different vocabulary");
  }
  TaggerBundle b;
  try {
    b.vocab = Vocabulary::deserialize(vocab_text);
  } catch (const DataError& e) {
    throw LoadError(e.what());
  }
  ModelConfig cfg;
  try {
    cfg = parse_model_config_text(cfg_text, Variant(variant_byte));
    cfg.validate();
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("model config: ") + e.what());
  }
  std::vector<Direction> dirs;
  if (dir_byte == 2) dirs = {Direction::Forward, Direction::Backward};
  else dirs = {Direction(dir_byte)};

  // Tensors are allocated from the config; the shape table must agree exactly.
  Rng dummy(0);
  for (Direction d : dirs) {
    ModelConfig c = cfg;
    c.direction = d;
    b.models.push_back(ModelParams::init(c, dummy).zeros_like());
  }
  std::vector<std::pair<std::string, Matrix*>> tensors;
  for (std::size_t k = 0; k < b.models.size(); ++k) {
    std::string prefix = dirs.size() == 2 ? (k == 0 ? "fwd." : "bwd.") : "";
    b.models[k].for_each_param(
        [&](const std::string& name, Matrix& m, ParamKind) { tensors.emplace_back(prefix + name, &m); });
  }
  auto count = r.get<std::uint32_t>();
  if (count != tensors.size()) throw LoadError("shape table does not match the model configuration");
  for (auto& [name, m] : tensors) {
    std::string got = r.get_str();
    auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (got != name || rows != m->rows() || cols != m->cols()) {
      throw LoadError("shape table mismatch at tensor '" + got + "'");
    }
  }
  for (auto& [_, m] : tensors)
    for (double& v : m->flat()) v = r.get_f64();
  if (!r.done()) throw LoadError("trailing bytes after model payload");
  return b;
}

inline void save_model(const TaggerBundle& b, const std::string& path) {
  std::string bytes = serialize_bundle(b);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline TaggerBundle load_model(const std::string& path, const Vocabulary* expected_vocab = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_bundle(ss.str(), expected_vocab);
}

// Encodes with the bundle's vocabulary and tags with one model or the pair.
inline TaggerOutput tag_with_bundle(const TaggerBundle& b, const EncodedSequence& seq) {
  if (b.bidirectional()) return tag_bidirectional(b.models[0], b.models[1], seq);
  return tag_greedy(b.models[0], seq);
}

}  // namespace irnn
