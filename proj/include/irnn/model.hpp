#pragma once

// Tagger variants (I-RNN, I-RNN with GRU hidden layer, deep I-RNN), greedy
// decoding, full-sequence backpropagation and bidirectional combination.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irnn/corpus.hpp"
#include "irnn/layers.hpp"
#include "irnn/math.hpp"

namespace irnn {

enum class Variant : std::uint8_t { Irnn = 0, IrnnGru = 1, IrnnDeep = 2 };
enum class Direction : std::uint8_t { Forward = 0, Backward = 1 };
enum class Activation : std::uint8_t { Relu = 0, Linear = 1 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Irnn: return "irnn";
    case Variant::IrnnGru: return "irnn-gru";
    case Variant::IrnnDeep: return "irnn-deep";
  }
  return "irnn";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "irnn") return Variant::Irnn;
  if (s == "irnn-gru") return Variant::IrnnGru;
  if (s == "irnn-deep") return Variant::IrnnDeep;
  return std::nullopt;
}

struct WindowSpec {
  std::size_t d_w = 5;  // word half-window
  std::size_t d_l = 5;  // label context length
  std::size_t d_c = 0;  // character half-window

  void validate() const {
    if (d_l < 1) throw ConfigError("window: d_l must be >= 1");
  }
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct ModelConfig {
  Variant variant = Variant::Irnn;
  Direction direction = Direction::Forward;
  WindowSpec window;
  std::size_t word_vocab = 0;
  std::size_t class_vocab = 0;
  std::size_t char_vocab = 0;
  std::size_t num_labels = 0;   // output size; label table has one more row (BOL)
  std::size_t embed_dim = 200;  // words, labels and classes
  std::size_t char_dim = 30;
  std::size_t conv_size = 50;
  std::size_t hidden = 200;       // single hidden layer, or the deep second level
  std::size_t deep_first = 200;   // each deep first-level layer
  bool use_classes = false;
  bool use_chars = false;
  bool gru_literal_input = false;  // GRU input is the word window only
  bool label_ablation = false;     // label context pinned to BOL
  Activation deep_top_activation = Activation::Relu;

  int bol() const { return int(num_labels); }
  std::size_t word_window_dim() const { return (2 * window.d_w + 1) * embed_dim; }
  std::size_t label_window_dim() const { return window.d_l * embed_dim; }
  std::size_t class_window_dim() const { return use_classes ? word_window_dim() : 0; }
  std::size_t char_feature_dim() const { return use_chars ? conv_size : 0; }
  std::size_t concat_dim() const {
    if (variant == Variant::IrnnGru && gru_literal_input) return word_window_dim();
    return word_window_dim() + label_window_dim() + class_window_dim() + char_feature_dim();
  }
  std::size_t deep_groups() const { return 2 + (use_classes ? 1 : 0) + (use_chars ? 1 : 0); }

  void validate() const {
    window.validate();
    if (word_vocab == 0 || num_labels == 0) throw ConfigError("model: empty word or label vocabulary");
    if (embed_dim == 0 || hidden == 0) throw ConfigError("model: zero layer size");
    if (use_classes && class_vocab == 0) throw ConfigError("model: classes enabled without a class vocabulary");
    if (use_chars && (char_vocab == 0 || char_dim == 0 || conv_size == 0)) {
      throw ConfigError("model: characters enabled with zero character sizes");
    }
    if (variant == Variant::IrnnDeep && deep_first == 0) throw ConfigError("model: zero deep first-level size");
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  ModelConfig config;
  Embedding words, labels, classes, chars;
  Dense conv;
  Dense hidden;  // Irnn
  Gru gru;       // IrnnGru
  Dense deep_words, deep_labels, deep_classes, deep_chars, deep_top;  // IrnnDeep
  Dense output;

  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams m;
    m.config = cfg;
    m.words.table = xavier_init(cfg.word_vocab, cfg.embed_dim, rng);
    m.labels.table = xavier_init(cfg.num_labels + 1, cfg.embed_dim, rng);
    if (cfg.use_classes) m.classes.table = xavier_init(cfg.class_vocab, cfg.embed_dim, rng);
    if (cfg.use_chars) {
      m.chars.table = xavier_init(cfg.char_vocab, cfg.char_dim, rng);
      m.conv = Dense::xavier(cfg.conv_size, (2 * cfg.window.d_c + 1) * cfg.char_dim, rng);
    }
    switch (cfg.variant) {
      case Variant::Irnn:
        m.hidden = Dense::xavier(cfg.hidden, cfg.concat_dim(), rng);
        break;
      case Variant::IrnnGru:
        m.gru = Gru::xavier(cfg.hidden, cfg.concat_dim(), rng);
        break;
      case Variant::IrnnDeep:
        m.deep_words = Dense::xavier(cfg.deep_first, cfg.word_window_dim(), rng);
        m.deep_labels = Dense::xavier(cfg.deep_first, cfg.label_window_dim(), rng);
        if (cfg.use_classes) m.deep_classes = Dense::xavier(cfg.deep_first, cfg.class_window_dim(), rng);
        if (cfg.use_chars) m.deep_chars = Dense::xavier(cfg.deep_first, cfg.char_feature_dim(), rng);
        m.deep_top = Dense::xavier(cfg.hidden, cfg.deep_groups() * cfg.deep_first, rng);
        break;
    }
    m.output = Dense::xavier(cfg.num_labels, cfg.hidden, rng);
    return m;
  }

  // Visits every allocated tensor in declaration order: f(name, matrix, kind).
  template <class F>
  void for_each_param(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    visit(*this, f);
  }

  ModelParams zeros_like() const {
    ModelParams g = *this;
    g.for_each_param([](const std::string&, Matrix& m, ParamKind) { m.set_zero(); });
    return g;
  }

  void clear_grads() {
    for (Embedding* e : {&words, &labels, &classes, &chars}) {
      if (e->touched.size() * 4 < e->entries()) {
        e->clear_touched();
      } else {
        e->table.set_zero();
        e->touched.clear();
      }
    }
    for_each_param([](const std::string&, Matrix& m, ParamKind k) {
      if (k != ParamKind::Embedding) m.set_zero();
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_param([&](const std::string&, const Matrix& m, ParamKind) { n += m.size(); });
    return n;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    auto emb = [&](const char* name, auto& e) {
      if (!e.table.empty()) f(std::string(name), e.table, ParamKind::Embedding);
    };
    auto dense = [&](const std::string& name, auto& d) {
      if (d.w.empty()) return;
      f(name + ".w", d.w, ParamKind::Weight);
      f(name + ".b", d.b, ParamKind::Bias);
    };
    emb("words", self.words);
    emb("labels", self.labels);
    emb("classes", self.classes);
    emb("chars", self.chars);
    dense("conv", self.conv);
    dense("hidden", self.hidden);
    if (!self.gru.empty()) {
      dense("gru.uz", self.gru.uz);
      f(std::string("gru.wz"), self.gru.wz, ParamKind::Weight);
      dense("gru.ur", self.gru.ur);
      f(std::string("gru.wr"), self.gru.wr, ParamKind::Weight);
      dense("gru.uh", self.gru.uh);
      f(std::string("gru.wh"), self.gru.wh, ParamKind::Weight);
    }
    dense("deep.words", self.deep_words);
    dense("deep.labels", self.deep_labels);
    dense("deep.classes", self.deep_classes);
    dense("deep.chars", self.deep_chars);
    dense("deep.top", self.deep_top);
    dense("output", self.output);
  }
};

struct TaggerOutput {
  std::vector<int> labels;
  std::vector<Vec> dists;
};

// Dropout during training. Rates are drop probabilities; inactive when rng is null.
struct DropoutSpec {
  double embed = 0.0;
  double hidden = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && (embed > 0.0 || hidden > 0.0); }
};

struct StepCache {
  std::vector<int> word_ids, label_ids, class_ids;
  CharConvCache chars;
  Vec in_words, in_labels, in_classes, in_chars;  // as seen by the hidden layer(s)
  Vec mask_words, mask_labels, mask_classes, mask_chars;
  Vec x;  // concatenated input (Irnn, IrnnGru)
  ReluCache hidden;
  GruCache gru;
  ReluCache deep_words, deep_labels, deep_classes, deep_chars, deep_top;
  Vec top_in;
  Vec hidden_mask;
  Vec h_out;  // hidden representation fed to the output layer
  Vec probs;

  // Recurrent state for the next step (GRU only).
  const Vec& state() const { return gru.h; }
};

inline void check_sequence(const ModelParams& m, const EncodedSequence& seq) {
  const auto& c = m.config;
  if (seq.size() == 0) throw DataError("empty sequence");
  if (c.use_classes && seq.classes.size() != seq.size()) {
    throw ConfigError("model uses classes but the sequence has none");
  }
  if (c.use_chars && seq.chars.size() != seq.size()) throw ConfigError("model uses characters but the sequence has none");
  for (int w : seq.words) {
    if (w < 0 || std::size_t(w) >= c.word_vocab) throw ConfigError("word index outside the model vocabulary");
  }
  if (c.use_classes) {
    for (int k : seq.classes) {
      if (k < 0 || std::size_t(k) >= c.class_vocab) throw ConfigError("class index outside the model vocabulary");
    }
  }
  if (c.use_chars) {
    for (const auto& w : seq.chars) {
      for (int ch : w) {
        if (ch < 0 || std::size_t(ch) >= c.char_vocab) throw ConfigError("character index outside the model vocabulary");
      }
    }
  }
}

// Sequence in processing order: reversed for backward models.
inline EncodedSequence oriented(const EncodedSequence& seq, Direction dir) {
  if (dir == Direction::Forward) return seq;
  EncodedSequence r = seq;
  std::reverse(r.words.begin(), r.words.end());
  std::reverse(r.classes.begin(), r.classes.end());
  std::reverse(r.chars.begin(), r.chars.end());
  std::reverse(r.labels.begin(), r.labels.end());
  return r;
}

namespace detail {

inline void layer_forward(const Dense& layer, std::span<const double> x, ReluCache& cache, Activation act) {
  if (act == Activation::Relu) {
    relu_hidden_forward(layer, x, cache);
    return;
  }
  cache.pre.assign(layer.out_dim(), 0.0);
  layer.forward(x, cache.pre);
  cache.h = cache.pre;
}

inline void layer_backward(const Dense& layer, std::span<const double> x, const ReluCache& cache,
                           std::span<const double> dh, Dense& grad, std::span<double> dx, Activation act) {
  if (act == Activation::Relu) {
    relu_hidden_backward(layer, x, cache, dh, grad, dx);
    return;
  }
  layer.backward(x, dh, grad, dx);
}

inline void apply_dropout(Vec& v, Vec& mask, double rate, Rng* rng) {
  mask.clear();
  if (rng == nullptr || rate <= 0.0) return;
  mask = dropout_mask(v.size(), 1.0 - rate, *rng);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= mask[i];
}

inline void apply_mask(std::span<double> g, const Vec& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
}

}  // namespace detail

// One step at position t of an already oriented sequence. `history` holds the
// labels used as context (predicted or teacher), at least t of them.
inline void forward_step(const ModelParams& m, const EncodedSequence& seq, std::size_t t,
                         std::span<const int> history, std::span<const double> h_prev, StepCache& c,
                         const DropoutSpec& drop = {}) {
  const auto& cfg = m.config;
  Rng* rng = drop.active() ? drop.rng : nullptr;

  c.word_ids = window_ids(seq.words, t, cfg.window.d_w, Vocabulary::kBos, Vocabulary::kEos);
  c.in_words.resize(cfg.word_window_dim());
  m.words.gather(c.word_ids, c.in_words);
  detail::apply_dropout(c.in_words, c.mask_words, drop.embed, rng);

  c.label_ids = cfg.label_ablation ? std::vector<int>(cfg.window.d_l, cfg.bol())
                                   : label_window_ids(history, t, cfg.window.d_l, cfg.bol());
  c.in_labels.resize(cfg.label_window_dim());
  m.labels.gather(c.label_ids, c.in_labels);
  detail::apply_dropout(c.in_labels, c.mask_labels, drop.embed, rng);

  if (cfg.use_classes) {
    c.class_ids = window_ids(seq.classes, t, cfg.window.d_w, Vocabulary::kBos, Vocabulary::kEos);
    c.in_classes.resize(cfg.class_window_dim());
    m.classes.gather(c.class_ids, c.in_classes);
    detail::apply_dropout(c.in_classes, c.mask_classes, drop.embed, rng);
  }
  if (cfg.use_chars) {
    char_conv_forward(seq.chars[t], m.chars, m.conv, cfg.window.d_c, Vocabulary::kCharPad, c.chars);
    c.in_chars = c.chars.out;
    detail::apply_dropout(c.in_chars, c.mask_chars, drop.embed, rng);
  }

  auto concat = [&] {
    c.x.clear();
    c.x.insert(c.x.end(), c.in_words.begin(), c.in_words.end());
    if (cfg.variant == Variant::IrnnGru && cfg.gru_literal_input) return;
    c.x.insert(c.x.end(), c.in_labels.begin(), c.in_labels.end());
    if (cfg.use_classes) c.x.insert(c.x.end(), c.in_classes.begin(), c.in_classes.end());
    if (cfg.use_chars) c.x.insert(c.x.end(), c.in_chars.begin(), c.in_chars.end());
  };

  switch (cfg.variant) {
    case Variant::Irnn:
      concat();
      relu_hidden_forward(m.hidden, c.x, c.hidden);
      c.h_out = c.hidden.h;
      break;
    case Variant::IrnnGru: {
      concat();
      Vec zero;
      if (h_prev.empty()) {
        zero.assign(cfg.hidden, 0.0);
        h_prev = zero;
      }
      gru_forward(m.gru, c.x, h_prev, c.gru);
      c.h_out = c.gru.h;
      break;
    }
    case Variant::IrnnDeep:
      c.top_in.clear();
      relu_hidden_forward(m.deep_words, c.in_words, c.deep_words);
      c.top_in.insert(c.top_in.end(), c.deep_words.h.begin(), c.deep_words.h.end());
      relu_hidden_forward(m.deep_labels, c.in_labels, c.deep_labels);
      c.top_in.insert(c.top_in.end(), c.deep_labels.h.begin(), c.deep_labels.h.end());
      if (cfg.use_classes) {
        relu_hidden_forward(m.deep_classes, c.in_classes, c.deep_classes);
        c.top_in.insert(c.top_in.end(), c.deep_classes.h.begin(), c.deep_classes.h.end());
      }
      if (cfg.use_chars) {
        relu_hidden_forward(m.deep_chars, c.in_chars, c.deep_chars);
        c.top_in.insert(c.top_in.end(), c.deep_chars.h.begin(), c.deep_chars.h.end());
      }
      detail::layer_forward(m.deep_top, c.top_in, c.deep_top, cfg.deep_top_activation);
      c.h_out = c.deep_top.h;
      break;
  }
  detail::apply_dropout(c.h_out, c.hidden_mask, drop.hidden, rng);
  c.probs = output_forward(m.output, c.h_out);
}

// Backward through one step. `dlogits` is the loss gradient at the output
// pre-activation. `dh_next` (GRU, may be empty) is gradient reaching this
// step's recurrent state from the following step; the gradient w.r.t. the
// previous state is added to `dh_prev` when non-empty.
inline void backward_step(const ModelParams& m, const StepCache& c, std::span<const double> dlogits,
                          std::span<const double> dh_next, ModelParams& g, std::span<double> dh_prev) {
  const auto& cfg = m.config;
  Vec dh(m.output.in_dim(), 0.0);
  m.output.backward(c.h_out, dlogits, g.output, dh);
  detail::apply_mask(dh, c.hidden_mask);

  Vec d_words(c.in_words.size(), 0.0), d_labels(c.in_labels.size(), 0.0);
  Vec d_classes(c.in_classes.size(), 0.0), d_chars(c.in_chars.size(), 0.0);

  auto split_concat = [&](const Vec& dx) {
    std::size_t off = 0;
    auto take = [&](Vec& dst) {
      std::copy(dx.begin() + std::ptrdiff_t(off), dx.begin() + std::ptrdiff_t(off + dst.size()), dst.begin());
      off += dst.size();
    };
    take(d_words);
    if (cfg.variant == Variant::IrnnGru && cfg.gru_literal_input) return;
    take(d_labels);
    if (cfg.use_classes) take(d_classes);
    if (cfg.use_chars) take(d_chars);
  };

  switch (cfg.variant) {
    case Variant::Irnn: {
      Vec dx(c.x.size(), 0.0);
      relu_hidden_backward(m.hidden, c.x, c.hidden, dh, g.hidden, dx);
      split_concat(dx);
      break;
    }
    case Variant::IrnnGru: {
      if (!dh_next.empty()) axpy(1.0, dh_next, dh);
      Vec dx(c.x.size(), 0.0);
      gru_backward(m.gru, c.x, c.gru, dh, g.gru, dx, dh_prev);
      split_concat(dx);
      break;
    }
    case Variant::IrnnDeep: {
      Vec dtop(c.top_in.size(), 0.0);
      detail::layer_backward(m.deep_top, c.top_in, c.deep_top, dh, g.deep_top, dtop, cfg.deep_top_activation);
      const std::size_t k = cfg.deep_first;
      std::size_t off = 0;
      auto part = [&] {
        std::span<const double> s(dtop.data() + off, k);
        off += k;
        return s;
      };
      relu_hidden_backward(m.deep_words, c.in_words, c.deep_words, part(), g.deep_words, d_words);
      relu_hidden_backward(m.deep_labels, c.in_labels, c.deep_labels, part(), g.deep_labels, d_labels);
      if (cfg.use_classes) relu_hidden_backward(m.deep_classes, c.in_classes, c.deep_classes, part(), g.deep_classes, d_classes);
      if (cfg.use_chars) relu_hidden_backward(m.deep_chars, c.in_chars, c.deep_chars, part(), g.deep_chars, d_chars);
      break;
    }
  }

  detail::apply_mask(d_words, c.mask_words);
  g.words.scatter_add(c.word_ids, d_words);
  if (!(cfg.variant == Variant::IrnnGru && cfg.gru_literal_input)) {
    detail::apply_mask(d_labels, c.mask_labels);
    g.labels.scatter_add(c.label_ids, d_labels);
  }
  if (cfg.use_classes) {
    detail::apply_mask(d_classes, c.mask_classes);
    g.classes.scatter_add(c.class_ids, d_classes);
  }
  if (cfg.use_chars) {
    detail::apply_mask(d_chars, c.mask_chars);
    char_conv_backward(m.chars, m.conv, c.chars, d_chars, g.chars, g.conv);
  }
}

struct SequenceCache {
  EncodedSequence seq;           // oriented
  std::vector<int> history;      // labels used as context, processing order
  std::vector<StepCache> steps;  // processing order
  TaggerOutput output;           // original order
};

namespace detail {

inline void restore_order(TaggerOutput& out, Direction dir) {
  if (dir == Direction::Backward) {
    std::reverse(out.labels.begin(), out.labels.end());
    std::reverse(out.dists.begin(), out.dists.end());
  }
}

}  // namespace detail

// Runs the model over the sequence caching every step. Without teacher labels
// the context is the model's own greedy predictions; with them (original
// order) the context is the teacher sequence.
inline SequenceCache forward_pass_with_cache(const ModelParams& m, const EncodedSequence& seq,
                                             const std::vector<int>* teacher = nullptr,
                                             const DropoutSpec& drop = {}) {
  check_sequence(m, seq);
  SequenceCache sc;
  sc.seq = oriented(seq, m.config.direction);
  std::vector<int> teach;
  if (teacher) {
    if (teacher->size() != seq.size()) throw ShapeError("teacher labels length mismatch");
    teach = *teacher;
    if (m.config.direction == Direction::Backward) std::reverse(teach.begin(), teach.end());
  }
  const std::size_t n = sc.seq.size();
  sc.steps.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::span<const double> h_prev;
    if (t > 0) h_prev = sc.steps[t - 1].state();
    forward_step(m, sc.seq, t, sc.history, h_prev, sc.steps[t], drop);
    int pred = int(argmax(sc.steps[t].probs));
    sc.output.labels.push_back(pred);
    sc.output.dists.push_back(sc.steps[t].probs);
    sc.history.push_back(teacher ? teach[t] : pred);
  }
  detail::restore_order(sc.output, m.config.direction);
  return sc;
}

inline TaggerOutput tag_greedy(const ModelParams& m, const EncodedSequence& seq) {
  return forward_pass_with_cache(m, seq).output;
}

// Summed cross-entropy of a teacher-forced pass and its exact gradient,
// backpropagating through the recurrent state of GRU models.
inline double sequence_loss_and_grad(const ModelParams& m, const EncodedSequence& seq, ModelParams& grads) {
  SequenceCache sc = forward_pass_with_cache(m, seq, &seq.labels);
  double loss = 0.0;
  const std::size_t n = sc.steps.size();
  Vec dh_carry, dh_prev;
  for (std::size_t i = n; i-- > 0;) {
    const StepCache& c = sc.steps[i];
    int gold = sc.seq.labels[i];
    loss -= std::log(c.probs[std::size_t(gold)]);
    Vec dl = output_backward(c.probs, gold);
    if (m.config.variant == Variant::IrnnGru) dh_prev.assign(m.config.hidden, 0.0);
    backward_step(m, c, dl, dh_carry, grads, dh_prev);
    dh_carry = dh_prev;
  }
  return loss;
}

inline double sequence_loss(const ModelParams& m, const EncodedSequence& seq) {
  SequenceCache sc = forward_pass_with_cache(m, seq, &seq.labels);
  double loss = 0.0;
  for (std::size_t i = 0; i < sc.steps.size(); ++i) loss -= std::log(sc.steps[i].probs[std::size_t(sc.seq.labels[i])]);
  return loss;
}

// Geometric mean of two distributions, renormalized.
inline Vec combine_bidirectional(std::span<const double> yf, std::span<const double> yb) {
  if (yf.size() != yb.size()) {
    throw ShapeError("combine_bidirectional: length " + std::to_string(yf.size()) + " vs " +
                     std::to_string(yb.size()));
  }
  Vec out(yf.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(yf[i] * yb[i]);
    sum += out[i];
  }
  if (sum > 0.0) {
    for (double& v : out) v /= sum;
  }
  return out;
}

inline void check_bidirectional_pair(const ModelParams& fwd, const ModelParams& bwd) {
  if (fwd.config.direction != Direction::Forward || bwd.config.direction != Direction::Backward) {
    throw ConfigError("bidirectional tagging needs a forward and a backward model");
  }
  if (fwd.config.num_labels != bwd.config.num_labels || fwd.config.word_vocab != bwd.config.word_vocab) {
    throw ConfigError("bidirectional components do not share a vocabulary");
  }
}

inline TaggerOutput tag_bidirectional(const ModelParams& fwd, const ModelParams& bwd, const EncodedSequence& seq) {
  check_bidirectional_pair(fwd, bwd);
  TaggerOutput f = tag_greedy(fwd, seq), b = tag_greedy(bwd, seq);
  TaggerOutput out;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    out.dists.push_back(combine_bidirectional(f.dists[t], b.dists[t]));
    out.labels.push_back(int(argmax(out.dists.back())));
  }
  return out;
}

}  // namespace irnn
