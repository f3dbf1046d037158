#pragma once

// Feed-forward neural language model for pretraining word or label
// embeddings, and the plain-text embedding file format ("token v1 ... vD").

#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irnn/config.hpp"
#include "irnn/corpus.hpp"
#include "irnn/layers.hpp"
#include "irnn/training.hpp"

namespace irnn {

struct NnlmConfig {
  std::size_t dim = 200;
  std::size_t hidden = 200;
  std::size_t context = 4;
  std::size_t epochs = 30;
  double lr0 = 0.5;
  double momentum = 0.3;
  bool length_normalized_lr = true;
  double lambda = 0.01;
  std::uint64_t seed = 1;
};

// Predicts token t from the `context` previous tokens:
// concat embeddings -> relu hidden -> softmax over the section.
struct NnlmParams {
  Embedding emb;
  Dense hidden;
  Dense output;
  std::size_t context = 4;

  static NnlmParams init(std::size_t rows, const NnlmConfig& cfg, Rng& rng) {
    if (cfg.context < 1) throw ConfigError("NNLM context length must be >= 1");
    NnlmParams p;
    p.context = cfg.context;
    p.emb.table = xavier_init(rows, cfg.dim, rng);
    p.hidden = Dense::xavier(cfg.hidden, cfg.context * cfg.dim, rng);
    p.output = Dense::xavier(rows, cfg.hidden, rng);
    return p;
  }

  NnlmParams zeros_like() const {
    NnlmParams z = *this;
    z.emb.table.set_zero();
    for (Dense* d : {&z.hidden, &z.output}) {
      d->w.set_zero();
      d->b.set_zero();
    }
    return z;
  }
};

// A token stream for one vocabulary section. Contexts before the start use
// `pad`; if `end` >= 0 it is predicted after the last token.
struct NnlmCorpus {
  std::vector<std::vector<int>> sequences;
  int pad = 0;
  int end = -1;
  std::size_t rows = 0;
};

struct NnlmCache {
  std::vector<int> ids;
  Vec x;
  ReluCache hidden;
  Vec probs;
};

inline std::vector<int> nnlm_context_ids(const std::vector<int>& seq, std::size_t t, std::size_t n, int pad) {
  std::vector<int> ids(n, pad);
  for (std::size_t k = 0; k < n; ++k) {
    long idx = long(t) - long(n) + long(k);
    if (idx >= 0) ids[k] = seq[std::size_t(idx)];
  }
  return ids;
}

inline void nnlm_forward(const NnlmParams& p, std::span<const int> ids, NnlmCache& c) {
  c.ids.assign(ids.begin(), ids.end());
  c.x.resize(ids.size() * p.emb.dim());
  p.emb.gather(ids, c.x);
  relu_hidden_forward(p.hidden, c.x, c.hidden);
  c.probs = output_forward(p.output, c.hidden.h);
}

inline void nnlm_backward(const NnlmParams& p, const NnlmCache& c, int target, NnlmParams& g) {
  Vec dl = output_backward(c.probs, target);
  Vec dh(p.hidden.out_dim(), 0.0);
  p.output.backward(c.hidden.h, dl, g.output, dh);
  Vec dx(c.x.size(), 0.0);
  relu_hidden_backward(p.hidden, c.x, c.hidden, dh, g.hidden, dx);
  g.emb.scatter_add(c.ids, dx);
}

template <class Fn>
void for_each_nnlm_event(const NnlmCorpus& corpus, const std::vector<int>& seq, std::size_t context, Fn&& fn) {
  const std::size_t n = seq.size() + (corpus.end >= 0 ? 1 : 0);
  for (std::size_t t = 0; t < n; ++t) {
    int target = t < seq.size() ? seq[t] : corpus.end;
    fn(nnlm_context_ids(seq, t, context, corpus.pad), target);
  }
}

inline double nnlm_mean_loss(const NnlmParams& p, const NnlmCorpus& corpus) {
  double sum = 0.0;
  std::size_t count = 0;
  NnlmCache c;
  for (const auto& seq : corpus.sequences) {
    for_each_nnlm_event(corpus, seq, p.context, [&](const std::vector<int>& ids, int target) {
      nnlm_forward(p, ids, c);
      sum -= std::log(c.probs[std::size_t(target)]);
      ++count;
    });
  }
  return count ? sum / double(count) : 0.0;
}

struct NnlmResult {
  NnlmParams params;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean training cross-entropy per epoch
};

inline NnlmResult train_nnlm(const NnlmCorpus& corpus, const NnlmConfig& cfg) {
  if (cfg.context < 1) throw ConfigError("NNLM context length must be >= 1");
  if (corpus.sequences.empty()) throw ConfigError("NNLM: empty corpus");
  if (cfg.epochs == 0) throw ConfigError("NNLM: zero epochs");
  Rng rng(cfg.seed);
  NnlmResult res;
  res.params = NnlmParams::init(corpus.rows, cfg, rng);
  NnlmParams& p = res.params;
  NnlmParams g = p.zeros_like(), v = p.zeros_like();
  res.initial_loss = nnlm_mean_loss(p, corpus);
  std::vector<std::size_t> order(corpus.sequences.size());
  NnlmCache c;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double epoch_lr = lr_at(epoch, cfg.epochs, cfg.lr0);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t idx : order) {
      const std::size_t events = corpus.sequences[idx].size() + (corpus.end >= 0 ? 1 : 0);
      const double lr = position_lr(epoch_lr, events, cfg.length_normalized_lr);
      for_each_nnlm_event(corpus, corpus.sequences[idx], p.context, [&](const std::vector<int>& ids, int target) {
        nnlm_forward(p, ids, c);
        sum -= std::log(c.probs[std::size_t(target)]);
        ++count;
        g.emb.clear_touched();
        for (Dense* d : {&g.hidden, &g.output}) {
          d->w.set_zero();
          d->b.set_zero();
        }
        nnlm_backward(p, c, target, g);
        momentum_update(p.hidden.w.flat(), g.hidden.w.flat(), v.hidden.w.flat(), lr, cfg.momentum, cfg.lambda);
        momentum_update(p.hidden.b.flat(), g.hidden.b.flat(), v.hidden.b.flat(), lr, cfg.momentum, 0.0);
        momentum_update(p.output.w.flat(), g.output.w.flat(), v.output.w.flat(), lr, cfg.momentum, cfg.lambda);
        momentum_update(p.output.b.flat(), g.output.b.flat(), v.output.b.flat(), lr, cfg.momentum, 0.0);
        std::vector<int> rows = g.emb.touched;
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        for (int r : rows) {
          momentum_update(p.emb.table.row(std::size_t(r)), g.emb.table.row(std::size_t(r)),
                          v.emb.table.row(std::size_t(r)), lr, cfg.momentum, 0.0);
        }
      });
    }
    const double mean = sum / double(count);
    if (!std::isfinite(mean)) throw ConfigError("NNLM training diverged (non-finite loss)");
    res.epoch_loss.push_back(mean);
  }
  return res;
}

enum class EmbeddingSection { Words, Labels };

inline NnlmCorpus nnlm_corpus(const ColumnCorpus& corpus, const Vocabulary& vocab, EmbeddingSection section) {
  NnlmCorpus out;
  if (section == EmbeddingSection::Words) {
    out.pad = Vocabulary::kBos;
    out.end = Vocabulary::kEos;
    out.rows = vocab.words.size();
    for (const auto& s : corpus.sentences) {
      std::vector<int> ids;
      for (const auto& t : s) ids.push_back(vocab.words.lookup_or(vocab.normalize(t.word), Vocabulary::kUnk));
      out.sequences.push_back(std::move(ids));
    }
  } else {
    out.pad = vocab.bol();
    out.rows = vocab.label_rows();
    for (const auto& s : corpus.sentences) {
      std::vector<int> ids;
      for (const auto& t : s) {
        auto id = vocab.labels.find(t.label);
        if (!id) throw DataError("label pretraining: unknown label '" + t.label + "'");
        ids.push_back(*id);
      }
      out.sequences.push_back(std::move(ids));
    }
  }
  return out;
}

inline NnlmConfig nnlm_config_from(const TrainConfig& tc, EmbeddingSection section) {
  NnlmConfig c;
  c.dim = tc.embed_size;
  c.hidden = tc.nnlm_hidden;
  c.context = tc.nnlm_context;
  c.epochs = section == EmbeddingSection::Words ? tc.epochs_nnlm_word : tc.epochs_nnlm_label;
  c.lr0 = tc.lr0;
  c.momentum = tc.momentum;
  c.length_normalized_lr = tc.length_normalized_lr;
  c.lambda = tc.lambda_l2;
  c.seed = tc.seed;
  return c;
}

inline std::string section_token(const Vocabulary& vocab, EmbeddingSection section, std::size_t row) {
  if (section == EmbeddingSection::Words) return vocab.words.token(int(row));
  return int(row) == vocab.bol() ? std::string("<bol>") : vocab.labels.token(int(row));
}

inline std::optional<int> section_lookup(const Vocabulary& vocab, EmbeddingSection section, const std::string& tok) {
  if (section == EmbeddingSection::Words) {
    if (auto id = vocab.words.find(tok)) return id;
    return vocab.words.find(vocab.normalize(tok));
  }
  if (tok == "<bol>") return vocab.bol();
  return vocab.labels.find(tok);
}

inline void save_embeddings(const std::string& path, const Vocabulary& vocab, EmbeddingSection section,
                            const Matrix& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write embeddings file '" + path + "'");
  out.precision(17);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << section_token(vocab, section, r);
    for (double v : table.row(r)) out << ' ' << v;
    out << '\n';
  }
}

// Copies rows for listed tokens into `table`; other rows are left alone.
// Returns the number of rows overwritten.
inline std::size_t load_external_embeddings(const std::string& path, const Vocabulary& vocab,
                                            EmbeddingSection section, Matrix& table) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embeddings file '" + path + "'");
  std::string line;
  std::size_t line_no = 0, copied = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    Vec values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) throw ConfigError(path + ":" + std::to_string(line_no) + ": non-numeric embedding value");
    if (values.size() != table.cols()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": embedding dimension " + std::to_string(values.size()) +
                        " does not match " + std::to_string(table.cols()));
    }
    auto id = section_lookup(vocab, section, tok);
    if (!id || std::size_t(*id) >= table.rows()) continue;
    std::copy(values.begin(), values.end(), table.row(std::size_t(*id)).begin());
    ++copied;
  }
  return copied;
}

}  // namespace irnn
