#pragma once

// Loss, SGD with momentum, learning-rate schedule, the tagger and
// bidirectional training loops, and finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "irnn/config.hpp"
#include "irnn/corpus.hpp"
#include "irnn/eval.hpp"
#include "irnn/model.hpp"

namespace irnn {

// Sum of squared entries of the regularized tensors: weights, plus embedding
// tables when `l2_embeddings` is set. Biases are never regularized.
inline double squared_weight_norm(const ModelParams& p, bool l2_embeddings = false) {
  double s = 0.0;
  p.for_each_param([&](const std::string&, const Matrix& m, ParamKind k) {
    if (k == ParamKind::Weight || (k == ParamKind::Embedding && l2_embeddings)) {
      for (double v : m.flat()) s += v * v;
    }
  });
  return s;
}

// -log y[gold] + (lambda / 2) |W|^2
inline double loss(std::span<const double> y, int gold, const ModelParams& params, double lambda,
                   bool l2_embeddings = false) {
  double ce = -std::log(y[std::size_t(gold)]);
  if (lambda == 0.0) return ce;
  return ce + 0.5 * lambda * squared_weight_norm(params, l2_embeddings);
}

inline double lr_at(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (total_epochs == 0 || epoch >= total_epochs) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) + ")");
  }
  return lr0 * (1.0 - double(epoch) / double(total_epochs));
}

// Step size for each position of an n-token sentence: lr0 scales the
// sentence's mean token loss unless `normalized` is off.
inline double position_lr(double epoch_lr, std::size_t n, bool normalized) {
  return normalized && n > 0 ? epoch_lr / double(n) : epoch_lr;
}

// v <- mu v - lr (g + lambda w);  w <- w + v
inline void momentum_update(std::span<double> w, std::span<const double> g, std::span<double> v, double lr,
                            double mu, double lambda) {
  if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("momentum_update: length mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = mu * v[i] - lr * (g[i] + lambda * w[i]);
    w[i] += v[i];
  }
}

struct OptimizerState {
  ModelParams velocity;
  double lr = 0.0;
  std::size_t epoch = 0;
  double momentum = 0.9;

  static OptimizerState for_model(const ModelParams& p, double momentum) {
    return {p.zeros_like(), 0.0, 0, momentum};
  }
};

struct UpdateOptions {
  double lambda = 0.0;
  bool l2_embeddings = false;
  bool update_embeddings = true;
  double max_grad_norm = 0.0;
};

inline double grad_norm(const ModelParams& grads) {
  double s = 0.0;
  grads.for_each_param([&](const std::string&, const Matrix& m, ParamKind) {
    for (double v : m.flat()) s += v * v;
  });
  return std::sqrt(s);
}

// One SGD-with-momentum step. Dense tensors update fully; embedding tables
// update only the rows listed in the gradient's `touched` set.
inline void sgd_momentum_step(ModelParams& params, ModelParams& grads, OptimizerState& state,
                              const UpdateOptions& opt = {}) {
  if (opt.max_grad_norm > 0.0) {
    double n = grad_norm(grads);
    if (n > opt.max_grad_norm) {
      double s = opt.max_grad_norm / n;
      grads.for_each_param([&](const std::string&, Matrix& m, ParamKind) {
        for (double& v : m.flat()) v *= s;
      });
    }
  }
  std::vector<Matrix*> p, g, v;
  std::vector<ParamKind> kinds;
  params.for_each_param([&](const std::string&, Matrix& m, ParamKind k) {
    p.push_back(&m);
    kinds.push_back(k);
  });
  grads.for_each_param([&](const std::string&, Matrix& m, ParamKind) { g.push_back(&m); });
  state.velocity.for_each_param([&](const std::string&, Matrix& m, ParamKind) { v.push_back(&m); });
  if (p.size() != g.size() || p.size() != v.size()) throw ShapeError("sgd_momentum_step: parameter sets differ");

  std::vector<const Embedding*> grad_tables = {&grads.words, &grads.labels, &grads.classes, &grads.chars};
  std::size_t emb_index = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    require_same_shape(*p[i], *g[i], "sgd_momentum_step");
    require_same_shape(*p[i], *v[i], "sgd_momentum_step");
    switch (kinds[i]) {
      case ParamKind::Weight:
        momentum_update(p[i]->flat(), g[i]->flat(), v[i]->flat(), state.lr, state.momentum, opt.lambda);
        break;
      case ParamKind::Bias:
        momentum_update(p[i]->flat(), g[i]->flat(), v[i]->flat(), state.lr, state.momentum, 0.0);
        break;
      case ParamKind::Embedding: {
        // embeddings are visited first, in the order of grad_tables, skipping empty ones
        while (grad_tables[emb_index]->table.empty()) ++emb_index;
        const Embedding* ge = grad_tables[emb_index++];
        if (!opt.update_embeddings) break;
        const double lam = opt.l2_embeddings ? opt.lambda : 0.0;
        std::vector<int> rows = ge->touched;
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        for (int r : rows) {
          momentum_update(p[i]->row(std::size_t(r)), g[i]->row(std::size_t(r)), v[i]->row(std::size_t(r)), state.lr,
                          state.momentum, lam);
        }
        break;
      }
    }
  }
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean cross-entropy per token
  double dev_acc = 0.0;
  double dev_f1 = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

inline std::string format_log_line(const EpochLog& e) {
  std::ostringstream o;
  o.precision(10);
  o << e.epoch << '\t' << e.lr << '\t' << e.train_loss << '\t' << e.dev_acc << '\t' << e.dev_f1;
  return o.str();
}

struct DevScore {
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline DevScore score_predictions(const std::vector<EncodedSequence>& data, const std::vector<std::vector<int>>& pred,
                                  const Vocabulary& vocab, BioScheme scheme) {
  LabelSeqs g, p;
  std::vector<std::vector<int>> gi;
  for (std::size_t i = 0; i < data.size(); ++i) {
    gi.push_back(data[i].labels);
    g.push_back(decode_labels(data[i].labels, vocab));
    p.push_back(decode_labels(pred[i], vocab));
  }
  DevScore s;
  s.accuracy = token_accuracy(gi, pred);
  // Unknown gold labels are not valid BIO labels; score chunks over known ones.
  for (auto& seq : g)
    for (auto& l : seq)
      if (l == "<unk-label>") l = "O";
  s.f1 = f1_chunks(g, p, scheme).f1;
  return s;
}

template <class TagFn>
DevScore evaluate_tagger(const std::vector<EncodedSequence>& data, const Vocabulary& vocab, BioScheme scheme,
                         TagFn&& tag) {
  std::vector<std::vector<int>> pred;
  pred.reserve(data.size());
  for (const auto& s : data) pred.push_back(tag(s).labels);
  return score_predictions(data, pred, vocab, scheme);
}

struct TrainResult {
  ModelParams model;        // dev-best snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

inline bool better(const DevScore& s, const DevScore& best, const std::string& select_by) {
  return select_by == "f1" ? s.f1 > best.f1 : s.accuracy > best.accuracy;
}

}  // namespace detail

// Per-position SGD over shuffled sentences with teacher-forced label context
// and no gradient through the recurrent state (wide-context approximation).
// Returns the snapshot with the best dev score.
inline TrainResult train_tagger(const std::vector<EncodedSequence>& train, const std::vector<EncodedSequence>& dev,
                                const Vocabulary& vocab, const TrainConfig& cfg, Variant variant,
                                Direction direction, const Matrix* word_init = nullptr,
                                const Matrix* label_init = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train_tagger: empty training set");
  if (cfg.epochs_fwd_bwd == 0) throw ConfigError("train_tagger: zero epochs");
  Rng rng(cfg.seed);
  ModelParams model = ModelParams::init(make_model_config(cfg, vocab, variant, direction), rng);
  if (word_init) {
    require_same_shape(model.words.table, *word_init, "word embedding init");
    model.words.table = *word_init;
  }
  if (label_init) {
    require_same_shape(model.labels.table, *label_init, "label embedding init");
    model.labels.table = *label_init;
  }
  for (const auto& s : train) check_sequence(model, s);

  const BioScheme scheme = cfg.scheme();
  ModelParams grads = model.zeros_like();
  OptimizerState opt = OptimizerState::for_model(model, cfg.momentum);
  UpdateOptions upd{cfg.lambda_l2, cfg.l2_embeddings, true, cfg.max_grad_norm};
  DropoutSpec drop{cfg.dropout_embed, cfg.dropout_hidden, &rng};

  TrainResult result;
  DevScore best{-1.0, -1.0};
  std::vector<std::size_t> order(train.size());
  StepCache cache;
  Vec h_prev;
  std::vector<int> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs_fwd_bwd; ++epoch) {
    const double epoch_lr = lr_at(epoch, cfg.epochs_fwd_bwd, cfg.lr0);
    opt.epoch = epoch;
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t idx : order) {
      EncodedSequence seq = oriented(train[idx], direction);
      opt.lr = position_lr(epoch_lr, seq.size(), cfg.length_normalized_lr);
      history.clear();
      h_prev.clear();
      for (std::size_t t = 0; t < seq.size(); ++t) {
        forward_step(model, seq, t, history, h_prev, cache, drop);
        const int gold = seq.labels[t];
        loss_sum -= std::log(cache.probs[std::size_t(gold)]);
        ++tokens;
        Vec dl = output_backward(cache.probs, gold);
        grads.clear_grads();
        backward_step(model, cache, dl, {}, grads, {});
        sgd_momentum_step(model, grads, opt, upd);
        int context = gold;
        if (cfg.predicted_label_prob > 0.0 && rng.bernoulli(cfg.predicted_label_prob)) {
          context = int(argmax(cache.probs));
        }
        history.push_back(context);
        if (variant == Variant::IrnnGru) h_prev = cache.state();
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = epoch_lr;
    entry.train_loss = loss_sum / double(tokens);
    if (!std::isfinite(entry.train_loss)) throw ConfigError("training diverged (non-finite loss)");
    DevScore s = dev.empty() ? DevScore{} : evaluate_tagger(dev, vocab, scheme, [&](const EncodedSequence& e) {
      return tag_greedy(model, e);
    });
    entry.dev_acc = s.accuracy;
    entry.dev_f1 = s.f1;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (detail::better(s, best, cfg.select_by)) {
      best = s;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

struct BidirResult {
  ModelParams fwd, bwd;  // dev-best snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Joint fine-tuning through the renormalized geometric mean. The combined
// distribution is softmax((a_f + a_b) / 2) of the two logit vectors, so the
// cross-entropy gradient reaching each branch is (y - c) / 2.
inline BidirResult train_bidirectional(const ModelParams& fwd0, const ModelParams& bwd0,
                                       const std::vector<EncodedSequence>& train,
                                       const std::vector<EncodedSequence>& dev, const Vocabulary& vocab,
                                       const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_bidirectional_pair(fwd0, bwd0);
  if (train.empty()) throw ConfigError("train_bidirectional: empty training set");
  if (cfg.epochs_bidir == 0) throw ConfigError("train_bidirectional: zero epochs");
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ModelParams fwd = fwd0, bwd = bwd0;
  ModelParams gf = fwd.zeros_like(), gb = bwd.zeros_like();
  OptimizerState of = OptimizerState::for_model(fwd, cfg.momentum);
  OptimizerState ob = OptimizerState::for_model(bwd, cfg.momentum);
  UpdateOptions upd{cfg.lambda_l2_bidir, cfg.l2_embeddings, !cfg.freeze_embeddings_bidir, cfg.max_grad_norm};
  DropoutSpec drop{cfg.dropout_embed, cfg.dropout_hidden, &rng};
  const BioScheme scheme = cfg.scheme();
  const bool gru_f = fwd.config.variant == Variant::IrnnGru;
  const bool gru_b = bwd.config.variant == Variant::IrnnGru;

  BidirResult result;
  DevScore best{-1.0, -1.0};
  std::vector<std::size_t> order(train.size());
  StepCache cf, cb;
  for (std::size_t epoch = 0; epoch < cfg.epochs_bidir; ++epoch) {
    const double epoch_lr = lr_at(epoch, cfg.epochs_bidir, cfg.lr0);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t idx : order) {
      const EncodedSequence& seq = train[idx];
      const std::size_t n = seq.size();
      of.lr = ob.lr = position_lr(epoch_lr, n, cfg.length_normalized_lr);
      EncodedSequence rseq = oriented(seq, Direction::Backward);
      // Backward recurrent states at the start of the sentence's update.
      std::vector<Vec> bstates;
      if (gru_b) {
        SequenceCache sc = forward_pass_with_cache(bwd, seq, &seq.labels);
        for (auto& st : sc.steps) bstates.push_back(st.state());
      }
      Vec hf;
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t tb = n - 1 - t;
        forward_step(fwd, seq, t, seq.labels, hf, cf, drop);
        Vec hb = (gru_b && tb > 0) ? bstates[tb - 1] : Vec{};
        forward_step(bwd, rseq, tb, rseq.labels, hb, cb, drop);
        const int gold = seq.labels[t];
        Vec y = combine_bidirectional(cf.probs, cb.probs);
        loss_sum -= std::log(y[std::size_t(gold)]);
        ++tokens;
        Vec d = output_backward(y, gold);
        for (double& v : d) v *= 0.5;
        gf.clear_grads();
        gb.clear_grads();
        backward_step(fwd, cf, d, {}, gf, {});
        backward_step(bwd, cb, d, {}, gb, {});
        sgd_momentum_step(fwd, gf, of, upd);
        sgd_momentum_step(bwd, gb, ob, upd);
        if (gru_f) hf = cf.state();
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = epoch_lr;
    entry.train_loss = loss_sum / double(tokens);
    if (!std::isfinite(entry.train_loss)) throw ConfigError("bidirectional training diverged (non-finite loss)");
    DevScore s = dev.empty() ? DevScore{} : evaluate_tagger(dev, vocab, scheme, [&](const EncodedSequence& e) {
      return tag_bidirectional(fwd, bwd, e);
    });
    entry.dev_acc = s.accuracy;
    entry.dev_f1 = s.f1;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (detail::better(s, best, cfg.select_by)) {
      best = s;
      result.fwd = fwd;
      result.bwd = bwd;
      result.best_epoch = epoch;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct TensorCheck {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
    return m;
  }
};

// |a - n| / max(|a| + |n|, floor): the floor keeps coordinates whose true
// gradient is ~0 from reporting round-off as relative error.
inline constexpr double kGradCheckFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kGradCheckFloor);
}

using GradHook = std::function<void(ModelParams&)>;

// Compares the analytic gradient of the summed sequence cross-entropy with
// central differences on a random subsample of each tensor. Embedding tables
// are sampled from the rows the sequence touches. `hook` may rewrite the
// analytic gradient before comparison (fault injection).
inline GradCheckReport gradient_check(const ModelParams& model_in, const EncodedSequence& seq, double epsilon,
                                      Rng& rng, std::size_t samples_per_tensor = 50, const GradHook& hook = {}) {
  ModelParams model = model_in;
  ModelParams grads = model.zeros_like();
  sequence_loss_and_grad(model, seq, grads);
  if (hook) hook(grads);

  std::vector<std::pair<std::string, Matrix*>> pm, gm;
  std::vector<ParamKind> kinds;
  model.for_each_param([&](const std::string& n, Matrix& m, ParamKind k) {
    pm.emplace_back(n, &m);
    kinds.push_back(k);
  });
  grads.for_each_param([&](const std::string& n, Matrix& m, ParamKind) { gm.emplace_back(n, &m); });
  std::vector<const Embedding*> tables = {&grads.words, &grads.labels, &grads.classes, &grads.chars};
  std::size_t emb_index = 0;

  GradCheckReport report;
  for (std::size_t i = 0; i < pm.size(); ++i) {
    Matrix& w = *pm[i].second;
    const Matrix& g = *gm[i].second;
    std::vector<std::size_t> candidates;
    if (kinds[i] == ParamKind::Embedding) {
      while (tables[emb_index]->table.empty()) ++emb_index;
      std::set<int> rows(tables[emb_index]->touched.begin(), tables[emb_index]->touched.end());
      ++emb_index;
      for (int r : rows)
        for (std::size_t c = 0; c < w.cols(); ++c) candidates.push_back(std::size_t(r) * w.cols() + c);
    } else {
      candidates.resize(w.size());
      std::iota(candidates.begin(), candidates.end(), 0);
    }
    if (candidates.size() > samples_per_tensor) {
      rng.shuffle(candidates);
      candidates.resize(samples_per_tensor);
    }
    TensorCheck tc;
    tc.name = pm[i].first;
    tc.coords = candidates.size();
    for (std::size_t k : candidates) {
      double& x = w.flat()[k];
      const double saved = x;
      x = saved + epsilon;
      double lp = sequence_loss(model, seq);
      x = saved - epsilon;
      double lm = sequence_loss(model, seq);
      x = saved;
      double numeric = (lp - lm) / (2.0 * epsilon);
      double analytic = g.flat()[k];
      tc.max_rel_error = std::max(tc.max_rel_error, relative_error(analytic, numeric));
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(analytic - numeric));
    }
    report.tensors.push_back(tc);
  }
  return report;
}

}  // namespace irnn
