#pragma once

// Chunk F1, concept error rate and token accuracy.

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "irnn/corpus.hpp"

namespace irnn {

using LabelSeqs = std::vector<std::vector<std::string>>;

struct ChunkCounts {
  std::size_t correct = 0;
  std::size_t hypothesized = 0;
  std::size_t reference = 0;
};

struct EvalReport {
  double precision = 0.0;  // percentages
  double recall = 0.0;
  double f1 = 0.0;
  double cer = 0.0;
  double token_accuracy = 0.0;
  ChunkCounts totals;
  std::map<std::string, ChunkCounts> per_label;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
};

inline void check_parallel(const LabelSeqs& gold, const LabelSeqs& pred) {
  if (gold.size() != pred.size()) {
    throw DataError("evaluation: " + std::to_string(gold.size()) + " reference sentences vs " +
                    std::to_string(pred.size()) + " predicted");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw DataError("evaluation: sentence " + std::to_string(i + 1) + " has " + std::to_string(gold[i].size()) +
                      " reference labels vs " + std::to_string(pred[i].size()) + " predicted");
    }
  }
}

inline double percent(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : 100.0 * double(num) / double(den); }

inline double f1_from(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Micro-averaged chunk precision / recall / F1: a predicted chunk is correct
// iff label, start and end all match a reference chunk.
inline EvalReport f1_chunks(const LabelSeqs& gold, const LabelSeqs& pred, BioScheme scheme = BioScheme::Suffix) {
  check_parallel(gold, pred);
  EvalReport rep;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = chunks_from_labels(gold[i], scheme);
    auto p = chunks_from_labels(pred[i], scheme);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    for (const auto& c : g) ++rep.per_label[c.label].reference;
    for (const auto& c : p) ++rep.per_label[c.label].hypothesized;
    // merge of two sorted lists
    std::size_t a = 0, b = 0;
    while (a < g.size() && b < p.size()) {
      if (g[a] == p[b]) {
        ++rep.per_label[g[a].label].correct;
        ++rep.totals.correct;
        ++a;
        ++b;
      } else if (g[a] < p[b]) {
        ++a;
      } else {
        ++b;
      }
    }
    rep.totals.reference += g.size();
    rep.totals.hypothesized += p.size();
    rep.tokens += gold[i].size();
  }
  rep.sentences = gold.size();
  rep.precision = percent(rep.totals.correct, rep.totals.hypothesized);
  rep.recall = percent(rep.totals.correct, rep.totals.reference);
  rep.f1 = f1_from(rep.precision, rep.recall);
  return rep;
}

// Unit-cost Levenshtein distance.
template <class T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

inline std::vector<std::string> concept_sequence(const std::vector<std::string>& labels, BioScheme scheme) {
  std::vector<std::string> out;
  for (auto& c : chunks_from_labels(labels, scheme)) out.push_back(c.label);
  return out;
}

// 100 * (S + I + D) / reference concepts, aggregated over the corpus.
inline double concept_error_rate_from_concepts(const LabelSeqs& ref, const LabelSeqs& hyp) {
  if (ref.size() != hyp.size()) throw DataError("concept_error_rate: sentence count mismatch");
  std::size_t errors = 0, total = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    errors += edit_distance(ref[i], hyp[i]);
    total += ref[i].size();
  }
  if (total == 0) return errors == 0 ? 0.0 : 100.0;
  return 100.0 * double(errors) / double(total);
}

inline double concept_error_rate(const LabelSeqs& gold, const LabelSeqs& pred, BioScheme scheme = BioScheme::Suffix) {
  check_parallel(gold, pred);
  LabelSeqs r, h;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    r.push_back(concept_sequence(gold[i], scheme));
    h.push_back(concept_sequence(pred[i], scheme));
  }
  return concept_error_rate_from_concepts(r, h);
}

inline double token_accuracy(const LabelSeqs& gold, const LabelSeqs& pred) {
  check_parallel(gold, pred);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = 0; j < gold[i].size(); ++j) hit += gold[i][j] == pred[i][j];
    total += gold[i].size();
  }
  return percent(hit, total);
}

inline double token_accuracy(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred) {
  if (gold.size() != pred.size()) throw DataError("token_accuracy: sentence count mismatch");
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) throw DataError("token_accuracy: sentence length mismatch");
    for (std::size_t j = 0; j < gold[i].size(); ++j) hit += gold[i][j] == pred[i][j];
    total += gold[i].size();
  }
  return percent(hit, total);
}

inline EvalReport evaluate(const LabelSeqs& gold, const LabelSeqs& pred, BioScheme scheme = BioScheme::Suffix) {
  EvalReport rep = f1_chunks(gold, pred, scheme);
  rep.cer = concept_error_rate(gold, pred, scheme);
  rep.token_accuracy = token_accuracy(gold, pred);
  return rep;
}

inline LabelSeqs label_columns(const ColumnCorpus& c) {
  LabelSeqs out;
  for (const auto& s : c.sentences) {
    std::vector<std::string> labels;
    for (const auto& t : s) labels.push_back(t.label);
    out.push_back(std::move(labels));
  }
  return out;
}

// Fraction (percent) of "X-I" positions not preceded by X-B / X-I.
inline double invalid_transition_rate(const LabelSeqs& pred, BioScheme scheme = BioScheme::Suffix) {
  std::size_t bad = 0, total = 0;
  for (const auto& s : pred) {
    bad += count_invalid_transitions(s, scheme);
    total += s.size();
  }
  return percent(bad, total);
}

inline std::string format_report_text(const EvalReport& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "sentences: " << r.sentences << "  tokens: " << r.tokens << '\n';
  o << "chunks: reference " << r.totals.reference << ", hypothesized " << r.totals.hypothesized << ", correct "
    << r.totals.correct << '\n';
  o << "precision: " << r.precision << "  recall: " << r.recall << "  F1: " << r.f1 << '\n';
  o << "CER: " << r.cer << "  token accuracy: " << r.token_accuracy << '\n';
  for (const auto& [label, c] : r.per_label) {
    double p = percent(c.correct, c.hypothesized), rc = percent(c.correct, c.reference);
    o << "  " << std::left << std::setw(24) << label << std::right << " P " << std::setw(6) << p << " R "
      << std::setw(6) << rc << " F1 " << std::setw(6) << f1_from(p, rc) << "  (" << c.correct << '/'
      << c.hypothesized << '/' << c.reference << ")\n";
  }
  return o.str();
}

inline std::string format_report_kv(const EvalReport& r) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "precision=" << r.precision << "\nrecall=" << r.recall << "\nf1=" << r.f1 << "\ncer=" << r.cer
    << "\ntoken_accuracy=" << r.token_accuracy << "\nchunks_correct=" << r.totals.correct
    << "\nchunks_hypothesized=" << r.totals.hypothesized << "\nchunks_reference=" << r.totals.reference
    << "\nsentences=" << r.sentences << "\ntokens=" << r.tokens << '\n';
  return o.str();
}

}  // namespace irnn
