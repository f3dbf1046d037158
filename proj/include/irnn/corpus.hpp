#pragma once

// Column-format corpora, vocabularies, sequence encoding and BIO chunking.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irnn/math.hpp"

namespace irnn {

// One row of a column file. `cls` is "-" when the row has no class.
struct Token {
  std::string word;
  std::string cls = "-";
  std::string label;

  friend bool operator==(const Token&, const Token&) = default;
};

using RawSentence = std::vector<Token>;

struct ColumnCorpus {
  int columns = 0;  // 2 (word, label) or 3 (word, class, label); 0 when empty
  std::vector<RawSentence> sentences;

  bool has_classes() const { return columns == 3; }
  friend bool operator==(const ColumnCorpus&, const ColumnCorpus&) = default;
};

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline ColumnCorpus parse_column_stream(std::istream& in, const std::string& source = "<stream>") {
  ColumnCorpus corpus;
  RawSentence current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.empty()) corpus.sentences.push_back(std::move(current));
    current.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 2 && fields.size() != 3) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected 2 or 3 tab-separated " +
                      "fields, got " + std::to_string(fields.size()));
    }
    if (corpus.columns == 0) corpus.columns = int(fields.size());
    if (int(fields.size()) != corpus.columns) {
      throw DataError(source + ":" + std::to_string(line_no) + ": inconsistent column count (" +
                      std::to_string(fields.size()) + " vs " + std::to_string(corpus.columns) +
                      ")");
    }
    for (const auto& f : fields) {
      if (f.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty field");
    }
    Token tok;
    tok.word = fields[0];
    tok.label = fields.back();
    if (fields.size() == 3) tok.cls = fields[1];
    current.push_back(std::move(tok));
  }
  flush();
  return corpus;
}

inline ColumnCorpus load_column_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open column file '" + path + "'");
  return parse_column_stream(in, path);
}

inline void write_column_stream(std::ostream& out, const ColumnCorpus& corpus) {
  const bool classes = corpus.columns == 3;
  for (const auto& sent : corpus.sentences) {
    for (const auto& tok : sent) {
      out << tok.word << '\t';
      if (classes) out << tok.cls << '\t';
      out << tok.label << '\n';
    }
    out << '\n';
  }
}

inline void write_column_file(const std::string& path, const ColumnCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write column file '" + path + "'");
  write_column_stream(out, corpus);
  if (!out) throw DataError("write failed for '" + path + "'");
}

// Splits a UTF-8 string into code points (each kept as its byte sequence).
// Invalid lead bytes are treated as single-byte characters.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// ASCII lowercasing; multi-byte sequences pass through unchanged.
inline std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  }
  return out;
}

// Token <-> index bijection.
class Lexicon {
 public:
  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    int id = int(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  std::optional<int> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int lookup_or(const std::string& token, int fallback) const {
    auto it = index_.find(token);
    return it == index_.end() ? fallback : it->second;
  }

  const std::string& token(int id) const { return tokens_.at(std::size_t(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Lexicon& a, const Lexicon& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct VocabStats {
  std::size_t word_types = 0;         // distinct training word forms
  std::size_t words_kept = 0;         // forms with count >= min_count
  std::size_t training_tokens = 0;
  std::size_t singleton_types = 0;
};

// Reserved entries. Words, classes: <bos>=0, <eos>=1, <unk>=2 (classes add
// <none>=3 for "-"). Characters: <pad>=0 (boundary), <unk>=1. Labels hold only
// real labels; the begin-of-labels entry is index labels.size() in the label
// embedding table and never an output.
struct Vocabulary {
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kNoClass = 3;
  static constexpr int kCharPad = 0;
  static constexpr int kCharUnk = 1;
  static constexpr int kUnknownLabel = -1;
  static constexpr int kFormatVersion = 1;

  Lexicon words;
  Lexicon classes;
  Lexicon chars;
  Lexicon labels;
  bool lowercase = true;

  std::size_t num_labels() const { return labels.size(); }
  int bol() const { return int(labels.size()); }
  std::size_t label_rows() const { return labels.size() + 1; }

  std::string normalize(const std::string& word) const {
    return lowercase ? lowercase_ascii(word) : word;
  }

  std::string serialize() const {
    std::ostringstream out;
    out << "irnn-vocabulary\t" << kFormatVersion << '\n';
    out << "lowercase\t" << (lowercase ? 1 : 0) << '\n';
    auto section = [&](const char* name, const Lexicon& lex, bool with_bol) {
      out << '[' << name << "]\t" << (lex.size() + (with_bol ? 1 : 0)) << '\n';
      for (std::size_t i = 0; i < lex.size(); ++i) out << i << '\t' << lex.tokens()[i] << '\n';
      if (with_bol) out << lex.size() << "\t<bol>\n";
    };
    section("words", words, false);
    section("classes", classes, false);
    section("chars", chars, false);
    section("labels", labels, true);
    return out.str();
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

  static Vocabulary deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto fail = [](const std::string& why) { return DataError("vocabulary: " + why); };
    if (!std::getline(in, line)) throw fail("empty input");
    auto head = split_tabs(line);
    if (head.size() != 2 || head[0] != "irnn-vocabulary") throw fail("bad header");
    if (head[1] != std::to_string(kFormatVersion)) throw fail("unsupported version " + head[1]);
    Vocabulary v;
    if (!std::getline(in, line)) throw fail("missing lowercase flag");
    auto lc = split_tabs(line);
    if (lc.size() != 2 || lc[0] != "lowercase") throw fail("bad lowercase line");
    v.lowercase = lc[1] == "1";
    auto read_section = [&](const char* name, Lexicon& lex, bool with_bol) {
      if (!std::getline(in, line)) throw fail(std::string("missing section ") + name);
      auto h = split_tabs(line);
      if (h.size() != 2 || h[0] != std::string("[") + name + "]") {
        throw fail(std::string("expected section ") + name);
      }
      std::size_t n = std::stoul(h[1]);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw fail(std::string("truncated section ") + name);
        auto row = split_tabs(line);
        if (row.size() != 2 || row[0] != std::to_string(i)) {
          throw fail(std::string("bad row in section ") + name);
        }
        if (with_bol && i + 1 == n) {
          if (row[1] != "<bol>") throw fail("label section must end with <bol>");
          break;
        }
        if (lex.add(row[1]) != int(i)) throw fail("duplicate token '" + row[1] + "'");
      }
    };
    read_section("words", v.words, false);
    read_section("classes", v.classes, false);
    read_section("chars", v.chars, false);
    read_section("labels", v.labels, true);
    return v;
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

inline Vocabulary build_vocabulary(const std::vector<RawSentence>& train, std::size_t min_count = 1,
                                   bool lowercase = true, VocabStats* stats = nullptr) {
  if (train.empty()) throw ConfigError("build_vocabulary: empty training set");
  Vocabulary v;
  v.lowercase = lowercase;
  for (const char* r : {"<bos>", "<eos>", "<unk>"}) {
    v.words.add(r);
    v.classes.add(r);
  }
  v.classes.add("<none>");
  v.chars.add("<pad>");
  v.chars.add("<unk>");

  std::map<std::string, std::size_t> word_counts;
  std::map<std::string, std::size_t> class_set, char_set, label_set;
  std::size_t tokens = 0;
  for (const auto& sent : train) {
    for (const auto& tok : sent) {
      ++tokens;
      ++word_counts[v.normalize(tok.word)];
      if (tok.cls != "-") ++class_set[tok.cls];
      for (auto& ch : utf8_chars(tok.word)) ++char_set[ch];
      ++label_set[tok.label];
    }
  }
  std::size_t kept = 0, singletons = 0;
  for (const auto& [w, c] : word_counts) {
    if (c == 1) ++singletons;
    if (c >= min_count) {
      v.words.add(w);
      ++kept;
    }
  }
  for (const auto& [c, _] : class_set) v.classes.add(c);
  for (const auto& [c, _] : char_set) v.chars.add(c);
  for (const auto& [l, _] : label_set) v.labels.add(l);
  if (stats) {
    stats->word_types = word_counts.size();
    stats->words_kept = kept;
    stats->training_tokens = tokens;
    stats->singleton_types = singletons;
  }
  return v;
}

// One sentence as parallel index arrays.
struct EncodedSequence {
  std::vector<int> words;
  std::vector<int> classes;  // empty when the corpus has no class column
  std::vector<std::vector<int>> chars;
  std::vector<int> labels;   // kUnknownLabel where a gold label was not in the vocabulary

  std::size_t size() const { return words.size(); }
  bool has_classes() const { return !classes.empty(); }
};

enum class LabelPolicy { Strict, Lenient };

inline EncodedSequence encode(const RawSentence& sent, const Vocabulary& vocab,
                              LabelPolicy policy = LabelPolicy::Strict, bool with_classes = true) {
  if (sent.empty()) throw DataError("encode: empty sentence");
  EncodedSequence seq;
  for (const auto& tok : sent) {
    seq.words.push_back(vocab.words.lookup_or(vocab.normalize(tok.word), Vocabulary::kUnk));
    if (with_classes) {
      seq.classes.push_back(tok.cls == "-" ? Vocabulary::kNoClass
                                           : vocab.classes.lookup_or(tok.cls, Vocabulary::kUnk));
    }
    std::vector<int> cs;
    for (auto& ch : utf8_chars(tok.word)) cs.push_back(vocab.chars.lookup_or(ch, Vocabulary::kCharUnk));
    seq.chars.push_back(std::move(cs));
    auto label = vocab.labels.find(tok.label);
    if (!label) {
      if (policy == LabelPolicy::Strict) throw DataError("encode: unknown gold label '" + tok.label + "'");
      seq.labels.push_back(Vocabulary::kUnknownLabel);
    } else {
      seq.labels.push_back(*label);
    }
  }
  return seq;
}

inline std::vector<EncodedSequence> encode_all(const ColumnCorpus& corpus, const Vocabulary& vocab,
                                               LabelPolicy policy, bool with_classes) {
  std::vector<EncodedSequence> out;
  out.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) out.push_back(encode(s, vocab, policy, with_classes));
  return out;
}

inline std::vector<std::string> decode_labels(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(id == Vocabulary::kUnknownLabel ? "<unk-label>" : vocab.labels.token(id));
  return out;
}

inline std::vector<std::string> decode_words(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(vocab.words.token(id));
  return out;
}

// ---------------------------------------------------------------------------
// BIO chunking

// Suffix: "X-B", "X-I" (MEDIA style). Prefix: "B-X", "I-X" (CoNLL style).
// Plain: every non-O label is a one-word chunk (ATIS style).
enum class BioScheme { Suffix, Prefix, Plain };

struct Chunk {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  friend bool operator==(const Chunk&, const Chunk&) = default;
  friend auto operator<=>(const Chunk&, const Chunk&) = default;
};

struct ParsedLabel {
  enum class Tag { Outside, Begin, Inside } tag = Tag::Outside;
  std::string name;
};

inline ParsedLabel parse_label(std::string_view label, BioScheme scheme) {
  using Tag = ParsedLabel::Tag;
  if (label == "O") return {};
  auto malformed = [&] { return DataError("malformed BIO label '" + std::string(label) + "'"); };
  if (label.empty()) throw malformed();
  switch (scheme) {
    case BioScheme::Plain:
      return {Tag::Begin, std::string(label)};
    case BioScheme::Suffix: {
      auto pos = label.rfind('-');
      if (pos == label.npos || pos == 0 || pos + 2 != label.size()) throw malformed();
      char t = label[pos + 1];
      if (t != 'B' && t != 'I') throw malformed();
      return {t == 'B' ? Tag::Begin : Tag::Inside, std::string(label.substr(0, pos))};
    }
    case BioScheme::Prefix: {
      if (label.size() < 3 || label[1] != '-' || (label[0] != 'B' && label[0] != 'I')) throw malformed();
      return {label[0] == 'B' ? Tag::Begin : Tag::Inside, std::string(label.substr(2))};
    }
  }
  throw malformed();
}

// Maximal same-concept spans. An Inside label that does not continue a chunk
// of the same concept opens a new chunk (repair rule).
inline std::vector<Chunk> chunks_from_labels(std::span<const std::string> labels,
                                             BioScheme scheme = BioScheme::Suffix,
                                             std::size_t* repairs = nullptr) {
  using Tag = ParsedLabel::Tag;
  std::vector<Chunk> chunks;
  bool open = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ParsedLabel p = parse_label(labels[i], scheme);
    if (p.tag == Tag::Outside) {
      open = false;
      continue;
    }
    if (p.tag == Tag::Inside && open && chunks.back().label == p.name) {
      chunks.back().end = i;
      continue;
    }
    if (p.tag == Tag::Inside && repairs) ++*repairs;
    chunks.push_back({p.name, i, i});
    open = true;
  }
  return chunks;
}

inline std::vector<Chunk> chunks_from_labels(const std::vector<std::string>& labels,
                                             BioScheme scheme = BioScheme::Suffix,
                                             std::size_t* repairs = nullptr) {
  return chunks_from_labels(std::span<const std::string>(labels), scheme, repairs);
}

// Count of "X-I" labels whose predecessor is not X-B or X-I.
inline std::size_t count_invalid_transitions(std::span<const std::string> labels, BioScheme scheme) {
  if (scheme == BioScheme::Plain) return 0;
  std::size_t repairs = 0;
  chunks_from_labels(labels, scheme, &repairs);
  return repairs;
}

inline std::optional<BioScheme> parse_bio_scheme(std::string_view s) {
  if (s == "suffix") return BioScheme::Suffix;
  if (s == "prefix") return BioScheme::Prefix;
  if (s == "plain") return BioScheme::Plain;
  return std::nullopt;
}

inline const char* bio_scheme_name(BioScheme s) {
  switch (s) {
    case BioScheme::Suffix: return "suffix";
    case BioScheme::Prefix: return "prefix";
    case BioScheme::Plain: return "plain";
  }
  return "suffix";
}

}  // namespace irnn
