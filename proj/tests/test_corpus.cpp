#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "irnn/corpus.hpp"
#include "irnn/synthetic.hpp"

using namespace irnn;

namespace {

ColumnCorpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_column_stream(in);
}

std::vector<std::string> L(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST(ColumnFile, ParsesAnnotatedExample) {
  ColumnCorpus c = parse("Delta\tairline\tairline-name\nBoston\tcity\tfromloc.city\n");
  ASSERT_EQ(c.sentences.size(), 1u);
  ASSERT_EQ(c.sentences[0].size(), 2u);
  EXPECT_TRUE(c.has_classes());
  EXPECT_EQ(c.sentences[0][0], (Token{"Delta", "airline", "airline-name"}));
  EXPECT_EQ(c.sentences[0][1], (Token{"Boston", "city", "fromloc.city"}));
}

TEST(ColumnFile, EmptyInputIsEmptyCorpus) {
  EXPECT_TRUE(parse("").sentences.empty());
  EXPECT_TRUE(parse("\n\n  \n").sentences.empty());
}

TEST(ColumnFile, BlankLinesSeparateSentencesAndCrIsStripped) {
  ColumnCorpus c = parse("a\tO\r\nb\tO\r\n\r\n\r\nc\tO\n");
  ASSERT_EQ(c.sentences.size(), 2u);
  EXPECT_EQ(c.sentences[0].size(), 2u);
  EXPECT_EQ(c.sentences[1][0].word, "c");
  EXPECT_EQ(c.sentences[1][0].cls, "-");
}

TEST(ColumnFile, InconsistentColumnsReportLine) {
  try {
    parse("a\tx\tO\nb\tO\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("a\n"), DataError);
  EXPECT_THROW(parse("a\tb\tc\td\n"), DataError);
}

TEST(ColumnFile, RoundTrip) {
  ColumnCorpus c = parse("I\t-\tO\nfly\t-\tO\n\nto\t-\tO\nNew\tcity\ttoloc.city-B\nYork\tcity\ttoloc.city-I\n");
  auto path = std::filesystem::temp_directory_path() / "irnn_corpus_roundtrip.txt";
  write_column_file(path.string(), c);
  EXPECT_EQ(load_column_file(path.string()), c);
  std::filesystem::remove(path);
}

TEST(ColumnFile, MissingFileIsError) { EXPECT_THROW(load_column_file("/nonexistent/x.txt"), DataError); }

TEST(Vocabulary, ThreeTypesPlusReserved) {
  ColumnCorpus c = parse("a\tO\nb\tO\nc\tX-B\na\tO\n");
  VocabStats st;
  Vocabulary v = build_vocabulary(c.sentences, 1, true, &st);
  EXPECT_EQ(v.words.size(), 3u + 3u);
  EXPECT_EQ(st.word_types, 3u);
  EXPECT_EQ(st.training_tokens, 4u);
  EXPECT_EQ(v.labels.size(), 2u);
  EXPECT_EQ(v.bol(), 2);
  EXPECT_EQ(v.label_rows(), 3u);
  EXPECT_EQ(v.words.token(Vocabulary::kBos), "<bos>");
  EXPECT_EQ(v.words.token(Vocabulary::kEos), "<eos>");
  EXPECT_EQ(v.words.token(Vocabulary::kUnk), "<unk>");
}

TEST(Vocabulary, MinCountMapsRareWordsToUnk) {
  ColumnCorpus c = parse("a\tO\na\tO\nb\tO\n");
  Vocabulary v = build_vocabulary(c.sentences, 2);
  EXPECT_TRUE(v.words.find("a"));
  EXPECT_FALSE(v.words.find("b"));
  EncodedSequence s = encode(c.sentences[0], v);
  EXPECT_EQ(s.words[2], Vocabulary::kUnk);
}

TEST(Vocabulary, EmptyTrainingSetRejected) { EXPECT_THROW(build_vocabulary({}), ConfigError); }

TEST(Vocabulary, DevWordAbsentFromTrainingIsUnk) {
  Vocabulary v = build_vocabulary(parse("boston\tO\n").sentences);
  EncodedSequence s = encode(parse("denver\tO\n").sentences[0], v);
  EXPECT_EQ(s.words[0], Vocabulary::kUnk);
}

TEST(Vocabulary, MatchesIndependentCountOnSyntheticCorpus) {
  Rng rng(31);
  Grammar g = parse_grammar(builtin_flights_grammar());
  ColumnCorpus c;
  std::size_t tokens = 0;
  while (tokens < 10000) {
    c.sentences.push_back(generate_sentence(g, rng));
    tokens += c.sentences.back().size();
  }
  VocabStats st;
  Vocabulary v = build_vocabulary(c.sentences, 1, true, &st);

  std::set<std::string> forms, labels, classes;
  std::size_t n = 0;
  for (const auto& s : c.sentences)
    for (const auto& t : s) {
      std::string w = t.word;
      for (char& ch : w) ch = char(std::tolower(static_cast<unsigned char>(ch)));
      forms.insert(w);
      labels.insert(t.label);
      if (t.cls != "-") classes.insert(t.cls);
      ++n;
    }
  EXPECT_EQ(st.training_tokens, n);
  EXPECT_EQ(st.word_types, forms.size());
  EXPECT_EQ(v.words.size(), forms.size() + 3);
  EXPECT_EQ(v.labels.size(), labels.size());
  EXPECT_EQ(v.classes.size(), classes.size() + 4);
  for (const auto& w : forms) EXPECT_TRUE(v.words.find(w)) << w;
}

TEST(Vocabulary, SerializeRoundTripAndHashStable) {
  Vocabulary v = build_vocabulary(parse("Fly\tverb\tO\nBoston\tcity\tcity-B\n").sentences);
  std::string text = v.serialize();
  Vocabulary w = Vocabulary::deserialize(text);
  EXPECT_EQ(v, w);
  EXPECT_EQ(v.hash(), w.hash());
  EXPECT_EQ(text.rfind("irnn-vocabulary\t1\n", 0), 0u);
  EXPECT_NE(text.find("\tboston\n"), std::string::npos);
  EXPECT_NE(text.find("\t<bol>\n"), std::string::npos);
  EXPECT_THROW(Vocabulary::deserialize("junk"), DataError);
  EXPECT_THROW(Vocabulary::deserialize(text.substr(0, text.size() / 2)), DataError);
}

TEST(Encode, KnownTokensRoundTrip) {
  ColumnCorpus c = parse("show\t-\tO\nflights\t-\tO\nto\t-\tO\nboston\tcity\ttoloc.city-B\n");
  Vocabulary v = build_vocabulary(c.sentences);
  EncodedSequence s = encode(c.sentences[0], v);
  ASSERT_EQ(s.size(), 4u);
  std::vector<std::string> words;
  for (auto& t : c.sentences[0]) words.push_back(t.word);
  EXPECT_EQ(decode_words(s.words, v), words);
  EXPECT_EQ(decode_labels(s.labels, v), L({"O", "O", "O", "toloc.city-B"}));
  EXPECT_EQ(s.classes[0], Vocabulary::kNoClass);
  EXPECT_EQ(v.classes.token(s.classes[3]), "city");
}

TEST(Encode, CharArraysFollowWordLengthAndKeepCase) {
  ColumnCorpus c = parse("Boston\tO\nNYC\tO\n");
  Vocabulary v = build_vocabulary(c.sentences);
  EncodedSequence s = encode(c.sentences[0], v);
  EXPECT_EQ(s.chars[0].size(), 6u);
  EXPECT_EQ(s.chars[1].size(), 3u);
  EXPECT_EQ(v.chars.token(s.chars[0][0]), "B");
  EXPECT_EQ(v.words.token(s.words[0]), "boston");
  EncodedSequence u = encode(parse("Zürich\tO\n").sentences[0], v, LabelPolicy::Strict, false);
  EXPECT_EQ(u.chars[0].size(), 6u);
  EXPECT_EQ(u.chars[0][0], Vocabulary::kCharUnk);
  EXPECT_FALSE(u.has_classes());
}

TEST(Encode, UnknownGoldLabelStrictVsLenient) {
  Vocabulary v = build_vocabulary(parse("a\tO\n").sentences);
  RawSentence s = parse("a\tmystery-B\n").sentences[0];
  try {
    encode(s, v, LabelPolicy::Strict);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("mystery-B"), std::string::npos);
  }
  EXPECT_EQ(encode(s, v, LabelPolicy::Lenient).labels[0], Vocabulary::kUnknownLabel);
}

TEST(Chunks, MediaExample) {
  auto ch = chunks_from_labels(L({"Answer-B", "BDObject-B", "BDObject-I"}));
  ASSERT_EQ(ch.size(), 2u);
  EXPECT_EQ(ch[0], (Chunk{"Answer", 0, 0}));
  EXPECT_EQ(ch[1], (Chunk{"BDObject", 1, 2}));
}

TEST(Chunks, AllOutsideIsEmpty) { EXPECT_TRUE(chunks_from_labels(L({"O", "O", "O"})).empty()); }

TEST(Chunks, AllTwoLabelCasesUnderRepairRule) {
  // X-B/X-I/Y-B/Y-I/O pairs enumerated by hand
  struct Case {
    std::vector<std::string> labels;
    std::vector<Chunk> chunks;
    std::size_t repairs;
  };
  std::vector<Case> cases = {
      {L({"X-I", "X-I"}), {{"X", 0, 1}}, 1},
      {L({"X-B", "X-I"}), {{"X", 0, 1}}, 0},
      {L({"X-B", "X-B"}), {{"X", 0, 0}, {"X", 1, 1}}, 0},
      {L({"X-I", "X-B"}), {{"X", 0, 0}, {"X", 1, 1}}, 1},
      {L({"O", "X-I"}), {{"X", 1, 1}}, 1},
      {L({"X-B", "Y-I"}), {{"X", 0, 0}, {"Y", 1, 1}}, 1},
      {L({"X-I", "O"}), {{"X", 0, 0}}, 1},
      {L({"O", "O"}), {}, 0},
      {L({"X-B", "O"}), {{"X", 0, 0}}, 0},
  };
  for (const auto& c : cases) {
    std::size_t repairs = 0;
    EXPECT_EQ(chunks_from_labels(c.labels, BioScheme::Suffix, &repairs), c.chunks) << c.labels[0] << " " << c.labels[1];
    EXPECT_EQ(repairs, c.repairs);
    EXPECT_EQ(count_invalid_transitions(c.labels, BioScheme::Suffix), c.repairs);
  }
}

TEST(Chunks, SpansPartitionNonOutsidePositions) {
  Rng rng(6);
  const std::vector<std::string> alphabet = {"O", "A-B", "A-I", "B-B", "B-I"};
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<std::string> ls(1 + rng.below(12));
    for (auto& l : ls) l = alphabet[rng.below(alphabet.size())];
    std::vector<int> cover(ls.size(), 0);
    for (const auto& c : chunks_from_labels(ls)) {
      ASSERT_LE(c.start, c.end);
      for (std::size_t i = c.start; i <= c.end; ++i) ++cover[i];
    }
    for (std::size_t i = 0; i < ls.size(); ++i) EXPECT_EQ(cover[i], ls[i] == "O" ? 0 : 1);
  }
}

TEST(Chunks, MalformedLabelIsDataError) {
  EXPECT_THROW(chunks_from_labels(L({"X-Q"})), DataError);
  EXPECT_THROW(chunks_from_labels(L({"X"})), DataError);
  EXPECT_THROW(chunks_from_labels(L({"-B"})), DataError);
  EXPECT_THROW(chunks_from_labels(L({""})), DataError);
}

TEST(Chunks, PrefixAndPlainSchemes) {
  auto p = chunks_from_labels(L({"B-LOC", "I-LOC", "O", "I-PER"}), BioScheme::Prefix);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], (Chunk{"LOC", 0, 1}));
  EXPECT_EQ(p[1], (Chunk{"PER", 3, 3}));
  auto q = chunks_from_labels(L({"fromloc.city", "fromloc.city", "O"}), BioScheme::Plain);
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q[1], (Chunk{"fromloc.city", 1, 1}));
  EXPECT_EQ(parse_bio_scheme("prefix"), BioScheme::Prefix);
  EXPECT_FALSE(parse_bio_scheme("bilou"));
}

TEST(Text, Utf8AndLowercase) {
  EXPECT_EQ(utf8_chars("aé€😀").size(), 4u);
  EXPECT_EQ(lowercase_ascii("BoSTON É"), "boston É");
}
