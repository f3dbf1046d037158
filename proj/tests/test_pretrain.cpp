#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "irnn/pretrain.hpp"

using namespace irnn;
namespace fs = std::filesystem;

namespace {

NnlmConfig small_nnlm(std::size_t context, std::size_t epochs) {
  NnlmConfig c;
  c.dim = 8;
  c.hidden = 16;
  c.context = context;
  c.epochs = epochs;
  return c;
}

double next_prob(const NnlmParams& p, std::vector<int> ctx, int target) {
  NnlmCache c;
  nnlm_forward(p, ctx, c);
  return c.probs[std::size_t(target)];
}

fs::path temp_file(const std::string& name, const std::string& content) {
  auto p = fs::temp_directory_path() / name;
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST(Nnlm, LearnsAlternation) {
  NnlmCorpus corpus;
  corpus.rows = 4;
  corpus.pad = 0;
  for (int s = 0; s < 20; ++s) corpus.sequences.push_back({2, 3, 2, 3, 2, 3, 2, 3});
  auto res = train_nnlm(corpus, small_nnlm(1, 30));
  EXPECT_GT(next_prob(res.params, {2}, 3), 0.99);
  EXPECT_GT(next_prob(res.params, {3}, 2), 0.99);
  EXPECT_GT(next_prob(res.params, {0}, 2), 0.99);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
}

TEST(Nnlm, InitialLossNearUniform) {
  NnlmCorpus corpus;
  corpus.rows = 60;
  corpus.pad = 0;
  corpus.end = 1;
  Rng rng(4);
  for (int s = 0; s < 50; ++s) {
    std::vector<int> seq;
    for (int t = 0; t < 10; ++t) seq.push_back(2 + int(rng.below(58)));
    corpus.sequences.push_back(seq);
  }
  NnlmConfig cfg;
  cfg.epochs = 1;
  auto res = train_nnlm(corpus, cfg);
  EXPECT_NEAR(res.initial_loss, std::log(60.0), 0.05 * std::log(60.0));
}

TEST(Nnlm, GradientMatchesFiniteDifference) {
  Rng rng(5);
  NnlmConfig cfg = small_nnlm(3, 1);
  cfg.dim = 3;
  cfg.hidden = 4;
  NnlmParams p = NnlmParams::init(5, cfg, rng);
  std::vector<int> ids{0, 3, 4};
  const int target = 2;
  auto loss = [&] {
    NnlmCache c;
    nnlm_forward(p, ids, c);
    return -std::log(c.probs[target]);
  };
  NnlmCache c;
  nnlm_forward(p, ids, c);
  NnlmParams g = p.zeros_like();
  nnlm_backward(p, c, target, g);
  std::vector<std::pair<Matrix*, Matrix*>> pairs{{&p.emb.table, &g.emb.table}, {&p.hidden.w, &g.hidden.w},
                                                 {&p.hidden.b, &g.hidden.b},   {&p.output.w, &g.output.w},
                                                 {&p.output.b, &g.output.b}};
  for (auto [pm, gm] : pairs) {
    auto w = pm->flat();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i], eps = 1e-6;
      w[i] = keep + eps;
      double up = loss();
      w[i] = keep - eps;
      double down = loss();
      w[i] = keep;
      EXPECT_NEAR(gm->flat()[i], (up - down) / (2 * eps), 1e-7);
    }
  }
}

TEST(Nnlm, SharedContextsGiveSimilarEmbeddings) {
  // boston and denver share every context; cat and dog share others
  std::vector<RawSentence> sents;
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    std::string city = rng.below(2) ? "boston" : "denver";
    std::string pet = rng.below(2) ? "cat" : "dog";
    sents.push_back({{"i", "-", "O"}, {"fly", "-", "O"}, {"to", "-", "O"}, {city, "-", "O"}, {"today", "-", "O"}});
    sents.push_back({{"the", "-", "O"}, {pet, "-", "O"}, {"is", "-", "O"}, {"red", "-", "O"}});
  }
  Vocabulary v = build_vocabulary(sents);
  ColumnCorpus cc{2, sents};
  NnlmConfig cfg = small_nnlm(2, 10);
  cfg.dim = 10;
  auto res = train_nnlm(nnlm_corpus(cc, v, EmbeddingSection::Words), cfg);
  auto row = [&](const char* w) { return res.params.emb.table.row(std::size_t(*v.words.find(w))); };
  const double same_city = cosine(row("boston"), row("denver"));
  const double same_pet = cosine(row("cat"), row("dog"));
  EXPECT_GT(same_city, cosine(row("boston"), row("cat")));
  EXPECT_GT(same_city, cosine(row("denver"), row("dog")));
  EXPECT_GT(same_pet, cosine(row("dog"), row("boston")));
}

TEST(Nnlm, LabelSectionUsesBolPadding) {
  std::vector<RawSentence> sents{{{"a", "-", "O"}, {"b", "-", "x-B"}}};
  Vocabulary v = build_vocabulary(sents);
  ColumnCorpus cc{2, sents};
  NnlmCorpus lc = nnlm_corpus(cc, v, EmbeddingSection::Labels);
  EXPECT_EQ(lc.pad, v.bol());
  EXPECT_EQ(lc.rows, v.label_rows());
  EXPECT_EQ(lc.end, -1);
  EXPECT_EQ(lc.sequences[0], (std::vector<int>{*v.labels.find("O"), *v.labels.find("x-B")}));
}

TEST(Nnlm, RejectsBadConfig) {
  NnlmCorpus corpus;
  corpus.rows = 3;
  EXPECT_THROW(train_nnlm(corpus, small_nnlm(1, 1)), ConfigError);
  corpus.sequences.push_back({1, 2});
  EXPECT_THROW(train_nnlm(corpus, small_nnlm(0, 1)), ConfigError);
  EXPECT_THROW(train_nnlm(corpus, small_nnlm(1, 0)), ConfigError);
}

TEST(Nnlm, ConfigFollowsTrainingDefaults) {
  TrainConfig tc;
  NnlmConfig w = nnlm_config_from(tc, EmbeddingSection::Words);
  NnlmConfig l = nnlm_config_from(tc, EmbeddingSection::Labels);
  EXPECT_EQ(w.epochs, 30u);
  EXPECT_EQ(l.epochs, 20u);
  EXPECT_EQ(w.dim, tc.embed_size);
  EXPECT_EQ(w.context, 4u);
}

TEST(EmbeddingFile, RoundTrip) {
  std::vector<RawSentence> sents{{{"Hello", "-", "O"}, {"world", "-", "x-B"}}};
  Vocabulary v = build_vocabulary(sents);
  Rng rng(7);
  Matrix words = xavier_init(v.words.size(), 4, rng);
  Matrix labels = xavier_init(v.label_rows(), 4, rng);
  auto wp = fs::temp_directory_path() / "irnn_words.emb", lp = fs::temp_directory_path() / "irnn_labels.emb";
  save_embeddings(wp.string(), v, EmbeddingSection::Words, words);
  save_embeddings(lp.string(), v, EmbeddingSection::Labels, labels);
  Matrix w2(words.rows(), 4), l2(labels.rows(), 4);
  EXPECT_EQ(load_external_embeddings(wp.string(), v, EmbeddingSection::Words, w2), words.rows());
  EXPECT_EQ(load_external_embeddings(lp.string(), v, EmbeddingSection::Labels, l2), labels.rows());
  EXPECT_EQ(w2.flat().size(), words.flat().size());
  for (std::size_t i = 0; i < words.size(); ++i) EXPECT_EQ(w2.flat()[i], words.flat()[i]);
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(l2.flat()[i], labels.flat()[i]);
  fs::remove(wp);
  fs::remove(lp);
}

TEST(EmbeddingFile, PartialEmptyAndMalformed) {
  std::vector<RawSentence> sents{{{"hello", "-", "O"}, {"world", "-", "O"}}};
  Vocabulary v = build_vocabulary(sents);
  Matrix t(v.words.size(), 2);
  t.fill(9.0);
  auto partial = temp_file("irnn_partial.emb", "World 1 2\nunseen 3 4\n\n");
  EXPECT_EQ(load_external_embeddings(partial.string(), v, EmbeddingSection::Words, t), 1u);
  const auto world = std::size_t(*v.words.find("world")), hello = std::size_t(*v.words.find("hello"));
  EXPECT_EQ(t(world, 0), 1.0);
  EXPECT_EQ(t(world, 1), 2.0);
  EXPECT_EQ(t(hello, 0), 9.0);

  auto empty = temp_file("irnn_empty.emb", "");
  EXPECT_EQ(load_external_embeddings(empty.string(), v, EmbeddingSection::Words, t), 0u);
  auto wide = temp_file("irnn_wide.emb", "hello 1 2 3\n");
  EXPECT_THROW(load_external_embeddings(wide.string(), v, EmbeddingSection::Words, t), ConfigError);
  auto junk = temp_file("irnn_junk.emb", "hello 1 x\n");
  EXPECT_THROW(load_external_embeddings(junk.string(), v, EmbeddingSection::Words, t), ConfigError);
  EXPECT_THROW(load_external_embeddings("/nonexistent.emb", v, EmbeddingSection::Words, t), ConfigError);
  for (const auto& p : {partial, empty, wide, junk}) fs::remove(p);
}
