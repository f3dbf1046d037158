#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "irnn/cli.hpp"

using namespace irnn;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "irnn");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("irnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::vector<std::string> kSmall{"--set", "embed_size=12", "--set", "hidden_size=24",
                                      "--set", "d_w=2",         "--set", "epochs_fwd_bwd=25",
                                      "--set", "epochs_bidir=3", "--set", "deep_first_size=12"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST_F(CliTest, GenerateIsDeterministic) {
  ASSERT_EQ(run({"generate", "--out-dir", path("a"), "--size", "20", "--seed", "4"}).code, 0);
  ASSERT_EQ(run({"generate", "--out-dir", path("b"), "--size", "20", "--seed", "4"}).code, 0);
  for (const char* f : {"train.txt", "dev.txt", "test.txt"}) {
    EXPECT_EQ(cli::read_file(path("a/") + f), cli::read_file(path("b/") + f));
  }
  ASSERT_EQ(run({"generate", "--out-dir", path("c"), "--size", "20", "--seed", "5"}).code, 0);
  EXPECT_NE(cli::read_file(path("a/train.txt")), cli::read_file(path("c/train.txt")));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_NE(run({"generate", "--out-dir", path("z"), "--size", "0"}).code, 0);
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"frobnicate"}).code, 0);
  EXPECT_NE(run({"train", "--out", path("m")}).code, 0);
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "5"}).code, 0);
  CliRun r = run({"train", "--direction", "bidir", "--train", path("d/train.txt"), "--out", path("m")});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("--fwd-model"), std::string::npos);
  EXPECT_EQ(run({"train", "--variant", "lstm", "--train", path("d/train.txt"), "--out", path("m")}).code,
            cli::kUsage);
  EXPECT_EQ(run({"train", "--train", path("d/train.txt"), "--out", path("m"), "--set", "nope=1"}).code,
            cli::kFailure);
  EXPECT_EQ(run({"train", "--train", path("missing.txt"), "--out", path("m")}).code, cli::kFailure);
}

TEST_F(CliTest, MemorizationPipeline) {
  auto with_small = [](std::vector<std::string> args) {
    args = ::with_small(std::move(args));
    for (const char* kv : {"dropout_hidden=0", "dropout_embed=0", "lambda_l2=0"}) {
      args.push_back("--set");
      args.push_back(kv);
    }
    return args;
  };
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "10", "--seed", "2"}).code, 0);
  const std::string train = path("d/train.txt");
  for (const char* d : {"fwd", "bwd"}) {
    CliRun r = run(with_small({"train", "--variant", "irnn", "--direction", d, "--train", train, "--dev", train,
                            "--out", path(std::string(d) + ".model")}));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 25);
  }
  CliRun bi = run(with_small({"train", "--direction", "bidir", "--fwd-model", path("fwd.model"), "--bwd-model",
                           path("bwd.model"), "--train", train, "--dev", train, "--out", path("bi.model"),
                           "--log", path("bi.log")}));
  ASSERT_EQ(bi.code, 0) << bi.err;
  EXPECT_TRUE(bi.out.empty());
  EXPECT_FALSE(cli::read_file(path("bi.log")).empty());

  CliRun tag = run({"tag", "--model", path("bi.model"), "--input", train, "--output", path("pred.txt"), "--vocab",
                 path("fwd.model.vocab")});
  ASSERT_EQ(tag.code, 0) << tag.err;
  CliRun ev = run({"eval", train, path("pred.txt"), "--kv", path("metrics.txt")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(cli::read_file(path("metrics.txt")).find("f1=100\n"), std::string::npos) << ev.out;

  // words and classes pass through unchanged
  ColumnCorpus gold = load_column_file(train), pred = load_column_file(path("pred.txt"));
  ASSERT_EQ(gold.sentences.size(), pred.sentences.size());
  EXPECT_EQ(pred.columns, 3);
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    for (std::size_t j = 0; j < gold.sentences[i].size(); ++j) {
      EXPECT_EQ(gold.sentences[i][j].word, pred.sentences[i][j].word);
      EXPECT_EQ(gold.sentences[i][j].cls, pred.sentences[i][j].cls);
    }
  }
  auto summary = nlohmann::json::parse(cli::read_file(path("bi.model.summary.json")));
  EXPECT_EQ(summary["epochs"].size(), 3u);
  EXPECT_EQ(summary["direction"], "bidir");
}

TEST_F(CliTest, TagToStdoutAndVocabularyMismatch) {
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "6", "--seed", "3"}).code, 0);
  ASSERT_EQ(run({"generate", "--out-dir", path("e"), "--size", "6", "--seed", "4"}).code, 0);
  std::vector<std::string> small = with_small({"--set", "epochs_fwd_bwd=1"});
  auto train_args = [&](const std::string& data, const std::string& out) {
    std::vector<std::string> a{"train", "--train", data, "--out", out};
    a.insert(a.end(), small.begin(), small.end());
    return a;
  };
  ASSERT_EQ(run(train_args(path("d/train.txt"), path("d.model"))).code, 0);
  ASSERT_EQ(run(train_args(path("e/train.txt"), path("e.model"))).code, 0);
  CliRun t = run({"tag", "--model", path("d.model"), "--input", path("d/test.txt")});
  ASSERT_EQ(t.code, 0);
  std::istringstream tagged(t.out);
  ColumnCorpus parsed = parse_column_stream(tagged), input = load_column_file(path("d/test.txt"));
  ASSERT_EQ(parsed.sentences.size(), input.sentences.size());
  EXPECT_EQ(parsed.sentences[0].size(), input.sentences[0].size());
  EXPECT_EQ(run({"tag", "--model", path("d.model"), "--input", path("d/test.txt"), "--vocab",
                 path("e.model.vocab")})
                .code,
            cli::kFailure);
  CliRun bi = run({"train", "--direction", "bidir", "--fwd-model", path("d.model"), "--bwd-model", path("e.model"),
                "--train", path("d/train.txt"), "--out", path("x.model")});
  EXPECT_EQ(bi.code, cli::kFailure);
}

TEST_F(CliTest, EvalChecksAlignment) {
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "5", "--dev-size", "3", "--seed", "6"}).code, 0);
  CliRun same = run({"eval", path("d/dev.txt"), path("d/dev.txt"), "--kv", path("kv.txt")});
  ASSERT_EQ(same.code, 0);
  std::string kv = cli::read_file(path("kv.txt"));
  EXPECT_NE(kv.find("f1=100\n"), std::string::npos);
  EXPECT_NE(kv.find("cer=0\n"), std::string::npos);
  EXPECT_EQ(run({"eval", path("d/dev.txt"), path("d/train.txt")}).code, cli::kFailure);
  EXPECT_EQ(run({"eval", path("d/dev.txt"), path("d/dev.txt"), "--scheme", "bilou"}).code, cli::kUsage);
}

TEST_F(CliTest, ReproducibleManifestAndModel) {
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "8", "--seed", "7"}).code, 0);
  for (const char* m : {"a.model", "b.model"}) {
    ASSERT_EQ(run(with_small({"train", "--variant", "irnn-gru", "--train", path("d/train.txt"), "--dev",
                              path("d/dev.txt"), "--out", path(m), "--set", "epochs_fwd_bwd=2", "--log",
                              path(std::string(m) + ".log")}))
                  .code,
              0);
  }
  auto ma = nlohmann::json::parse(cli::read_file(path("a.model.manifest.json")));
  auto mb = nlohmann::json::parse(cli::read_file(path("b.model.manifest.json")));
  EXPECT_EQ(ma["digest"], mb["digest"]);
  EXPECT_EQ(ma["tool_version"], kToolVersion);
  EXPECT_TRUE(ma["inputs"].contains("train"));
  EXPECT_EQ(cli::read_file(path("a.model")), cli::read_file(path("b.model")));
  EXPECT_EQ(cli::read_file(path("a.model.log")), cli::read_file(path("b.model.log")));
  auto sa = nlohmann::json::parse(cli::read_file(path("a.model.summary.json")));
  EXPECT_EQ(sa["manifest_digest"], ma["digest"]);
}

TEST_F(CliTest, ConfigFileEnvironmentAndOverrides) {
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "5", "--seed", "8"}).code, 0);
  cli::write_text(path("c.cfg"), "embed_size=6\nhidden_size=10\nepochs_fwd_bwd=1\nd_w=1\n");
  ASSERT_EQ(run({"train", "--train", path("d/train.txt"), "--out", path("m1"), "--config", path("c.cfg"), "--set",
                 "seed=9"})
                .code,
            0);
  auto m1 = nlohmann::json::parse(cli::read_file(path("m1.manifest.json")));
  EXPECT_NE(m1["config"].get<std::string>().find("embed_size=6\n"), std::string::npos);
  EXPECT_EQ(m1["seed"], 9);
  ::setenv(kConfigEnvVar, path("c.cfg").c_str(), 1);
  CliRun r = run({"train", "--train", path("d/train.txt"), "--out", path("m2"), "--preset", "media-like", "--seed",
               "9"});
  ::unsetenv(kConfigEnvVar);
  ASSERT_EQ(r.code, 0) << r.err;
  auto m2 = nlohmann::json::parse(cli::read_file(path("m2.manifest.json")));
  EXPECT_NE(m2["config"].get<std::string>().find("conv_size=80\n"), std::string::npos);
  EXPECT_NE(m2["config"].get<std::string>().find("embed_size=6\n"), std::string::npos);
}

TEST_F(CliTest, PretrainDefaultsAndUse) {
  ASSERT_EQ(run({"generate", "--out-dir", path("d"), "--size", "5", "--seed", "9"}).code, 0);
  std::vector<std::string> tiny{"--set", "embed_size=4", "--set", "nnlm_hidden=8"};
  auto pre = [&](const char* target, const char* out) {
    std::vector<std::string> a{"pretrain", "--train", path("d/train.txt"), "--target", target, "--out", path(out)};
    a.insert(a.end(), tiny.begin(), tiny.end());
    return run(a);
  };
  CliRun w = pre("words", "w.emb"), l = pre("labels", "l.emb");
  ASSERT_EQ(w.code, 0) << w.err;
  ASSERT_EQ(l.code, 0) << l.err;
  EXPECT_NE(w.out.find("after 30 epochs"), std::string::npos);
  EXPECT_NE(l.out.find("after 20 epochs"), std::string::npos);
  EXPECT_EQ(pre("chars", "c.emb").code, cli::kUsage);
  CliRun t = run({"train", "--train", path("d/train.txt"), "--out", path("m"), "--word-emb", path("w.emb"),
               "--label-emb", path("l.emb"), "--set", "embed_size=4", "--set", "hidden_size=8", "--set",
               "epochs_fwd_bwd=1"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.err.find("word embeddings:"), std::string::npos);
}

#ifdef IRNN_TOOL_PATH
TEST_F(CliTest, InstalledBinaryExitCodes) {
  const std::string tool = IRNN_TOOL_PATH;
  EXPECT_EQ(std::system((tool + " --version > /dev/null").c_str()), 0);
  int rc = std::system((tool + " generate --out-dir " + path("g") + " --size 0 > /dev/null 2>&1").c_str());
  EXPECT_NE(rc, 0);
  EXPECT_EQ(std::system((tool + " generate --out-dir " + path("g") + " --size 3 > /dev/null").c_str()), 0);
  EXPECT_TRUE(fs::exists(path("g/train.txt")));
}
#endif
