// Drives the cknn binary end to end through a shell.

#include "cknn/eval.hpp"
#include "cknn/io.hpp"
#include "cknn/pipeline.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>

#ifndef CKNN_CLI_PATH
#error "CKNN_CLI_PATH must point at the cknn binary"
#endif

using namespace cknn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(CKNN_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("cknn_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    auto r = cli("-q synth --seed 5 --train-videos 3 --test-videos 2 --frames 120 --train-out " +
                 (dir_ / "train.bin").string() + " --test-out " + (dir_ / "test.jsonl").string() +
                 " --truth-out " + (dir_ / "truth.json").string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, SynthWritesReadableSplits) {
  auto train = read_dataset(path("train.bin"));
  auto test = read_dataset(path("test.jsonl"));
  EXPECT_EQ(train.videos.size(), 3u);
  EXPECT_EQ(test.videos.size(), 2u);
  EXPECT_FALSE(train.has_labels());
  EXPECT_TRUE(test.has_labels());
  EXPECT_TRUE(fs::exists(path("truth.json")));
}

TEST_F(Cli, FitReportsBankSizesAndIsDeterministic) {
  const auto n = read_dataset(path("train.bin")).objects.size();
  auto a = cli("fit --train " + path("train.bin") + " --out " + path("b1") + " --tau 25 --p 1");
  ASSERT_EQ(a.code, 0) << a.out;
  auto b = cli("-q fit --train " + path("train.bin") + " --out " + path("b2") + " --tau 25 --p 1");
  ASSERT_EQ(b.code, 0) << b.out;
  const auto kept = n - n / 4;
  const auto rows = std::max<std::size_t>(1, kept / 100);
  EXPECT_NE(slurp(path("b1/bundle.txt")).find("app_bank_rows=" + std::to_string(rows) + "\n"),
            std::string::npos);
  for (const auto& e : fs::directory_iterator(path("b1"))) {
    EXPECT_EQ(slurp(e.path()), slurp(path("b2") / e.path().filename())) << e.path();
  }
  EXPECT_NE(a.out.find(std::to_string(n)), std::string::npos) << a.out;
}

TEST_F(Cli, FullRemovalFails) {
  auto r = cli("fit --train " + path("train.bin") + " --out " + path("bad") + " --tau 100");
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(cli("fit --train " + path("train.bin")).code, 2);                   // missing --out
  EXPECT_EQ(cli("fit --train " + path("train.bin") + " --out x --p 0").code, 2);  // invalid p
  EXPECT_EQ(cli("fit --train " + path("nope.bin") + " --out " + path("x")).code, 3);
  EXPECT_EQ(cli("eval --train " + path("train.bin") + " --test " + path("train.bin")).code, 3);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST_F(Cli, ScoreWritesOneRowPerFrame) {
  ASSERT_EQ(cli("-q fit --train " + path("train.bin") + " --out " + path("bs") + " --p 20").code, 0);
  auto r = cli("-q score --bundle " + path("bs") + " --test " + path("test.jsonl") + " --out " +
               path("scores.tsv") + " --detail " + path("detail.tsv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(path("scores.tsv"));
  std::string line;
  std::size_t rows = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# cknn score", 0) == 0) saw_header = true;
    if (!line.empty() && line[0] != '#') ++rows;
  }
  EXPECT_TRUE(saw_header);
  EXPECT_EQ(rows, 240u);
}

TEST_F(Cli, EvalMatchesLibrary) {
  auto r = cli("-q eval --train " + path("train.bin") + " --test " + path("test.jsonl") +
               " --mode merge --p 50 --seed 3 --out " + path("eval.txt") + " --records " +
               path("eval.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::smatch m;
  const auto text = slurp(path("eval.txt"));
  ASSERT_TRUE(std::regex_search(text, m, std::regex("mean_auroc\\t([0-9.]+)"))) << text;
  EXPECT_NE(text.find("# p=50"), std::string::npos);

  ProtocolOptions opt;
  opt.cleanse.hyperparams.p = 50;
  opt.cleanse.hyperparams.seed = 3;
  auto lib = run_protocol(read_dataset(path("train.bin")), read_dataset(path("test.jsonl")),
                          ProtocolMode::Merge, opt);
  EXPECT_NEAR(std::stod(m[1]), lib.mean_auroc, 5e-5);
}

TEST_F(Cli, MergePlusPrintsAudit) {
  auto r = cli("eval --train " + path("train.bin") + " --test " + path("test.jsonl") +
               " --mode merge_plus --p 50");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("audit: 0 bank rows from test_000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("audit: 0 bank rows from test_001"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("2 runs"), std::string::npos) << r.out;
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  std::ofstream(path("cfg.txt")) << "p=50\nseed=3\ntau=10\n";
  auto r = cli("-q eval --config " + path("cfg.txt") + " --tau 20 --train " + path("train.bin") +
               " --test " + path("test.jsonl") + " --out " + path("cfg_eval.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto text = slurp(path("cfg_eval.txt"));
  EXPECT_NE(text.find("# tau=20"), std::string::npos) << text;
  EXPECT_NE(text.find("# p=50"), std::string::npos) << text;
}

TEST_F(Cli, SweepProducesOneCellPerValue) {
  auto r = cli("-q eval --train " + path("train.bin") + " --test " + path("test.jsonl") +
               " --p 50 --sweep tau=0,25");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("cell {\"tau\":0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("cell {\"tau\":25"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchAndSuggestTau) {
  auto b = cli("bench --rows 500 --dim 8 --bench-duration 0.05 --format kv");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(b.out.find("bank_rows=500"), std::string::npos) << b.out;
  auto t = cli("-q suggest-tau --train " + path("train.bin") + " --out " + path("tau.json"));
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(path("tau.json")));
}
