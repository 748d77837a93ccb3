#include "cknn/io.hpp"
#include "cknn/pipeline.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <cstring>
#include <unistd.h>

using namespace cknn;
namespace fs = std::filesystem;

namespace {

std::string encode(const DatasetManifest& m, DatasetFormat f) {
  std::ostringstream os;
  write_dataset(os, m, f);
  return os.str();
}

DatasetManifest decode(const std::string& bytes) {
  std::istringstream is(bytes);
  return read_dataset(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cknn_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(DatasetIo, EmptyRecordList) {
  DatasetManifest m;
  m.d_app = 512;
  m.d_mot = 8;
  for (auto f : {DatasetFormat::Binary, DatasetFormat::Text}) {
    auto back = decode(encode(m, f));
    EXPECT_EQ(back.d_app, 512u);
    EXPECT_EQ(back.d_mot, 8u);
    EXPECT_TRUE(back.objects.empty());
  }
}

TEST(DatasetIo, HeaderBytes) {
  DatasetManifest m;
  m.d_app = 512;
  m.d_mot = 8;
  const auto b = encode(m, DatasetFormat::Binary);
  const unsigned char expect[] = {'C', 'K', 'N', 'N', 1, 0, 0, 0, 0, 2, 0, 0, 8, 0, 0, 0,
                                  0,   0,   0,   0,   0, 0, 0, 0, 0, 0, 0, 0};
  ASSERT_EQ(b.size(), sizeof expect);
  EXPECT_EQ(std::memcmp(b.data(), expect, sizeof expect), 0);
}

TEST(DatasetIo, RandomRoundTripsAreByteStable) {
  std::mt19937_64 g(1);
  for (int i = 0; i < 100; ++i) {
    auto m = oracle::random_manifest(g, i % 2 == 0);
    for (auto f : {DatasetFormat::Binary, DatasetFormat::Text}) {
      const auto bytes = encode(m, f);
      const auto back = decode(bytes);
      ASSERT_EQ(back, m);
      EXPECT_EQ(encode(back, f), bytes);
    }
  }
}

TEST(DatasetIo, TextAndBinaryAgree) {
  std::mt19937_64 g(2);
  auto m = oracle::random_manifest(g, true);
  EXPECT_EQ(decode(encode(m, DatasetFormat::Text)), decode(encode(m, DatasetFormat::Binary)));
}

TEST(DatasetIo, CorruptHeadersRejected) {
  std::mt19937_64 g(3);
  auto m = oracle::random_manifest(g, false);
  auto b = encode(m, DatasetFormat::Binary);
  auto bad = b;
  bad[0] = 'X';
  EXPECT_THROW(decode(bad), ParseError);
  bad = b;
  bad[4] = 2;  // version
  EXPECT_THROW(decode(bad), ParseError);
  bad = b;
  bad[16] = static_cast<char>(bad[16] + 1);  // record count
  EXPECT_THROW(decode(bad), ParseError);
  EXPECT_THROW(decode(b.substr(0, b.size() - 1)), ParseError);
  EXPECT_THROW(decode(b + "x"), ParseError);
  EXPECT_THROW(decode(""), ParseError);
}

TEST(DatasetIo, ErrorsNameTheLocation) {
  DatasetManifest m;
  m.d_app = 256;
  m.d_mot = 1;
  m.videos.push_back({"v", 1, std::nullopt});
  ObjectRecord o{"v", 0, 0, std::nullopt, std::vector<float>(256, 0.5f), {1}};
  m.objects.push_back(o);
  auto text = encode(m, DatasetFormat::Text);
  // Widen the second line's app vector to 512 values.
  std::ostringstream wide;
  wide << "[";
  for (int i = 0; i < 512; ++i) wide << (i ? "," : "") << "0.5";
  wide << "]";
  const auto start = text.find("\"app\":[") + 6;
  const auto end = text.find(']', start) + 1;
  text.replace(start, end - start, wide.str());
  try {
    decode(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("512"), std::string::npos) << e.what();
  }

  auto bin = encode(m, DatasetFormat::Binary);
  const auto rec = bin.size() - (12 + 16 + 257 * 4);
  std::string nan_bytes("\x00\x00\xc0\x7f", 4);
  bin.replace(rec + 12 + 16, 4, nan_bytes);
  try {
    decode(bin);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte " + std::to_string(rec)), std::string::npos)
        << e.what();
  }
}

TEST(DatasetIo, DuplicateKeyRejected) {
  DatasetManifest m;
  m.d_app = 1;
  m.d_mot = 1;
  m.videos.push_back({"v", 2, std::nullopt});
  m.objects.push_back({"v", 0, 0, std::nullopt, {1}, {1}});
  m.objects.push_back({"v", 1, 0, std::nullopt, {1}, {1}});
  auto text = encode(m, DatasetFormat::Text);
  const auto pos = text.rfind("\"frame\":1");
  text.replace(pos, 9, "\"frame\":0");
  EXPECT_THROW(decode(text), ParseError);
}

TEST(DatasetIo, FileHelpers) {
  std::mt19937_64 g(4);
  auto m = oracle::random_manifest(g, true);
  auto dir = temp_dir("files");
  fs::create_directories(dir);
  for (auto name : {"a.bin", "a.jsonl"}) {
    write_dataset(dir / name, m, format_for_path(dir / name));
    EXPECT_EQ(read_dataset(dir / name), m);
  }
  EXPECT_EQ(format_for_path("x.jsonl"), DatasetFormat::Text);
  EXPECT_EQ(format_for_path("x.cknn"), DatasetFormat::Binary);
  EXPECT_THROW(read_dataset(dir / "missing.bin"), ParseError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------


TEST(BundleIo, RandomRoundTripsAreByteStable) {
  std::mt19937_64 g(5);
  auto dir = temp_dir("bundle");
  auto dir2 = temp_dir("bundle2");
  for (int i = 0; i < 100; ++i) {
    auto b = oracle::random_bundle(g);
    save_bundle(b, dir);
    auto back = load_bundle(dir);
    ASSERT_TRUE(back == b) << "instance " << i;
    save_bundle(back, dir2);
    for (auto name : {"bundle.txt", "app_bank.bin", "mot_bank.bin"}) {
      ASSERT_EQ(slurp(dir / name), slurp(dir2 / name)) << name;
    }
    EXPECT_EQ(fs::exists(dir / "gmm_app.bin"), b.app_gmm.has_value());
    if (b.app_gmm) EXPECT_EQ(slurp(dir / "gmm_app.bin"), slurp(dir2 / "gmm_app.bin"));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(BundleIo, ZeroSigmaLoadsDegenerate) {
  std::mt19937_64 g(6);
  auto b = oracle::random_bundle(g);
  b.app_stats = {1.0, 0.0, true};
  auto dir = temp_dir("degenerate");
  save_bundle(b, dir);
  // Even if the flag in the manifest is cleared, loading recomputes it.
  auto text = slurp(dir / "bundle.txt");
  text.replace(text.find("app_degenerate=1"), 16, "app_degenerate=0");
  std::ofstream(dir / "bundle.txt", std::ios::trunc) << text;
  auto back = load_bundle(dir);
  EXPECT_TRUE(back.app_stats.degenerate);
  EXPECT_EQ(back.app_stats.stddev, 0.0);
  fs::remove_all(dir);
}

TEST(BundleIo, TamperingRejected) {
  std::mt19937_64 g(7);
  auto b = oracle::random_bundle(g);
  auto dir = temp_dir("tamper");
  save_bundle(b, dir);
  const auto bank = slurp(dir / "app_bank.bin");

  auto bad = bank;
  bad[1] = 'Z';
  std::ofstream(dir / "app_bank.bin", std::ios::binary | std::ios::trunc) << bad;
  EXPECT_THROW(load_bundle(dir), ParseError);

  std::ofstream(dir / "app_bank.bin", std::ios::binary | std::ios::trunc) << bank;
  EXPECT_NO_THROW(load_bundle(dir));
  const auto text = slurp(dir / "bundle.txt");
  auto wrong_dim = text;
  const auto pos = wrong_dim.find("d_app=");
  wrong_dim.replace(pos, wrong_dim.find('\n', pos) - pos, "d_app=99");
  std::ofstream(dir / "bundle.txt", std::ios::trunc) << wrong_dim;
  EXPECT_THROW(load_bundle(dir), ParseError);

  std::ofstream(dir / "bundle.txt", std::ios::trunc) << text;
  fs::remove(dir / "mot_bank.bin");
  EXPECT_THROW(load_bundle(dir), ParseError);
  fs::remove_all(dir);
}

TEST(BundleIo, GmmBlobRoundTrip) {
  Eigen::MatrixXd means(2, 2);
  means << 0.1, 0.2, 0.3, 0.4;
  std::vector<Eigen::MatrixXd> covs{Eigen::MatrixXd::Identity(2, 2), 2 * Eigen::MatrixXd::Identity(2, 2)};
  GmmModel m({0.4, 0.6}, means, covs, {3, -12.5, {-20, -13, -12.5}, 0});
  std::stringstream ss;
  write_gmm_blob(ss, m);
  EXPECT_EQ(ss.str().substr(0, 4), "CKNG");
  auto back = read_gmm_blob(ss);
  EXPECT_TRUE(back == m);
  EXPECT_EQ(back.info().log_likelihood_trace, m.info().log_likelihood_trace);
}
