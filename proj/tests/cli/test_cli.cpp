#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "helpers.hpp"
#include "wordmover/learn.hpp"
#include "wordmover/matrix_io.hpp"
#include "wordmover/synthetic.hpp"

using namespace wordmover;
using testing_helpers::read_file;
using testing_helpers::TempDir;
using testing_helpers::write_file;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run wme(std::vector<std::string> args) {
  args.insert(args.begin(), "wme");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = wme_cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string dataset_text(const TokenizedDataset& data) {
  std::ostringstream s;
  synthetic::write_dataset(data, s);
  return s.str();
}

std::vector<std::string> tsv_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream s(text);
  std::string line;
  while (std::getline(s, line)) rows.push_back(line);
  return rows;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::istringstream s(line);
  std::string x;
  while (std::getline(s, x, '\t')) f.push_back(x);
  return f;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    synthetic::ClusterSpec clusters;
    clusters.words_per_class = 15;
    clusters.shared_words = 10;
    clusters.dim = 5;
    clusters.seed = 11;
    write_text_embeddings(synthetic::clustered_table(clusters), dir / "emb.txt");

    synthetic::CorpusSpec separable;
    separable.docs = 60;
    separable.mean_length = 8;
    separable.seed = 12;
    data = synthetic::clustered_dataset(clusters, separable);
    write_file(dir / "data.tsv", dataset_text(data));

    synthetic::CorpusSpec noisy = separable;
    noisy.shared_probability = 0.8;
    noisy.seed = 13;
    noisy_data = synthetic::clustered_dataset(clusters, noisy);
    std::vector<std::size_t> tr;
    std::vector<std::size_t> te;
    for (std::size_t i = 0; i < noisy_data.size(); ++i) (i % 3 == 0 ? te : tr).push_back(i);
    train = noisy_data.subset(tr);
    test = noisy_data.subset(te);
    write_file(dir / "train.tsv", dataset_text(train));
    write_file(dir / "test.tsv", dataset_text(test));
    write_file(dir / "joint.tsv", dataset_text(train) + dataset_text(test));
  }

  std::string out_dir(const std::string& name) {
    fs::create_directories(dir / name);
    return (dir / name).string();
  }

  std::vector<std::string> base(const std::string& dataset, const std::string& output) {
    return {"--embeddings", (dir / "emb.txt").string(), "--dataset", (dir / dataset).string(),
            "--output-dir", output, "--omit-timing"};
  }

  static std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  TempDir dir;
  TokenizedDataset data;
  TokenizedDataset noisy_data;
  TokenizedDataset train;
  TokenizedDataset test;
};

}  // namespace

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(wme({}).code, wme_cli::kConfigError);
  EXPECT_EQ(wme({"embed", "--no-such-flag"}).code, wme_cli::kConfigError);
  EXPECT_EQ(wme({"embed", "--dataset", (dir / "data.tsv").string()}).code, wme_cli::kConfigError);
  EXPECT_EQ(wme(cat({"embed"}, base("missing.tsv", out_dir("a")))).code, wme_cli::kConfigError);
  EXPECT_EQ(wme(cat({"embed", "--weighting", "bm25"}, base("data.tsv", out_dir("a")))).code,
            wme_cli::kConfigError);
  EXPECT_EQ(wme(cat({"train-eval", "--splits", "2", "--test-dataset", (dir / "test.tsv").string()},
                    base("train.tsv", out_dir("a"))))
                .code,
            wme_cli::kConfigError);
  EXPECT_EQ(wme(cat({"sweep"}, base("data.tsv", out_dir("a")))).code, wme_cli::kConfigError);

  write_file(dir / "bad.txt", "2 5\nfoo 1 2 3\n");
  auto bad = base("data.tsv", out_dir("a"));
  bad[1] = (dir / "bad.txt").string();
  EXPECT_EQ(wme(cat({"embed"}, bad)).code, wme_cli::kDataError);

  write_file(dir / "oov.tsv", "x\tnothing here matches\ny\tnor here\n");
  const auto oov = wme(cat({"embed"}, base("oov.tsv", out_dir("a"))));
  EXPECT_EQ(oov.code, wme_cli::kDataError) << oov.err;

  write_file(dir / "same.sts", "1\tc0_1 c0_2\tc0_1 c0_2\n3\tc1_4\tc1_4\n5\ts2 s3\ts2 s3\n");
  const auto sts = wme({"sts", "--embeddings", (dir / "emb.txt").string(), "--sts-files",
                        (dir / "same.sts").string(), "--output-dir", out_dir("a")});
  EXPECT_EQ(sts.code, wme_cli::kNumericalError) << sts.err;
}

TEST_F(CliTest, WmdSymmetricAndPrecomputeTransparent) {
  write_file(dir / "three.tsv", "a\tc0_1 c0_2 s1\nb\tc1_3 s1\na\tc0_4 c0_4 c0_5 s2\n");
  const auto plain = out_dir("plain");
  const auto cached = out_dir("cached");
  ASSERT_EQ(wme(cat({"wmd"}, base("three.tsv", plain))).code, 0);
  ASSERT_EQ(wme(cat({"wmd", "--precompute"}, base("three.tsv", cached))).code, 0);
  const auto d = load_distance_matrix(fs::path(plain) / "distances.bin");
  ASSERT_EQ(d.rows(), 3u);
  ASSERT_EQ(d.cols(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(d(i, j), d(j, i));
  }
  EXPECT_GT(d(0, 1), 0.0);
  EXPECT_EQ(read_file(fs::path(plain) / "distances.bin"), read_file(fs::path(cached) / "distances.bin"));
  const auto report = read_json(fs::path(cached) / "wmd_report.json");
  EXPECT_EQ(report["precompute"], true);
  EXPECT_GT(report["cache_hits"].get<std::size_t>(), 0u);
  EXPECT_EQ(report["rows"], 3);
}

TEST_F(CliTest, EmbedIsDeterministicAndBounded) {
  const auto a = out_dir("a");
  const auto b = out_dir("b");
  ASSERT_EQ(wme(cat({"embed", "--R", "32"}, base("data.tsv", a))).code, 0);
  ASSERT_EQ(wme(cat({"embed", "--R", "32"}, base("data.tsv", b))).code, 0);
  for (const char* f : {"features.bin", "features.tsv", "basis.txt", "rows.tsv"}) {
    EXPECT_EQ(read_file(fs::path(a) / f), read_file(fs::path(b) / f)) << f;
  }

  write_file(dir / "two.tsv", "a\tc0_1 c0_2\nb\tc1_1 s4\n");
  const auto c = out_dir("c");
  ASSERT_EQ(wme(cat({"embed", "--R", "4"}, base("two.tsv", c))).code, 0);
  const auto z = load_feature_matrix(fs::path(c) / "features.bin");
  ASSERT_EQ(z.rows(), 2u);
  ASSERT_EQ(z.cols(), 4u);
  for (double v : z.values.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 0.5);
  }
}

TEST_F(CliTest, SplitEmbeddingEqualsJointWithSavedBasis) {
  const auto split = out_dir("split");
  const auto joint = out_dir("joint");
  ASSERT_EQ(wme(cat({"embed", "--R", "16", "--test-dataset", (dir / "test.tsv").string()},
                    base("train.tsv", split)))
                .code,
            0);
  ASSERT_EQ(wme(cat({"embed", "--basis", (fs::path(split) / "basis.txt").string()},
                    base("joint.tsv", joint)))
                .code,
            0);
  const auto ztr = load_feature_matrix(fs::path(split) / "features.bin");
  const auto zte = load_feature_matrix(fs::path(split) / "test_features.bin");
  const auto zall = load_feature_matrix(fs::path(joint) / "features.bin");
  ASSERT_EQ(zall.rows(), ztr.rows() + zte.rows());
  std::vector<double> concat = ztr.values.data();
  concat.insert(concat.end(), zte.values.data().begin(), zte.values.data().end());
  EXPECT_EQ(zall.values.data(), concat);
}

TEST_F(CliTest, TrainEvalSeparableAndSplitStatistics) {
  const auto one = out_dir("one");
  ASSERT_EQ(wme(cat({"train-eval", "--R", "32"}, base("data.tsv", one))).code, 0);
  const auto r = read_json(fs::path(one) / "report.json");
  EXPECT_EQ(r["accuracy"], 1.0);
  EXPECT_EQ(r["hyperparameters"]["R"], 32.0);

  const auto five = out_dir("five");
  ASSERT_EQ(wme(cat({"train-eval", "--R", "16", "--splits", "5"}, base("train.tsv", five))).code, 0);
  const auto rep = read_json(fs::path(five) / "report.json");
  ASSERT_EQ(rep["splits"].size(), 5u);
  const auto acc = rep["accuracies"].get<std::vector<double>>();
  ASSERT_EQ(acc.size(), 5u);
  double mean = 0.0;
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_EQ(acc[s], rep["splits"][s]["accuracy"].get<double>());
    mean += acc[s];
  }
  mean /= 5.0;
  double ss = 0.0;
  for (double a : acc) ss += (a - mean) * (a - mean);
  EXPECT_NEAR(rep["mean_accuracy"].get<double>(), mean, 1e-12);
  EXPECT_NEAR(rep["std_accuracy"].get<double>(), std::sqrt(ss / 4.0), 1e-12);
  EXPECT_EQ(tsv_rows(read_file(fs::path(five) / "report.tsv")).size(), 5u);
}

TEST_F(CliTest, TrainEvalWithGridReportsCvChoice) {
  const auto o = out_dir("grid");
  ASSERT_EQ(wme(cat({"train-eval", "--R", "16", "--gammas", "0.5,1", "--reg-cs", "10,100", "--folds",
                     "3"},
                    base("data.tsv", o)))
                .code,
            0);
  const auto r = read_json(fs::path(o) / "report.json");
  EXPECT_TRUE(r["hyperparameters"].contains("cv_accuracy"));
  const double gamma = r["hyperparameters"]["gamma"];
  EXPECT_TRUE(gamma == 0.5 || gamma == 1.0);
}

TEST_F(CliTest, KnnSeparableAndMatchesLibraryOnExportedMatrix) {
  const auto sep = out_dir("sep");
  ASSERT_EQ(wme(cat({"knn", "--ks", "1,3,5", "--folds", "3"}, base("data.tsv", sep))).code, 0);
  EXPECT_EQ(read_json(fs::path(sep) / "report.json")["accuracy"], 1.0);

  const auto k3 = out_dir("k3");
  const auto d = out_dir("d");
  ASSERT_EQ(wme(cat({"knn", "--ks", "3", "--test-dataset", (dir / "test.tsv").string()},
                    base("train.tsv", k3)))
                .code,
            0);
  ASSERT_EQ(wme(cat({"wmd", "--test-dataset", (dir / "train.tsv").string()}, base("test.tsv", d))).code,
            0);
  const auto report = read_json(fs::path(k3) / "report.json");
  EXPECT_EQ(report["hyperparameters"]["k"], 3.0);
  EXPECT_FALSE(report["hyperparameters"].contains("cv_accuracy"));

  const auto dist = load_distance_matrix(fs::path(d) / "distances.bin");
  ASSERT_EQ(dist.rows(), test.size());
  ASSERT_EQ(dist.cols(), train.size());
  const auto predicted = knn_predict(train.labels, dist, 3);
  EXPECT_DOUBLE_EQ(report["accuracy"].get<double>(), accuracy(predicted, test.labels));
}

TEST_F(CliTest, SweepPrefixAndSinglePointMatchesTrainEval) {
  const auto r4 = out_dir("r4");
  const auto r16 = out_dir("r16");
  ASSERT_EQ(wme(cat({"embed", "--R", "4"}, base("data.tsv", r4))).code, 0);
  ASSERT_EQ(wme(cat({"embed", "--R", "16"}, base("data.tsv", r16))).code, 0);
  const auto z4 = load_feature_matrix(fs::path(r4) / "features.bin");
  const auto z16 = load_feature_matrix(fs::path(r16) / "features.bin");
  for (std::size_t i = 0; i < z4.rows(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      // Same phi; only the 1/sqrt(R) scale differs.
      EXPECT_DOUBLE_EQ(z16.values(i, j) * 4.0, z4.values(i, j) * 2.0);
    }
  }

  const auto sw = out_dir("sweep");
  ASSERT_EQ(wme(cat({"sweep", "--sweep-param", "R", "--sweep-values", "4,16"}, base("train.tsv", sw)))
                .code,
            0);
  const auto rows = tsv_rows(read_file(fs::path(sw) / "sweep.tsv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "R\ttrain_accuracy\ttest_accuracy\ttest_std");
  EXPECT_EQ(split_tabs(rows[1])[0], "4");

  const auto single = out_dir("single");
  const auto te = out_dir("te");
  ASSERT_EQ(wme(cat({"sweep", "--sweep-values", "16"}, base("train.tsv", single))).code, 0);
  ASSERT_EQ(wme(cat({"train-eval", "--R", "16"}, base("train.tsv", te))).code, 0);
  const auto sweep_acc = std::stod(split_tabs(tsv_rows(read_file(fs::path(single) / "sweep.tsv"))[1])[2]);
  EXPECT_EQ(sweep_acc, read_json(fs::path(te) / "report.json")["accuracy"].get<double>());

  const auto dm = out_dir("dm");
  ASSERT_EQ(wme(cat({"sweep", "--sweep-param", "d-max", "--sweep-values", "1,3", "--R", "8"},
                    base("train.tsv", dm)))
                .code,
            0);
  EXPECT_EQ(tsv_rows(read_file(fs::path(dm) / "sweep.tsv"))[0], "d-max\ttrain_accuracy\ttest_accuracy\ttest_std");
}

TEST_F(CliTest, StsAverageAndRecomputedPearson) {
  const std::vector<std::string> words{"c0_1", "c0_2", "c0_3", "c1_1", "c1_2", "s1", "s2", "s3"};
  auto sts_text = [&](std::uint64_t seed) {
    SubstreamRng rng(seed, 0);
    std::string text;
    for (int i = 0; i < 15; ++i) {
      std::string a;
      std::string b;
      for (int k = 0; k < 3; ++k) a += words[rng.uniform_int(0, words.size() - 1)] + " ";
      for (int k = 0; k < 3; ++k) b += words[rng.uniform_int(0, words.size() - 1)] + " ";
      text += std::to_string(rng.uniform(0, 5)) + '\t' + a + '\t' + b + '\n';
    }
    return text + "not a score line\n";
  };
  write_file(dir / "one.sts", sts_text(1));
  write_file(dir / "two.sts", sts_text(2));
  auto run = [&](const std::string& out, std::vector<std::string> files) {
    std::string joined;
    for (const auto& f : files) joined += (joined.empty() ? "" : ",") + (dir / f).string();
    return wme({"sts", "--embeddings", (dir / "emb.txt").string(), "--sts-files", joined, "--R", "64",
                "--output-dir", out});
  };
  const auto both = out_dir("both");
  const auto a = out_dir("a");
  const auto b = out_dir("b");
  ASSERT_EQ(run(both, {"one.sts", "two.sts"}).code, 0);
  ASSERT_EQ(run(a, {"one.sts"}).code, 0);
  ASSERT_EQ(run(b, {"two.sts"}).code, 0);
  const auto rep = read_json(fs::path(both) / "sts_report.json");
  const double pa = read_json(fs::path(a) / "sts_report.json")["files"][0]["pearson"];
  const double pb = read_json(fs::path(b) / "sts_report.json")["files"][0]["pearson"];
  EXPECT_EQ(rep["files"][0]["malformed_lines"], 1);
  EXPECT_DOUBLE_EQ(rep["average_pearson"].get<double>(), (pa + pb) / 2.0);

  std::vector<double> gold;
  std::vector<double> predicted;
  const auto rows = tsv_rows(read_file(fs::path(a) / "sts_scores_1.tsv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split_tabs(rows[i]);
    gold.push_back(std::stod(f[0]));
    predicted.push_back(std::stod(f[1]));
  }
  EXPECT_EQ(gold.size(), 15u);
  EXPECT_NEAR(pearson(predicted, gold), pa, 1e-12);
}

TEST_F(CliTest, ConfigPrecedenceAndPrintConfig) {
  write_file(dir / "run.ini", "R=8\nseed=7\nd-max=2\n");
  const auto o = out_dir("cfg");
  const auto run = wme(cat({"embed", "--config", (dir / "run.ini").string(), "--R", "4", "--print-config"},
                           base("data.tsv", o)));
  ASSERT_EQ(run.code, 0) << run.err;
  const auto z = load_feature_matrix(fs::path(o) / "features.bin");
  EXPECT_EQ(z.cols(), 4u);
  EXPECT_EQ(z.seed, 7u);
  EXPECT_EQ(z.d_max, 2u);
  EXPECT_NE(run.out.find("R=4"), std::string::npos);
  EXPECT_NE(run.out.find("seed=7"), std::string::npos);
  EXPECT_NE(run.out.find("folds=10"), std::string::npos);
}

TEST_F(CliTest, OutputsIdenticalAcrossWorkerCounts) {
  const std::vector<std::vector<std::string>> commands = {
      {"wmd"},
      {"embed", "--R", "16"},
      {"knn", "--ks", "1,3", "--folds", "3"},
      {"train-eval", "--R", "8", "--gammas", "0.5,1", "--folds", "3", "--splits", "2"},
      {"sweep", "--sweep-values", "4,8"},
  };
  int n = 0;
  for (const auto& cmd : commands) {
    const auto one = out_dir("w1_" + std::to_string(n));
    const auto four = out_dir("w4_" + std::to_string(n));
    ++n;
    ASSERT_EQ(wme(cat(cat(cmd, {"--workers", "1"}), base("train.tsv", one))).code, 0);
    ASSERT_EQ(wme(cat(cat(cmd, {"--workers", "4"}), base("train.tsv", four))).code, 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(one)) {
      ++files;
      EXPECT_EQ(read_file(e.path()), read_file(fs::path(four) / e.path().filename()))
          << cmd[0] << " " << e.path().filename();
    }
    EXPECT_GT(files, 0u);
  }
}
