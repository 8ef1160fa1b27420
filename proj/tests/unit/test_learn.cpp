#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wordmover/error.hpp"
#include "wordmover/learn.hpp"
#include "wordmover/random.hpp"
#include "wordmover/synthetic.hpp"

using namespace wordmover;

namespace {

// Two Gaussian blobs in 2-D, labels alternate.
std::pair<DenseMatrix, std::vector<int>> blobs(std::size_t n, double separation, std::uint64_t seed) {
  SubstreamRng rng(seed, 0);
  DenseMatrix x(n, 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    const double c = y[i] ? separation : -separation;
    x(i, 0) = c + 0.3 * synthetic::standard_normal(rng);
    x(i, 1) = 0.5 * synthetic::standard_normal(rng);
  }
  return {x, y};
}

DenseMatrix noise(std::size_t n, std::size_t cols, std::uint64_t seed) {
  SubstreamRng rng(seed, 0);
  DenseMatrix x(n, cols);
  for (double& v : x.data()) v = rng.uniform();
  return x;
}

}  // namespace

TEST(KnnPredict, Examples) {
  const std::vector<int> labels{0, 1, 1};
  EXPECT_EQ(knn_predict(labels, DenseMatrix(1, 3, {0.0, 1.0, 2.0}), 1), (std::vector<int>{0}));
  const std::vector<int> votes{0, 0, 1};  // A, A, B
  EXPECT_EQ(knn_predict(votes, DenseMatrix(1, 3, {0.3, 0.2, 0.1}), 3), (std::vector<int>{0}));
}

TEST(KnnPredict, TieBreaks) {
  // Votes 1:1; class 1 is closer in total.
  const std::vector<int> labels{0, 1};
  EXPECT_EQ(knn_predict(labels, DenseMatrix(1, 2, {0.5, 0.4}), 2), (std::vector<int>{1}));
  // Votes and summed distances tie; lower label id wins.
  const std::vector<int> flipped{1, 0};
  EXPECT_EQ(knn_predict(flipped, DenseMatrix(1, 2, {0.5, 0.5}), 2), (std::vector<int>{0}));
  // Equal distances: lower training index is the nearer neighbour.
  const std::vector<int> three{2, 1, 0};
  EXPECT_EQ(knn_predict(three, DenseMatrix(1, 3, {1.0, 1.0, 1.0}), 1), (std::vector<int>{2}));
}

TEST(KnnPredict, Errors) {
  const std::vector<int> labels{0, 1};
  EXPECT_THROW(knn_predict(labels, DenseMatrix(1, 3), 1), InvalidArgument);
  EXPECT_THROW(knn_predict(labels, DenseMatrix(1, 2), 0), InvalidArgument);
  EXPECT_THROW(knn_predict(labels, DenseMatrix(1, 2), 3), InvalidArgument);
  EXPECT_THROW(knn_predict(labels, DenseMatrix(1, 2, {NAN, 1.0}), 1), InvalidArgument);
}

TEST(KnnPredict, ZeroDistanceDuplicateWins) {
  SubstreamRng rng(4, 4);
  std::vector<int> labels(30);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, 3));
  DenseMatrix d(30, 30);
  for (std::size_t t = 0; t < 30; ++t) {
    for (std::size_t j = 0; j < 30; ++j) d(t, j) = t == j ? 0.0 : rng.uniform(0.1, 5.0);
  }
  EXPECT_EQ(knn_predict(labels, d, 1), labels);
}

TEST(KnnPredict, MatchesBruteForceOracle) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    SubstreamRng rng(50, trial);
    std::vector<int> labels(50);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, 2));
    std::vector<std::vector<double>> rows(10, std::vector<double>(50));
    DenseMatrix d(10, 50);
    for (std::size_t t = 0; t < 10; ++t) {
      for (std::size_t j = 0; j < 50; ++j) {
        d(t, j) = rows[t][j] = static_cast<double>(rng.uniform_int(0, 9));  // many ties
      }
    }
    EXPECT_EQ(knn_predict(labels, d, 5), oracle::knn(labels, rows, 5));
  }
}

TEST(TrainLinear, SeparableBlobsFitPerfectly) {
  const auto [x, y] = blobs(60, 2.0, 1);
  const auto model = train_linear(x, y, 10.0);
  EXPECT_EQ(accuracy(predict_linear(model, x), y), 1.0);
  EXPECT_EQ(model.num_classes, 2u);
  for (double g : model.gradient_norm) EXPECT_LE(g, 1e-6);
}

TEST(TrainLinear, DuplicatingEveryPointGivesSameModel) {
  const auto [x, y] = blobs(40, 0.5, 2);
  DenseMatrix x2(80, 2);
  std::vector<int> y2;
  for (std::size_t i = 0; i < 80; ++i) {
    x2(i, 0) = x(i % 40, 0);
    x2(i, 1) = x(i % 40, 1);
    y2.push_back(y[i % 40]);
  }
  const auto a = train_linear(x, y, 5.0);
  const auto b = train_linear(x2, y2, 5.0);
  for (std::size_t k = 0; k < a.weights.data().size(); ++k) {
    EXPECT_NEAR(a.weights.data()[k], b.weights.data()[k], 1e-9);
  }
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a.bias[c], b.bias[c], 1e-9);
}

TEST(TrainLinear, ConvergesToStationaryPoint) {
  const auto x = noise(50, 6, 3);
  std::vector<int> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = static_cast<int>(i % 3);
  const double reg_c = 50.0;
  const auto model = train_linear(x, y, reg_c);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& hist = model.objective_history[c];
    ASSERT_GE(hist.size(), 2u);
    for (std::size_t k = 1; k < hist.size(); ++k) EXPECT_LE(hist[k], hist[k - 1]);

    std::vector<double> params(model.weights.row(c).begin(), model.weights.row(c).end());
    params.push_back(model.bias[c]);
    const std::vector<double> zero(params.size(), 0.0);
    const auto f = [&](std::span<const double> p) {
      return logistic_objective(x, y, static_cast<int>(c), p, reg_c);
    };
    EXPECT_LE(f(params), f(zero));
    EXPECT_DOUBLE_EQ(hist.front(), f(zero));
    const auto g = oracle::numeric_gradient(f, params);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    EXPECT_LE(std::sqrt(norm), 1e-4);
  }
}

TEST(TrainLinear, RejectsDegenerateInput) {
  const DenseMatrix x(3, 2, 1.0);
  EXPECT_THROW(train_linear(x, std::vector<int>{1, 1, 1}, 1.0), InvalidArgument);
  EXPECT_THROW(train_linear(DenseMatrix(1, 2), std::vector<int>{0}, 1.0), InvalidArgument);
  EXPECT_THROW(train_linear(x, std::vector<int>{0, 1}, 1.0), InvalidArgument);
  EXPECT_THROW(train_linear(x, std::vector<int>{0, 1, 0}, 0.0), InvalidArgument);
}

TEST(PredictLinear, ZeroModelPredictsLabelZero) {
  LinearModel model;
  model.num_classes = 3;
  model.num_features = 2;
  model.weights = DenseMatrix(3, 2);
  model.bias.assign(3, 0.0);
  EXPECT_EQ(predict_linear(model, noise(4, 2, 1)), (std::vector<int>(4, 0)));
  EXPECT_THROW(predict_linear(model, noise(4, 3, 1)), InvalidArgument);
}

TEST(PredictLinear, HandComputedScores) {
  LinearModel model;
  model.num_classes = 2;
  model.num_features = 3;
  model.weights = DenseMatrix(2, 3, {1, 0, -1, 0, 2, 0});
  model.bias = {0.5, -0.5};
  const DenseMatrix z(3, 3, {1, 1, 0, 0, 1, 0, 1, 0, 1});
  // Row scores: (1.5, 1.5), (0.5, 1.5), (0.5, -0.5).
  const auto scores = decision_scores(model, z);
  EXPECT_EQ(scores(1, 1), 1.5);
  EXPECT_EQ(predict_linear(model, z), (std::vector<int>{0, 1, 0}));
}

TEST(StratifiedFolds, BalancedDeterministicAndPartitioning) {
  std::vector<int> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
  const auto a = stratified_folds(labels, 5, 9);
  const auto b = stratified_folds(labels, 5, 9);
  EXPECT_EQ(a.members, b.members);
  EXPECT_TRUE(a.note.empty());
  std::set<std::size_t> seen;
  for (const auto& fold : a.members) {
    EXPECT_TRUE(std::is_sorted(fold.begin(), fold.end()));
    int ones = 0;
    for (auto i : fold) {
      EXPECT_TRUE(seen.insert(i).second);
      ones += labels[i];
    }
    EXPECT_GE(ones, 2);
    EXPECT_LE(ones, 3);
  }
  EXPECT_EQ(seen.size(), labels.size());
  EXPECT_NE(stratified_folds(labels, 5, 10).members, a.members);
}

TEST(StratifiedFolds, SmallClassReducesFolds) {
  const std::vector<int> labels{0, 0, 0, 0, 0, 0, 1, 1, 1};
  const auto f = stratified_folds(labels, 5, 1);
  EXPECT_EQ(f.members.size(), 3u);
  EXPECT_EQ(f.requested, 5u);
  EXPECT_FALSE(f.note.empty());
  EXPECT_THROW(stratified_folds(labels, 10, 1), InvalidArgument);
  EXPECT_THROW(stratified_folds(labels, 1, 1), InvalidArgument);
}

TEST(CrossValidate, SinglePointGrid) {
  const auto [x, y] = blobs(30, 2.0, 4);
  CvGrid grid;
  grid.gammas = {0.5};
  grid.d_maxes = {3};
  grid.reg_cs = {10.0};
  grid.folds = 3;
  const auto res = cross_validate(y, grid, [&](double, std::size_t) { return x; });
  EXPECT_EQ(res.best, (HyperParams{0.5, 3, 10.0}));
  ASSERT_EQ(res.scores.size(), 1u);
  EXPECT_EQ(res.scores[0].fold_accuracy.size(), 3u);
  EXPECT_EQ(res.best_score, res.scores[0].mean_accuracy);
}

TEST(CrossValidate, SeparableFeaturesWin) {
  const auto [x, y] = blobs(40, 2.0, 5);
  const auto junk = noise(40, 2, 5);
  CvGrid grid;
  grid.gammas = {1.0, 2.0};
  grid.reg_cs = {10.0};
  grid.folds = 4;
  const auto res = cross_validate(y, grid, [&](double g, std::size_t) { return g == 2.0 ? x : junk; });
  EXPECT_EQ(res.best.gamma, 2.0);
  EXPECT_EQ(res.best_score, 1.0);
}

TEST(CrossValidate, TiesPreferSmallerDmaxGammaC) {
  const auto [x, y] = blobs(20, 3.0, 6);
  CvGrid grid;
  grid.gammas = {2.0, 1.0};
  grid.d_maxes = {6, 3};
  grid.reg_cs = {100.0, 10.0};
  grid.folds = 2;
  const auto res = cross_validate(y, grid, [&](double, std::size_t) { return x; }, 2);
  EXPECT_EQ(res.best, (HyperParams{1.0, 3, 10.0}));
}

TEST(CrossValidate, WinnerMatchesExhaustiveReevaluation) {
  const auto table = synthetic::random_table(4, 2, 1);  // unused; features are direct
  (void)table;
  const auto [x, y] = blobs(45, 0.4, 7);
  const auto extra = noise(45, 2, 7);
  auto embed = [&](double gamma, std::size_t) {
    DenseMatrix z(45, 2);
    for (std::size_t k = 0; k < z.data().size(); ++k) {
      z.data()[k] = x.data()[k] + gamma * extra.data()[k];
    }
    return z;
  };
  CvGrid grid;
  grid.gammas = {0.1, 1.0, 3.0};
  grid.reg_cs = {5.0};
  grid.folds = 5;
  grid.seed = 3;
  const auto res = cross_validate(y, grid, embed, 3);

  const auto folds = stratified_folds(y, 5, 3);
  double best = -1.0;
  double best_gamma = 0.0;
  for (double gamma : grid.gammas) {
    const auto z = embed(gamma, 6);
    double total = 0.0;
    for (const auto& fold : folds.members) {
      std::set<std::size_t> test(fold.begin(), fold.end());
      DenseMatrix ztr(45 - fold.size(), 2);
      DenseMatrix zte(fold.size(), 2);
      std::vector<int> ytr;
      std::vector<int> yte;
      for (std::size_t i = 0, a = 0, b = 0; i < 45; ++i) {
        auto& dst = test.count(i) ? zte : ztr;
        auto& row = test.count(i) ? b : a;
        dst(row, 0) = z(i, 0);
        dst(row, 1) = z(i, 1);
        ++row;
        (test.count(i) ? yte : ytr).push_back(y[i]);
      }
      total += accuracy(predict_linear(train_linear(ztr, ytr, 5.0), zte), yte);
    }
    const double mean = total / 5.0;
    if (mean > best) {
      best = mean;
      best_gamma = gamma;
    }
  }
  EXPECT_EQ(res.best.gamma, best_gamma);
  EXPECT_DOUBLE_EQ(res.best_score, best);
}

TEST(CrossValidateKnn, PicksSmallestBestK) {
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(i % 2);
  DenseMatrix d(20, 20);
  for (std::size_t a = 0; a < 20; ++a) {
    for (std::size_t b = 0; b < 20; ++b) d(a, b) = labels[a] == labels[b] ? 1.0 + 0.01 * ((a + b) % 3) : 5.0;
    d(a, a) = 0.0;
  }
  const std::vector<std::size_t> ks{5, 3, 1};
  const auto res = cross_validate_knn(labels, d, ks, 4, 1);
  EXPECT_EQ(res.best_k, 1u);
  EXPECT_EQ(res.best_score, 1.0);
  const std::vector<std::size_t> one{3};
  EXPECT_EQ(cross_validate_knn(labels, d, one, 4, 1).best_k, 3u);
}

TEST(Metrics, AccuracyAndPerClass) {
  const std::vector<int> pred{0, 1, 1, 2};
  const std::vector<int> gold{0, 1, 0, 0};
  EXPECT_EQ(accuracy(pred, gold), 0.5);
  const std::vector<std::string> names{"a", "b", "c"};
  const auto pc = per_class_accuracy(pred, gold, names);
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc[0], (std::pair<std::string, double>{"a", 1.0 / 3.0}));
  EXPECT_EQ(pc[1], (std::pair<std::string, double>{"b", 1.0}));
  EXPECT_THROW(accuracy(pred, std::vector<int>{0}), InvalidArgument);
}

TEST(Pearson, Examples) {
  const std::vector<double> g{1, 2, 4, 8};
  std::vector<double> neg;
  for (double v : g) neg.push_back(-v);
  EXPECT_DOUBLE_EQ(pearson(g, g), 1.0);
  EXPECT_DOUBLE_EQ(pearson(neg, g), -1.0);
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), NumericalError);
  EXPECT_THROW(pearson(g, std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
}

TEST(Pearson, MatchesTwoPassOracleAndIsAffineInvariant) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    SubstreamRng rng(60, trial);
    std::vector<double> x(20);
    std::vector<double> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = rng.uniform(-3, 3);
      y[i] = 0.5 * x[i] + rng.uniform(-2, 2);
    }
    const double r = pearson(x, y);
    EXPECT_NEAR(r, oracle::pearson(x, y), 1e-12);
    std::vector<double> ax;
    std::vector<double> fx;
    for (double v : x) {
      ax.push_back(2.5 * v + 7.0);
      fx.push_back(-0.5 * v + 1.0);
    }
    EXPECT_NEAR(pearson(ax, y), r, 1e-12);
    EXPECT_NEAR(pearson(fx, y), -r, 1e-12);
  }
}

TEST(EvalReport, JsonAndTsv) {
  EvalReport r;
  r.accuracy = 0.75;
  r.per_class = {{"pos", 1.0}, {"neg", 0.5}};
  r.train_seconds = 1.5;
  r.test_seconds = 0.25;
  r.hyperparameters = {{"gamma", 1.0}, {"C", 10.0}};
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j["accuracy"], 0.75);
  EXPECT_EQ(j["per_class"]["neg"], 0.5);
  EXPECT_EQ(j["train_seconds"], 1.5);
  EXPECT_EQ(j["test_seconds"], 0.25);
  EXPECT_EQ(j["hyperparameters"]["C"], 10.0);
  EXPECT_EQ(report_to_tsv(r), "0.75\t1.5\t0.25\tgamma=1\tC=10");
}

namespace {

struct StsFixture {
  EmbeddingTable table = synthetic::random_table(40, 5, 70);
  RandomBasis basis;

  StsFixture() {
    Corpus all;
    all.source_table_id = table.fingerprint();
    for (std::uint64_t i = 0; i < 20; ++i) {
      SubstreamRng rng(70, i);
      all.documents.push_back(synthetic::random_document(table, 6, rng));
    }
    basis = generate_basis(make_basis_spec(table, all, 32, 4, 1.0, 70));
  }

  Document doc(std::uint64_t i) const {
    SubstreamRng rng(70, i);
    return synthetic::random_document(table, 6, rng);
  }
};

}  // namespace

TEST(StsScore, IdenticalSentencesScoreOne) {
  StsFixture f;
  std::vector<StsPair> pairs;
  for (std::uint64_t i = 0; i < 5; ++i) pairs.push_back({f.doc(i), f.doc(i)});
  const auto res = sts_score(f.table, pairs, f.basis);
  for (double s : res.similarity) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(StsScore, MatchesManualCosineOfEmbedNew) {
  StsFixture f;
  std::vector<StsPair> pairs;
  for (std::uint64_t i = 0; i < 10; ++i) pairs.push_back({f.doc(i), f.doc(i + 10)});
  pairs.push_back({std::nullopt, f.doc(3)});
  const auto res = sts_score(f.table, pairs, f.basis, StsScore::kCosine, 3);
  ASSERT_EQ(res.kept.size(), 10u);
  EXPECT_EQ(res.excluded, (std::vector<std::size_t>{10}));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = embed_new(f.table, f.doc(i), f.basis);
    const auto b = embed_new(f.table, f.doc(i + 10), f.basis);
    const double dot = approx_kernel(a, b);
    const double cos = dot / std::sqrt(approx_kernel(a, a) * approx_kernel(b, b));
    EXPECT_NEAR(res.similarity[i], cos, 1e-15);
    EXPECT_GT(res.similarity[i], 0.0);
    EXPECT_LE(res.similarity[i], 1.0);
  }
  const auto inner = sts_score(f.table, pairs, f.basis, StsScore::kInnerProduct);
  EXPECT_NEAR(inner.similarity[0],
              approx_kernel(embed_new(f.table, f.doc(0), f.basis), embed_new(f.table, f.doc(10), f.basis)),
              1e-15);
}

TEST(StsScore, AllEmptyThrows) {
  StsFixture f;
  const std::vector<StsPair> pairs{{std::nullopt, f.doc(1)}, {f.doc(2), std::nullopt}};
  EXPECT_THROW(sts_score(f.table, pairs, f.basis), DataError);
}
