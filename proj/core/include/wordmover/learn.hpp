#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wordmover/corpus.hpp"
#include "wordmover/embeddings.hpp"
#include "wordmover/matrix.hpp"
#include "wordmover/wme.hpp"

namespace wordmover {

// ---------------------------------------------------------------------------
// k-nearest neighbours over a precomputed distance matrix

/// `distances` is test x train. Neighbours are the k smallest distances
/// (equal distances: lower training index first). Majority vote; a tie in
/// votes goes to the class with the smallest summed neighbour distance,
/// then to the lower label id.
std::vector<int> knn_predict(std::span<const int> train_labels, const DenseMatrix& distances,
                             std::size_t k);

// ---------------------------------------------------------------------------
// One-vs-rest L2-regularized logistic regression

struct LinearModel {
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  DenseMatrix weights;        // num_classes x num_features
  std::vector<double> bias;   // num_classes
  double reg_c = 1.0;
  // Provenance of the features the model was trained on.
  double gamma = 0.0;
  std::size_t d_max = 0;
  std::uint64_t seed = 0;
  // Per class: objective after every Newton iteration (first entry is the
  // objective at zero), and the final gradient norm.
  std::vector<std::vector<double>> objective_history;
  std::vector<double> gradient_norm;
};

struct TrainOptions {
  std::size_t max_iterations = 1000;
  double gradient_tolerance = 1e-6;
  std::size_t num_classes = 0;  // 0: 1 + max label
};

/// Per class c, minimizes over (w, b) with the bias treated as a constant
/// feature of value 1:
///   0.5 * |(w, b)|^2 + (C / N) * sum_i log(1 + exp(-y_i (w.z_i + b)))
/// with y_i = +1 for class c and -1 otherwise, by Newton-CG with Armijo
/// backtracking from zero. Throws InvalidArgument unless N >= 2 and at least
/// two classes are present.
LinearModel train_linear(const DenseMatrix& features, std::span<const int> labels, double reg_c,
                         const TrainOptions& options = {});

/// Binary objective above at `params` = (w, b); used by tests and
/// diagnostics. `positive` selects which label counts as +1.
double logistic_objective(const DenseMatrix& features, std::span<const int> labels, int positive,
                          std::span<const double> params, double reg_c);

/// Row scores w_c.z + b_c, rows x num_classes.
DenseMatrix decision_scores(const LinearModel& model, const DenseMatrix& features);

/// argmax of decision_scores; ties go to the lower label id.
std::vector<int> predict_linear(const LinearModel& model, const DenseMatrix& features);

// ---------------------------------------------------------------------------
// Cross-validation

struct HyperParams {
  double gamma = 1.0;
  std::size_t d_max = 6;
  double reg_c = 1.0;
  bool operator==(const HyperParams&) const = default;
};

struct CvGrid {
  std::vector<double> gammas{1.0};
  std::vector<std::size_t> d_maxes{6};
  std::vector<double> reg_cs{1.0};
  std::size_t folds = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Folds {
  std::vector<std::vector<std::size_t>> members;  // indices per fold, ascending
  std::size_t requested = 0;
  std::string note;  // non-empty when the fold count had to be reduced
};

/// Per class, a seeded shuffle dealt round-robin over the folds (the deal
/// continues across classes). If some class has fewer members than
/// `folds`, the count drops to max(2, smallest class) and `note` says so.
Folds stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

struct GridPointScore {
  HyperParams params;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct CvResult {
  HyperParams best;
  double best_score = 0.0;
  std::vector<GridPointScore> scores;
  std::size_t folds_used = 0;
  std::string note;
};

/// Produces the N x R training features for (gamma, d_max).
using EmbedFn = std::function<DenseMatrix(double gamma, std::size_t d_max)>;

/// Exhaustive grid search maximizing mean fold accuracy. Ties go to the
/// smaller d_max, then smaller gamma, then smaller C.
CvResult cross_validate(std::span<const int> labels, const CvGrid& grid, const EmbedFn& embed,
                        std::size_t workers = 1);

struct KnnCvResult {
  std::size_t best_k = 1;
  double best_score = 0.0;
  std::vector<std::pair<std::size_t, double>> scores;  // (k, mean fold accuracy)
  std::size_t folds_used = 0;
  std::string note;
};

/// Chooses k from `ks` on a train x train distance matrix; ties go to the
/// smaller k. Values of k larger than a fold's training part are skipped.
KnnCvResult cross_validate_knn(std::span<const int> labels, const DenseMatrix& train_distances,
                               std::span<const std::size_t> ks, std::size_t folds,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics and reports

double accuracy(std::span<const int> predicted, std::span<const int> gold);

/// Fraction of each gold class predicted correctly; classes absent from
/// `gold` are omitted.
std::vector<std::pair<std::string, double>> per_class_accuracy(
    std::span<const int> predicted, std::span<const int> gold,
    std::span<const std::string> label_names);

/// Sample Pearson correlation. Throws InvalidArgument on length mismatch or
/// fewer than two points and NumericalError when either input is constant.
double pearson(std::span<const double> predicted, std::span<const double> gold);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::pair<std::string, double>> per_class;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
  std::vector<std::pair<std::string, double>> hyperparameters;
};

/// Keys: accuracy, per_class, train_seconds, test_seconds, hyperparameters.
std::string report_to_json(const EvalReport& report);
/// accuracy, train_seconds, test_seconds, then name=value per hyperparameter.
std::string report_to_tsv(const EvalReport& report);

// ---------------------------------------------------------------------------
// Semantic textual similarity

enum class StsScore { kCosine, kInnerProduct };

struct StsPair {
  std::optional<Document> first;
  std::optional<Document> second;
};

struct StsResult {
  std::vector<double> similarity;  // one per kept pair
  std::vector<std::size_t> kept;   // indices into the input
  std::vector<std::size_t> excluded;
};

/// Similarity of each pair's WME vectors (cosine by default). Pairs with an
/// empty side are excluded; throws DataError when every pair is.
StsResult sts_score(const EmbeddingTable& table, std::span<const StsPair> pairs,
                    const RandomBasis& basis, StsScore score = StsScore::kCosine,
                    std::size_t workers = 1);

}  // namespace wordmover
