#include "wordmover/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wordmover/error.hpp"
#include "wordmover/parallel.hpp"
#include "wordmover/random.hpp"

namespace wordmover {
namespace {

double log1p_exp_neg(double m) {
  // log(1 + exp(-m)) without overflow.
  return m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Binary L2-regularized logistic loss over features with an appended
// constant-1 bias column; parameters are (w_1..w_R, b).
class BinaryLogistic {
 public:
  BinaryLogistic(const DenseMatrix& x, std::span<const int> labels, int positive, double reg_c)
      : x_(x), y_(labels.size()), scale_(reg_c / static_cast<double>(labels.size())) {
    for (std::size_t i = 0; i < labels.size(); ++i) y_[i] = labels[i] == positive ? 1.0 : -1.0;
  }

  std::size_t dim() const { return x_.cols() + 1; }

  double margin(std::size_t i, std::span<const double> w) const {
    const auto row = x_.row(i);
    return y_[i] * (dot(row, w.first(row.size())) + w.back());
  }

  double objective(std::span<const double> w) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) loss += log1p_exp_neg(margin(i, w));
    return 0.5 * dot(w, w) + scale_ * loss;
  }

  // Gradient into `grad`; curvature weights sigma(1 - sigma) into `curv`.
  void gradient(std::span<const double> w, std::vector<double>& grad,
                std::vector<double>& curv) const {
    grad.assign(w.begin(), w.end());
    curv.resize(y_.size());
    const std::size_t r = x_.cols();
    for (std::size_t i = 0; i < y_.size(); ++i) {
      const double s = sigmoid(margin(i, w));
      curv[i] = s * (1.0 - s);
      const double coef = scale_ * (s - 1.0) * y_[i];
      const auto row = x_.row(i);
      for (std::size_t k = 0; k < r; ++k) grad[k] += coef * row[k];
      grad[r] += coef;
    }
  }

  void hessian_times(std::span<const double> curv, std::span<const double> v,
                     std::vector<double>& out) const {
    out.assign(v.begin(), v.end());
    const std::size_t r = x_.cols();
    for (std::size_t i = 0; i < y_.size(); ++i) {
      const auto row = x_.row(i);
      const double xv = dot(row, v.first(r)) + v[r];
      const double coef = scale_ * curv[i] * xv;
      for (std::size_t k = 0; k < r; ++k) out[k] += coef * row[k];
      out[r] += coef;
    }
  }

 private:
  const DenseMatrix& x_;
  std::vector<double> y_;
  double scale_;
};

struct BinaryFit {
  std::vector<double> params;
  std::vector<double> history;
  double gradient_norm = 0.0;
};

BinaryFit fit_binary(const BinaryLogistic& problem, const TrainOptions& options) {
  const std::size_t p = problem.dim();
  BinaryFit fit;
  fit.params.assign(p, 0.0);
  std::vector<double> grad;
  std::vector<double> curv;
  std::vector<double> direction(p);
  std::vector<double> residual(p);
  std::vector<double> search(p);
  std::vector<double> hs(p);
  std::vector<double> trial(p);

  double f = problem.objective(fit.params);
  fit.history.push_back(f);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    problem.gradient(fit.params, grad, curv);
    const double gnorm = norm2(grad);
    fit.gradient_norm = gnorm;
    if (gnorm <= options.gradient_tolerance) break;

    // Inexact Newton step: conjugate gradient on H d = -g.
    std::fill(direction.begin(), direction.end(), 0.0);
    for (std::size_t k = 0; k < p; ++k) residual[k] = search[k] = -grad[k];
    double rs = dot(residual, residual);
    const double cg_tol = std::min(0.5, std::sqrt(gnorm)) * gnorm;
    const std::size_t max_cg = std::max<std::size_t>(p, 10);
    for (std::size_t cg = 0; cg < max_cg && std::sqrt(rs) > cg_tol; ++cg) {
      problem.hessian_times(curv, search, hs);
      const double alpha = rs / dot(search, hs);
      for (std::size_t k = 0; k < p; ++k) {
        direction[k] += alpha * search[k];
        residual[k] -= alpha * hs[k];
      }
      const double rs_next = dot(residual, residual);
      const double beta = rs_next / rs;
      rs = rs_next;
      for (std::size_t k = 0; k < p; ++k) search[k] = residual[k] + beta * search[k];
    }

    const double slope = dot(grad, direction);
    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t k = 0; k < p; ++k) trial[k] = fit.params[k] + step * direction[k];
      f_new = problem.objective(trial);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new < f)) break;  // no representable progress left
    fit.params.swap(trial);
    f = f_new;
    fit.history.push_back(f);
  }
  problem.gradient(fit.params, grad, curv);
  fit.gradient_norm = norm2(grad);
  return fit;
}

std::size_t check_labels(std::span<const int> labels, std::size_t rows) {
  if (labels.size() != rows) throw InvalidArgument("labels and feature rows differ in length");
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw InvalidArgument("labels must be non-negative ids");
    max_label = std::max(max_label, l);
  }
  return static_cast<std::size_t>(max_label + 1);
}

}  // namespace

std::vector<int> knn_predict(std::span<const int> train_labels, const DenseMatrix& distances,
                             std::size_t k) {
  if (distances.cols() != train_labels.size()) {
    throw InvalidArgument("knn_predict: distance matrix has " + std::to_string(distances.cols()) +
                          " columns for " + std::to_string(train_labels.size()) + " labels");
  }
  if (k < 1 || k > train_labels.size()) throw InvalidArgument("knn_predict: k out of range");
  std::vector<int> predicted(distances.rows());
  std::vector<std::size_t> order(train_labels.size());
  for (std::size_t t = 0; t < distances.rows(); ++t) {
    const auto row = distances.row(t);
    for (double d : row) {
      if (!std::isfinite(d)) throw InvalidArgument("knn_predict: non-finite distance");
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return row[a] < row[b] || (row[a] == row[b] && a < b);
                      });
    std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, summed distance)
    for (std::size_t n = 0; n < k; ++n) {
      auto& v = votes[train_labels[order[n]]];
      ++v.first;
      v.second += row[order[n]];
    }
    int best = -1;
    std::pair<std::size_t, double> best_vote{0, 0.0};
    for (const auto& [label, vote] : votes) {  // ascending label id
      if (best < 0 || vote.first > best_vote.first ||
          (vote.first == best_vote.first && vote.second < best_vote.second)) {
        best = label;
        best_vote = vote;
      }
    }
    predicted[t] = best;
  }
  return predicted;
}

LinearModel train_linear(const DenseMatrix& features, std::span<const int> labels, double reg_c,
                         const TrainOptions& options) {
  const std::size_t n = features.rows();
  std::size_t classes = check_labels(labels, n);
  if (n < 2) throw InvalidArgument("train_linear: need at least two training points");
  if (!(reg_c > 0.0) || !std::isfinite(reg_c)) throw InvalidArgument("train_linear: C must be > 0");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw InvalidArgument("train_linear: training labels contain a single class");
  }
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("train_linear: non-finite feature");
  }
  if (options.num_classes != 0) {
    if (options.num_classes < classes) throw InvalidArgument("train_linear: label exceeds num_classes");
    classes = options.num_classes;
  }

  LinearModel model;
  model.num_classes = classes;
  model.num_features = features.cols();
  model.weights = DenseMatrix(classes, features.cols());
  model.bias.assign(classes, 0.0);
  model.reg_c = reg_c;
  for (std::size_t c = 0; c < classes; ++c) {
    BinaryLogistic problem(features, labels, static_cast<int>(c), reg_c);
    auto fit = fit_binary(problem, options);
    std::copy(fit.params.begin(), fit.params.end() - 1, model.weights.row(c).begin());
    model.bias[c] = fit.params.back();
    model.objective_history.push_back(std::move(fit.history));
    model.gradient_norm.push_back(fit.gradient_norm);
  }
  return model;
}

double logistic_objective(const DenseMatrix& features, std::span<const int> labels, int positive,
                          std::span<const double> params, double reg_c) {
  if (params.size() != features.cols() + 1) {
    throw InvalidArgument("logistic_objective: expected num_features + 1 parameters");
  }
  check_labels(labels, features.rows());
  return BinaryLogistic(features, labels, positive, reg_c).objective(params);
}

DenseMatrix decision_scores(const LinearModel& model, const DenseMatrix& features) {
  if (features.cols() != model.num_features) {
    throw InvalidArgument("predict_linear: feature length " + std::to_string(features.cols()) +
                          " does not match model (" + std::to_string(model.num_features) + ")");
  }
  DenseMatrix scores(features.rows(), model.num_classes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t c = 0; c < model.num_classes; ++c) {
      scores(i, c) = dot(model.weights.row(c), features.row(i)) + model.bias[c];
    }
  }
  return scores;
}

std::vector<int> predict_linear(const LinearModel& model, const DenseMatrix& features) {
  const auto scores = decision_scores(model, features);
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

void CvGrid::validate() const {
  if (gammas.empty() || d_maxes.empty() || reg_cs.empty()) {
    throw InvalidArgument("cross-validation grid has an empty axis");
  }
  if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  for (double g : gammas) {
    if (!(g > 0.0)) throw InvalidArgument("grid gamma values must be positive");
  }
  for (std::size_t d : d_maxes) {
    if (d < 1) throw InvalidArgument("grid d_max values must be >= 1");
  }
  for (double c : reg_cs) {
    if (!(c > 0.0)) throw InvalidArgument("grid C values must be positive");
  }
}

Folds stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("need at least 2 folds");
  if (folds > labels.size()) {
    throw InvalidArgument("fold count " + std::to_string(folds) + " exceeds " +
                          std::to_string(labels.size()) + " samples");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::size_t smallest = labels.size();
  for (const auto& [label, members] : by_class) smallest = std::min(smallest, members.size());

  Folds out;
  out.requested = folds;
  std::size_t used = folds;
  if (smallest < folds) {
    used = std::max<std::size_t>(2, smallest);
    out.note = "smallest class has " + std::to_string(smallest) + " members; using " +
               std::to_string(used) + " folds instead of " + std::to_string(folds);
  }
  out.members.assign(used, {});
  std::size_t deal = 0;
  for (auto& [label, members] : by_class) {
    SubstreamRng rng(seed, static_cast<std::uint64_t>(label) + 1);
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.uniform_int(0, i - 1)]);
    }
    for (std::size_t idx : members) out.members[deal++ % used].push_back(idx);
  }
  for (auto& f : out.members) std::sort(f.begin(), f.end());
  return out;
}

namespace {

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

std::vector<FoldSplit> fold_splits(const Folds& folds, std::size_t n) {
  std::vector<FoldSplit> out;
  for (std::size_t f = 0; f < folds.members.size(); ++f) {
    FoldSplit split;
    split.test = folds.members[f];
    std::vector<char> in_test(n, 0);
    for (auto i : split.test) in_test[i] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_test[i]) split.train.push_back(i);
    }
    out.push_back(std::move(split));
  }
  return out;
}

DenseMatrix select_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> select(std::span<const int> v, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

bool better_point(const GridPointScore& a, const GridPointScore& b) {
  if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  if (a.params.d_max != b.params.d_max) return a.params.d_max < b.params.d_max;
  if (a.params.gamma != b.params.gamma) return a.params.gamma < b.params.gamma;
  return a.params.reg_c < b.params.reg_c;
}

}  // namespace

CvResult cross_validate(std::span<const int> labels, const CvGrid& grid, const EmbedFn& embed,
                        std::size_t workers) {
  grid.validate();
  const std::size_t n = labels.size();
  const std::size_t classes = check_labels(labels, n);
  const Folds folds = stratified_folds(labels, grid.folds, grid.seed);
  const auto splits = fold_splits(folds, n);

  CvResult result;
  result.folds_used = folds.members.size();
  result.note = folds.note;
  for (std::size_t d_max : grid.d_maxes) {
    for (double gamma : grid.gammas) {
      const DenseMatrix z = embed(gamma, d_max);
      if (z.rows() != n) throw InvalidArgument("embed function returned wrong number of rows");
      const std::size_t jobs = grid.reg_cs.size() * splits.size();
      std::vector<double> acc(jobs, 0.0);
      parallel_for(jobs, workers, [&](std::size_t job) {
        const double c = grid.reg_cs[job / splits.size()];
        const auto& split = splits[job % splits.size()];
        const auto train_labels = select(labels, split.train);
        const auto test_labels = select(labels, split.test);
        if (std::set<int>(train_labels.begin(), train_labels.end()).size() < 2) {
          throw DataError("a cross-validation fold leaves a single training class");
        }
        TrainOptions options;
        options.num_classes = classes;
        const auto model = train_linear(select_rows(z, split.train), train_labels, c, options);
        acc[job] = accuracy(predict_linear(model, select_rows(z, split.test)), test_labels);
      });
      for (std::size_t ci = 0; ci < grid.reg_cs.size(); ++ci) {
        GridPointScore point;
        point.params = {gamma, d_max, grid.reg_cs[ci]};
        point.fold_accuracy.assign(acc.begin() + static_cast<long>(ci * splits.size()),
                                   acc.begin() + static_cast<long>((ci + 1) * splits.size()));
        point.mean_accuracy = std::accumulate(point.fold_accuracy.begin(),
                                              point.fold_accuracy.end(), 0.0) /
                              static_cast<double>(splits.size());
        result.scores.push_back(std::move(point));
      }
    }
  }
  const auto best = std::min_element(result.scores.begin(), result.scores.end(), better_point);
  result.best = best->params;
  result.best_score = best->mean_accuracy;
  return result;
}

KnnCvResult cross_validate_knn(std::span<const int> labels, const DenseMatrix& train_distances,
                               std::span<const std::size_t> ks, std::size_t folds,
                               std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (train_distances.rows() != n || train_distances.cols() != n) {
    throw InvalidArgument("cross_validate_knn: distance matrix must be train x train");
  }
  if (ks.empty()) throw InvalidArgument("cross_validate_knn: empty k grid");
  const Folds f = stratified_folds(labels, folds, seed);
  const auto splits = fold_splits(f, n);
  std::size_t min_train = n;
  for (const auto& s : splits) min_train = std::min(min_train, s.train.size());

  KnnCvResult result;
  result.folds_used = f.members.size();
  result.note = f.note;
  std::vector<std::size_t> candidates;
  for (std::size_t k : ks) {
    if (k >= 1 && k <= min_train) candidates.push_back(k);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) throw InvalidArgument("cross_validate_knn: no usable k in grid");

  std::vector<double> sums(candidates.size(), 0.0);
  for (const auto& split : splits) {
    DenseMatrix sub(split.test.size(), split.train.size());
    for (std::size_t a = 0; a < split.test.size(); ++a) {
      for (std::size_t b = 0; b < split.train.size(); ++b) {
        sub(a, b) = train_distances(split.test[a], split.train[b]);
      }
    }
    const auto train_labels = select(labels, split.train);
    const auto test_labels = select(labels, split.test);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      sums[c] += accuracy(knn_predict(train_labels, sub, candidates[c]), test_labels);
    }
  }
  result.best_score = -1.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double mean = sums[c] / static_cast<double>(splits.size());
    result.scores.emplace_back(candidates[c], mean);
    if (mean > result.best_score) {
      result.best_score = mean;
      result.best_k = candidates[c];
    }
  }
  return result;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw InvalidArgument("accuracy: length mismatch");
  if (gold.empty()) throw InvalidArgument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

std::vector<std::pair<std::string, double>> per_class_accuracy(
    std::span<const int> predicted, std::span<const int> gold,
    std::span<const std::string> label_names) {
  if (predicted.size() != gold.size()) throw InvalidArgument("per_class_accuracy: length mismatch");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto& c = counts[gold[i]];
    ++c.second;
    c.first += predicted[i] == gold[i];
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [label, c] : counts) {
    const std::string name = static_cast<std::size_t>(label) < label_names.size()
                                 ? label_names[label]
                                 : std::to_string(label);
    out.emplace_back(name, static_cast<double>(c.first) / static_cast<double>(c.second));
  }
  return out;
}

double pearson(std::span<const double> predicted, std::span<const double> gold) {
  if (predicted.size() != gold.size()) throw InvalidArgument("pearson: length mismatch");
  if (predicted.size() < 2) throw InvalidArgument("pearson: need at least two points");
  // Single pass with running means and co-moments.
  double mean_x = 0.0;
  double mean_y = 0.0;
  double m2_x = 0.0;
  double m2_y = 0.0;
  double c_xy = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = predicted[i] - mean_x;
    const double dy = gold[i] - mean_y;
    mean_x += dx / n;
    mean_y += dy / n;
    m2_x += dx * (predicted[i] - mean_x);
    m2_y += dy * (gold[i] - mean_y);
    c_xy += dx * (gold[i] - mean_y);
  }
  if (!std::isfinite(m2_x) || !std::isfinite(m2_y)) throw NumericalError("pearson: non-finite input");
  if (m2_x <= 0.0 || m2_y <= 0.0) {
    throw NumericalError("pearson: correlation undefined for constant input");
  }
  return std::clamp(c_xy / std::sqrt(m2_x * m2_y), -1.0, 1.0);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [name, acc] : report.per_class) j["per_class"][name] = acc;
  j["train_seconds"] = report.train_seconds;
  j["test_seconds"] = report.test_seconds;
  j["hyperparameters"] = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.hyperparameters) j["hyperparameters"][name] = value;
  return j.dump(2);
}

std::string report_to_tsv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << report.accuracy << '\t' << report.train_seconds << '\t' << report.test_seconds;
  for (const auto& [name, value] : report.hyperparameters) out << '\t' << name << '=' << value;
  return out.str();
}

StsResult sts_score(const EmbeddingTable& table, std::span<const StsPair> pairs,
                    const RandomBasis& basis, StsScore score, std::size_t workers) {
  StsResult result;
  std::vector<Document> docs;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (pairs[p].first && pairs[p].second) {
      result.kept.push_back(p);
      docs.push_back(*pairs[p].first);
      docs.push_back(*pairs[p].second);
    } else {
      result.excluded.push_back(p);
    }
  }
  if (result.kept.empty()) throw DataError("sts_score: every sentence pair has an empty side");

  EmbedOptions options;
  options.workers = workers;
  const auto z = embed_documents(table, docs, basis, options);
  for (std::size_t k = 0; k < result.kept.size(); ++k) {
    const auto a = z.values.row(2 * k);
    const auto b = z.values.row(2 * k + 1);
    double s = dot(a, b);
    if (score == StsScore::kCosine) s /= std::sqrt(dot(a, a) * dot(b, b));
    result.similarity.push_back(s);
  }
  return result;
}

}  // namespace wordmover
