#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wordmover/corpus.hpp"
#include "wordmover/embeddings.hpp"
#include "wordmover/error.hpp"
#include "wordmover/learn.hpp"
#include "wordmover/matrix_io.hpp"
#include "wordmover/parallel.hpp"
#include "wordmover/random.hpp"
#include "wordmover/transport.hpp"
#include "wordmover/wme.hpp"

namespace wme_cli {
namespace {

namespace fs = std::filesystem;
using namespace wordmover;
using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string embeddings;
  std::string embeddings_format = "auto";
  bool unit_normalize = false;
  std::string dataset;
  std::string test_dataset;
  std::string stopwords;
  std::string output_dir = ".";
  std::string weighting = "nbow";
  std::size_t min_word_count = 1;

  std::size_t num_features = 128;
  std::size_t d_max = 6;
  double gamma = 1.0;
  std::uint64_t seed = 42;
  bool mean_centered = false;
  std::string basis;

  std::vector<double> gammas;
  std::vector<std::size_t> d_maxes;
  std::vector<double> reg_cs;
  double reg_c = 100.0;
  std::size_t folds = 10;
  std::vector<std::size_t> ks;
  std::size_t splits = 1;
  double test_fraction = 0.3;

  std::size_t workers = 0;
  bool precompute = false;
  bool omit_timing = false;

  std::string sweep_param = "R";
  std::vector<std::size_t> sweep_values;
  std::vector<std::string> sts_files;
  std::string sts_score = "cosine";

  std::size_t resolved_workers() const { return workers == 0 ? default_workers() : workers; }
  EmbedOptions embed_options() const { return {resolved_workers(), precompute}; }
  PairwiseOptions pairwise_options() const { return {resolved_workers(), precompute}; }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

fs::path output_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return fs::path(cfg.output_dir) / name;
}

EmbeddingTable load_table(const RunConfig& cfg) {
  std::string format = cfg.embeddings_format;
  if (format == "auto") {
    const auto ext = fs::path(cfg.embeddings).extension().string();
    format = (ext == ".txt" || ext == ".vec") ? "text" : "binary";
  }
  EmbeddingTable table = format == "text" ? load_text_embeddings(cfg.embeddings)
                                          : load_word2vec_binary(cfg.embeddings);
  return cfg.unit_normalize ? table.unit_normalized() : table;
}

StopWords load_stop(const RunConfig& cfg) {
  return cfg.stopwords.empty() ? StopWords{} : load_stopwords(cfg.stopwords);
}

WeightScheme scheme_for(const RunConfig& cfg, const TokenizedDataset& fit_on) {
  if (cfg.weighting == "tfidf") return WeightScheme::tfidf(fit_idf(fit_on.tokens));
  return WeightScheme::nbow();
}

TokenizedDataset load_tokens(const std::string& path, const StopWords& stop,
                             std::vector<std::string> label_names = {}) {
  return tokenize_dataset(read_dataset(fs::path(path)), stop, std::move(label_names));
}

struct Split {
  Corpus train;
  Corpus test;
};

// Per class, a seeded shuffle; the first round(n * fraction) members go to
// test, keeping at least one member of every class in train.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const int> labels, double test_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& [label, members] : by_class) {
    SubstreamRng rng(seed, static_cast<std::uint64_t>(label) + 1);
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.uniform_int(0, i - 1)]);
    }
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::min(n_test, members.size() - 1);
    test.insert(test.end(), members.begin(), members.begin() + static_cast<long>(n_test));
    train.insert(train.end(), members.begin() + static_cast<long>(n_test), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

std::vector<Split> make_splits(const RunConfig& cfg, const EmbeddingTable& table,
                               const StopWords& stop) {
  std::vector<Split> out;
  if (!cfg.test_dataset.empty()) {
    if (cfg.splits != 1) throw ConfigError("--splits needs a single dataset (no --test-dataset)");
    auto train = load_tokens(cfg.dataset, stop);
    prune_rare_words(train, cfg.min_word_count);
    auto test = load_tokens(cfg.test_dataset, stop, train.label_names);
    train.label_names = test.label_names;
    const auto scheme = scheme_for(cfg, train);
    out.push_back({build_corpus(train, table, scheme), build_corpus(test, table, scheme)});
    return out;
  }
  auto all = load_tokens(cfg.dataset, stop);
  prune_rare_words(all, cfg.min_word_count);
  for (std::size_t s = 0; s < cfg.splits; ++s) {
    const auto [train_idx, test_idx] = stratified_split(all.labels, cfg.test_fraction, cfg.seed + s);
    if (test_idx.empty()) throw DataError("dataset too small for a train/test split");
    const auto train = all.subset(train_idx);
    const auto test = all.subset(test_idx);
    const auto scheme = scheme_for(cfg, train);
    out.push_back({build_corpus(train, table, scheme), build_corpus(test, table, scheme)});
  }
  return out;
}

std::vector<double> or_default(const std::vector<double>& v, double fallback) {
  return v.empty() ? std::vector<double>{fallback} : v;
}

std::vector<std::size_t> or_default(const std::vector<std::size_t>& v, std::size_t fallback) {
  return v.empty() ? std::vector<std::size_t>{fallback} : v;
}

DenseMatrix leading_columns(const DenseMatrix& m, std::size_t cols) {
  DenseMatrix out(m.rows(), cols);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::copy_n(m.row(i).begin(), cols, out.row(i).begin());
  }
  return out;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single value.
double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void report_corpus(const std::string& name, const Corpus& c, std::ostream& out) {
  out << name << ": " << c.size() << " documents";
  if (c.dropped) out << ", " << c.dropped << " dropped (no in-vocabulary token)";
  if (c.malformed) out << ", " << c.malformed << " malformed lines";
  out << '\n';
}

void write_reports(const RunConfig& cfg, std::vector<EvalReport> reports, std::ostream& out) {
  std::vector<double> acc;
  std::string tsv;
  Json splits = Json::array();
  for (auto& r : reports) {
    if (cfg.omit_timing) r.train_seconds = r.test_seconds = 0.0;
    acc.push_back(r.accuracy);
    tsv += report_to_tsv(r) + '\n';
    splits.push_back(Json::parse(report_to_json(r)));
  }
  Json doc;
  if (reports.size() == 1) {
    doc = splits[0];
  } else {
    doc["splits"] = splits;
    doc["accuracies"] = acc;
    doc["mean_accuracy"] = mean_of(acc);
    doc["std_accuracy"] = std_of(acc);
  }
  write_text(output_path(cfg, "report.json"), doc.dump(2) + '\n');
  write_text(output_path(cfg, "report.tsv"), tsv);
  out << "accuracy " << fmt(mean_of(acc));
  if (reports.size() > 1) out << " +- " << fmt(std_of(acc)) << " over " << reports.size() << " splits";
  out << '\n';
}

// ---------------------------------------------------------------------------

int cmd_wmd(const RunConfig& cfg, std::ostream& out) {
  const auto table = load_table(cfg);
  const auto stop = load_stop(cfg);
  auto tokens_a = load_tokens(cfg.dataset, stop);
  prune_rare_words(tokens_a, cfg.min_word_count);
  const auto scheme = scheme_for(cfg, tokens_a);
  const Corpus a = build_corpus(tokens_a, table, scheme);
  report_corpus("dataset", a, out);
  std::optional<Corpus> b;
  if (!cfg.test_dataset.empty()) {
    b = build_corpus(load_tokens(cfg.test_dataset, stop, tokens_a.label_names), table, scheme);
    report_corpus("test dataset", *b, out);
  }

  Stopwatch clock;
  const auto res = wmd_pairwise(table, a, b ? *b : a, cfg.pairwise_options());
  const double seconds = clock.seconds();

  save_distance_matrix(res.distances, output_path(cfg, "distances.bin"));
  save_matrix_tsv(res.distances, output_path(cfg, "distances.tsv"));
  Json report;
  report["rows"] = res.distances.rows();
  report["cols"] = res.distances.cols();
  report["precompute"] = cfg.precompute;
  report["cache_hits"] = res.cache_hits;
  report["cache_misses"] = res.cache_misses;
  report["seconds"] = cfg.omit_timing ? 0.0 : seconds;
  write_text(output_path(cfg, "wmd_report.json"), report.dump(2) + '\n');
  out << "wrote " << res.distances.rows() << "x" << res.distances.cols()
      << " distance matrix; cache hits " << res.cache_hits << ", misses " << res.cache_misses
      << "; " << fmt(seconds) << " s\n";
  return kOk;
}

int cmd_embed(const RunConfig& cfg, std::ostream& out) {
  const auto table = load_table(cfg);
  const auto stop = load_stop(cfg);
  auto tokens = load_tokens(cfg.dataset, stop);
  prune_rare_words(tokens, cfg.min_word_count);
  const auto scheme = scheme_for(cfg, tokens);
  const Corpus corpus = build_corpus(tokens, table, scheme);
  report_corpus("dataset", corpus, out);

  const RandomBasisSpec spec =
      cfg.basis.empty() ? make_basis_spec(table, corpus, cfg.num_features, cfg.d_max, cfg.gamma,
                                          cfg.seed, cfg.mean_centered)
                        : load_basis_spec(cfg.basis);
  if (spec.dim != table.dim()) {
    throw DataError("basis dimension " + std::to_string(spec.dim) +
                    " does not match embeddings (" + std::to_string(table.dim()) + ")");
  }
  const auto embedding = embed_corpus(table, corpus, spec, cfg.embed_options());
  save_feature_matrix(embedding.features, output_path(cfg, "features.bin"));
  save_matrix_tsv(embedding.features.values, output_path(cfg, "features.tsv"));
  save_basis_spec(spec, output_path(cfg, "basis.txt"));

  std::string rows = "source\tlabel\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    rows += std::to_string(corpus.source[i]) + '\t' + corpus.label_names[corpus.labels[i]] + '\n';
  }
  write_text(output_path(cfg, "rows.tsv"), rows);

  if (!cfg.test_dataset.empty()) {
    const Corpus test =
        build_corpus(load_tokens(cfg.test_dataset, stop, tokens.label_names), table, scheme);
    report_corpus("test dataset", test, out);
    const auto z = embed_documents(table, test.documents, embedding.basis, cfg.embed_options());
    save_feature_matrix(z, output_path(cfg, "test_features.bin"));
    save_matrix_tsv(z.values, output_path(cfg, "test_features.tsv"));
  }
  out << "wrote " << embedding.features.rows() << "x" << embedding.features.cols()
      << " feature matrix\n";
  return kOk;
}

int cmd_knn(const RunConfig& cfg, std::ostream& out) {
  const auto table = load_table(cfg);
  const auto splits = make_splits(cfg, table, load_stop(cfg));
  std::vector<std::size_t> ks = cfg.ks;
  if (ks.empty()) {
    ks.resize(21);
    std::iota(ks.begin(), ks.end(), 1);
  }
  std::vector<EvalReport> reports;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& sp = splits[s];
    Stopwatch train_clock;
    std::size_t k = ks.front();
    double cv_score = std::nan("");
    if (ks.size() > 1) {
      const auto d_train = wmd_pairwise(table, sp.train, sp.train, cfg.pairwise_options());
      const auto cv = cross_validate_knn(sp.train.labels, d_train.distances, ks, cfg.folds,
                                         cfg.seed + s);
      if (!cv.note.empty()) out << "note: " << cv.note << '\n';
      k = cv.best_k;
      cv_score = cv.best_score;
    }
    const double train_seconds = train_clock.seconds();

    Stopwatch test_clock;
    const auto d_test = wmd_pairwise(table, sp.test, sp.train, cfg.pairwise_options());
    const auto predicted = knn_predict(sp.train.labels, d_test.distances, k);
    const double test_seconds = test_clock.seconds();

    EvalReport r;
    r.accuracy = accuracy(predicted, sp.test.labels);
    r.per_class = per_class_accuracy(predicted, sp.test.labels, sp.test.label_names);
    r.train_seconds = train_seconds;
    r.test_seconds = test_seconds;
    r.hyperparameters = {{"k", static_cast<double>(k)}};
    if (!std::isnan(cv_score)) r.hyperparameters.emplace_back("cv_accuracy", cv_score);
    reports.push_back(std::move(r));
  }
  write_reports(cfg, std::move(reports), out);
  return kOk;
}

struct Fitted {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<int> predicted;
};

Fitted fit_and_score(const DenseMatrix& d_train, const DenseMatrix& d_test,
                     const RandomBasisSpec& spec, const Split& sp, double gamma, double reg_c) {
  TrainOptions options;
  options.num_classes = sp.test.label_names.size();
  const auto z_train = features_from_distances(d_train, spec, gamma);
  const auto z_test = features_from_distances(d_test, spec, gamma);
  const auto model = train_linear(z_train.values, sp.train.labels, reg_c, options);
  Fitted f;
  f.train_accuracy = accuracy(predict_linear(model, z_train.values), sp.train.labels);
  f.predicted = predict_linear(model, z_test.values);
  f.test_accuracy = accuracy(f.predicted, sp.test.labels);
  return f;
}

int cmd_train_eval(const RunConfig& cfg, std::ostream& out) {
  const auto table = load_table(cfg);
  const auto splits = make_splits(cfg, table, load_stop(cfg));
  CvGrid grid;
  grid.gammas = or_default(cfg.gammas, cfg.gamma);
  grid.d_maxes = or_default(cfg.d_maxes, cfg.d_max);
  grid.reg_cs = or_default(cfg.reg_cs, cfg.reg_c);
  grid.folds = cfg.folds;
  grid.validate();
  const bool search = grid.gammas.size() * grid.d_maxes.size() * grid.reg_cs.size() > 1;

  std::vector<EvalReport> reports;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& sp = splits[s];
    report_corpus("split " + std::to_string(s + 1) + " train", sp.train, out);
    Stopwatch train_clock;
    std::map<std::size_t, std::pair<RandomBasis, DenseMatrix>> by_d_max;
    auto train_distances = [&](std::size_t d_max) -> const std::pair<RandomBasis, DenseMatrix>& {
      auto it = by_d_max.find(d_max);
      if (it == by_d_max.end()) {
        auto basis = generate_basis(make_basis_spec(table, sp.train, cfg.num_features, d_max,
                                                    cfg.gamma, cfg.seed, cfg.mean_centered));
        auto dist = random_distances(table, sp.train.documents, basis, cfg.embed_options());
        it = by_d_max.emplace(d_max, std::make_pair(std::move(basis), std::move(dist))).first;
      }
      return it->second;
    };

    HyperParams best{grid.gammas.front(), grid.d_maxes.front(), grid.reg_cs.front()};
    double cv_score = std::nan("");
    if (search) {
      grid.seed = cfg.seed + s;
      const auto cv = cross_validate(
          sp.train.labels, grid,
          [&](double gamma, std::size_t d_max) {
            const auto& [basis, dist] = train_distances(d_max);
            return features_from_distances(dist, basis.spec, gamma).values;
          },
          cfg.resolved_workers());
      if (!cv.note.empty()) out << "note: " << cv.note << '\n';
      best = cv.best;
      cv_score = cv.best_score;
    }
    const auto& [basis, d_train] = train_distances(best.d_max);
    TrainOptions options;
    options.num_classes = sp.test.label_names.size();
    auto model = train_linear(features_from_distances(d_train, basis.spec, best.gamma).values,
                              sp.train.labels, best.reg_c, options);
    model.gamma = best.gamma;
    model.d_max = best.d_max;
    model.seed = cfg.seed;
    const double train_seconds = train_clock.seconds();

    Stopwatch test_clock;
    const auto d_test = random_distances(table, sp.test.documents, basis, cfg.embed_options());
    const auto predicted =
        predict_linear(model, features_from_distances(d_test, basis.spec, best.gamma).values);
    const double test_seconds = test_clock.seconds();

    EvalReport r;
    r.accuracy = accuracy(predicted, sp.test.labels);
    r.per_class = per_class_accuracy(predicted, sp.test.labels, sp.test.label_names);
    r.train_seconds = train_seconds;
    r.test_seconds = test_seconds;
    r.hyperparameters = {{"gamma", best.gamma},
                         {"d_max", static_cast<double>(best.d_max)},
                         {"C", best.reg_c},
                         {"R", static_cast<double>(cfg.num_features)}};
    if (!std::isnan(cv_score)) r.hyperparameters.emplace_back("cv_accuracy", cv_score);
    reports.push_back(std::move(r));
  }
  write_reports(cfg, std::move(reports), out);
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  if (cfg.sweep_values.empty()) throw ConfigError("sweep needs --sweep-values");
  if (cfg.sweep_param != "R" && cfg.sweep_param != "d-max") {
    throw ConfigError("--sweep-param must be R or d-max");
  }
  for (std::size_t v : cfg.sweep_values) {
    if (v < 1) throw ConfigError("--sweep-values entries must be >= 1");
  }
  const auto table = load_table(cfg);
  const auto splits = make_splits(cfg, table, load_stop(cfg));
  const std::size_t n = cfg.sweep_values.size();
  std::vector<std::vector<double>> train_acc(n);
  std::vector<std::vector<double>> test_acc(n);

  for (const auto& sp : splits) {
    if (cfg.sweep_param == "R") {
      // One basis of the largest R; smaller R use its leading documents.
      const std::size_t r_max =
          *std::max_element(cfg.sweep_values.begin(), cfg.sweep_values.end());
      const auto basis = generate_basis(make_basis_spec(table, sp.train, r_max, cfg.d_max,
                                                        cfg.gamma, cfg.seed, cfg.mean_centered));
      const auto d_train = random_distances(table, sp.train.documents, basis, cfg.embed_options());
      const auto d_test = random_distances(table, sp.test.documents, basis, cfg.embed_options());
      for (std::size_t v = 0; v < n; ++v) {
        const std::size_t r = cfg.sweep_values[v];
        const auto f = fit_and_score(leading_columns(d_train, r), leading_columns(d_test, r),
                                     basis.spec, sp, cfg.gamma, cfg.reg_c);
        train_acc[v].push_back(f.train_accuracy);
        test_acc[v].push_back(f.test_accuracy);
      }
    } else {
      for (std::size_t v = 0; v < n; ++v) {
        const auto basis = generate_basis(make_basis_spec(table, sp.train, cfg.num_features,
                                                          cfg.sweep_values[v], cfg.gamma,
                                                          cfg.seed, cfg.mean_centered));
        const auto d_train =
            random_distances(table, sp.train.documents, basis, cfg.embed_options());
        const auto d_test = random_distances(table, sp.test.documents, basis, cfg.embed_options());
        const auto f = fit_and_score(d_train, d_test, basis.spec, sp, cfg.gamma, cfg.reg_c);
        train_acc[v].push_back(f.train_accuracy);
        test_acc[v].push_back(f.test_accuracy);
      }
    }
  }

  std::string tsv = cfg.sweep_param + "\ttrain_accuracy\ttest_accuracy\ttest_std\n";
  for (std::size_t v = 0; v < n; ++v) {
    tsv += std::to_string(cfg.sweep_values[v]) + '\t' + fmt(mean_of(train_acc[v])) + '\t' +
           fmt(mean_of(test_acc[v])) + '\t' + fmt(std_of(test_acc[v])) + '\n';
  }
  write_text(output_path(cfg, "sweep.tsv"), tsv);
  out << tsv;
  return kOk;
}

struct StsFile {
  std::vector<double> gold;
  std::vector<StsPair> pairs;
  std::size_t malformed = 0;
};

std::optional<Document> try_document(const std::vector<std::string>& tokens,
                                     const EmbeddingTable& table, const WeightScheme& scheme) {
  try {
    return build_document(tokens, table, scheme);
  } catch (const EmptyDocument&) {
    return std::nullopt;
  }
}

StsFile read_sts_file(const std::string& path, const EmbeddingTable& table, const StopWords& stop,
                      const RunConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open STS file " + path);
  std::vector<double> gold;
  std::vector<std::vector<std::string>> left;
  std::vector<std::vector<std::string>> right;
  std::size_t malformed = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    double score = 0.0;
    const auto parsed = t1 == std::string::npos
                            ? std::from_chars_result{line.data(), std::errc::invalid_argument}
                            : std::from_chars(line.data(), line.data() + t1, score);
    if (t2 == std::string::npos || parsed.ec != std::errc() || parsed.ptr != line.data() + t1) {
      ++malformed;
      continue;
    }
    gold.push_back(score);
    left.push_back(tokenize(std::string_view(line).substr(t1 + 1, t2 - t1 - 1), stop));
    right.push_back(tokenize(std::string_view(line).substr(t2 + 1), stop));
  }
  if (gold.empty()) throw DataError("STS file " + path + " has no usable line");

  WeightScheme scheme = WeightScheme::nbow();
  if (cfg.weighting == "tfidf") {
    std::vector<std::vector<std::string>> all(left);
    all.insert(all.end(), right.begin(), right.end());
    scheme = WeightScheme::tfidf(fit_idf(all));
  }
  StsFile f;
  f.gold = std::move(gold);
  f.malformed = malformed;
  for (std::size_t i = 0; i < f.gold.size(); ++i) {
    f.pairs.push_back({try_document(left[i], table, scheme), try_document(right[i], table, scheme)});
  }
  return f;
}

int cmd_sts(const RunConfig& cfg, std::ostream& out) {
  if (cfg.sts_files.empty()) throw ConfigError("sts needs --sts-files");
  if (cfg.sts_score != "cosine" && cfg.sts_score != "inner") {
    throw ConfigError("--sts-score must be cosine or inner");
  }
  const auto table = load_table(cfg);
  const auto stop = load_stop(cfg);
  const StsScore score = cfg.sts_score == "cosine" ? StsScore::kCosine : StsScore::kInnerProduct;

  Json files = Json::array();
  std::vector<double> pearsons;
  for (std::size_t f = 0; f < cfg.sts_files.size(); ++f) {
    const auto& path = cfg.sts_files[f];
    const auto data = read_sts_file(path, table, stop, cfg);
    Corpus sentences;
    sentences.source_table_id = table.fingerprint();
    for (const auto& p : data.pairs) {
      if (p.first) sentences.documents.push_back(*p.first);
      if (p.second) sentences.documents.push_back(*p.second);
    }
    if (sentences.documents.empty()) throw DataError("no sentence of " + path + " is in vocabulary");
    const RandomBasisSpec spec =
        cfg.basis.empty() ? make_basis_spec(table, sentences, cfg.num_features, cfg.d_max,
                                            cfg.gamma, cfg.seed, cfg.mean_centered)
                          : load_basis_spec(cfg.basis);
    const auto result =
        sts_score(table, data.pairs, generate_basis(spec), score, cfg.resolved_workers());
    std::vector<double> gold;
    std::string tsv = "gold\tpredicted\n";
    for (std::size_t k = 0; k < result.kept.size(); ++k) {
      gold.push_back(data.gold[result.kept[k]]);
      tsv += fmt(gold.back()) + '\t' + fmt(result.similarity[k]) + '\n';
    }
    write_text(output_path(cfg, "sts_scores_" + std::to_string(f + 1) + ".tsv"), tsv);

    Json entry;
    entry["path"] = path;
    entry["pairs"] = data.pairs.size();
    entry["kept"] = result.kept.size();
    entry["excluded_pairs"] = result.excluded;
    entry["malformed_lines"] = data.malformed;
    try {
      const double r = pearson(result.similarity, gold);
      entry["pearson"] = r;
      pearsons.push_back(r);
      out << path << ": pearson " << fmt(r) << " over " << result.kept.size() << " pairs\n";
    } catch (const NumericalError& e) {
      entry["error"] = e.what();
      out << path << ": excluded, " << e.what() << '\n';
    }
    files.push_back(std::move(entry));
  }
  Json report;
  report["files"] = std::move(files);
  report["average_pearson"] = pearsons.empty() ? Json(nullptr) : Json(mean_of(pearsons));
  write_text(output_path(cfg, "sts_report.json"), report.dump(2) + '\n');
  if (pearsons.empty()) throw NumericalError("Pearson correlation is undefined for every file");
  out << "average pearson " << fmt(mean_of(pearsons)) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

void add_options(CLI::App& app, RunConfig& cfg) {
  app.add_option("--embeddings", cfg.embeddings, "Word vector file")->check(CLI::ExistingFile);
  app.add_option("--embeddings-format", cfg.embeddings_format, "binary, text or auto (by extension)")
      ->check(CLI::IsMember({"auto", "binary", "text"}))
      ->capture_default_str();
  app.add_flag("--unit-normalize", cfg.unit_normalize, "Scale word vectors to unit norm");
  app.add_option("--dataset", cfg.dataset, "label<TAB>text training file")->check(CLI::ExistingFile);
  app.add_option("--test-dataset", cfg.test_dataset, "Separate test file")->check(CLI::ExistingFile);
  app.add_option("--stopwords", cfg.stopwords, "One stop-word per line")->check(CLI::ExistingFile);
  app.add_option("--output-dir", cfg.output_dir, "Directory for output files")->capture_default_str();
  app.add_option("--weighting", cfg.weighting, "nbow or tfidf")
      ->check(CLI::IsMember({"nbow", "tfidf"}))
      ->capture_default_str();
  app.add_option("--min-word-count", cfg.min_word_count, "Drop rarer words")->capture_default_str();

  app.add_option("--R,--num-features", cfg.num_features, "Number of random documents")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--d-max", cfg.d_max, "Maximum random document length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "Kernel parameter")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_flag("--mean-centered", cfg.mean_centered, "Center random words at the mean word vector");
  app.add_option("--basis", cfg.basis, "Reuse a saved basis spec")->check(CLI::ExistingFile);

  app.add_option("--gammas", cfg.gammas, "CV grid for gamma")->delimiter(',');
  app.add_option("--d-maxes", cfg.d_maxes, "CV grid for d-max")->delimiter(',');
  app.add_option("--reg-cs", cfg.reg_cs, "CV grid for C")->delimiter(',');
  app.add_option("--reg-c", cfg.reg_c, "Inverse regularization strength")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
  app.add_option("--ks", cfg.ks, "KNN grid for k (default 1..21)")->delimiter(',');
  app.add_option("--splits", cfg.splits, "Number of seeded 70/30 splits")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--test-fraction", cfg.test_fraction, "Test share of each split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  app.add_option("--workers", cfg.workers, "Worker threads (0: WME_WORKERS or all cores)")
      ->capture_default_str();
  app.add_flag("--precompute", cfg.precompute, "Cache word-pair distances");
  app.add_flag("--omit-timing", cfg.omit_timing, "Write 0 for every timing field");

  app.add_option("--sweep-param", cfg.sweep_param, "R or d-max")->capture_default_str();
  app.add_option("--sweep-values", cfg.sweep_values, "Values to sweep")->delimiter(',');
  app.add_option("--sts-files", cfg.sts_files, "score<TAB>s1<TAB>s2 files")
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  app.add_option("--sts-score", cfg.sts_score, "cosine or inner")->capture_default_str();
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError(flag + " is required");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Word Mover's Distance and Word Mover's Embedding toolkit", "wme"};
  app.set_config("--config", "", "Flat key=value config file; flags take precedence");
  app.require_subcommand(1);
  RunConfig cfg;
  add_options(app, cfg);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the resolved config before running");

  using Handler = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"wmd", "Pairwise WMD matrix", cmd_wmd},
      {"embed", "WME feature matrix and basis", cmd_embed},
      {"knn", "KNN over exact WMD", cmd_knn},
      {"train-eval", "WME + linear classifier with cross-validation", cmd_train_eval},
      {"sweep", "Accuracy against R or d-max", cmd_sweep},
      {"sts", "Pearson correlation on STS files", cmd_sts},
  };
  for (const auto& [name, help, handler] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (print_config) out << app.config_to_str(true, false);
    for (const auto& [name, help, handler] : commands) {
      if (!app.got_subcommand(name)) continue;
      require(cfg.embeddings, "--embeddings");
      if (name != "sts") require(cfg.dataset, "--dataset");
      return handler(cfg, out);
    }
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace wme_cli
