#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wordmover/embeddings.hpp"

namespace wordmover {

using StopWords = std::unordered_set<std::string>;

/// Lower-cases ASCII letters, splits on Unicode whitespace (UTF-8 encoded),
/// strips leading and trailing ASCII punctuation from each piece, then drops
/// empty pieces and stop-words. Bytes outside ASCII are kept verbatim.
std::vector<std::string> tokenize(std::string_view text, const StopWords& stopwords);

/// One token per line; blank lines ignored. Entries are lower-cased like
/// `tokenize` output so they match it.
StopWords read_stopwords(std::istream& in);
StopWords load_stopwords(const std::filesystem::path& path);

/// Bag of distinct in-vocabulary words with normalized weights.
/// word_ids ascending, weights > 0, sum(weights) == 1.
struct Document {
  std::vector<WordId> word_ids;
  std::vector<double> weights;
  std::uint64_t table_id = 0;

  std::size_t size() const { return word_ids.size(); }
};

/// Inverse document frequency, idf(w) = ln((1 + N) / (1 + df(w))) + 1.
class Idf {
 public:
  Idf() = default;
  Idf(std::size_t num_documents, std::unordered_map<std::string, double> values)
      : num_documents_(num_documents), values_(std::move(values)) {}

  /// Words never seen while fitting get ln(1 + N) + 1.
  double operator()(const std::string& token) const;
  std::size_t num_documents() const { return num_documents_; }
  const std::unordered_map<std::string, double>& values() const { return values_; }

 private:
  std::size_t num_documents_ = 0;
  std::unordered_map<std::string, double> values_;
};

Idf fit_idf(std::span<const std::vector<std::string>> documents);

enum class Weighting { kNbow, kTfidf };

struct WeightScheme {
  Weighting kind = Weighting::kNbow;
  Idf idf;  // used only for kTfidf

  static WeightScheme nbow() { return {}; }
  static WeightScheme tfidf(Idf idf) { return {Weighting::kTfidf, std::move(idf)}; }
};

/// Throws EmptyDocument when no token is in the table.
Document build_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                        const WeightScheme& scheme);

struct RawRecord {
  std::string label;
  std::string text;
};

/// Dataset lines are "label<TAB>text". Blank lines are skipped; lines without
/// a tab or with empty text are counted in `malformed`.
struct RawDataset {
  std::vector<RawRecord> records;
  std::size_t malformed = 0;
};

RawDataset read_dataset(std::istream& in);
RawDataset read_dataset(const std::filesystem::path& path);

/// Tokenized records with label ids assigned in order of first appearance.
struct TokenizedDataset {
  std::vector<std::vector<std::string>> tokens;
  std::vector<int> labels;
  std::vector<std::string> label_names;
  std::size_t malformed = 0;

  std::size_t size() const { return tokens.size(); }
  TokenizedDataset subset(std::span<const std::size_t> indices) const;
};

/// `label_names` seeds the label dictionary so a test file maps onto the ids
/// of its training file; unseen labels are appended.
TokenizedDataset tokenize_dataset(const RawDataset& raw, const StopWords& stopwords,
                                  std::vector<std::string> label_names = {});

/// Removes tokens whose total count over the dataset is below `min_count`.
void prune_rare_words(TokenizedDataset& data, std::size_t min_count);

struct Corpus {
  std::vector<Document> documents;
  std::vector<int> labels;
  std::vector<std::string> label_names;
  std::uint64_t source_table_id = 0;
  std::size_t dropped = 0;          // records with no in-vocabulary token
  std::size_t malformed = 0;        // unparseable lines
  std::vector<std::size_t> source;  // index of each kept document in the input

  std::size_t size() const { return documents.size(); }
  std::size_t num_classes() const { return label_names.size(); }
  Corpus subset(std::span<const std::size_t> indices) const;
};

/// Builds one Document per record; records that fail with EmptyDocument are
/// dropped and counted. Throws DataError if nothing survives.
Corpus build_corpus(const TokenizedDataset& data, const EmbeddingTable& table,
                    const WeightScheme& scheme);

/// read + tokenize + prune + build with a caller-supplied (already fitted)
/// weighting scheme.
Corpus load_dataset(const std::filesystem::path& path, const EmbeddingTable& table,
                    const WeightScheme& scheme, const StopWords& stopwords,
                    std::size_t min_word_count = 1);

}  // namespace wordmover
