#include "wordmover/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>

#include "wordmover/error.hpp"

namespace wordmover {
namespace {

// Length in bytes of the UTF-8 encoded whitespace character starting at
// `pos`, or 0 if there is none.
std::size_t whitespace_length(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 == ' ' || (b0 >= 0x09 && b0 <= 0x0D)) return 1;
  const std::size_t left = s.size() - pos;
  if (b0 == 0xC2 && left >= 2) {
    const auto b1 = static_cast<unsigned char>(s[pos + 1]);
    if (b1 == 0x85 || b1 == 0xA0) return 2;  // NEL, NBSP
  }
  if (left >= 3) {
    const auto b1 = static_cast<unsigned char>(s[pos + 1]);
    const auto b2 = static_cast<unsigned char>(s[pos + 2]);
    if (b0 == 0xE1 && b1 == 0x9A && b2 == 0x80) return 3;  // U+1680
    if (b0 == 0xE2 && b1 == 0x80 &&
        ((b2 >= 0x80 && b2 <= 0x8A) || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF)) {
      return 3;  // U+2000..U+200A, U+2028, U+2029, U+202F
    }
    if (b0 == 0xE2 && b1 == 0x81 && b2 == 0x9F) return 3;  // U+205F
    if (b0 == 0xE3 && b1 == 0x80 && b2 == 0x80) return 3;  // U+3000
  }
  return 0;
}

bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && !((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'));
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string_view strip_punct(std::string_view piece) {
  while (!piece.empty() && is_ascii_punct(static_cast<unsigned char>(piece.front()))) {
    piece.remove_prefix(1);
  }
  while (!piece.empty() && is_ascii_punct(static_cast<unsigned char>(piece.back()))) {
    piece.remove_suffix(1);
  }
  return piece;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const StopWords& stopwords) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    auto piece = strip_punct(text.substr(start, end - start));
    if (piece.empty()) return;
    std::string token(piece);
    std::transform(token.begin(), token.end(), token.begin(), ascii_lower);
    if (!stopwords.contains(token)) tokens.push_back(std::move(token));
  };
  while (pos < text.size()) {
    if (const auto ws = whitespace_length(text, pos)) {
      flush(pos);
      pos += ws;
      start = pos;
    } else {
      ++pos;
    }
  }
  flush(pos);
  return tokens;
}

StopWords read_stopwords(std::istream& in) {
  StopWords words;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : tokenize(line, {})) words.insert(std::move(t));
  }
  return words;
}

StopWords load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stop-word file '" + path.string() + "'");
  return read_stopwords(in);
}

double Idf::operator()(const std::string& token) const {
  auto it = values_.find(token);
  if (it != values_.end()) return it->second;
  return std::log(1.0 + static_cast<double>(num_documents_)) + 1.0;
}

Idf fit_idf(std::span<const std::vector<std::string>> documents) {
  if (documents.empty()) throw InvalidArgument("fit_idf: no documents");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::unordered_set<std::string_view> seen;
    for (const auto& t : doc) {
      if (seen.insert(t).second) ++df[t];
    }
  }
  const auto n = static_cast<double>(documents.size());
  std::unordered_map<std::string, double> values;
  values.reserve(df.size());
  for (const auto& [token, count] : df) {
    values.emplace(token, std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return Idf(documents.size(), std::move(values));
}

Document build_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                        const WeightScheme& scheme) {
  std::map<WordId, std::pair<double, const std::string*>> counts;
  for (const auto& t : tokens) {
    if (auto id = table.find(t)) {
      auto& entry = counts[*id];
      entry.first += 1.0;
      entry.second = &t;
    }
  }
  if (counts.empty()) throw EmptyDocument(std::vector<std::string>(tokens.begin(), tokens.end()));

  Document doc;
  doc.table_id = table.fingerprint();
  doc.word_ids.reserve(counts.size());
  doc.weights.reserve(counts.size());
  double total = 0.0;
  for (const auto& [id, entry] : counts) {
    double w = entry.first;
    if (scheme.kind == Weighting::kTfidf) w *= scheme.idf(*entry.second);
    doc.word_ids.push_back(id);
    doc.weights.push_back(w);
    total += w;
  }
  for (double& w : doc.weights) w /= total;
  return doc;
}

RawDataset read_dataset(std::istream& in) {
  RawDataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ++data.malformed;
      continue;
    }
    std::string text = line.substr(tab + 1);
    if (text.find_first_not_of(" \t") == std::string::npos) {
      ++data.malformed;
      continue;
    }
    data.records.push_back({line.substr(0, tab), std::move(text)});
  }
  return data;
}

RawDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

TokenizedDataset TokenizedDataset::subset(std::span<const std::size_t> indices) const {
  TokenizedDataset out;
  out.label_names = label_names;
  for (auto i : indices) {
    out.tokens.push_back(tokens.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

TokenizedDataset tokenize_dataset(const RawDataset& raw, const StopWords& stopwords,
                                  std::vector<std::string> label_names) {
  TokenizedDataset data;
  data.malformed = raw.malformed;
  data.label_names = std::move(label_names);
  std::unordered_map<std::string, int> ids;
  for (std::size_t i = 0; i < data.label_names.size(); ++i) {
    ids.emplace(data.label_names[i], static_cast<int>(i));
  }
  for (const auto& rec : raw.records) {
    auto [it, inserted] = ids.emplace(rec.label, static_cast<int>(data.label_names.size()));
    if (inserted) data.label_names.push_back(rec.label);
    data.labels.push_back(it->second);
    data.tokens.push_back(tokenize(rec.text, stopwords));
  }
  return data;
}

void prune_rare_words(TokenizedDataset& data, std::size_t min_count) {
  if (min_count <= 1) return;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : data.tokens) {
    for (const auto& t : doc) ++counts[t];
  }
  for (auto& doc : data.tokens) {
    std::erase_if(doc, [&](const std::string& t) { return counts[t] < min_count; });
  }
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out;
  out.label_names = label_names;
  out.source_table_id = source_table_id;
  for (auto i : indices) {
    out.documents.push_back(documents.at(i));
    out.labels.push_back(labels.at(i));
    out.source.push_back(source.at(i));
  }
  return out;
}

Corpus build_corpus(const TokenizedDataset& data, const EmbeddingTable& table,
                    const WeightScheme& scheme) {
  Corpus corpus;
  corpus.label_names = data.label_names;
  corpus.source_table_id = table.fingerprint();
  corpus.malformed = data.malformed;
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      corpus.documents.push_back(build_document(data.tokens[i], table, scheme));
    } catch (const EmptyDocument&) {
      ++corpus.dropped;
      continue;
    }
    corpus.labels.push_back(data.labels[i]);
    corpus.source.push_back(i);
  }
  if (corpus.documents.empty()) {
    throw DataError("no document survived vocabulary filtering (" + std::to_string(corpus.dropped) +
                    " dropped)");
  }
  return corpus;
}

Corpus load_dataset(const std::filesystem::path& path, const EmbeddingTable& table,
                    const WeightScheme& scheme, const StopWords& stopwords,
                    std::size_t min_word_count) {
  auto data = tokenize_dataset(read_dataset(path), stopwords);
  prune_rare_words(data, min_word_count);
  return build_corpus(data, table, scheme);
}

}  // namespace wordmover
