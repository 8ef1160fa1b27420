#include "wordmover/synthetic.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <string>

#include "wordmover/error.hpp"

namespace wordmover::synthetic {

double standard_normal(SubstreamRng& rng) {
  const double u1 = 1.0 - rng.uniform();  // (0, 1]
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

EmbeddingTable random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed, double scale) {
  SubstreamRng rng(seed, 0);
  std::vector<std::string> tokens;
  std::vector<float> values;
  for (std::size_t w = 0; w < vocab; ++w) {
    tokens.push_back("w" + std::to_string(w));
    for (std::size_t k = 0; k < dim; ++k) {
      values.push_back(static_cast<float>(rng.uniform(-scale, scale)));
    }
  }
  return EmbeddingTable(dim, std::move(tokens), std::move(values));
}

Document random_document(const EmbeddingTable& table, std::size_t max_length, SubstreamRng& rng) {
  const std::size_t length = rng.uniform_int(1, std::min(max_length, table.size()));
  std::map<WordId, std::uint64_t> counts;
  while (counts.size() < length) {
    const auto id = static_cast<WordId>(rng.uniform_int(0, table.size() - 1));
    if (!counts.contains(id)) counts[id] = rng.uniform_int(1, 5);
  }
  std::uint64_t total = 0;
  for (const auto& [id, c] : counts) total += c;
  Document doc;
  doc.table_id = table.fingerprint();
  for (const auto& [id, c] : counts) {
    doc.word_ids.push_back(id);
    doc.weights.push_back(static_cast<double>(c) / static_cast<double>(total));
  }
  return doc;
}

EmbeddingTable clustered_table(const ClusterSpec& spec) {
  if (spec.num_classes > spec.dim) throw InvalidArgument("clustered_table: more classes than dims");
  SubstreamRng rng(spec.seed, 0);
  std::vector<std::string> tokens;
  std::vector<float> values;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.words_per_class; ++i) {
      tokens.push_back("c" + std::to_string(c) + "_" + std::to_string(i));
      for (std::size_t k = 0; k < spec.dim; ++k) {
        const double center = k == c ? spec.separation : 0.0;
        values.push_back(static_cast<float>(center + spec.spread * standard_normal(rng)));
      }
    }
  }
  for (std::size_t i = 0; i < spec.shared_words; ++i) {
    tokens.push_back("s" + std::to_string(i));
    for (std::size_t k = 0; k < spec.dim; ++k) {
      values.push_back(static_cast<float>(spec.spread * standard_normal(rng)));
    }
  }
  return EmbeddingTable(spec.dim, std::move(tokens), std::move(values));
}

TokenizedDataset clustered_dataset(const ClusterSpec& clusters, const CorpusSpec& corpus) {
  if (clusters.words_per_class == 0) throw InvalidArgument("clustered_dataset: no class words");
  if (corpus.mean_length == 0) throw InvalidArgument("clustered_dataset: mean_length must be >= 1");
  SubstreamRng rng(corpus.seed, 0);
  TokenizedDataset data;
  for (std::size_t c = 0; c < clusters.num_classes; ++c) {
    data.label_names.push_back("class" + std::to_string(c));
  }
  const std::size_t lo = (corpus.mean_length + 1) / 2;
  const std::size_t hi = corpus.mean_length + corpus.mean_length / 2;
  for (std::size_t d = 0; d < corpus.docs; ++d) {
    const std::size_t c = d % clusters.num_classes;
    const std::size_t length = rng.uniform_int(lo, hi);
    std::vector<std::string> tokens;
    for (std::size_t t = 0; t < length; ++t) {
      if (clusters.shared_words > 0 && rng.uniform() < corpus.shared_probability) {
        tokens.push_back("s" + std::to_string(rng.uniform_int(0, clusters.shared_words - 1)));
      } else {
        tokens.push_back("c" + std::to_string(c) + "_" +
                         std::to_string(rng.uniform_int(0, clusters.words_per_class - 1)));
      }
    }
    data.tokens.push_back(std::move(tokens));
    data.labels.push_back(static_cast<int>(c));
  }
  return data;
}

void write_dataset(const TokenizedDataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.label_names[data.labels[i]] << '\t';
    for (std::size_t t = 0; t < data.tokens[i].size(); ++t) {
      if (t) out << ' ';
      out << data.tokens[i][t];
    }
    out << '\n';
  }
}

}  // namespace wordmover::synthetic
