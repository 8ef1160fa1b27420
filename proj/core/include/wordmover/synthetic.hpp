#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>

#include "wordmover/corpus.hpp"
#include "wordmover/embeddings.hpp"
#include "wordmover/random.hpp"

// Seeded generators for fixtures, benchmarks and the acceptance suite.

namespace wordmover::synthetic {

/// Box-Muller standard normal; portable across standard libraries.
double standard_normal(SubstreamRng& rng);

/// Tokens "w0", "w1", ...; coordinates uniform on [-scale, scale].
EmbeddingTable random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed,
                            double scale = 1.0);

/// Distinct random words (1..max_length of them) with rational weights
/// count/total, counts uniform on {1..5}.
Document random_document(const EmbeddingTable& table, std::size_t max_length, SubstreamRng& rng);

struct ClusterSpec {
  std::size_t num_classes = 2;
  std::size_t words_per_class = 40;
  std::size_t shared_words = 0;  // words near the origin usable by every class
  std::size_t dim = 10;
  double separation = 3.0;  // class c is centered at separation * e_c
  double spread = 0.5;      // per-coordinate standard deviation
  std::uint64_t seed = 1;
};

/// Class words "c<class>_<i>" and shared words "s<i>". Requires
/// num_classes <= dim.
EmbeddingTable clustered_table(const ClusterSpec& spec);

struct CorpusSpec {
  std::size_t docs = 200;
  std::size_t mean_length = 10;  // lengths uniform on [ceil(mean/2), mean + mean/2]
  double shared_probability = 0.0;
  std::uint64_t seed = 2;
};

/// Document i belongs to class i mod num_classes (label "class<c>"); each
/// token is a shared word with `shared_probability`, else a word of its class.
TokenizedDataset clustered_dataset(const ClusterSpec& clusters, const CorpusSpec& corpus);

/// "label<TAB>tokens joined by spaces" per record.
void write_dataset(const TokenizedDataset& data, std::ostream& out);

}  // namespace wordmover::synthetic
