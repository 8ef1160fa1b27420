#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "wordmover/corpus.hpp"
#include "wordmover/embeddings.hpp"
#include "wordmover/matrix.hpp"
#include "wordmover/transport.hpp"

namespace wordmover {

/// Sampling law of random documents: length uniform on {1..d_max}, every
/// coordinate uniform on [v_min, v_max] (or on an interval of the same width
/// centered at `center` when mean-centering is on), weights 1/length.
struct RandomBasisSpec {
  std::size_t num_features = 1;  // R
  std::size_t d_min = 1;         // fixed at 1
  std::size_t d_max = 6;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  CoordinateExtrema extrema;
  std::size_t dim = 0;
  std::vector<double> center;  // empty unless mean-centered

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
  std::uint64_t fingerprint() const;
  bool operator==(const RandomBasisSpec&) const = default;
};

/// Spec whose extrema (and optional center) come from the words that occur
/// in `corpus`.
RandomBasisSpec make_basis_spec(const EmbeddingTable& table, const Corpus& corpus,
                                std::size_t num_features, std::size_t d_max, double gamma,
                                std::uint64_t seed, bool mean_centered = false);

struct RandomDocument {
  std::size_t index = 0;  // 1-based position in the basis
  std::size_t length = 0;
  std::size_t dim = 0;
  // Cache point id of word l is table.size() + point_offset + l, where
  // point_offset = (index - 1) * d_max keeps ids of different documents apart.
  std::size_t point_offset = 0;
  std::vector<double> vectors;  // length x dim, row-major
  std::vector<double> weights;

  std::span<const double> word(std::size_t l) const { return {vectors.data() + l * dim, dim}; }
};

/// Document `index` (1-based) drawn from its own (seed, index) substream.
RandomDocument sample_random_document(const RandomBasisSpec& spec, std::size_t index);

struct RandomBasis {
  RandomBasisSpec spec;
  std::vector<RandomDocument> docs;
};

RandomBasis generate_basis(const RandomBasisSpec& spec);

/// WMD between a corpus document and a random document.
double random_document_wmd(const EmbeddingTable& table, const Document& x,
                           const RandomDocument& omega, DistanceCache* cache = nullptr);

/// exp(-gamma * WMD(x, omega)).
double feature_value(const EmbeddingTable& table, const Document& x, const RandomDocument& omega,
                     double gamma, DistanceCache* cache = nullptr);

/// N x R matrix of Z_ij = phi_{omega_j}(x_i) / sqrt(R).
struct FeatureMatrix {
  DenseMatrix values;
  std::uint64_t seed = 0;
  double gamma = 0.0;
  std::uint32_t d_max = 0;
  std::uint64_t basis_fingerprint = 0;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
};

struct EmbedOptions {
  std::size_t workers = 1;
  bool precompute = false;
};

/// N x R matrix of WMD(x_i, omega_j). Everything downstream of the random
/// documents is a cheap transform of this.
DenseMatrix random_distances(const EmbeddingTable& table, std::span<const Document> docs,
                             const RandomBasis& basis, const EmbedOptions& options = {});

/// exp(-gamma * D) / sqrt(cols), elementwise.
FeatureMatrix features_from_distances(const DenseMatrix& distances, const RandomBasisSpec& spec,
                                      double gamma);

/// Embeds documents against an existing basis.
FeatureMatrix embed_documents(const EmbeddingTable& table, std::span<const Document> docs,
                              const RandomBasis& basis, const EmbedOptions& options = {});

struct Embedding {
  RandomBasis basis;
  FeatureMatrix features;
};

Embedding embed_corpus(const EmbeddingTable& table, const Corpus& corpus,
                       const RandomBasisSpec& spec, const EmbedOptions& options = {});

std::vector<double> embed_new(const EmbeddingTable& table, const Document& doc,
                              const RandomBasis& basis);

/// <z_x, z_y>, the Monte-Carlo estimate of the kernel.
double approx_kernel(std::span<const double> z_x, std::span<const double> z_y);

// Flat "key=value" text form of a spec; doubles use shortest round-trip
// decimals so a reloaded spec regenerates the identical basis.
void write_basis_spec(const RandomBasisSpec& spec, std::ostream& out);
void save_basis_spec(const RandomBasisSpec& spec, const std::filesystem::path& path);
RandomBasisSpec read_basis_spec(std::istream& in);
RandomBasisSpec load_basis_spec(const std::filesystem::path& path);

}  // namespace wordmover
