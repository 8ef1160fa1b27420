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
#include <vector>

namespace wordmover {

using WordId = std::uint32_t;

/// Pre-trained word vectors. Storage is 32-bit; every consumer widens to
/// double before doing arithmetic. Immutable after construction, so a table
/// can be shared freely between threads.
class EmbeddingTable {
 public:
  /// `values` is row-major, `vocab.size() * dim` entries. Throws
  /// InvalidArgument on an empty vocabulary, zero dimension, duplicate
  /// tokens, a size mismatch or a non-finite entry.
  EmbeddingTable(std::size_t dim, std::vector<std::string> vocab, std::vector<float> values);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::string& token(WordId id) const { return vocab_.at(id); }
  std::span<const float> vector(WordId id) const {
    return {values_.data() + static_cast<std::size_t>(id) * dim_, dim_};
  }
  std::span<const float> values() const { return values_; }

  /// Case-sensitive exact match.
  std::optional<WordId> find(std::string_view token) const;

  /// 64-bit FNV-1a over dimension, tokens and vector bytes. Documents and
  /// corpora record it so that mixing tables is caught early.
  std::uint64_t fingerprint() const { return fingerprint_; }

  /// Copy with every non-zero vector scaled to unit Euclidean norm.
  EmbeddingTable unit_normalized() const;

 private:
  std::size_t dim_;
  std::vector<std::string> vocab_;
  std::vector<float> values_;
  std::unordered_map<std::string, WordId> index_;
  std::uint64_t fingerprint_;
};

std::optional<std::span<const float>> lookup(const EmbeddingTable& table, std::string_view token);

struct CoordinateExtrema {
  double v_min = 0.0;
  double v_max = 0.0;
  bool operator==(const CoordinateExtrema&) const = default;
};

/// Min and max over every coordinate of the vectors of `ids`.
/// Throws InvalidArgument when `ids` is empty.
CoordinateExtrema coordinate_extrema(const EmbeddingTable& table, std::span<const WordId> ids);

/// Token-set overload; tokens missing from the table are ignored. Throws
/// InvalidArgument when none of them is in the vocabulary.
CoordinateExtrema coordinate_extrema(const EmbeddingTable& table,
                                     std::span<const std::string> tokens);

// Word2Vec binary format: ASCII header "<vocab_size> <dim>\n", then per word
// the token, one 0x20 byte, `dim` little-endian float32 values and an
// optional 0x0A. Errors are ParseError with a byte offset.
EmbeddingTable read_word2vec_binary(std::istream& in);
EmbeddingTable load_word2vec_binary(const std::filesystem::path& path);
void write_word2vec_binary(const EmbeddingTable& table, std::ostream& out);
void write_word2vec_binary(const EmbeddingTable& table, const std::filesystem::path& path);

// Text format: "token v1 ... vd\n" per word, shortest round-trip decimals.
// Errors are ParseError with a 1-based line number.
EmbeddingTable read_text_embeddings(std::istream& in);
EmbeddingTable load_text_embeddings(const std::filesystem::path& path);
void write_text_embeddings(const EmbeddingTable& table, std::ostream& out);
void write_text_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace wordmover
