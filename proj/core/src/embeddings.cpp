#include "wordmover/embeddings.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "wordmover/error.hpp"

namespace wordmover {
namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_le32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> vocab,
                               std::vector<float> values)
    : dim_(dim), vocab_(std::move(vocab)), values_(std::move(values)) {
  if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
  if (vocab_.empty()) throw InvalidArgument("empty vocabulary");
  if (values_.size() != vocab_.size() * dim_) {
    throw InvalidArgument("embedding values size does not match vocab_size * dim");
  }
  if (vocab_.size() > std::numeric_limits<WordId>::max()) {
    throw InvalidArgument("vocabulary too large");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite embedding value");
  }
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<WordId>(i)).second) {
      throw InvalidArgument("duplicate token '" + vocab_[i] + "'");
    }
  }

  std::uint64_t h = kFnvOffset;
  const std::uint64_t d64 = dim_;
  fnv_mix(h, &d64, sizeof d64);
  for (const auto& token : vocab_) {
    fnv_mix(h, token.data(), token.size());
    const char sep = '\0';
    fnv_mix(h, &sep, 1);
  }
  fnv_mix(h, values_.data(), values_.size() * sizeof(float));
  fingerprint_ = h;
}

std::optional<WordId> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable EmbeddingTable::unit_normalized() const {
  std::vector<float> scaled(values_);
  for (std::size_t w = 0; w < size(); ++w) {
    float* row = scaled.data() + w * dim_;
    double sq = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) sq += static_cast<double>(row[k]) * row[k];
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < dim_; ++k) row[k] = static_cast<float>(row[k] * inv);
  }
  return EmbeddingTable(dim_, vocab_, std::move(scaled));
}

std::optional<std::span<const float>> lookup(const EmbeddingTable& table, std::string_view token) {
  auto id = table.find(token);
  if (!id) return std::nullopt;
  return table.vector(*id);
}

CoordinateExtrema coordinate_extrema(const EmbeddingTable& table, std::span<const WordId> ids) {
  if (ids.empty()) throw InvalidArgument("coordinate_extrema: no words given");
  CoordinateExtrema ext{std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity()};
  for (WordId id : ids) {
    if (id >= table.size()) throw InvalidArgument("coordinate_extrema: word id out of range");
    for (float v : table.vector(id)) {
      ext.v_min = std::min(ext.v_min, static_cast<double>(v));
      ext.v_max = std::max(ext.v_max, static_cast<double>(v));
    }
  }
  return ext;
}

CoordinateExtrema coordinate_extrema(const EmbeddingTable& table,
                                     std::span<const std::string> tokens) {
  std::vector<WordId> ids;
  for (const auto& t : tokens) {
    if (auto id = table.find(t)) ids.push_back(*id);
  }
  if (ids.empty()) throw InvalidArgument("coordinate_extrema: no token is in the vocabulary");
  return coordinate_extrema(table, ids);
}

EmbeddingTable read_word2vec_binary(std::istream& in) {
  using Unit = ParseError::Unit;
  std::uint64_t offset = 0;

  std::string header;
  for (;;) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError("missing header line", Unit::kByte, offset);
    ++offset;
    if (c == '\n') break;
    header.push_back(static_cast<char>(c));
    if (header.size() > 64) throw ParseError("header line too long", Unit::kByte, offset);
  }
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto space = header.find(' ');
  std::uint64_t vocab_size = 0;
  std::uint64_t dim = 0;
  if (space == std::string::npos ||
      !parse_number(std::string_view(header).substr(0, space), vocab_size) ||
      !parse_number(std::string_view(header).substr(space + 1), dim)) {
    throw ParseError("malformed header '" + header + "'", Unit::kByte, 0);
  }
  if (vocab_size == 0) throw ParseError("empty vocabulary", Unit::kByte, 0);
  if (dim == 0) throw ParseError("zero embedding dimension", Unit::kByte, 0);

  std::vector<std::string> vocab;
  std::vector<float> values;
  vocab.reserve(vocab_size);
  values.reserve(vocab_size * dim);
  std::unordered_map<std::string, std::uint64_t> seen;
  std::vector<unsigned char> buffer(dim * 4);

  for (std::uint64_t w = 0; w < vocab_size; ++w) {
    const std::uint64_t token_offset = offset;
    std::string token;
    for (;;) {
      const int c = in.get();
      if (c == std::char_traits<char>::eof()) {
        throw ParseError("unexpected end of file inside token " + std::to_string(w), Unit::kByte,
                         offset);
      }
      ++offset;
      if (c == ' ') break;
      // Writers that put the newline before the next token instead of after
      // the vector are tolerated.
      if (c == '\n' && token.empty()) continue;
      token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw ParseError("empty token", Unit::kByte, token_offset);
    if (!seen.emplace(token, token_offset).second) {
      throw ParseError("duplicate token '" + token + "'", Unit::kByte, token_offset);
    }

    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    const auto got = static_cast<std::uint64_t>(in.gcount());
    if (got != buffer.size()) {
      throw ParseError("truncated vector block for token '" + token + "'", Unit::kByte,
                       offset + got);
    }
    for (std::uint64_t k = 0; k < dim; ++k) {
      const float v = std::bit_cast<float>(load_le32(buffer.data() + 4 * k));
      if (!std::isfinite(v)) {
        throw ParseError("non-finite value for token '" + token + "'", Unit::kByte,
                         offset + 4 * k);
      }
      values.push_back(v);
    }
    offset += got;
    if (in.peek() == '\n') {
      in.get();
      ++offset;
    }
    vocab.push_back(std::move(token));
  }
  return EmbeddingTable(dim, std::move(vocab), std::move(values));
}

EmbeddingTable load_word2vec_binary(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_word2vec_binary(in);
}

void write_word2vec_binary(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  std::vector<unsigned char> buffer(table.dim() * 4);
  for (std::size_t w = 0; w < table.size(); ++w) {
    out << table.token(static_cast<WordId>(w)) << ' ';
    const auto vec = table.vector(static_cast<WordId>(w));
    for (std::size_t k = 0; k < vec.size(); ++k) {
      store_le32(std::bit_cast<std::uint32_t>(vec[k]), buffer.data() + 4 * k);
    }
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size()));
    out << '\n';
  }
  if (!out) throw DataError("failed writing word2vec binary stream");
}

void write_word2vec_binary(const EmbeddingTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_word2vec_binary(table, out);
}

EmbeddingTable read_text_embeddings(std::istream& in) {
  using Unit = ParseError::Unit;
  std::vector<std::string> vocab;
  std::vector<float> values;
  std::unordered_map<std::string, std::uint64_t> seen;
  std::size_t dim = 0;
  std::string line;
  std::uint64_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string_view rest(line);
    std::vector<std::string_view> fields;
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      auto field = rest.substr(0, sp);
      if (!field.empty()) fields.push_back(field);
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (fields.size() < 2) throw ParseError("expected a token and at least one value", Unit::kLine, line_no);
    const std::size_t n = fields.size() - 1;
    if (dim == 0) {
      dim = n;
    } else if (n != dim) {
      throw ParseError("expected " + std::to_string(dim) + " values, found " + std::to_string(n),
                       Unit::kLine, line_no);
    }
    std::string token(fields[0]);
    if (!seen.emplace(token, line_no).second) {
      throw ParseError("duplicate token '" + token + "'", Unit::kLine, line_no);
    }
    for (std::size_t k = 1; k < fields.size(); ++k) {
      float v = 0.0f;
      if (!parse_number(fields[k], v) || !std::isfinite(v)) {
        throw ParseError("unparsable number '" + std::string(fields[k]) + "'", Unit::kLine, line_no);
      }
      values.push_back(v);
    }
    vocab.push_back(std::move(token));
  }
  if (vocab.empty()) throw ParseError("empty vocabulary", Unit::kLine, line_no);
  return EmbeddingTable(dim, std::move(vocab), std::move(values));
}

EmbeddingTable load_text_embeddings(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_text_embeddings(in);
}

void write_text_embeddings(const EmbeddingTable& table, std::ostream& out) {
  std::array<char, 64> buf{};
  for (std::size_t w = 0; w < table.size(); ++w) {
    out << table.token(static_cast<WordId>(w));
    for (float v : table.vector(static_cast<WordId>(w))) {
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out << ' ';
      out.write(buf.data(), ptr - buf.data());
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing text embeddings");
}

void write_text_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_text_embeddings(table, out);
}

}  // namespace wordmover
