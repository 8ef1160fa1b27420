#include "wordmover/matrix_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "wordmover/error.hpp"

namespace wordmover {
namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t k = 0; k < sizeof(U); ++k) bytes[k] = static_cast<char>(value >> (8 * k));
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, std::uint64_t& offset) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw ParseError("unexpected end of matrix file", ParseError::Unit::kByte,
                     offset + static_cast<std::uint64_t>(in.gcount()));
  }
  U value = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) value |= static_cast<U>(bytes[k]) << (8 * k);
  offset += sizeof(U);
  return value;
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

double get_f64(std::istream& in, std::uint64_t& offset) {
  const auto at = offset;
  const double v = std::bit_cast<double>(get_le<std::uint64_t>(in, offset));
  if (!std::isfinite(v)) throw ParseError("non-finite matrix entry", ParseError::Unit::kByte, at);
  return v;
}

void write_values(const DenseMatrix& m, std::ostream& out) {
  for (double v : m.data()) put_f64(out, v);
}

DenseMatrix read_values(std::istream& in, std::uint64_t rows, std::uint64_t cols,
                        std::uint64_t& offset) {
  constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 34;
  if (cols != 0 && rows > kMaxEntries / cols) {
    throw ParseError("matrix dimensions too large", ParseError::Unit::kByte, 0);
  }
  std::vector<double> data(rows * cols);
  for (double& v : data) v = get_f64(in, offset);
  return DenseMatrix(rows, cols, std::move(data));
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

void write_distance_matrix(const DenseMatrix& m, std::ostream& out) {
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.cols());
  write_values(m, out);
  if (!out) throw DataError("failed writing distance matrix");
}

void save_distance_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_distance_matrix(m, out);
}

DenseMatrix read_distance_matrix(std::istream& in) {
  std::uint64_t offset = 0;
  const auto rows = get_le<std::uint64_t>(in, offset);
  const auto cols = get_le<std::uint64_t>(in, offset);
  return read_values(in, rows, cols, offset);
}

DenseMatrix load_distance_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_distance_matrix(in);
}

void write_feature_matrix(const FeatureMatrix& z, std::ostream& out) {
  put_le<std::uint64_t>(out, z.rows());
  put_le<std::uint64_t>(out, z.cols());
  put_le<std::uint64_t>(out, z.seed);
  put_f64(out, z.gamma);
  put_le<std::uint32_t>(out, z.d_max);
  write_values(z.values, out);
  if (!out) throw DataError("failed writing feature matrix");
}

void save_feature_matrix(const FeatureMatrix& z, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_feature_matrix(z, out);
}

FeatureMatrix read_feature_matrix(std::istream& in) {
  std::uint64_t offset = 0;
  FeatureMatrix z;
  const auto rows = get_le<std::uint64_t>(in, offset);
  const auto cols = get_le<std::uint64_t>(in, offset);
  z.seed = get_le<std::uint64_t>(in, offset);
  z.gamma = get_f64(in, offset);
  z.d_max = get_le<std::uint32_t>(in, offset);
  z.values = read_values(in, rows, cols, offset);
  return z;
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_feature_matrix(in);
}

void write_matrix_tsv(const DenseMatrix& m, std::ostream& out) {
  std::array<char, 64> buf{};
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
      out.write(buf.data(), ptr - buf.data());
    }
    out << '\n';
  }
}

void save_matrix_tsv(const DenseMatrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_matrix_tsv(m, out);
}

}  // namespace wordmover
