#pragma once

#include <filesystem>
#include <iosfwd>

#include "wordmover/matrix.hpp"
#include "wordmover/wme.hpp"

namespace wordmover {

// Distance matrix file: u64 rows, u64 cols, then rows*cols f64 row-major.
// Every field little-endian.
void write_distance_matrix(const DenseMatrix& m, std::ostream& out);
void save_distance_matrix(const DenseMatrix& m, const std::filesystem::path& path);
DenseMatrix read_distance_matrix(std::istream& in);
DenseMatrix load_distance_matrix(const std::filesystem::path& path);

// Feature matrix file: u64 N, u64 R, u64 seed, f64 gamma, u32 d_max, then
// N*R f64 row-major. Every field little-endian.
void write_feature_matrix(const FeatureMatrix& z, std::ostream& out);
void save_feature_matrix(const FeatureMatrix& z, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(std::istream& in);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

/// One row per line, tab-separated shortest round-trip decimals.
void write_matrix_tsv(const DenseMatrix& m, std::ostream& out);
void save_matrix_tsv(const DenseMatrix& m, const std::filesystem::path& path);

}  // namespace wordmover
