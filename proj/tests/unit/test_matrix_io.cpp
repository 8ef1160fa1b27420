#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "wordmover/error.hpp"
#include "wordmover/matrix_io.hpp"
#include "wordmover/random.hpp"

using namespace wordmover;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  SubstreamRng rng(seed, 0);
  DenseMatrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1e3, 1e3);
  return m;
}

}  // namespace

TEST(MatrixIo, DistanceRoundTripIsBitExact) {
  auto m = random_matrix(7, 5, 1);
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(1, 1) = -0.0;
  std::stringstream s;
  write_distance_matrix(m, s);
  EXPECT_EQ(s.str().size(), 16u + 35u * 8u);
  const auto back = read_distance_matrix(s);
  ASSERT_EQ(back.rows(), 7u);
  ASSERT_EQ(back.cols(), 5u);
  EXPECT_EQ(std::memcmp(back.data().data(), m.data().data(), 35 * sizeof(double)), 0);
}

TEST(MatrixIo, DistanceHeaderIsLittleEndian) {
  std::stringstream s;
  write_distance_matrix(DenseMatrix(2, 3, 1.0), s);
  const std::string b = s.str();
  EXPECT_EQ(b.substr(0, 8), std::string("\x02\0\0\0\0\0\0\0", 8));
  EXPECT_EQ(b.substr(8, 8), std::string("\x03\0\0\0\0\0\0\0", 8));
}

TEST(MatrixIo, TruncatedDistanceFileIsParseError) {
  std::stringstream s;
  write_distance_matrix(random_matrix(3, 3, 2), s);
  const std::string full = s.str();
  for (std::size_t cut : {0u, 5u, 16u, 40u, 87u}) {
    std::stringstream t(full.substr(0, cut));
    EXPECT_THROW(read_distance_matrix(t), ParseError) << cut;
  }
}

TEST(MatrixIo, FeatureRoundTripKeepsProvenance) {
  FeatureMatrix z;
  z.values = random_matrix(4, 6, 3);
  z.seed = 0xdeadbeefcafeULL;
  z.gamma = 0.125;
  z.d_max = 9;
  std::stringstream s;
  write_feature_matrix(z, s);
  EXPECT_EQ(s.str().size(), 8u * 3 + 8 + 4 + 24u * 8u);
  const auto back = read_feature_matrix(s);
  EXPECT_EQ(back.values, z.values);
  EXPECT_EQ(back.seed, z.seed);
  EXPECT_EQ(back.gamma, z.gamma);
  EXPECT_EQ(back.d_max, z.d_max);
  std::stringstream t(s.str().substr(0, 30));
  EXPECT_THROW(read_feature_matrix(t), ParseError);
}

TEST(MatrixIo, FileRoundTrip) {
  testing_helpers::TempDir dir;
  const auto m = random_matrix(3, 2, 4);
  save_distance_matrix(m, dir / "d.bin");
  EXPECT_EQ(load_distance_matrix(dir / "d.bin"), m);
  EXPECT_THROW(load_distance_matrix(dir / "missing.bin"), DataError);
}

TEST(MatrixIo, TsvRoundTripsDecimals) {
  const auto m = random_matrix(3, 4, 5);
  std::stringstream s;
  write_matrix_tsv(m, s);
  std::string line;
  std::size_t r = 0;
  while (std::getline(s, line)) {
    std::stringstream fields(line);
    std::string f;
    std::size_t c = 0;
    while (std::getline(fields, f, '\t')) {
      EXPECT_EQ(std::stod(f), m(r, c));
      ++c;
    }
    EXPECT_EQ(c, 4u);
    ++r;
  }
  EXPECT_EQ(r, 3u);
}
