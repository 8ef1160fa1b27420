#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "wordmover/corpus.hpp"
#include "wordmover/embeddings.hpp"
#include "wordmover/matrix.hpp"

namespace wordmover {

/// Euclidean distance accumulated in double precision.
template <typename A, typename B>
double euclidean_distance(std::span<const A> a, std::span<const B> b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

double ground_distance(const EmbeddingTable& table, WordId a, WordId b);

/// Memo of ground distances keyed by an unordered pair of point ids. Word
/// ids of the table are point ids; callers may allocate further ids (e.g.
/// random words) above table.size(). Safe for concurrent use: racing
/// inserts store the same deterministic value.
class DistanceCache {
 public:
  using PointId = std::uint32_t;

  template <typename Compute>
  double get_or_compute(PointId a, PointId b, Compute&& compute) {
    const std::uint64_t key = make_key(a, b);
    Shard& shard = shards_[shard_of(key)];
    {
      std::lock_guard lock(shard.mutex);
      auto it = shard.values.find(key);
      if (it != shard.values.end()) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return it->second;
      }
    }
    const double value = compute();
    misses_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(shard.mutex);
    shard.values.insert_or_assign(key, value);
    return value;
  }

  std::optional<double> find(PointId a, PointId b) const;
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::size_t size() const;

 private:
  static constexpr std::size_t kShards = 64;

  struct Shard {
    mutable std::mutex mutex;
    std::unordered_map<std::uint64_t, double> values;
  };

  static std::uint64_t make_key(PointId a, PointId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }
  static std::size_t shard_of(std::uint64_t key) {
    key ^= key >> 29;
    key *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(key >> 58) % kShards;
  }

  std::array<Shard, kShards> shards_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

/// Ground-distance matrix between the words of two documents.
using CostMatrix = DenseMatrix;

/// Entry (i, j) is ground_distance(x_i, y_j). Throws InvalidArgument when
/// either document was built against a different table.
CostMatrix cost_matrix(const EmbeddingTable& table, const Document& x, const Document& y,
                       DistanceCache* cache = nullptr);

/// Optimal basic solution of the transportation problem
///   min <C, F>  s.t.  F 1 = f_x,  F^T 1 = f_y,  F >= 0.
struct TransportPlan {
  DenseMatrix flow;
  double objective = 0.0;
  // Dual potentials of the final basis: C_ij - u_i - v_j >= 0 everywhere and
  // == 0 on basic cells.
  std::vector<double> row_potentials;
  std::vector<double> col_potentials;
  std::size_t pivots = 0;
};

/// Transportation network simplex. Marginals must be strictly positive and
/// each sum to 1 within 1e-9; they are renormalized before solving. The
/// supply side is perturbed by 1e-13 per row against degeneracy and the
/// reported flow is recomputed on the final basis without it. Entering
/// cells use the most negative reduced cost (ties: lowest row, then
/// column); after a degenerate pivot the rule switches to Bland's
/// first-improving order until progress resumes.
TransportPlan solve_transport(std::span<const double> f_x, std::span<const double> f_y,
                              const CostMatrix& cost);

/// Objective value only; same algorithm as solve_transport.
double transport_cost(std::span<const double> f_x, std::span<const double> f_y,
                      const CostMatrix& cost);

double wmd(const EmbeddingTable& table, const Document& x, const Document& y,
           DistanceCache* cache = nullptr);

struct PairwiseOptions {
  std::size_t workers = 1;
  bool precompute = false;  // share a DistanceCache across all cells
};

struct PairwiseResult {
  DenseMatrix distances;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

/// D(a, b) = wmd(a_i, b_j). Passing the same corpus object twice computes
/// the upper triangle only and mirrors it (zero diagonal, exact symmetry).
PairwiseResult wmd_pairwise(const EmbeddingTable& table, const Corpus& corpus_a,
                            const Corpus& corpus_b, const PairwiseOptions& options = {});

}  // namespace wordmover
