#include "wordmover/transport.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "wordmover/error.hpp"
#include "wordmover/parallel.hpp"

namespace wordmover {
namespace {

constexpr double kMarginalTolerance = 1e-9;
constexpr double kPerturbation = 1e-13;
// Flows this far below zero after removing the perturbation are clamped;
// anything lower means the basis is wrong.
constexpr double kClampTolerance = 1e-10;

std::vector<double> checked_marginal(std::span<const double> f, const char* name) {
  if (f.empty()) throw InvalidArgument(std::string("solve_transport: empty ") + name);
  double sum = 0.0;
  for (double w : f) {
    if (!std::isfinite(w) || w <= 0.0) {
      throw InvalidArgument(std::string("solve_transport: ") + name +
                            " must be strictly positive and finite");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > kMarginalTolerance) {
    throw InvalidArgument(std::string("solve_transport: ") + name + " sums to " +
                          std::to_string(sum) + ", expected 1");
  }
  std::vector<double> out(f.begin(), f.end());
  for (double& w : out) w /= sum;
  return out;
}

// Spanning-tree basis over the bipartite graph rows 0..m-1, columns m..m+n-1.
class TransportSimplex {
 public:
  TransportSimplex(std::span<const double> f_x, std::span<const double> f_y, const CostMatrix& cost)
      : m_(f_x.size()), n_(f_y.size()), cost_(cost) {
    supply_ = checked_marginal(f_x, "f_x");
    demand_ = checked_marginal(f_y, "f_y");
    if (cost.rows() != m_ || cost.cols() != n_) {
      throw InvalidArgument("solve_transport: cost matrix is " + std::to_string(cost.rows()) + "x" +
                            std::to_string(cost.cols()) + ", marginals need " +
                            std::to_string(m_) + "x" + std::to_string(n_));
    }
    double max_cost = 1.0;
    for (double c : cost.data()) {
      if (!std::isfinite(c)) throw InvalidArgument("solve_transport: non-finite cost");
      max_cost = std::max(max_cost, std::abs(c));
    }
    tolerance_ = 1e-12 * max_cost;
  }

  void solve() {
    std::vector<double> supply(supply_);
    std::vector<double> demand(demand_);
    for (double& s : supply) s += kPerturbation;
    demand.back() += kPerturbation * static_cast<double>(m_);

    initial_basis(supply, demand);
    assign_flows(supply, demand);

    const std::size_t max_pivots = 50 * m_ * n_ + 1000;
    bool bland = false;
    for (;;) {
      compute_potentials();
      const auto entering = bland ? first_improving() : most_improving();
      if (entering.first < 0) break;
      if (pivots_ >= max_pivots) {
        throw NumericalError("solve_transport: pivot limit reached (" + std::to_string(m_) + "x" +
                             std::to_string(n_) + ")");
      }
      const double step = pivot(entering.first, entering.second);
      bland = !(step > 0.0);
      ++pivots_;
    }

    assign_flows(supply_, demand_);
    for (auto& arc : basis_) {
      if (arc.flow < 0.0) {
        if (arc.flow < -kClampTolerance) {
          throw NumericalError("solve_transport: infeasible flow after removing perturbation");
        }
        arc.flow = 0.0;
      }
    }
    compute_potentials();
  }

  double objective() const {
    double total = 0.0;
    for (const auto& arc : basis_) total += arc.flow * cost_(arc.row, arc.col);
    return total;
  }

  TransportPlan plan() const {
    TransportPlan out;
    out.flow = DenseMatrix(m_, n_);
    for (const auto& arc : basis_) out.flow(arc.row, arc.col) = arc.flow;
    out.objective = objective();
    out.row_potentials.assign(potential_.begin(), potential_.begin() + static_cast<long>(m_));
    out.col_potentials.assign(potential_.begin() + static_cast<long>(m_), potential_.end());
    out.pivots = pivots_;
    return out;
  }

 private:
  struct Arc {
    int row;
    int col;
    double flow;
  };

  int col_node(int col) const { return static_cast<int>(m_) + col; }
  int other_end(const Arc& arc, int node) const {
    return node == arc.row ? col_node(arc.col) : arc.row;
  }

  // Least-cost rule: scan cells by (cost, row, col) and saturate the
  // smaller remaining marginal. Each allocation closes exactly one line
  // except the last, which yields m + n - 1 arcs forming a spanning tree.
  void initial_basis(std::span<const double> supply, std::span<const double> demand) {
    std::vector<std::uint32_t> order(m_ * n_);
    std::iota(order.begin(), order.end(), 0u);
    const auto& c = cost_.data();
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return c[a] < c[b]; });

    std::vector<double> rem_s(supply.begin(), supply.end());
    std::vector<double> rem_d(demand.begin(), demand.end());
    std::vector<char> row_open(m_, 1);
    std::vector<char> col_open(n_, 1);
    std::size_t rows_left = m_;
    std::size_t cols_left = n_;
    const std::size_t arcs = m_ + n_ - 1;

    basis_.clear();
    basis_.reserve(arcs);
    is_basic_.assign(m_ * n_, 0);
    for (std::uint32_t cell : order) {
      const int r = static_cast<int>(cell / n_);
      const int k = static_cast<int>(cell % n_);
      if (!row_open[r] || !col_open[k]) continue;
      const double q = std::max(0.0, std::min(rem_s[r], rem_d[k]));
      basis_.push_back({r, k, q});
      is_basic_[cell] = 1;
      rem_s[r] -= q;
      rem_d[k] -= q;
      if (rows_left == 1 && cols_left == 1) {
        row_open[r] = col_open[k] = 0;
        break;
      }
      const bool close_row = cols_left == 1 || (rows_left > 1 && rem_s[r] <= rem_d[k]);
      if (close_row) {
        row_open[r] = 0;
        --rows_left;
      } else {
        col_open[k] = 0;
        --cols_left;
      }
    }
    if (basis_.size() != arcs) throw NumericalError("solve_transport: initial basis incomplete");

    adjacency_.assign(m_ + n_, {});
    for (std::size_t a = 0; a < basis_.size(); ++a) {
      adjacency_[basis_[a].row].push_back(static_cast<int>(a));
      adjacency_[col_node(basis_[a].col)].push_back(static_cast<int>(a));
    }
  }

  // Tree flows for the given marginals by repeatedly peeling leaves.
  void assign_flows(std::span<const double> supply, std::span<const double> demand) {
    const std::size_t nodes = m_ + n_;
    std::vector<double> excess(nodes);
    std::copy(supply.begin(), supply.end(), excess.begin());
    std::copy(demand.begin(), demand.end(), excess.begin() + static_cast<long>(m_));
    std::vector<int> degree(nodes);
    std::vector<char> done(basis_.size(), 0);
    std::vector<int> stack;
    for (std::size_t v = nodes; v-- > 0;) {
      degree[v] = static_cast<int>(adjacency_[v].size());
      if (degree[v] == 1) stack.push_back(static_cast<int>(v));
    }
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (degree[v] != 1) continue;
      int arc_index = -1;
      for (int a : adjacency_[v]) {
        if (!done[a]) {
          arc_index = a;
          break;
        }
      }
      Arc& arc = basis_[arc_index];
      done[arc_index] = 1;
      arc.flow = excess[v];
      const int w = other_end(arc, v);
      excess[w] -= excess[v];
      excess[v] = 0.0;
      degree[v] = 0;
      if (--degree[w] == 1) stack.push_back(w);
    }
  }

  void compute_potentials() {
    const std::size_t nodes = m_ + n_;
    potential_.assign(nodes, 0.0);
    parent_arc_.assign(nodes, -1);
    depth_.assign(nodes, -1);
    std::vector<int> stack{0};
    depth_[0] = 0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int a : adjacency_[v]) {
        const Arc& arc = basis_[a];
        const int w = other_end(arc, v);
        if (depth_[w] >= 0) continue;
        depth_[w] = depth_[v] + 1;
        parent_arc_[w] = a;
        // u_row + v_col = C on every basic arc.
        potential_[w] = cost_(arc.row, arc.col) - potential_[v];
        stack.push_back(w);
      }
    }
  }

  std::pair<int, int> most_improving() const {
    std::pair<int, int> best{-1, -1};
    double best_value = -tolerance_;
    for (std::size_t i = 0; i < m_; ++i) {
      const double u = potential_[i];
      const double* row = cost_.data().data() + i * n_;
      const char* basic = is_basic_.data() + i * n_;
      const double* v = potential_.data() + m_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (basic[j]) continue;
        const double reduced = row[j] - u - v[j];
        if (reduced < best_value) {
          best_value = reduced;
          best = {static_cast<int>(i), static_cast<int>(j)};
        }
      }
    }
    return best;
  }

  std::pair<int, int> first_improving() const {
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (is_basic_[i * n_ + j]) continue;
        if (cost_(i, j) - potential_[i] - potential_[m_ + j] < -tolerance_) {
          return {static_cast<int>(i), static_cast<int>(j)};
        }
      }
    }
    return {-1, -1};
  }

  // Pushes flow around the cycle closed by (row, col); returns the step.
  double pivot(int row, int col) {
    int a = row;
    int b = col_node(col);
    std::vector<int> from_col;  // arcs walking up from the column node
    std::vector<int> from_row;
    while (depth_[b] > depth_[a]) {
      from_col.push_back(parent_arc_[b]);
      b = other_end(basis_[parent_arc_[b]], b);
    }
    while (depth_[a] > depth_[b]) {
      from_row.push_back(parent_arc_[a]);
      a = other_end(basis_[parent_arc_[a]], a);
    }
    while (a != b) {
      from_col.push_back(parent_arc_[b]);
      b = other_end(basis_[parent_arc_[b]], b);
      from_row.push_back(parent_arc_[a]);
      a = other_end(basis_[parent_arc_[a]], a);
    }
    // Cycle order: column node -> ... -> row node. Even positions lose flow.
    std::vector<int> cycle(std::move(from_col));
    cycle.insert(cycle.end(), from_row.rbegin(), from_row.rend());

    int leaving = -1;
    double step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const Arc& arc = basis_[cycle[k]];
      const bool better =
          arc.flow < step ||
          (arc.flow == step && (arc.row < basis_[leaving].row ||
                                (arc.row == basis_[leaving].row && arc.col < basis_[leaving].col)));
      if (better) {
        step = arc.flow;
        leaving = cycle[k];
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      Arc& arc = basis_[cycle[k]];
      arc.flow += (k % 2 == 0) ? -step : step;
    }

    Arc& out = basis_[leaving];
    is_basic_[static_cast<std::size_t>(out.row) * n_ + out.col] = 0;
    std::erase(adjacency_[out.row], leaving);
    std::erase(adjacency_[col_node(out.col)], leaving);
    out = Arc{row, col, step};
    is_basic_[static_cast<std::size_t>(row) * n_ + col] = 1;
    adjacency_[row].push_back(leaving);
    adjacency_[col_node(col)].push_back(leaving);
    return step;
  }

  std::size_t m_;
  std::size_t n_;
  const CostMatrix& cost_;
  std::vector<double> supply_;
  std::vector<double> demand_;
  double tolerance_ = 0.0;

  std::vector<Arc> basis_;
  std::vector<char> is_basic_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<double> potential_;
  std::vector<int> parent_arc_;
  std::vector<int> depth_;
  std::size_t pivots_ = 0;
};

void check_table(const EmbeddingTable& table, const Document& doc) {
  if (doc.table_id != table.fingerprint()) {
    throw InvalidArgument("document was built against a different embedding table");
  }
}

}  // namespace

double ground_distance(const EmbeddingTable& table, WordId a, WordId b) {
  if (a >= table.size() || b >= table.size()) {
    throw InvalidArgument("ground_distance: word id out of range");
  }
  return euclidean_distance(table.vector(a), table.vector(b));
}

std::optional<double> DistanceCache::find(PointId a, PointId b) const {
  const std::uint64_t key = make_key(a, b);
  const Shard& shard = shards_[shard_of(key)];
  std::lock_guard lock(shard.mutex);
  auto it = shard.values.find(key);
  if (it == shard.values.end()) return std::nullopt;
  return it->second;
}

std::size_t DistanceCache::size() const {
  std::size_t total = 0;
  for (const auto& shard : shards_) {
    std::lock_guard lock(shard.mutex);
    total += shard.values.size();
  }
  return total;
}

CostMatrix cost_matrix(const EmbeddingTable& table, const Document& x, const Document& y,
                       DistanceCache* cache) {
  check_table(table, x);
  check_table(table, y);
  CostMatrix c(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const WordId a = x.word_ids[i];
    for (std::size_t j = 0; j < y.size(); ++j) {
      const WordId b = y.word_ids[j];
      if (cache) {
        c(i, j) = cache->get_or_compute(a, b, [&] { return ground_distance(table, a, b); });
      } else {
        c(i, j) = ground_distance(table, a, b);
      }
    }
  }
  return c;
}

TransportPlan solve_transport(std::span<const double> f_x, std::span<const double> f_y,
                              const CostMatrix& cost) {
  TransportSimplex simplex(f_x, f_y, cost);
  simplex.solve();
  return simplex.plan();
}

double transport_cost(std::span<const double> f_x, std::span<const double> f_y,
                      const CostMatrix& cost) {
  TransportSimplex simplex(f_x, f_y, cost);
  simplex.solve();
  return simplex.objective();
}

double wmd(const EmbeddingTable& table, const Document& x, const Document& y, DistanceCache* cache) {
  return transport_cost(x.weights, y.weights, cost_matrix(table, x, y, cache));
}

PairwiseResult wmd_pairwise(const EmbeddingTable& table, const Corpus& corpus_a,
                            const Corpus& corpus_b, const PairwiseOptions& options) {
  for (const Corpus* c : {&corpus_a, &corpus_b}) {
    if (c->source_table_id != table.fingerprint()) {
      throw InvalidArgument("wmd_pairwise: corpus was built against a different embedding table");
    }
  }
  const bool self = &corpus_a == &corpus_b;
  const std::size_t rows = corpus_a.size();
  const std::size_t cols = corpus_b.size();
  PairwiseResult result;
  result.distances = DenseMatrix(rows, cols);
  DistanceCache cache;
  DistanceCache* shared = options.precompute ? &cache : nullptr;

  parallel_for(rows, options.workers, [&](std::size_t i) {
    for (std::size_t j = self ? i + 1 : 0; j < cols; ++j) {
      result.distances(i, j) = wmd(table, corpus_a.documents[i], corpus_b.documents[j], shared);
    }
  });
  if (self) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = i + 1; j < cols; ++j) result.distances(j, i) = result.distances(i, j);
    }
  }
  result.cache_hits = cache.hits();
  result.cache_misses = cache.misses();
  return result;
}

}  // namespace wordmover
