#include "wordmover/wme.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "wordmover/error.hpp"
#include "wordmover/parallel.hpp"
#include "wordmover/random.hpp"

namespace wordmover {
namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, std::uint64_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ParseError("invalid number '" + std::string(text) + "'", ParseError::Unit::kLine, line);
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, std::uint64_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("invalid integer '" + std::string(text) + "'", ParseError::Unit::kLine, line);
  }
  return v;
}

}  // namespace

void RandomBasisSpec::validate() const {
  if (num_features < 1) throw InvalidArgument("number of random features R must be >= 1");
  if (d_min != 1) throw InvalidArgument("d_min is fixed at 1");
  if (d_max < d_min) throw InvalidArgument("d_max must be >= 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
  if (dim < 1) throw InvalidArgument("embedding dimension must be >= 1");
  if (!std::isfinite(extrema.v_min) || !std::isfinite(extrema.v_max) ||
      extrema.v_min > extrema.v_max) {
    throw InvalidArgument("invalid coordinate extrema");
  }
  if (!center.empty() && center.size() != dim) {
    throw InvalidArgument("center vector length does not match dim");
  }
}

std::uint64_t RandomBasisSpec::fingerprint() const {
  std::ostringstream out;
  write_basis_spec(*this, out);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : out.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

RandomBasisSpec make_basis_spec(const EmbeddingTable& table, const Corpus& corpus,
                                std::size_t num_features, std::size_t d_max, double gamma,
                                std::uint64_t seed, bool mean_centered) {
  if (corpus.source_table_id != table.fingerprint()) {
    throw InvalidArgument("corpus was built against a different embedding table");
  }
  std::set<WordId> used;
  for (const auto& doc : corpus.documents) used.insert(doc.word_ids.begin(), doc.word_ids.end());
  const std::vector<WordId> ids(used.begin(), used.end());

  RandomBasisSpec spec;
  spec.num_features = num_features;
  spec.d_max = d_max;
  spec.gamma = gamma;
  spec.seed = seed;
  spec.dim = table.dim();
  spec.extrema = coordinate_extrema(table, ids);
  if (mean_centered) {
    spec.center.assign(table.dim(), 0.0);
    for (WordId id : ids) {
      const auto v = table.vector(id);
      for (std::size_t k = 0; k < v.size(); ++k) spec.center[k] += v[k];
    }
    for (double& c : spec.center) c /= static_cast<double>(ids.size());
  }
  spec.validate();
  return spec;
}

RandomDocument sample_random_document(const RandomBasisSpec& spec, std::size_t index) {
  if (index < 1 || index > spec.num_features) {
    throw InvalidArgument("random document index must be in [1, R]");
  }
  SubstreamRng rng(spec.seed, index);
  RandomDocument doc;
  doc.index = index;
  doc.dim = spec.dim;
  doc.point_offset = (index - 1) * spec.d_max;
  doc.length = static_cast<std::size_t>(rng.uniform_int(spec.d_min, spec.d_max));
  doc.vectors.resize(doc.length * spec.dim);
  const double half_width = 0.5 * (spec.extrema.v_max - spec.extrema.v_min);
  for (std::size_t l = 0; l < doc.length; ++l) {
    for (std::size_t k = 0; k < spec.dim; ++k) {
      double lo = spec.extrema.v_min;
      double hi = spec.extrema.v_max;
      if (!spec.center.empty()) {
        lo = spec.center[k] - half_width;
        hi = spec.center[k] + half_width;
      }
      doc.vectors[l * spec.dim + k] = rng.uniform(lo, hi);
    }
  }
  doc.weights.assign(doc.length, 1.0 / static_cast<double>(doc.length));
  return doc;
}

RandomBasis generate_basis(const RandomBasisSpec& spec) {
  spec.validate();
  RandomBasis basis{spec, {}};
  basis.docs.reserve(spec.num_features);
  for (std::size_t j = 1; j <= spec.num_features; ++j) {
    basis.docs.push_back(sample_random_document(spec, j));
  }
  return basis;
}

double random_document_wmd(const EmbeddingTable& table, const Document& x,
                           const RandomDocument& omega, DistanceCache* cache) {
  if (x.table_id != table.fingerprint()) {
    throw InvalidArgument("document was built against a different embedding table");
  }
  if (omega.dim != table.dim()) throw InvalidArgument("random document dimension mismatch");
  CostMatrix cost(x.size(), omega.length);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const WordId w = x.word_ids[i];
    const auto v = table.vector(w);
    for (std::size_t l = 0; l < omega.length; ++l) {
      auto compute = [&] { return euclidean_distance(v, omega.word(l)); };
      if (cache) {
        const auto point = static_cast<DistanceCache::PointId>(table.size() + omega.point_offset + l);
        cost(i, l) = cache->get_or_compute(w, point, compute);
      } else {
        cost(i, l) = compute();
      }
    }
  }
  return transport_cost(x.weights, omega.weights, cost);
}

double feature_value(const EmbeddingTable& table, const Document& x, const RandomDocument& omega,
                     double gamma, DistanceCache* cache) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  return std::exp(-gamma * random_document_wmd(table, x, omega, cache));
}

DenseMatrix random_distances(const EmbeddingTable& table, std::span<const Document> docs,
                             const RandomBasis& basis, const EmbedOptions& options) {
  const std::size_t n = docs.size();
  const std::size_t r = basis.docs.size();
  DenseMatrix out(n, r);
  DistanceCache cache;
  DistanceCache* shared = options.precompute ? &cache : nullptr;
  parallel_for(n * r, options.workers, [&](std::size_t cell) {
    const std::size_t i = cell / r;
    const std::size_t j = cell % r;
    out(i, j) = random_document_wmd(table, docs[i], basis.docs[j], shared);
  });
  return out;
}

FeatureMatrix features_from_distances(const DenseMatrix& distances, const RandomBasisSpec& spec,
                                      double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  FeatureMatrix z;
  z.values = DenseMatrix(distances.rows(), distances.cols());
  z.seed = spec.seed;
  z.gamma = gamma;
  z.d_max = static_cast<std::uint32_t>(spec.d_max);
  RandomBasisSpec effective = spec;
  effective.gamma = gamma;
  effective.num_features = distances.cols();
  z.basis_fingerprint = effective.fingerprint();
  const double scale = 1.0 / std::sqrt(static_cast<double>(distances.cols()));
  for (std::size_t k = 0; k < distances.data().size(); ++k) {
    z.values.data()[k] = std::exp(-gamma * distances.data()[k]) * scale;
  }
  return z;
}

FeatureMatrix embed_documents(const EmbeddingTable& table, std::span<const Document> docs,
                              const RandomBasis& basis, const EmbedOptions& options) {
  return features_from_distances(random_distances(table, docs, basis, options), basis.spec,
                                 basis.spec.gamma);
}

Embedding embed_corpus(const EmbeddingTable& table, const Corpus& corpus,
                       const RandomBasisSpec& spec, const EmbedOptions& options) {
  if (corpus.documents.empty()) throw InvalidArgument("embed_corpus: empty corpus");
  Embedding out{generate_basis(spec), {}};
  out.features = embed_documents(table, corpus.documents, out.basis, options);
  return out;
}

std::vector<double> embed_new(const EmbeddingTable& table, const Document& doc,
                              const RandomBasis& basis) {
  const auto z = embed_documents(table, std::span<const Document>(&doc, 1), basis);
  return z.values.data();
}

double approx_kernel(std::span<const double> z_x, std::span<const double> z_y) {
  if (z_x.size() != z_y.size()) {
    throw InvalidArgument("approx_kernel: feature vectors have different lengths");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < z_x.size(); ++k) sum += z_x[k] * z_y[k];
  return sum;
}

void write_basis_spec(const RandomBasisSpec& spec, std::ostream& out) {
  out << "num_features=" << spec.num_features << '\n'
      << "d_min=" << spec.d_min << '\n'
      << "d_max=" << spec.d_max << '\n'
      << "gamma=" << format_double(spec.gamma) << '\n'
      << "seed=" << spec.seed << '\n'
      << "dim=" << spec.dim << '\n'
      << "v_min=" << format_double(spec.extrema.v_min) << '\n'
      << "v_max=" << format_double(spec.extrema.v_max) << '\n'
      << "center=";
  for (std::size_t k = 0; k < spec.center.size(); ++k) {
    if (k) out << ',';
    out << format_double(spec.center[k]);
  }
  out << '\n';
}

void save_basis_spec(const RandomBasisSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_basis_spec(spec, out);
}

RandomBasisSpec read_basis_spec(std::istream& in) {
  std::map<std::string, std::pair<std::string, std::uint64_t>> kv;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected key=value", ParseError::Unit::kLine, line_no);
    }
    kv[line.substr(0, eq)] = {line.substr(eq + 1), line_no};
  }
  auto take = [&](const std::string& key) -> std::pair<std::string, std::uint64_t> {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing key '" + key + "'", ParseError::Unit::kLine, line_no);
    auto value = it->second;
    kv.erase(it);
    return value;
  };

  RandomBasisSpec spec;
  auto [r, r_line] = take("num_features");
  spec.num_features = parse_uint(r, r_line);
  auto [dmin, dmin_line] = take("d_min");
  spec.d_min = parse_uint(dmin, dmin_line);
  auto [dmax, dmax_line] = take("d_max");
  spec.d_max = parse_uint(dmax, dmax_line);
  auto [g, g_line] = take("gamma");
  spec.gamma = parse_double(g, g_line);
  auto [seed, seed_line] = take("seed");
  spec.seed = parse_uint(seed, seed_line);
  auto [dim, dim_line] = take("dim");
  spec.dim = parse_uint(dim, dim_line);
  auto [lo, lo_line] = take("v_min");
  spec.extrema.v_min = parse_double(lo, lo_line);
  auto [hi, hi_line] = take("v_max");
  spec.extrema.v_max = parse_double(hi, hi_line);
  if (kv.contains("center")) {
    auto [center, center_line] = take("center");
    std::string_view rest(center);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      spec.center.push_back(parse_double(rest.substr(0, comma), center_line));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  if (!kv.empty()) {
    const auto& [key, value] = *kv.begin();
    throw ParseError("unknown key '" + key + "'", ParseError::Unit::kLine, value.second);
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), ParseError::Unit::kLine, line_no);
  }
  return spec;
}

RandomBasisSpec load_basis_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open basis file '" + path.string() + "'");
  return read_basis_spec(in);
}

}  // namespace wordmover
