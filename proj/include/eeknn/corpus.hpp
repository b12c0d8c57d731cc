#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eeknn/binary_io.hpp"
#include "eeknn/common.hpp"

namespace eeknn {

/// Id-addressed row-major matrix of f32 embeddings (a corpus or a query set).
class VectorSet {
 public:
  VectorSet() = default;

  VectorSet(std::vector<DocId> ids, std::vector<float> data, std::uint32_t dim)
      : ids_(std::move(ids)), data_(std::move(data)), dim_(dim) {
    require(dim_ > 0, "VectorSet: dim must be positive");
    require(data_.size() == ids_.size() * dim_, "VectorSet: data size != count * dim");
    std::unordered_set<DocId> seen;
    seen.reserve(ids_.size());
    for (DocId id : ids_) require(seen.insert(id).second, "VectorSet: duplicate id " + std::to_string(id));
    for (float v : data_) require(std::isfinite(v), "VectorSet: non-finite value");
  }

  /// Rows get dense ids 0..count-1.
  static VectorSet dense(std::vector<float> data, std::uint32_t dim) {
    require(dim > 0, "VectorSet: dim must be positive");
    std::vector<DocId> ids(data.size() / dim);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return VectorSet(std::move(ids), std::move(data), dim);
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::uint32_t dim() const { return dim_; }
  const std::vector<DocId>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }
  DocId id(std::size_t row) const { return ids_[row]; }

  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * dim_, dim_};
  }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::vector<DocId> ids_;
  std::vector<float> data_;
  std::uint32_t dim_ = 0;
};

/// Relevance judgments: query id -> (doc id -> grade >= 1).
using Qrels = std::map<QueryId, std::map<DocId, int>>;

enum class VectorFormat { kNative, kFvecs };

namespace detail {
inline constexpr char kVecMagic[4] = {'D', 'V', 'E', 'C'};
inline constexpr std::uint32_t kVecVersion = 1;
}  // namespace detail

/// Native layout: "DVEC", u32 version, u64 count, u32 dim, count*dim f32.
/// Ids are not stored; rows load with dense ids in file order.
inline void save_vectors(const VectorSet& vs, const std::string& path) {
  io::BinaryWriter w(path);
  w.put_bytes(std::string_view(detail::kVecMagic, 4));
  w.put<std::uint32_t>(detail::kVecVersion);
  w.put<std::uint64_t>(vs.size());
  w.put<std::uint32_t>(vs.dim());
  w.put_span(std::span<const float>(vs.data()));
  w.close();
}

namespace detail {

inline void check_finite(const io::BinaryReader& r, std::span<const float> values,
                         std::uint64_t start_offset) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) r.fail("non-finite value", start_offset + i * sizeof(float));
}

inline VectorSet load_native(io::BinaryReader& r) {
  if (r.get_bytes(4, "magic") != std::string_view(kVecMagic, 4)) r.fail("bad magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVecVersion) r.fail("unsupported version " + std::to_string(version), 4);
  const auto count = r.get<std::uint64_t>("count");
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) r.fail("zero dim", 16);
  const std::uint64_t payload = count * dim * sizeof(float);
  if (r.remaining() != payload)
    r.fail("payload size " + std::to_string(r.remaining()) + " != count*dim*4 = " +
               std::to_string(payload),
           r.offset());
  std::vector<float> data(count * dim);
  const std::uint64_t start = r.offset();
  r.get_span(std::span<float>(data), "payload");
  check_finite(r, data, start);
  return VectorSet::dense(std::move(data), dim);
}

inline VectorSet load_fvecs(io::BinaryReader& r) {
  std::vector<float> data;
  std::int32_t dim = 0;
  while (!r.at_end()) {
    const std::uint64_t rec = r.offset();
    const auto d = r.get<std::int32_t>("record dim");
    if (d <= 0) r.fail("non-positive record dim " + std::to_string(d), rec);
    if (dim == 0) dim = d;
    if (d != dim)
      r.fail("record dim " + std::to_string(d) + " differs from first record dim " + std::to_string(dim),
             rec);
    const std::size_t base = data.size();
    data.resize(base + static_cast<std::size_t>(dim));
    const std::uint64_t start = r.offset();
    r.get_span(std::span<float>(data.data() + base, static_cast<std::size_t>(dim)), "record payload");
    check_finite(r, std::span<const float>(data.data() + base, static_cast<std::size_t>(dim)), start);
  }
  if (dim == 0) throw FormatError(r.path() + ": empty fvecs file has no dimension");
  return VectorSet::dense(std::move(data), static_cast<std::uint32_t>(dim));
}

}  // namespace detail

inline VectorSet load_vectors(const std::string& path, VectorFormat format = VectorFormat::kNative) {
  io::BinaryReader r(path);
  return format == VectorFormat::kNative ? detail::load_native(r) : detail::load_fvecs(r);
}

inline void save_fvecs(const VectorSet& vs, const std::string& path) {
  io::BinaryWriter w(path);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    w.put<std::int32_t>(static_cast<std::int32_t>(vs.dim()));
    w.put_span(vs.row(i));
  }
  w.close();
}

/// TREC qrels: whitespace-separated `qid iter docid grade`. Grade-0 lines are dropped.
inline Qrels load_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open qrels: " + path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    QueryId qid = 0;
    std::string iter;
    DocId doc = 0;
    int grade = 0;
    std::string extra;
    if (!(ls >> qid >> iter >> doc >> grade) || (ls >> extra))
      throw FormatError(path + ": malformed qrels line " + std::to_string(lineno) + ": '" + line + "'");
    if (grade >= 1) qrels[qid][doc] = grade;
  }
  return qrels;
}

inline void save_qrels(const Qrels& qrels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& [qid, docs] : qrels)
    for (const auto& [doc, grade] : docs) out << qid << " 0 " << doc << ' ' << grade << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Planted Gaussian blobs on the unit sphere. Queries are noisy copies of
/// corpus vectors.
struct SyntheticSpec {
  std::uint32_t num_clusters_planted = 100;
  std::uint32_t vectors_per_cluster = 1000;
  std::uint32_t dim = 64;
  float intra_cluster_stddev = 0.1f;
  std::uint32_t num_queries = 2000;
  std::uint64_t seed = 1;
  /// Query noise stddev as a multiple of intra_cluster_stddev.
  float query_noise_ratio = 0.1f;
  /// When greater than query_noise_ratio, each query draws its ratio
  /// uniformly from [query_noise_ratio, query_noise_ratio_max].
  float query_noise_ratio_max = 0.0f;
  /// Project every generated vector onto the unit sphere.
  bool normalize = true;
  /// When > 0, planted-cluster siblings of the source within this Euclidean
  /// distance of the query are also judged relevant.
  float sibling_radius = 0.0f;

  void validate() const {
    require(num_clusters_planted > 0, "synthetic: num_clusters_planted must be positive");
    require(vectors_per_cluster > 0, "synthetic: vectors_per_cluster must be positive");
    require(dim > 0, "synthetic: dim must be positive");
    require(intra_cluster_stddev >= 0.0f && std::isfinite(intra_cluster_stddev),
            "synthetic: intra_cluster_stddev must be finite and >= 0");
    require(num_queries > 0, "synthetic: num_queries must be positive");
    require(query_noise_ratio >= 0.0f, "synthetic: query_noise_ratio must be >= 0");
  }
};

struct SyntheticData {
  VectorSet corpus;
  VectorSet queries;
  Qrels qrels;
  std::vector<std::uint32_t> planted_label;  // per corpus row
  std::vector<DocId> query_source;           // per query row
};

namespace detail {
inline void normalize_in_place(std::span<float> v) {
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}
}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const std::size_t dim = spec.dim;

  std::vector<float> centers(spec.num_clusters_planted * dim);
  for (std::size_t c = 0; c < spec.num_clusters_planted; ++c) {
    std::span<float> center(centers.data() + c * dim, dim);
    for (float& x : center) x = gauss(rng);
    detail::normalize_in_place(center);
  }

  const std::size_t count = std::size_t{spec.num_clusters_planted} * spec.vectors_per_cluster;
  std::vector<float> data(count * dim);
  SyntheticData out;
  out.planted_label.resize(count);
  for (std::size_t c = 0; c < spec.num_clusters_planted; ++c) {
    for (std::size_t j = 0; j < spec.vectors_per_cluster; ++j) {
      const std::size_t row = c * spec.vectors_per_cluster + j;
      out.planted_label[row] = static_cast<std::uint32_t>(c);
      std::span<float> v(data.data() + row * dim, dim);
      for (std::size_t d = 0; d < dim; ++d)
        v[d] = centers[c * dim + d] + spec.intra_cluster_stddev * gauss(rng);
      if (spec.normalize) detail::normalize_in_place(v);
    }
  }

  const bool mixed = spec.query_noise_ratio_max > spec.query_noise_ratio;
  std::uniform_real_distribution<float> ratio(spec.query_noise_ratio,
                                              mixed ? spec.query_noise_ratio_max : spec.query_noise_ratio);
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  std::vector<float> qdata(std::size_t{spec.num_queries} * dim);
  out.query_source.resize(spec.num_queries);
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    const std::size_t src = pick(rng);
    out.query_source[q] = src;
    const float query_sigma = (mixed ? ratio(rng) : spec.query_noise_ratio) * spec.intra_cluster_stddev;
    std::span<float> v(qdata.data() + q * dim, dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = data[src * dim + d] + query_sigma * gauss(rng);
    if (spec.normalize) detail::normalize_in_place(v);
  }

  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    const DocId src = out.query_source[q];
    out.qrels[q][src] = 1;
    if (spec.sibling_radius <= 0.0f) continue;
    const std::uint32_t label = out.planted_label[src];
    const std::span<const float> qv(qdata.data() + q * dim, dim);
    const float r2 = spec.sibling_radius * spec.sibling_radius;
    for (std::size_t j = 0; j < spec.vectors_per_cluster; ++j) {
      const std::size_t row = std::size_t{label} * spec.vectors_per_cluster + j;
      if (squared_l2(qv, std::span<const float>(data.data() + row * dim, dim)) <= r2)
        out.qrels[q][row] = 1;
    }
  }

  out.corpus = VectorSet::dense(std::move(data), spec.dim);
  out.queries = VectorSet::dense(std::move(qdata), spec.dim);
  return out;
}

}  // namespace eeknn
