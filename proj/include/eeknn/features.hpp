#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "eeknn/binary_io.hpp"
#include "eeknn/common.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/log.hpp"
#include "eeknn/oracle.hpp"

namespace eeknn {

/// Column layout of a query feature vector:
///   query components | centroid similarities at `centroid_ranks` |
///   4 result-set features after tau probes | [stability: 2 * (tau - 1)]
struct FeatureLayout {
  std::uint32_t dim_query = 0;
  std::vector<std::uint32_t> centroid_ranks;
  bool has_stability = true;
  std::uint32_t tau = 10;

  std::size_t total_len() const {
    return dim_query + centroid_ranks.size() + 4 + (has_stability ? 2 * std::size_t{tau - 1} : 0);
  }

  /// Ranks {1..tau} ∪ {10, 20, ..., 100}, deduplicated; ranks beyond K dropped.
  static FeatureLayout make(std::uint32_t dim_query, std::uint32_t tau, std::uint32_t num_clusters,
                            bool has_stability) {
    require(dim_query > 0, "FeatureLayout: dim_query must be positive");
    require(tau >= 1, "FeatureLayout: tau must be >= 1");
    FeatureLayout l;
    l.dim_query = dim_query;
    l.tau = tau;
    l.has_stability = has_stability;
    std::vector<std::uint32_t> ranks;
    for (std::uint32_t h = 1; h <= tau; ++h) ranks.push_back(h);
    for (std::uint32_t h = 10; h <= 100; h += 10) ranks.push_back(h);
    std::sort(ranks.begin(), ranks.end());
    ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
    std::erase_if(ranks, [&](std::uint32_t h) { return h > num_clusters; });
    l.centroid_ranks = std::move(ranks);
    return l;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

namespace detail {
inline float guarded_ratio(float num, float den, const char* what) {
  if (den == 0.0f) {
    static std::atomic<int> warned{0};
    if (warned.fetch_add(1) < 5) log::warn("zero denominator in {} feature; emitting 0", what);
    return 0.0f;
  }
  return num / den;
}

inline std::size_t id_intersection(const std::vector<ScoredDoc>& a, const std::vector<ScoredDoc>& b) {
  std::unordered_set<DocId> ids;
  ids.reserve(a.size());
  for (const auto& d : a) ids.insert(d.id);
  std::size_t n = 0;
  for (const auto& d : b) n += ids.count(d.id);
  return n;
}
}  // namespace detail

/// Feature vector for one query from a trace that has retained RS_1..RS_tau.
inline std::vector<float> extract_features(const SearchTrace& trace, std::span<const float> q,
                                           const FeatureLayout& layout) {
  const std::uint32_t tau = layout.tau;
  require(q.size() == layout.dim_query, "extract_features: query dim does not match layout");
  require(trace.depth() >= tau, "extract_features: trace depth " + std::to_string(trace.depth()) +
                                    " < tau " + std::to_string(tau));
  require(trace.retained() >= tau, "extract_features: trace does not retain RS_1..RS_tau");
  require(layout.centroid_ranks.empty() || layout.centroid_ranks.back() <= trace.ranked_centroid_scores.size(),
          "extract_features: layout rank exceeds number of clusters");

  std::vector<float> f;
  f.reserve(layout.total_len());
  f.insert(f.end(), q.begin(), q.end());
  for (std::uint32_t h : layout.centroid_ranks) f.push_back(trace.ranked_centroid_scores[h - 1]);

  const auto& rs = trace.snapshot(tau);
  const float top = rs.empty() ? 0.0f : rs.front().score;
  const float kth = rs.empty() ? 0.0f : rs[std::min<std::size_t>(trace.k, rs.size()) - 1].score;
  f.push_back(top);
  f.push_back(kth);
  f.push_back(detail::guarded_ratio(top, kth, "max/kth similarity"));
  f.push_back(detail::guarded_ratio(top, trace.ranked_centroid_scores.front(), "doc/centroid similarity"));

  if (layout.has_stability) {
    const float k = static_cast<float>(trace.k);
    for (std::uint32_t h = 2; h <= tau; ++h) f.push_back(static_cast<float>(trace.overlap[h - 2]) / k);
    for (std::uint32_t h = 2; h <= tau; ++h)
      f.push_back(static_cast<float>(detail::id_intersection(trace.snapshot(1), trace.snapshot(h))) / k);
  }
  return f;
}

enum class TargetKind : std::uint32_t { kRegression = 0, kClassification = 1 };

/// Dense row-major training matrix.
struct TrainingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  TargetKind target = TargetKind::kRegression;
  std::vector<float> X;
  std::vector<float> y;
  std::vector<float> weights;
  std::vector<QueryId> qids;

  std::span<const float> row(std::size_t r) const { return {X.data() + r * cols, cols}; }

  void append(std::span<const float> x, float target_value, float weight, QueryId qid) {
    if (rows == 0 && cols == 0) cols = x.size();
    require(x.size() == cols, "TrainingMatrix: row length mismatch");
    X.insert(X.end(), x.begin(), x.end());
    y.push_back(target_value);
    weights.push_back(weight);
    qids.push_back(qid);
    ++rows;
  }

  TrainingMatrix subset(std::span<const std::size_t> idx) const {
    TrainingMatrix m;
    m.cols = cols;
    m.target = target;
    for (std::size_t i : idx) m.append(row(i), y[i], weights[i], qids[i]);
    m.cols = cols;
    return m;
  }

  friend bool operator==(const TrainingMatrix&, const TrainingMatrix&) = default;
};

/// Exit (1) iff C <= tau, Continue (0) otherwise.
inline float exit_class(std::uint32_t C, std::uint32_t tau) { return C <= tau ? 1.0f : 0.0f; }

/// One row per trace; regression target C(q), classification target Exit/Continue.
inline TrainingMatrix build_training_matrix(const VectorSet& queries, const std::vector<SearchTrace>& traces,
                                            const GoldenLabels& labels, const FeatureLayout& layout,
                                            TargetKind target) {
  std::unordered_map<QueryId, std::size_t> label_row;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) label_row.emplace(labels.labels[i].qid, i);
  std::unordered_map<QueryId, std::size_t> query_row;
  for (std::size_t i = 0; i < queries.size(); ++i) query_row.emplace(queries.id(i), i);

  TrainingMatrix m;
  m.target = target;
  m.cols = layout.total_len();
  for (const auto& t : traces) {
    const auto lit = label_row.find(t.query_id);
    const auto qit = query_row.find(t.query_id);
    if (lit == label_row.end() || qit == query_row.end())
      throw InvalidArgument("build_training_matrix: query " + std::to_string(t.query_id) +
                            " missing from labels or query set");
    const std::uint32_t C = labels.labels[lit->second].C;
    const float y = target == TargetKind::kRegression ? static_cast<float>(C) : exit_class(C, layout.tau);
    m.append(extract_features(t, queries.row(qit->second), layout), y, 1.0f, t.query_id);
  }
  return m;
}

// Binary layout: "EEXM", u32 version, u64 rows, u32 cols, u32 target kind,
// then X (rows*cols f32), y (rows f32), weights (rows f32), qids (rows u64).
inline void save_training_matrix(const TrainingMatrix& m, const std::string& path) {
  io::BinaryWriter w(path);
  w.put_bytes("EEXM");
  w.put<std::uint32_t>(1);
  w.put<std::uint64_t>(m.rows);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.target));
  w.put_span(std::span<const float>(m.X));
  w.put_span(std::span<const float>(m.y));
  w.put_span(std::span<const float>(m.weights));
  w.put_span(std::span<const QueryId>(m.qids));
  w.close();
}

inline TrainingMatrix load_training_matrix(const std::string& path) {
  io::BinaryReader r(path);
  if (r.get_bytes(4, "magic") != "EEXM") r.fail("bad training matrix magic", 0);
  if (r.get<std::uint32_t>("version") != 1) r.fail("unsupported version", 4);
  TrainingMatrix m;
  m.rows = r.get<std::uint64_t>("rows");
  m.cols = r.get<std::uint32_t>("cols");
  const auto kind = r.get<std::uint32_t>("target kind");
  if (kind > 1) r.fail("unknown target kind", 20);
  m.target = static_cast<TargetKind>(kind);
  if (r.remaining() != m.rows * (m.cols * 4 + 4 + 4 + 8)) r.fail("payload size mismatch", r.offset());
  m.X.resize(m.rows * m.cols);
  m.y.resize(m.rows);
  m.weights.resize(m.rows);
  m.qids.resize(m.rows);
  r.get_span(std::span<float>(m.X), "X");
  r.get_span(std::span<float>(m.y), "y");
  r.get_span(std::span<float>(m.weights), "weights");
  r.get_span(std::span<QueryId>(m.qids), "qids");
  return m;
}

/// Debug dump: qid, target, weight, f0..f{cols-1}.
inline void save_training_csv(const TrainingMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "qid,target,weight";
  for (std::size_t c = 0; c < m.cols; ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << m.qids[r] << ',' << m.y[r] << ',' << m.weights[r];
    for (float v : m.row(r)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace eeknn
