#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eeknn/binary_io.hpp"
#include "eeknn/common.hpp"
#include "eeknn/corpus.hpp"
#include "eeknn/parallel.hpp"

namespace eeknn {

/// Smallest power of two strictly greater than 16 * sqrt(corpus_size).
inline std::uint64_t default_num_clusters(std::uint64_t corpus_size) {
  require(corpus_size >= 1, "default_num_clusters: corpus_size must be >= 1");
  const double bound = 16.0 * std::sqrt(static_cast<double>(corpus_size));
  std::uint64_t p = 1;
  while (static_cast<double>(p) <= bound) p <<= 1;
  return p;
}

struct KMeansConfig {
  std::uint32_t max_iters = 25;
  std::uint64_t seed = 1234;
  unsigned threads = default_threads();
};

namespace detail {

/// Index of the nearest centroid in L2; ties go to the lower index.
inline std::uint32_t nearest_l2(std::span<const float> x, std::span<const float> centroids,
                                std::span<const float> centroid_norms, std::uint32_t dim) {
  const std::size_t K = centroid_norms.size();
  float best = std::numeric_limits<float>::infinity();
  std::uint32_t arg = 0;
  for (std::size_t c = 0; c < K; ++c) {
    const float d = centroid_norms[c] - 2.0f * dot(x, centroids.subspan(c * dim, dim));
    if (d < best) {
      best = d;
      arg = static_cast<std::uint32_t>(c);
    }
  }
  return arg;
}

inline void split_for_empty(std::vector<float>& centroids, std::vector<std::size_t>& sizes,
                            std::uint32_t dim, std::size_t empty) {
  constexpr float kEps = 1.0f / 1024.0f;
  const auto largest =
      static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  float* src = centroids.data() + largest * dim;
  float* dst = centroids.data() + empty * dim;
  for (std::uint32_t j = 0; j < dim; ++j) {
    const float v = src[j];
    const float up = v * (1.0f + kEps) + (j % 2 == 0 ? kEps : -kEps);
    const float down = v * (1.0f - kEps) - (j % 2 == 0 ? kEps : -kEps);
    dst[j] = up;
    src[j] = down;
  }
  sizes[empty] = sizes[largest] / 2;
  sizes[largest] -= sizes[empty];
}

}  // namespace detail

/// Lloyd's k-means in Euclidean space with k-means++ seeding. Empty clusters
/// are repaired by splitting the currently largest cluster.
inline std::vector<float> kmeans(const VectorSet& points, std::uint32_t K, const KMeansConfig& cfg) {
  const std::size_t n = points.size();
  const std::uint32_t dim = points.dim();
  require(n > 0, "kmeans: empty input");
  require(K >= 1 && K <= n, "kmeans: K must be in [1, count]");

  std::mt19937_64 rng(cfg.seed);
  std::vector<float> centroids(std::size_t{K} * dim);

  // k-means++ seeding.
  {
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::uint32_t c = 0; c < K; ++c) {
      std::copy_n(points.row(chosen).data(), dim, centroids.data() + std::size_t{c} * dim);
      const std::span<const float> center(centroids.data() + std::size_t{c} * dim, dim);
      parallel_for(
          n, [&](std::size_t i) { min_d2[i] = std::min<double>(min_d2[i], squared_l2(points.row(i), center)); },
          cfg.threads);
      if (c + 1 == K) break;
      double total = 0.0;
      for (double d : min_d2) total += d;
      if (total <= 0.0) {
        chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        continue;
      }
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_d2[i];
        if (acc > target && min_d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
  }

  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint32_t> next(n);
  std::vector<float> norms(K);
  std::vector<std::size_t> sizes(K);
  std::vector<double> sums(std::size_t{K} * dim);
  for (std::uint32_t iter = 0; iter < cfg.max_iters; ++iter) {
    for (std::uint32_t c = 0; c < K; ++c) {
      const std::span<const float> cv(centroids.data() + std::size_t{c} * dim, dim);
      norms[c] = dot(cv, cv);
    }
    parallel_for(
        n, [&](std::size_t i) { next[i] = detail::nearest_l2(points.row(i), centroids, norms, dim); },
        cfg.threads);
    if (next == assign) break;
    assign.swap(next);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t c = assign[i];
      ++sizes[c];
      const auto x = points.row(i);
      double* s = sums.data() + std::size_t{c} * dim;
      for (std::uint32_t j = 0; j < dim; ++j) s[j] += x[j];
    }
    for (std::uint32_t c = 0; c < K; ++c) {
      if (sizes[c] == 0) continue;
      for (std::uint32_t j = 0; j < dim; ++j)
        centroids[std::size_t{c} * dim + j] =
            static_cast<float>(sums[std::size_t{c} * dim + j] / static_cast<double>(sizes[c]));
    }
    for (std::uint32_t c = 0; c < K; ++c)
      if (sizes[c] == 0) detail::split_for_empty(centroids, sizes, dim, c);
  }
  return centroids;
}

/// Two-level clustered index: K centroids and a posting list per centroid.
/// Postings keep a packed copy of their vectors so probing is self-contained.
class IvfIndex {
 public:
  IvfIndex() = default;

  /// Assigns every corpus row to its most similar centroid under `metric`.
  IvfIndex(std::vector<float> centroids, std::uint32_t dim, Metric metric, const VectorSet& corpus,
           unsigned threads = default_threads())
      : centroids_(std::move(centroids)), dim_(dim), metric_(metric) {
    require(dim_ > 0 && centroids_.size() % dim_ == 0 && !centroids_.empty(),
            "IvfIndex: bad centroid matrix");
    require(corpus.dim() == dim_, "IvfIndex: corpus dim mismatch");
    std::vector<std::uint32_t> owner(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t i) { owner[i] = assign(corpus.row(i)); }, threads);
    std::vector<std::vector<DocId>> postings(num_clusters());
    for (std::size_t i = 0; i < corpus.size(); ++i) postings[owner[i]].push_back(corpus.id(i));
    fill_postings(std::move(postings), corpus);
  }

  /// Rebuilds packed vectors for precomputed postings (used when loading).
  IvfIndex(std::vector<float> centroids, std::uint32_t dim, Metric metric,
           std::vector<std::vector<DocId>> postings, const VectorSet& corpus)
      : centroids_(std::move(centroids)), dim_(dim), metric_(metric) {
    require(dim_ > 0 && centroids_.size() % dim_ == 0 && !centroids_.empty(),
            "IvfIndex: bad centroid matrix");
    require(corpus.dim() == dim_, "IvfIndex: corpus dim mismatch");
    require(postings.size() == num_clusters(), "IvfIndex: postings count != K");
    fill_postings(std::move(postings), corpus);
  }

  std::uint32_t num_clusters() const { return static_cast<std::uint32_t>(centroids_.size() / dim_); }
  std::uint32_t dim() const { return dim_; }
  Metric metric() const { return metric_; }
  std::size_t num_docs() const { return num_docs_; }
  const std::vector<float>& centroids() const { return centroids_; }
  std::span<const float> centroid(std::uint32_t c) const {
    return {centroids_.data() + std::size_t{c} * dim_, dim_};
  }
  const std::vector<DocId>& posting(std::uint32_t c) const { return posting_ids_[c]; }
  std::span<const float> posting_vectors(std::uint32_t c) const { return posting_vecs_[c]; }

  /// Cluster of the most similar centroid; ties to the lower index.
  std::uint32_t assign(std::span<const float> x) const {
    float best = -std::numeric_limits<float>::infinity();
    std::uint32_t arg = 0;
    for (std::uint32_t c = 0; c < num_clusters(); ++c) {
      const float s = similarity(metric_, x, centroid(c));
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    return arg;
  }

  /// Postings are a disjoint cover of `corpus` ids.
  bool is_partition_of(const VectorSet& corpus) const {
    std::unordered_map<DocId, int> seen;
    seen.reserve(corpus.size());
    for (DocId id : corpus.ids()) seen[id] = 0;
    for (const auto& p : posting_ids_)
      for (DocId id : p) {
        auto it = seen.find(id);
        if (it == seen.end() || it->second++ != 0) return false;
      }
    return std::all_of(seen.begin(), seen.end(), [](const auto& kv) { return kv.second == 1; });
  }

 private:
  void fill_postings(std::vector<std::vector<DocId>> postings, const VectorSet& corpus) {
    std::unordered_map<DocId, std::size_t> row_of;
    row_of.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) row_of.emplace(corpus.id(i), i);
    posting_ids_ = std::move(postings);
    posting_vecs_.assign(posting_ids_.size(), {});
    num_docs_ = 0;
    for (std::size_t c = 0; c < posting_ids_.size(); ++c) {
      auto& vecs = posting_vecs_[c];
      vecs.reserve(posting_ids_[c].size() * dim_);
      for (DocId id : posting_ids_[c]) {
        auto it = row_of.find(id);
        if (it == row_of.end()) throw FormatError("index posting references unknown doc id " + std::to_string(id));
        const auto r = corpus.row(it->second);
        vecs.insert(vecs.end(), r.begin(), r.end());
      }
      num_docs_ += posting_ids_[c].size();
    }
  }

  std::vector<float> centroids_;
  std::uint32_t dim_ = 0;
  Metric metric_ = Metric::kInnerProduct;
  std::vector<std::vector<DocId>> posting_ids_;
  std::vector<std::vector<float>> posting_vecs_;
  std::size_t num_docs_ = 0;
};

/// Trains centroids in L2 and assigns postings under `metric`.
inline IvfIndex build_index(const VectorSet& corpus, std::uint32_t K, Metric metric,
                            const KMeansConfig& cfg = {}) {
  require(!corpus.empty(), "build_index: empty corpus");
  require(K >= 1, "build_index: K must be >= 1");
  require(K <= corpus.size(), "build_index: K=" + std::to_string(K) + " exceeds corpus size " +
                                  std::to_string(corpus.size()));
  IvfIndex index(kmeans(corpus, K, cfg), corpus.dim(), metric, corpus, cfg.threads);
  if (!index.is_partition_of(corpus)) throw std::logic_error("build_index: postings are not a partition");
  return index;
}

/// Cluster indices sorted by similarity to q, descending; ties by ascending index.
inline std::vector<std::uint32_t> rank_clusters(const IvfIndex& index, std::span<const float> q,
                                                std::vector<float>* scores_out = nullptr) {
  require(q.size() == index.dim(), "rank_clusters: query dim " + std::to_string(q.size()) +
                                       " != index dim " + std::to_string(index.dim()));
  const std::uint32_t K = index.num_clusters();
  std::vector<float> sims(K);
  for (std::uint32_t c = 0; c < K; ++c) sims[c] = similarity(index.metric(), q, index.centroid(c));
  std::vector<std::uint32_t> order(K);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  if (scores_out) {
    scores_out->resize(K);
    for (std::uint32_t h = 0; h < K; ++h) (*scores_out)[h] = sims[order[h]];
  }
  return order;
}

inline constexpr std::uint32_t kRetainAll = std::numeric_limits<std::uint32_t>::max();

/// Probe-by-probe record of one query's incremental search.
///
/// After probing h clusters the result set RS_h is the exact top-k of the
/// union of the first h ranked clusters. Snapshots RS_1..RS_min(depth, retain)
/// are kept in full; phi and the leading document are kept for every depth.
struct SearchTrace {
  QueryId query_id = 0;
  std::uint32_t k = 0;
  std::uint32_t retain_depth = kRetainAll;
  std::vector<std::uint32_t> ranked_clusters;
  std::vector<float> ranked_centroid_scores;
  /// snapshots[h-1] == RS_h.
  std::vector<std::vector<ScoredDoc>> snapshots;
  /// overlap[h-2] == |RS_{h-1} ∩ RS_h| for h >= 2.
  std::vector<std::uint32_t> overlap;
  /// leaders[h-1] == RS_h[0], or the sentinel {max id, -inf} when RS_h is empty.
  std::vector<ScoredDoc> leaders;
  /// RS_depth, sorted best-first.
  std::vector<ScoredDoc> current;

  std::uint32_t depth() const { return static_cast<std::uint32_t>(leaders.size()); }
  std::uint32_t retained() const { return static_cast<std::uint32_t>(snapshots.size()); }

  /// phi_h = 100 * |RS_{h-1} ∩ RS_h| / k, defined for 2 <= h <= depth.
  double phi(std::uint32_t h) const {
    require(h >= 2 && h <= depth(), "phi: h out of range");
    return 100.0 * overlap[h - 2] / k;
  }

  const std::vector<ScoredDoc>& snapshot(std::uint32_t h) const {
    require(h >= 1 && h <= retained(), "snapshot: RS_" + std::to_string(h) + " not retained");
    return snapshots[h - 1];
  }

  friend bool operator==(const SearchTrace& a, const SearchTrace& b) {
    return a.query_id == b.query_id && a.k == b.k && a.retain_depth == b.retain_depth &&
           a.ranked_clusters == b.ranked_clusters &&
           a.ranked_centroid_scores == b.ranked_centroid_scores && a.snapshots == b.snapshots &&
           a.overlap == b.overlap && a.leaders == b.leaders && a.current == b.current;
  }
};

/// Empty trace (depth 0) with the full cluster ranking computed.
inline SearchTrace start_trace(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                               QueryId query_id = 0, std::uint32_t retain_depth = kRetainAll) {
  require(k >= 1, "probe: k must be >= 1");
  SearchTrace t;
  t.query_id = query_id;
  t.k = k;
  t.retain_depth = retain_depth;
  t.ranked_clusters = rank_clusters(index, q, &t.ranked_centroid_scores);
  t.current.reserve(k);
  return t;
}

/// Scores the next ranked cluster and records RS_{depth+1}.
inline void probe_next(SearchTrace& t, const IvfIndex& index, std::span<const float> q) {
  require(q.size() == index.dim(), "probe: query dim mismatch");
  const std::uint32_t h = t.depth() + 1;
  require(h <= index.num_clusters(), "probe: cannot probe beyond K=" + std::to_string(index.num_clusters()));
  const std::uint32_t cluster = t.ranked_clusters[h - 1];
  const auto& ids = index.posting(cluster);
  const auto vecs = index.posting_vectors(cluster);
  const std::uint32_t dim = index.dim();

  // Min-heap on rank order: front is the current worst member.
  auto worse_first = [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); };
  std::vector<ScoredDoc>& heap = t.current;
  std::make_heap(heap.begin(), heap.end(), worse_first);
  std::size_t entered = 0;
  std::vector<DocId> entered_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const ScoredDoc cand{ids[i], similarity(index.metric(), q, vecs.subspan(i * dim, dim))};
    if (heap.size() < t.k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), worse_first);
      entered_ids.push_back(cand.id);
    } else if (ranks_before(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse_first);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), worse_first);
      entered_ids.push_back(cand.id);
    }
  }
  std::sort(heap.begin(), heap.end(), ranks_before);
  // New members are the entered ids that survived; everything else was in RS_{h-1}.
  if (h >= 2) {
    std::sort(entered_ids.begin(), entered_ids.end());
    for (const auto& d : heap)
      if (std::binary_search(entered_ids.begin(), entered_ids.end(), d.id)) ++entered;
    t.overlap.push_back(static_cast<std::uint32_t>(heap.size() - entered));
  }
  t.leaders.push_back(heap.empty() ? ScoredDoc{std::numeric_limits<DocId>::max(),
                                               -std::numeric_limits<float>::infinity()}
                                   : heap.front());
  if (h <= t.retain_depth) t.snapshots.push_back(heap);
}

/// Incremental probe of the first `max_probes` ranked clusters.
inline SearchTrace probe(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                         std::uint32_t max_probes, QueryId query_id = 0,
                         std::uint32_t retain_depth = kRetainAll) {
  require(q.size() == index.dim(), "probe: query dim " + std::to_string(q.size()) + " != index dim " +
                                       std::to_string(index.dim()));
  require(max_probes >= 1 && max_probes <= index.num_clusters(),
          "probe: N=" + std::to_string(max_probes) + " outside [1, " +
              std::to_string(index.num_clusters()) + "]");
  SearchTrace t = start_trace(index, q, k, query_id, retain_depth);
  for (std::uint32_t h = 0; h < max_probes; ++h) probe_next(t, index, q);
  return t;
}

/// Extends `trace` to depth `up_to`; identical to probing to `up_to` directly.
inline SearchTrace resume_probe(SearchTrace trace, const IvfIndex& index, std::span<const float> q,
                                std::uint32_t up_to) {
  require(up_to <= index.num_clusters(), "resume_probe: depth " + std::to_string(up_to) + " exceeds K");
  require(up_to >= trace.depth(), "resume_probe: target depth below current depth");
  while (trace.depth() < up_to) probe_next(trace, index, q);
  return trace;
}

// On-disk layout: "IVF1", u32 metric, u32 K, u32 dim, K*dim f32 centroids,
// K u64 posting lengths, then the posting id arrays as u64.
inline void save_index(const IvfIndex& index, const std::string& path) {
  io::BinaryWriter w(path);
  w.put_bytes("IVF1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.metric()));
  w.put<std::uint32_t>(index.num_clusters());
  w.put<std::uint32_t>(index.dim());
  w.put_span(std::span<const float>(index.centroids()));
  for (std::uint32_t c = 0; c < index.num_clusters(); ++c)
    w.put<std::uint64_t>(index.posting(c).size());
  for (std::uint32_t c = 0; c < index.num_clusters(); ++c)
    w.put_span(std::span<const DocId>(index.posting(c)));
  w.close();
}

inline IvfIndex load_index(const std::string& path, const VectorSet& corpus) {
  io::BinaryReader r(path);
  if (r.get_bytes(4, "magic") != "IVF1") r.fail("bad index magic", 0);
  const auto metric_tag = r.get<std::uint32_t>("metric");
  if (metric_tag > 1) r.fail("unknown metric tag " + std::to_string(metric_tag), 4);
  const auto K = r.get<std::uint32_t>("K");
  const auto dim = r.get<std::uint32_t>("dim");
  if (K == 0 || dim == 0) r.fail("zero K or dim", 8);
  std::vector<float> centroids(std::size_t{K} * dim);
  r.get_span(std::span<float>(centroids), "centroids");
  std::vector<std::uint64_t> lengths(K);
  r.get_span(std::span<std::uint64_t>(lengths), "posting lengths");
  std::vector<std::vector<DocId>> postings(K);
  for (std::uint32_t c = 0; c < K; ++c) {
    if (lengths[c] > r.remaining() / sizeof(DocId)) r.fail("posting length overflows file", r.offset());
    postings[c].resize(lengths[c]);
    r.get_span(std::span<DocId>(postings[c]), "posting ids");
  }
  if (!r.at_end()) r.fail("trailing bytes", r.offset());
  IvfIndex index(std::move(centroids), dim, static_cast<Metric>(metric_tag), std::move(postings), corpus);
  if (!index.is_partition_of(corpus)) throw FormatError(path + ": postings are not a partition of the corpus");
  return index;
}

}  // namespace eeknn
