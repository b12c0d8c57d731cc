#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "eeknn/common.hpp"
#include "eeknn/corpus.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/parallel.hpp"

namespace eeknn {

/// Exact top-k under sigma by exhaustive scoring; sorted best-first, ties by id.
inline std::vector<ScoredDoc> exact_knn(const VectorSet& corpus, std::span<const float> q, std::size_t k,
                                        Metric metric = Metric::kInnerProduct) {
  require(q.size() == corpus.dim(), "exact_knn: query dim " + std::to_string(q.size()) +
                                        " != corpus dim " + std::to_string(corpus.dim()));
  require(k <= corpus.size(), "exact_knn: k exceeds corpus size");
  constexpr std::size_t kBlock = 1024;
  std::vector<ScoredDoc> scored(corpus.size());
  for (std::size_t lo = 0; lo < corpus.size(); lo += kBlock) {
    const std::size_t hi = std::min(corpus.size(), lo + kBlock);
    for (std::size_t i = lo; i < hi; ++i) scored[i] = {corpus.id(i), similarity(metric, q, corpus.row(i))};
  }
  if (k < scored.size()) {
    std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                     ranks_before);
    scored.resize(k);
    scored.shrink_to_fit();
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  return scored;
}

struct GoldenLabel {
  QueryId qid = 0;
  DocId d_star = 0;
  /// Minimal number of ranked clusters whose union contains d_star, clamped to N.
  std::uint32_t C = 0;
  /// Exact top-k; empty when labels were loaded from disk.
  std::vector<ScoredDoc> exact_topk;
};

struct GoldenLabels {
  std::uint32_t N = 0;
  std::vector<GoldenLabel> labels;

  std::size_t size() const { return labels.size(); }

  const GoldenLabel& at(QueryId qid) const {
    for (const auto& l : labels)
      if (l.qid == qid) return l;
    throw InvalidArgument("no golden label for query " + std::to_string(qid));
  }
};

/// doc id -> owning cluster.
inline std::unordered_map<DocId, std::uint32_t> cluster_of_docs(const IvfIndex& index) {
  std::unordered_map<DocId, std::uint32_t> owner;
  owner.reserve(index.num_docs());
  for (std::uint32_t c = 0; c < index.num_clusters(); ++c)
    for (DocId id : index.posting(c)) owner.emplace(id, c);
  return owner;
}

/// Golden labels: d_star is the exact 1-NN, C the rank of d_star's cluster
/// in the query's cluster order (N when that rank exceeds N).
inline GoldenLabels label_queries(const IvfIndex& index, const VectorSet& corpus, const VectorSet& queries,
                                  std::uint32_t N, std::uint32_t k, unsigned threads = default_threads()) {
  require(N >= 1 && N <= index.num_clusters(), "label_queries: N must be in [1, K]");
  require(k >= 1 && k <= corpus.size(), "label_queries: k must be in [1, corpus size]");
  const auto owner = cluster_of_docs(index);
  GoldenLabels out;
  out.N = N;
  out.labels.resize(queries.size());
  parallel_for(
      queries.size(),
      [&](std::size_t i) {
        const auto q = queries.row(i);
        GoldenLabel& l = out.labels[i];
        l.qid = queries.id(i);
        l.exact_topk = exact_knn(corpus, q, k, index.metric());
        l.d_star = l.exact_topk.front().id;
        const std::uint32_t cluster = owner.at(l.d_star);
        const auto ranked = rank_clusters(index, q);
        const auto pos = static_cast<std::uint32_t>(std::find(ranked.begin(), ranked.end(), cluster) - ranked.begin());
        l.C = std::min(pos + 1, N);
      },
      threads);
  return out;
}

/// Fraction of queries per C value.
inline std::map<std::uint32_t, double> label_histogram(const GoldenLabels& labels) {
  require(labels.size() > 0, "label_histogram: no labels");
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& l : labels.labels) ++counts[l.C];
  std::map<std::uint32_t, double> hist;
  for (const auto& [c, n] : counts) hist[c] = static_cast<double>(n) / static_cast<double>(labels.size());
  return hist;
}

/// Fraction of queries with C <= n.
inline double label_cdf(const GoldenLabels& labels, std::uint32_t n) {
  std::size_t hit = 0;
  for (const auto& l : labels.labels) hit += l.C <= n ? 1 : 0;
  return labels.size() == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// TSV with a `# N=<n>` header line followed by `qid<TAB>d_star<TAB>C`.
inline void save_labels(const GoldenLabels& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# N=" << labels.N << '\n';
  for (const auto& l : labels.labels) out << l.qid << '\t' << l.d_star << '\t' << l.C << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline GoldenLabels load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels: " + path);
  GoldenLabels labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# N=", 0) == 0) {
      labels.N = static_cast<std::uint32_t>(std::stoul(line.substr(4)));
      continue;
    }
    std::istringstream ls(line);
    GoldenLabel l;
    if (!(ls >> l.qid >> l.d_star >> l.C) || l.C == 0)
      throw FormatError(path + ": malformed label line " + std::to_string(lineno));
    labels.labels.push_back(std::move(l));
  }
  return labels;
}

}  // namespace eeknn
