#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "eeknn/common.hpp"
#include "eeknn/features.hpp"

namespace eeknn {

struct SmoteSample {
  std::size_t base = 0;      // minority row the sample starts from
  std::size_t neighbor = 0;  // minority row it moves towards
  double u = 0.0;            // interpolation coefficient in [0, 1)
};

struct SmoteResult {
  std::size_t cols = 0;
  std::vector<float> rows;  // row-major synthetic samples
  std::vector<SmoteSample> provenance;

  std::size_t size() const { return provenance.size(); }
  std::span<const float> row(std::size_t i) const { return {rows.data() + i * cols, cols}; }
};

/// Synthetic minority oversampling: each sample is x + u * (nb - x), where nb
/// is drawn from the k nearest (Euclidean) minority neighbours of x.
inline SmoteResult smote(std::span<const float> minority, std::size_t cols, std::size_t target_count,
                         std::uint64_t seed, std::size_t k_neighbors = 5) {
  require(cols > 0 && minority.size() % cols == 0, "smote: malformed minority matrix");
  const std::size_t m = minority.size() / cols;
  require(m >= 2, "smote: minority class needs at least 2 rows");
  require(k_neighbors >= 1, "smote: k_neighbors must be >= 1");
  const std::size_t k = std::min(k_neighbors, m - 1);
  auto row = [&](std::size_t i) { return minority.subspan(i * cols, cols); };

  std::vector<std::vector<std::size_t>> neighbors(m);
  std::vector<std::pair<double, std::size_t>> dist(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j2 = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      double d = 0.0;
      const auto a = row(i), b = row(j);
      for (std::size_t c = 0; c < cols; ++c) {
        const double t = static_cast<double>(a[c]) - b[c];
        d += t * t;
      }
      dist[j2++] = {d, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t t = 0; t < k; ++t) neighbors[i].push_back(dist[t].second);
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_base(0, m - 1);
  std::uniform_int_distribution<std::size_t> pick_nb(0, k - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SmoteResult out;
  out.cols = cols;
  out.rows.reserve(target_count * cols);
  for (std::size_t s = 0; s < target_count; ++s) {
    SmoteSample p;
    p.base = pick_base(rng);
    p.neighbor = neighbors[p.base][pick_nb(rng)];
    p.u = unit(rng);
    const auto x = row(p.base), nb = row(p.neighbor);
    for (std::size_t c = 0; c < cols; ++c)
      out.rows.push_back(static_cast<float>(x[c] + p.u * (static_cast<double>(nb[c]) - x[c])));
    out.provenance.push_back(p);
  }
  return out;
}

/// Oversamples the smaller class of a binary training matrix until both
/// classes have the same row count. Synthetic rows get weight 1 and qid 0.
inline TrainingMatrix rebalance_with_smote(const TrainingMatrix& m, std::uint64_t seed,
                                           std::size_t k_neighbors = 5) {
  require(m.target == TargetKind::kClassification, "rebalance_with_smote: classification matrix required");
  std::vector<std::size_t> pos, neg;
  for (std::size_t r = 0; r < m.rows; ++r) (m.y[r] == 1.0f ? pos : neg).push_back(r);
  if (pos.size() == neg.size()) return m;
  const auto& minority_idx = pos.size() < neg.size() ? pos : neg;
  const float minority_label = pos.size() < neg.size() ? 1.0f : 0.0f;
  const std::size_t deficit = std::max(pos.size(), neg.size()) - minority_idx.size();
  std::vector<float> minority;
  minority.reserve(minority_idx.size() * m.cols);
  for (std::size_t r : minority_idx) {
    const auto x = m.row(r);
    minority.insert(minority.end(), x.begin(), x.end());
  }
  const SmoteResult synth = smote(minority, m.cols, deficit, seed, k_neighbors);
  TrainingMatrix out = m;
  for (std::size_t i = 0; i < synth.size(); ++i) out.append(synth.row(i), minority_label, 1.0f, 0);
  return out;
}

/// Deterministic shuffled split of [0, rows) into train / validation indices.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_validation(
    std::size_t rows, double fraction_train, std::uint64_t seed) {
  require(rows >= 2, "split_train_validation: need at least 2 rows");
  require(fraction_train > 0.0 && fraction_train <= 1.0, "split_train_validation: fraction must be in (0, 1]");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction_train * static_cast<double>(rows)));
  require(n_train >= 1, "split_train_validation: empty training split");
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> valid(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {std::move(train), std::move(valid)};
}

}  // namespace eeknn
