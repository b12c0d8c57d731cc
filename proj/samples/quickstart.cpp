// Builds a small IVF index over synthetic vectors and compares fixed-budget
// probing with the patience policy on a handful of queries.

#include <cstdio>

#include "eeknn/eval.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/oracle.hpp"
#include "eeknn/policy.hpp"

int main() {
  eeknn::SyntheticSpec spec;
  spec.num_clusters_planted = 20;
  spec.vectors_per_cluster = 200;
  spec.dim = 32;
  spec.num_queries = 200;
  const auto data = eeknn::generate_synthetic(spec);

  const std::uint32_t K = 64;
  const auto index = eeknn::build_index(data.corpus, K, eeknn::Metric::kInnerProduct, {});
  const auto labels = eeknn::label_queries(index, data.corpus, data.queries, K, 1, 1);
  const auto tuned = eeknn::tune_min_n(index, data.queries, labels, 0.95, 1);
  std::printf("K=%u  N(rho=0.95)=%u  R*@1=%.3f\n", K, tuned.N, tuned.r_star_at_N);

  const auto fixed = eeknn::run_queries(index, data.queries, 10, eeknn::FixedPolicy{tuned.N}, 1);
  const auto patience = eeknn::run_queries(index, data.queries, 10, eeknn::PatiencePolicy{7, 95.0, tuned.N}, 1);
  std::printf("fixed:    probes=%.2f  R*@1=%.3f\n", eeknn::mean_probes(fixed),
              eeknn::r_star_at_k(fixed, labels, 1).mean);
  std::printf("patience: probes=%.2f  R*@1=%.3f\n", eeknn::mean_probes(patience),
              eeknn::r_star_at_k(patience, labels, 1).mean);
  return 0;
}
