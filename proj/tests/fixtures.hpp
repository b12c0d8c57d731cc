#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "eeknn/corpus.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/oracle.hpp"

namespace eeknn::testing {

/// Small clustered data set shared by several suites.
struct SmallWorld {
  SyntheticData data;
  IvfIndex index;
};

inline SyntheticSpec small_spec(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.num_clusters_planted = 12;
  s.vectors_per_cluster = 150;
  s.dim = 16;
  s.intra_cluster_stddev = 0.15f;
  s.num_queries = 200;
  s.query_noise_ratio = 0.5f;
  s.query_noise_ratio_max = 3.0f;
  s.seed = seed;
  return s;
}

inline const SmallWorld& small_world() {
  static const SmallWorld w = [] {
    SmallWorld s;
    s.data = generate_synthetic(small_spec());
    KMeansConfig cfg;
    cfg.threads = 1;
    s.index = build_index(s.data.corpus, 48, Metric::kInnerProduct, cfg);
    return s;
  }();
  return w;
}

inline VectorSet random_vectors(std::size_t n, std::uint32_t dim, std::uint64_t seed, DocId first_id = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<float> data(n * dim);
  for (float& x : data) x = g(rng);
  std::vector<DocId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = first_id + i;
  return VectorSet(std::move(ids), std::move(data), dim);
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("eeknn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace eeknn::testing
