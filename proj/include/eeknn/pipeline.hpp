#pragma once

// End-to-end experiment driver shared by the CLI and the integration tests.
// Every command reads its inputs from, and writes its outputs to, a single
// working directory:
//
//   corpus.dvec queries.dvec qrels.tsv   gen
//   index.ivf                            build
//   tune_n.json                          tune-n
//   labels.tsv                           label
//   models/*.json                        train
//   runs/<name>.trec, runs/<name>.decisions.tsv, timing.tsv   run
//   report.tsv, report_timing.tsv, per_query/<name>.csv        eval
//   curves.csv                           curves

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "eeknn/common.hpp"
#include "eeknn/corpus.hpp"
#include "eeknn/eval.hpp"
#include "eeknn/features.hpp"
#include "eeknn/gbdt.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/log.hpp"
#include "eeknn/oracle.hpp"
#include "eeknn/policy.hpp"
#include "eeknn/smote.hpp"

namespace eeknn::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised when an upstream artifact is missing; names the producing command.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const fs::path& path, const std::string& producer)
      : std::runtime_error("missing " + path.string() + "; run `eeknn " + producer + "` first") {}
};

struct ExperimentConfig {
  std::string workdir = "eeknn_work";
  Metric metric = Metric::kInnerProduct;
  std::uint32_t k = 100;
  std::uint32_t tau = 10;
  double rho = 0.95;
  /// 0 selects default_num_clusters(corpus size), capped at max_clusters.
  std::uint32_t num_clusters = 0;
  std::uint32_t max_clusters = 1024;
  /// 0 takes N from tune_n.json.
  std::uint32_t n_override = 0;
  /// The first `test_queries` query rows are the test set; the rest train/validate.
  std::uint32_t test_queries = 2000;
  double train_fraction = 0.67;
  std::uint64_t seed = 1;
  bool use_smote = true;
  std::uint32_t timing_repetitions = 6;
  std::uint32_t curves_depth = 100;
  unsigned threads = default_threads();
  SyntheticSpec synthetic{};
  KMeansConfig kmeans{};
  TrainConfig train{};
  float exit_weight = 3.0f;
  json policies = json::array();

  fs::path dir() const { return fs::path(workdir); }
  fs::path file(const std::string& name) const { return dir() / name; }
};

inline json default_policies() {
  return json::parse(R"([
    {"name": "Fixed", "type": "fixed"},
    {"name": "Reg", "type": "regression", "model": "reg"},
    {"name": "Reg+int", "type": "regression", "model": "reg_int"},
    {"name": "Patience", "type": "patience", "delta": 7, "phi": 95},
    {"name": "Classifier", "type": "classifier", "model": "clf"},
    {"name": "Classifier_w", "type": "classifier", "model": "clf_w"},
    {"name": "Cascade+Reg+int", "type": "cascade", "classifier": "clf_w",
     "second": {"type": "regression", "model": "reg_int"}},
    {"name": "Cascade+Patience", "type": "cascade", "classifier": "clf_w",
     "second": {"type": "patience", "delta": 7, "phi": 95}}
  ])");
}

/// Defaults describe the desk-scale experiment: 100k vectors in 64 dimensions.
inline ExperimentConfig default_config() {
  ExperimentConfig c;
  c.synthetic.num_clusters_planted = 100;
  c.synthetic.vectors_per_cluster = 1000;
  c.synthetic.dim = 64;
  c.synthetic.num_queries = 10000;
  // Mixed query difficulty gives a long-tailed C(q) distribution.
  c.synthetic.intra_cluster_stddev = 0.12f;
  c.synthetic.query_noise_ratio = 0.5f;
  c.synthetic.query_noise_ratio_max = 3.0f;
  c.policies = default_policies();
  return c;
}

inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = default_config()) {
  c.workdir = j.value("workdir", c.workdir);
  if (j.contains("metric")) c.metric = metric_from_string(j["metric"].get<std::string>());
  c.k = j.value("k", c.k);
  c.tau = j.value("tau", c.tau);
  c.rho = j.value("rho", c.rho);
  c.num_clusters = j.value("num_clusters", c.num_clusters);
  c.max_clusters = j.value("max_clusters", c.max_clusters);
  c.n_override = j.value("n", c.n_override);
  c.test_queries = j.value("test_queries", c.test_queries);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.seed = j.value("seed", c.seed);
  c.use_smote = j.value("use_smote", c.use_smote);
  c.timing_repetitions = j.value("timing_repetitions", c.timing_repetitions);
  c.curves_depth = j.value("curves_depth", c.curves_depth);
  c.threads = j.value("threads", c.threads);
  c.exit_weight = j.value("exit_weight", c.exit_weight);
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    auto& o = c.synthetic;
    o.num_clusters_planted = s.value("clusters", o.num_clusters_planted);
    o.vectors_per_cluster = s.value("per_cluster", o.vectors_per_cluster);
    o.dim = s.value("dim", o.dim);
    o.intra_cluster_stddev = s.value("stddev", o.intra_cluster_stddev);
    o.num_queries = s.value("queries", o.num_queries);
    o.seed = s.value("seed", o.seed);
    o.query_noise_ratio = s.value("query_noise", o.query_noise_ratio);
    o.query_noise_ratio_max = s.value("query_noise_max", o.query_noise_ratio_max);
    o.normalize = s.value("normalize", o.normalize);
    o.sibling_radius = s.value("sibling_radius", o.sibling_radius);
  }
  if (j.contains("kmeans")) {
    c.kmeans.max_iters = j["kmeans"].value("max_iters", c.kmeans.max_iters);
    c.kmeans.seed = j["kmeans"].value("seed", c.kmeans.seed);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    auto& o = c.train;
    o.num_trees = t.value("num_trees", o.num_trees);
    o.learning_rate = t.value("learning_rate", o.learning_rate);
    o.max_depth = t.value("max_depth", o.max_depth);
    o.min_samples_leaf = t.value("min_samples_leaf", o.min_samples_leaf);
    o.subsample_features = t.value("subsample_features", o.subsample_features);
    o.seed = t.value("seed", o.seed);
    o.early_stopping_rounds = t.value("early_stopping_rounds", o.early_stopping_rounds);
  }
  if (j.contains("policies")) c.policies = j["policies"];
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

namespace detail {

inline void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw MissingArtifact(p, producer);
}

inline void write_json(const json& j, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open: " + p.string());
  return json::parse(in);
}

inline VectorSet subset_rows(const VectorSet& vs, std::size_t lo, std::size_t hi) {
  std::vector<DocId> ids(vs.ids().begin() + static_cast<std::ptrdiff_t>(lo),
                         vs.ids().begin() + static_cast<std::ptrdiff_t>(hi));
  std::vector<float> data(vs.data().begin() + static_cast<std::ptrdiff_t>(lo * vs.dim()),
                          vs.data().begin() + static_cast<std::ptrdiff_t>(hi * vs.dim()));
  return VectorSet(std::move(ids), std::move(data), vs.dim());
}

inline VectorSet subset_rows(const VectorSet& vs, std::span<const std::size_t> rows) {
  std::vector<DocId> ids;
  std::vector<float> data;
  for (std::size_t r : rows) {
    ids.push_back(vs.id(r));
    const auto x = vs.row(r);
    data.insert(data.end(), x.begin(), x.end());
  }
  return VectorSet(std::move(ids), std::move(data), vs.dim());
}

inline GoldenLabels clamp_labels(GoldenLabels labels, std::uint32_t N) {
  labels.N = N;
  for (auto& l : labels.labels) l.C = std::min(l.C, N);
  return labels;
}

}  // namespace detail

/// Loaded artifacts shared by the downstream commands.
struct Workspace {
  VectorSet corpus;
  VectorSet queries;
  Qrels qrels;
  IvfIndex index;

  VectorSet test_queries(const ExperimentConfig& cfg) const {
    const std::size_t n = std::min<std::size_t>(cfg.test_queries, queries.size());
    return detail::subset_rows(queries, 0, n);
  }
  VectorSet pool_queries(const ExperimentConfig& cfg) const {
    const std::size_t n = std::min<std::size_t>(cfg.test_queries, queries.size());
    return detail::subset_rows(queries, n, queries.size());
  }
};

inline Workspace open_workspace(const ExperimentConfig& cfg, bool with_index = true) {
  Workspace w;
  detail::require_file(cfg.file("corpus.dvec"), "gen");
  detail::require_file(cfg.file("queries.dvec"), "gen");
  w.corpus = load_vectors(cfg.file("corpus.dvec").string());
  w.queries = load_vectors(cfg.file("queries.dvec").string());
  if (fs::exists(cfg.file("qrels.tsv"))) w.qrels = load_qrels(cfg.file("qrels.tsv").string());
  if (with_index) {
    detail::require_file(cfg.file("index.ivf"), "build");
    w.index = load_index(cfg.file("index.ivf").string(), w.corpus);
  }
  return w;
}

inline std::uint32_t resolve_num_clusters(const ExperimentConfig& cfg, std::size_t corpus_size) {
  if (cfg.num_clusters > 0) return cfg.num_clusters;
  const auto k = default_num_clusters(corpus_size);
  return static_cast<std::uint32_t>(std::min<std::uint64_t>({k, cfg.max_clusters, corpus_size}));
}

inline std::uint32_t resolve_n(const ExperimentConfig& cfg) {
  if (cfg.n_override > 0) return cfg.n_override;
  detail::require_file(cfg.file("tune_n.json"), "tune-n");
  return detail::read_json(cfg.file("tune_n.json")).at("N").get<std::uint32_t>();
}

inline void cmd_gen(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.dir());
  const SyntheticData data = generate_synthetic(cfg.synthetic);
  save_vectors(data.corpus, cfg.file("corpus.dvec").string());
  save_vectors(data.queries, cfg.file("queries.dvec").string());
  save_qrels(data.qrels, cfg.file("qrels.tsv").string());
  log::info("gen: {} corpus vectors, {} queries, dim {}", data.corpus.size(), data.queries.size(), data.corpus.dim());
}

inline void cmd_build(const ExperimentConfig& cfg) {
  detail::require_file(cfg.file("corpus.dvec"), "gen");
  const VectorSet corpus = load_vectors(cfg.file("corpus.dvec").string());
  const std::uint32_t K = resolve_num_clusters(cfg, corpus.size());
  KMeansConfig km = cfg.kmeans;
  km.threads = cfg.threads;
  log::info("build: k-means with K={} over {} vectors", K, corpus.size());
  const IvfIndex index = build_index(corpus, K, cfg.metric, km);
  save_index(index, cfg.file("index.ivf").string());
}

/// Tunes N on the test queries so that the fixed strategy reaches R*@1 >= rho.
inline TuneResult cmd_tune_n(const ExperimentConfig& cfg) {
  const Workspace w = open_workspace(cfg);
  const VectorSet test = w.test_queries(cfg);
  const GoldenLabels golden = label_queries(w.index, w.corpus, test, w.index.num_clusters(), 1, cfg.threads);
  const TuneResult r = tune_min_n(w.index, test, golden, cfg.rho, cfg.threads);
  json j{{"N", r.N}, {"rho", cfg.rho}, {"r_star_at_N", r.r_star_at_N}, {"K", w.index.num_clusters()}};
  j["r_star_below"] = r.N > 1 ? json(r.r_star_below) : json(nullptr);
  detail::write_json(j, cfg.file("tune_n.json"));
  log::info("tune-n: N={} (R*@1={:.4f}, at N-1: {})", r.N, r.r_star_at_N,
            r.N > 1 ? fmt::format("{:.4f}", r.r_star_below) : std::string("n/a"));
  return r;
}

/// Golden labels for every query with budget N.
inline GoldenLabels cmd_label(const ExperimentConfig& cfg) {
  const Workspace w = open_workspace(cfg);
  const std::uint32_t N = resolve_n(cfg);
  const GoldenLabels labels = label_queries(w.index, w.corpus, w.queries, N, 1, cfg.threads);
  save_labels(labels, cfg.file("labels.tsv").string());
  std::string hist;
  for (const auto& [c, f] : label_histogram(labels))
    if (c <= 10 || c == N) hist += fmt::format(" C={}:{:.3f}", c, f);
  log::info("label: {} queries, N={}, cdf(tau={})={:.3f};{}", labels.size(), N, cfg.tau, label_cdf(labels, cfg.tau),
            hist);
  return labels;
}

inline GoldenLabels load_workspace_labels(const ExperimentConfig& cfg) {
  detail::require_file(cfg.file("labels.tsv"), "label");
  return load_labels(cfg.file("labels.tsv").string());
}

/// tau-deep traces retaining RS_1..RS_tau.
inline std::vector<SearchTrace> traces_to_tau(const IvfIndex& index, const VectorSet& queries, std::uint32_t k,
                                              std::uint32_t tau, unsigned threads) {
  std::vector<SearchTrace> traces(queries.size());
  parallel_for(
      queries.size(), [&](std::size_t i) { traces[i] = probe(index, queries.row(i), k, tau, queries.id(i), tau); },
      threads);
  return traces;
}

struct TrainedModels {
  TreeEnsemble reg, reg_int, clf, clf_w;
};

/// Builds the feature matrices over the non-test queries and trains the four models.
inline TrainedModels cmd_train(const ExperimentConfig& cfg) {
  const Workspace w = open_workspace(cfg);
  const std::uint32_t N = resolve_n(cfg);
  require(cfg.tau < N, "train: tau must be smaller than N");
  const GoldenLabels labels = detail::clamp_labels(load_workspace_labels(cfg), N);
  const VectorSet pool = w.pool_queries(cfg);
  require(pool.size() >= 2, "train: need at least 2 non-test queries");
  auto [train_rows, valid_rows] = split_train_validation(pool.size(), cfg.train_fraction, cfg.seed);
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(valid_rows.begin(), valid_rows.end());
  const VectorSet train_q = detail::subset_rows(pool, train_rows);
  const VectorSet valid_q = detail::subset_rows(pool, valid_rows);
  const auto train_traces = traces_to_tau(w.index, train_q, cfg.k, cfg.tau, cfg.threads);
  const auto valid_traces = traces_to_tau(w.index, valid_q, cfg.k, cfg.tau, cfg.threads);

  const std::uint32_t K = w.index.num_clusters();
  const FeatureLayout plain = FeatureLayout::make(w.queries.dim(), cfg.tau, K, false);
  const FeatureLayout full = FeatureLayout::make(w.queries.dim(), cfg.tau, K, true);
  auto matrix = [&](const VectorSet& q, const std::vector<SearchTrace>& t, const FeatureLayout& l, TargetKind kind) {
    return build_training_matrix(q, t, labels, l, kind);
  };

  fs::create_directories(cfg.file("models"));
  TrainedModels m;
  TrainConfig tc = cfg.train;
  {
    const auto X = matrix(train_q, train_traces, plain, TargetKind::kRegression);
    const auto V = matrix(valid_q, valid_traces, plain, TargetKind::kRegression);
    m.reg = train_regressor(X, &V, tc);
  }
  {
    const auto X = matrix(train_q, train_traces, full, TargetKind::kRegression);
    const auto V = matrix(valid_q, valid_traces, full, TargetKind::kRegression);
    m.reg_int = train_regressor(X, &V, tc);
  }
  {
    auto X = matrix(train_q, train_traces, full, TargetKind::kClassification);
    const auto V = matrix(valid_q, valid_traces, full, TargetKind::kClassification);
    if (cfg.use_smote) X = rebalance_with_smote(X, cfg.seed);
    m.clf = train_classifier(X, &V, tc);
    tc.instance_weight_exit = cfg.exit_weight;
    m.clf_w = train_classifier(X, &V, tc);
  }
  save_model(m.reg, cfg.file("models/reg.json").string());
  save_model(m.reg_int, cfg.file("models/reg_int.json").string());
  save_model(m.clf, cfg.file("models/clf.json").string());
  save_model(m.clf_w, cfg.file("models/clf_w.json").string());
  log::info("train: {} train / {} validation queries; trees reg={} reg_int={} clf={} clf_w={}", train_q.size(),
            valid_q.size(), m.reg.trees.size(), m.reg_int.trees.size(), m.clf.trees.size(), m.clf_w.trees.size());
  return m;
}

/// Resolves policy JSON objects (variant tag + parameters) against trained models.
class PolicyResolver {
 public:
  PolicyResolver(const ExperimentConfig& cfg, std::uint32_t dim, std::uint32_t K, std::uint32_t N)
      : cfg_(cfg), dim_(dim), K_(K), N_(N) {}

  Policy resolve(const json& j) {
    const std::string type = j.at("type");
    const std::uint32_t N = j.value("n", N_);
    if (type == "fixed") return FixedPolicy{N};
    if (type == "patience") return patience(j, N);
    if (type == "regression") return regression(j, N);
    if (type == "classifier") return classifier(j.at("model"), j.value("threshold", 0.5), N);
    if (type == "cascade") {
      CascadePolicy c;
      const json& first = j.at("classifier");
      c.first = first.is_string() ? classifier(first.get<std::string>(), j.value("threshold", 0.5), N)
                                  : classifier(first.at("model"), first.value("threshold", 0.5), N);
      const json& second = j.at("second");
      const std::string st = second.at("type");
      if (st == "patience")
        c.second = patience(second, N);
      else if (st == "regression")
        c.second = regression(second, N);
      else
        throw InvalidArgument("cascade: second stage must be patience or regression, got " + st);
      c.count_phi_before_tau = j.value("count_phi_before_tau", false);
      return c;
    }
    throw InvalidArgument("unknown policy type: " + type);
  }

 private:
  PatiencePolicy patience(const json& j, std::uint32_t N) const {
    return PatiencePolicy{j.value("delta", 7u), j.value("phi", 95.0), N};
  }

  RegressionPolicy regression(const json& j, std::uint32_t N) {
    auto model = load(j.at("model"));
    return RegressionPolicy{model, layout_for(*model), N};
  }

  ClassifierPolicy classifier(const std::string& name, double threshold, std::uint32_t N) {
    auto model = load(name);
    return ClassifierPolicy{model, layout_for(*model), threshold, N};
  }

  std::shared_ptr<const TreeEnsemble> load(const std::string& name) {
    auto it = models_.find(name);
    if (it != models_.end()) return it->second;
    const fs::path p = cfg_.file("models/" + name + ".json");
    detail::require_file(p, "train");
    auto m = std::make_shared<const TreeEnsemble>(load_model(p.string()));
    models_.emplace(name, m);
    return m;
  }

  FeatureLayout layout_for(const TreeEnsemble& m) const {
    for (bool stability : {true, false}) {
      FeatureLayout l = FeatureLayout::make(dim_, cfg_.tau, K_, stability);
      if (l.total_len() == m.num_features) return l;
    }
    throw InvalidArgument("model feature count " + std::to_string(m.num_features) + " matches no layout for tau=" +
                          std::to_string(cfg_.tau));
  }

  const ExperimentConfig& cfg_;
  std::uint32_t dim_, K_, N_;
  std::map<std::string, std::shared_ptr<const TreeEnsemble>> models_;
};

struct NamedPolicy {
  std::string name;
  Policy policy;
};

inline std::vector<NamedPolicy> resolve_policies(const ExperimentConfig& cfg, const Workspace& w, std::uint32_t N) {
  PolicyResolver resolver(cfg, w.queries.dim(), w.index.num_clusters(), N);
  std::vector<NamedPolicy> out;
  for (const auto& j : cfg.policies) out.push_back({j.at("name").get<std::string>(), resolver.resolve(j)});
  return out;
}

/// Runs every configured policy over the test queries. Metrics-relevant
/// outputs (runs, decisions) are deterministic; timings go to timing.tsv.
inline void cmd_run(const ExperimentConfig& cfg) {
  const Workspace w = open_workspace(cfg);
  const std::uint32_t N = resolve_n(cfg);
  const VectorSet test = w.test_queries(cfg);
  const auto policies = resolve_policies(cfg, w, N);
  fs::create_directories(cfg.file("runs"));
  std::ofstream timing(cfg.file("timing.tsv"));
  timing << "strategy\tT_ms\n";
  for (const auto& [name, policy] : policies) {
    const auto runs = run_queries(w.index, test, cfg.k, policy, cfg.threads);
    write_trec_run(runs, name, cfg.file("runs/" + name + ".trec").string());
    write_decisions_tsv(runs, cfg.file("runs/" + name + ".decisions.tsv").string());
    if (cfg.timing_repetitions >= 2) {
      // Sequential, single-threaded per-query latency.
      const auto t = timing_harness(
          [&] {
            for (std::size_t i = 0; i < test.size(); ++i) (void)run_policy(w.index, test.row(i), cfg.k, policy, test.id(i));
          },
          cfg.timing_repetitions);
      timing << name << '\t' << fmt::format("{:.6f}", t.mean_ms / static_cast<double>(test.size())) << '\n';
    }
    log::info("run: {} mean probes {:.2f}", name, mean_probes(runs));
  }
}

/// Table-shaped report: one row per policy, baseline first. Significance is
/// tested on per-query mRR@10 against the first fixed-N policy.
inline std::vector<EvalReport> cmd_eval(const ExperimentConfig& cfg) {
  detail::require_file(cfg.file("queries.dvec"), "gen");
  const GoldenLabels labels = load_workspace_labels(cfg);
  const Qrels qrels = fs::exists(cfg.file("qrels.tsv")) ? load_qrels(cfg.file("qrels.tsv").string()) : Qrels{};
  std::map<std::string, double> timing;
  if (fs::exists(cfg.file("timing.tsv"))) {
    std::ifstream in(cfg.file("timing.tsv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      if (tab != std::string::npos) timing[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
    }
  }
  std::vector<EvalReport> reports;
  std::size_t baseline = cfg.policies.size();
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    const json& p = cfg.policies[i];
    const std::string name = p.at("name");
    const fs::path trec = cfg.file("runs/" + name + ".trec");
    const fs::path dec = cfg.file("runs/" + name + ".decisions.tsv");
    detail::require_file(dec, "run");
    const auto runs = read_run(trec.string(), dec.string());
    EvalReport r = evaluate_run(name, runs, labels, qrels, cfg.k);
    if (auto it = timing.find(name); it != timing.end()) r.mean_time_ms = it->second;
    if (baseline == cfg.policies.size() && p.at("type") == "fixed") baseline = i;
    reports.push_back(std::move(r));
  }
  require(baseline < reports.size(), "eval: no fixed-N baseline policy configured");
  const std::size_t comparisons = std::max<std::size_t>(1, reports.size() - 1);
  const EvalReport base = reports[baseline];
  for (auto& r : reports) compare_to_baseline(r, base, comparisons);
  write_report_tsv(reports, cfg.file("report.tsv").string(), cfg.k);
  write_timing_tsv(reports, cfg.file("report_timing.tsv").string());
  fs::create_directories(cfg.file("per_query"));
  for (const auto& r : reports) write_per_query_csv(r, cfg.file("per_query/" + r.strategy + ".csv").string());
  return reports;
}

inline std::vector<CurvePoint> cmd_curves(const ExperimentConfig& cfg) {
  const Workspace w = open_workspace(cfg);
  const GoldenLabels labels = load_workspace_labels(cfg);
  const VectorSet test = w.test_queries(cfg);
  const std::uint32_t depth = std::min(cfg.curves_depth, w.index.num_clusters());
  std::vector<SearchTrace> traces(test.size());
  parallel_for(
      test.size(), [&](std::size_t i) { traces[i] = probe(w.index, test.row(i), cfg.k, depth, test.id(i), 0); },
      cfg.threads);
  const auto curves = intersection_curves(traces, labels, cfg.tau, depth);
  write_curves_csv(curves, cfg.file("curves.csv").string());
  return curves;
}

}  // namespace eeknn::pipeline
