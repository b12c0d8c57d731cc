// eeknn: command-line driver for the early-exit IVF pipeline.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "eeknn/pipeline.hpp"

namespace {

using eeknn::pipeline::ExperimentConfig;

struct Overrides {
  std::string config;
  std::optional<std::string> workdir;
  std::optional<std::string> metric;
  std::optional<std::uint32_t> k, tau, num_clusters, n, test_queries, threads, reps;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;
  int verbosity = 1;

  // gen
  std::optional<std::uint32_t> clusters, per_cluster, dim, queries;
  std::optional<double> stddev, query_noise, query_noise_max;

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? eeknn::pipeline::default_config() : eeknn::pipeline::load_config(config);
    if (workdir) c.workdir = *workdir;
    if (metric) c.metric = eeknn::metric_from_string(*metric);
    if (k) c.k = *k;
    if (tau) c.tau = *tau;
    if (num_clusters) c.num_clusters = *num_clusters;
    if (n) c.n_override = *n;
    if (test_queries) c.test_queries = *test_queries;
    if (threads) c.threads = *threads;
    if (reps) c.timing_repetitions = *reps;
    if (rho) c.rho = *rho;
    if (seed) {
      c.seed = *seed;
      c.synthetic.seed = *seed;
    }
    if (clusters) c.synthetic.num_clusters_planted = *clusters;
    if (per_cluster) c.synthetic.vectors_per_cluster = *per_cluster;
    if (dim) c.synthetic.dim = *dim;
    if (queries) c.synthetic.num_queries = *queries;
    if (stddev) c.synthetic.intra_cluster_stddev = *stddev;
    if (query_noise) c.synthetic.query_noise_ratio = *query_noise;
    if (query_noise_max) c.synthetic.query_noise_ratio_max = *query_noise_max;
    return c;
  }
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("-w,--workdir", o.workdir, "working directory for artifacts");
  cmd->add_option("--metric", o.metric, "ip or l2");
  cmd->add_option("-k", o.k, "result set size")->check(CLI::PositiveNumber);
  cmd->add_option("--tau", o.tau, "probes before the learned decision")->check(CLI::PositiveNumber);
  cmd->add_option("--clusters-index", o.num_clusters, "IVF cluster count (0 = auto)");
  cmd->add_option("-n,--n", o.n, "probe budget N (default: tune_n.json)");
  cmd->add_option("--test-queries", o.test_queries, "number of leading queries used as the test set");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--reps", o.reps, "timing repetitions (first is discarded)");
  cmd->add_option("--rho", o.rho, "target R*@1 for tune-n")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("-v,--verbosity", o.verbosity, "0 = quiet, 1 = info");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive early-exit kNN search over an IVF index"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus, queries and qrels");
  add_common(gen, o);
  gen->add_option("--clusters", o.clusters, "planted clusters")->check(CLI::PositiveNumber);
  gen->add_option("--per-cluster", o.per_cluster, "vectors per planted cluster")->check(CLI::PositiveNumber);
  gen->add_option("--dim", o.dim, "dimensionality")->check(CLI::PositiveNumber);
  gen->add_option("--queries", o.queries, "number of queries")->check(CLI::PositiveNumber);
  gen->add_option("--stddev", o.stddev, "intra-cluster standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--query-noise", o.query_noise, "query noise relative to stddev")->check(CLI::NonNegativeNumber);
  gen->add_option("--query-noise-max", o.query_noise_max, "upper end of a per-query noise ratio range")
      ->check(CLI::NonNegativeNumber);

  auto* build = app.add_subcommand("build", "train the coarse quantizer and build the inverted file");
  auto* tune = app.add_subcommand("tune-n", "find the smallest N with R*@1 >= rho");
  auto* label = app.add_subcommand("label", "compute golden labels C(q)");
  auto* train = app.add_subcommand("train", "train the regression and classification models");
  auto* run = app.add_subcommand("run", "run every configured policy on the test queries");
  auto* eval = app.add_subcommand("eval", "write report.tsv with metrics and significance");
  auto* curves = app.add_subcommand("curves", "write intersection curves to curves.csv");
  auto* all = app.add_subcommand("all", "gen, build, tune-n, label, train, run, eval");
  for (auto* c : {build, tune, label, train, run, eval, curves, all}) add_common(c, o);

  CLI11_PARSE(app, argc, argv);
  eeknn::log::set_verbosity(o.verbosity);

  try {
    namespace p = eeknn::pipeline;
    const ExperimentConfig cfg = o.resolve();
    if (*gen) p::cmd_gen(cfg);
    if (*build) p::cmd_build(cfg);
    if (*tune) p::cmd_tune_n(cfg);
    if (*label) p::cmd_label(cfg);
    if (*train) p::cmd_train(cfg);
    if (*run) p::cmd_run(cfg);
    if (*eval) {
      p::cmd_eval(cfg);
      std::FILE* f = std::fopen(cfg.file("report.tsv").c_str(), "rb");
      if (f) {
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) std::fwrite(buf, 1, n, stdout);
        std::fclose(f);
      }
    }
    if (*curves) p::cmd_curves(cfg);
    if (*all) {
      p::cmd_gen(cfg);
      p::cmd_build(cfg);
      p::cmd_tune_n(cfg);
      p::cmd_label(cfg);
      p::cmd_train(cfg);
      p::cmd_run(cfg);
      p::cmd_eval(cfg);
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "eeknn: error: {}\n", e.what());
    return 1;
  }
  return 0;
}
