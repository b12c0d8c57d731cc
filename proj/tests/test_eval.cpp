#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <fstream>

#include "eeknn/eval.hpp"
#include "eeknn/stats.hpp"
#include "fixtures.hpp"

namespace eeknn {
namespace {

std::vector<ScoredDoc> docs(std::initializer_list<DocId> ids) {
  std::vector<ScoredDoc> out;
  float s = 1.0f;
  for (DocId id : ids) out.push_back({id, s -= 0.1f});
  return out;
}

struct Toy {
  std::vector<RunRecord> runs;
  Qrels qrels;
  GoldenLabels golden;
};

// q1: first relevant at rank 2, leader is d*.
// q2: first relevant at rank 3, one of two relevant retrieved, leader is not d*.
// q3: nothing relevant retrieved, leader is d*.
Toy toy() {
  Toy t;
  t.runs = {{1, 3, ExitReason::kFixed, docs({5, 3, 9})},
            {2, 3, ExitReason::kFixed, docs({7, 8, 1})},
            {3, 3, ExitReason::kFixed, docs({2, 11, 12})}};
  t.qrels = {{1, {{3, 1}}}, {2, {{1, 1}, {4, 2}}}, {3, {{6, 1}}}};
  t.golden.N = 3;
  t.golden.labels = {{1, 5, 1, {}}, {2, 8, 2, {}}, {3, 2, 1, {}}};
  return t;
}

TEST(Metrics, HandComputedToyFixture) {
  const Toy t = toy();
  EXPECT_EQ(mrr_at_10(t.runs, t.qrels).mean, (0.5 + 1.0 / 3.0 + 0.0) / 3.0);
  EXPECT_EQ(recall_at_k(t.runs, t.qrels, 100).mean, (1.0 + 0.5 + 0.0) / 3.0);
  EXPECT_EQ(r_star_at_k(t.runs, t.golden, 1).mean, 2.0 / 3.0);
  EXPECT_EQ(mean_probes(t.runs), 3.0);
}

TEST(Metrics, UnjudgedQueriesAreExcluded) {
  Toy t = toy();
  t.qrels.erase(3);
  const auto m = mrr_at_10(t.runs, t.qrels);
  EXPECT_EQ(m.evaluated, 2u);
  EXPECT_EQ(m.excluded, 1u);
  EXPECT_EQ(m.mean, (0.5 + 1.0 / 3.0) / 2.0);
}

TEST(Metrics, RelevantBeyondRankTenEarnsNothing) {
  std::vector<RunRecord> runs{{1, 1, ExitReason::kFixed, docs({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11})}};
  const Qrels q{{1, {{11, 1}}}};
  EXPECT_EQ(mrr_at_10(runs, q).mean, 0.0);
  EXPECT_EQ(recall_at_k(runs, q, 100).mean, 1.0);
  EXPECT_EQ(recall_at_k(runs, q, 10).mean, 0.0);
}

TEST(Metrics, RStarAtKUsesExactTopK) {
  GoldenLabels g;
  g.labels = {{1, 5, 1, docs({5, 6, 7})}};
  const std::vector<RunRecord> runs{{1, 1, ExitReason::kFixed, docs({5, 7, 9})}};
  EXPECT_EQ(r_star_at_k(runs, g, 3).mean, 2.0 / 3.0);
  EXPECT_THROW(r_star_at_k(runs, g, 4), InvalidArgument);
}

TEST(Stats, PairedTTestAgreesWithReferenceDistribution) {
  const std::vector<double> a{0.52, 0.61, 0.33, 0.75, 0.48, 0.90, 0.27, 0.66, 0.58, 0.41};
  const std::vector<double> b{0.50, 0.55, 0.35, 0.70, 0.40, 0.85, 0.30, 0.60, 0.49, 0.38};
  const std::size_t m = 7;
  const auto r = stats::paired_ttest_bonferroni(a, b, m);

  double mean = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= 10.0;
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double t = mean / std::sqrt(ss / 9.0 / 10.0);
  const boost::math::students_t dist(9.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  EXPECT_NEAR(r.t, t, 1e-12);
  EXPECT_NEAR(r.p, p, 1e-9);
  EXPECT_NEAR(r.p_adjusted, std::min(1.0, p * m), 1e-9);
  EXPECT_EQ(r.df, 9u);
}

TEST(Stats, IncompleteBetaAgreesWithReference) {
  for (double df : {1.0, 2.0, 5.0, 30.0, 1999.0})
    for (double t : {0.0, 0.1, 1.0, 2.5, 6.0, 40.0}) {
      const boost::math::students_t dist(df);
      const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
      EXPECT_NEAR(stats::student_t_two_sided_p(t, df), p, 1e-10) << "df=" << df << " t=" << t;
    }
}

TEST(Stats, DegenerateSamples) {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3}, c{2, 3, 4};
  const auto same = stats::paired_ttest_bonferroni(a, b, 3);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  const auto shift = stats::paired_ttest_bonferroni(c, a, 3);
  EXPECT_TRUE(std::isinf(shift.t));
  EXPECT_EQ(shift.p, 0.0);
  EXPECT_THROW(stats::paired_ttest_bonferroni(std::vector<double>{1}, std::vector<double>{1}, 1), InvalidArgument);
}

TEST(Stats, MarkerThresholds) {
  EXPECT_EQ(stats::significance_marker(0.0099), "**");
  EXPECT_EQ(stats::significance_marker(0.01), "*");
  EXPECT_EQ(stats::significance_marker(0.0499), "*");
  EXPECT_EQ(stats::significance_marker(0.05), "");
  EXPECT_EQ(stats::significance_marker(0.8), "");
}

TEST(Timing, DiscardsFirstAndAveragesRest) {
  // Stub clock: each experiment takes 100, 10, 20, 30, 40, 50 ms in turn.
  const std::vector<double> durations{100, 10, 20, 30, 40, 50};
  double now = 0;
  int calls = 0, clock_reads = 0;
  auto clock = [&] {
    ++clock_reads;
    return now;
  };
  auto experiment = [&] { now += durations[static_cast<std::size_t>(calls++)]; };
  const auto r = timing_harness(experiment, 6, clock);
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(clock_reads, 12);
  EXPECT_EQ(r.raw_ms, durations);
  EXPECT_DOUBLE_EQ(r.mean_ms, 30.0);
  EXPECT_THROW(timing_harness(experiment, 1, clock), InvalidArgument);
}

TEST(Curves, PercentilesInterpolate) {
  const std::vector<double> v{10, 20, 30, 40, 50};
  EXPECT_DOUBLE_EQ(percentile_sorted(v, 0), 10);
  EXPECT_DOUBLE_EQ(percentile_sorted(v, 50), 30);
  EXPECT_DOUBLE_EQ(percentile_sorted(v, 95), 48);
  EXPECT_DOUBLE_EQ(percentile_sorted(v, 5), 12);
}

TEST(Curves, GroupsSplitByExitClass) {
  const auto& w = testing::small_world();
  const std::uint32_t tau = 3, depth = 12;
  const auto labels = label_queries(w.index, w.data.corpus, w.data.queries, depth, 1, 1);
  std::vector<SearchTrace> traces;
  for (std::size_t i = 0; i < 60; ++i) traces.push_back(probe(w.index, w.data.queries.row(i), 10, depth, i, 0));
  const auto curves = intersection_curves(traces, labels, tau, depth);
  std::size_t exits = 0;
  for (std::size_t i = 0; i < 60; ++i) exits += labels.labels[i].C <= tau;
  for (const auto& c : curves) {
    if (c.group == "all") EXPECT_EQ(c.count, 60u);
    if (c.group == "exit") EXPECT_EQ(c.count, exits);
    if (c.group == "continue") EXPECT_EQ(c.count, 60u - exits);
    EXPECT_LE(c.p5, c.p95);
    EXPECT_GE(c.mean, 0.0);
    EXPECT_LE(c.mean, 100.0);
  }
}

TEST(Tuning, RStarMonotoneEqualsCdfAndMinimal) {
  const auto& w = testing::small_world();
  const std::uint32_t K = w.index.num_clusters();
  const auto golden = label_queries(w.index, w.data.corpus, w.data.queries, K, 1, 1);
  double prev = 0.0;
  for (std::uint32_t n = 1; n <= K; ++n) {
    const double r = r_star_at_1_fixed(w.index, w.data.queries, golden, n, 1);
    EXPECT_GE(r, prev);
    EXPECT_EQ(r, label_cdf(golden, n)) << n;
    prev = r;
  }
  const auto t = tune_min_n(w.index, w.data.queries, golden, 0.95, 1);
  EXPECT_GE(t.r_star_at_N, 0.95);
  if (t.N > 1) EXPECT_LT(r_star_at_1_fixed(w.index, w.data.queries, golden, t.N - 1, 1), 0.95);
  EXPECT_EQ(tune_min_n(w.index, w.data.queries, golden, 0.0, 1).N, 1u);
  std::uint32_t max_c = 0;
  for (const auto& l : golden.labels) max_c = std::max(max_c, l.C);
  EXPECT_EQ(tune_min_n(w.index, w.data.queries, golden, 1.0, 1).N, max_c);
}

TEST(Report, RunFilesRoundTripAndBaselineComparison) {
  const Toy t = toy();
  testing::TempDir dir("report");
  write_trec_run(t.runs, "toy", dir.file("r.trec"));
  write_decisions_tsv(t.runs, dir.file("r.tsv"));
  const auto back = read_run(dir.file("r.trec"), dir.file("r.tsv"));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].qid, t.runs[i].qid);
    EXPECT_EQ(back[i].stop_depth, t.runs[i].stop_depth);
    EXPECT_EQ(back[i].result, t.runs[i].result);
  }
  EvalReport base = evaluate_run("Fixed", t.runs, t.golden, t.qrels);
  EvalReport same = evaluate_run("Same", t.runs, t.golden, t.qrels);
  compare_to_baseline(same, base, 1);
  EXPECT_EQ(same.probe_speedup, 1.0);
  EXPECT_EQ(same.p_adjusted, 1.0);
  EXPECT_EQ(same.marker, "");
  write_report_tsv({base, same}, dir.file("report.tsv"));
  std::ifstream in(dir.file("report.tsv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "strategy\tR*@1\tR@100\tmRR@10\tC_hat\tSp_probes\tp_adj");
  EXPECT_THROW(exit_reason_from_string("nope"), FormatError);
}

}  // namespace
}  // namespace eeknn
