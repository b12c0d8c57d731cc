#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <fmt/core.h>

#include "eeknn/common.hpp"
#include "eeknn/corpus.hpp"
#include "eeknn/ivf.hpp"
#include "eeknn/log.hpp"
#include "eeknn/oracle.hpp"
#include "eeknn/parallel.hpp"
#include "eeknn/policy.hpp"
#include "eeknn/stats.hpp"

namespace eeknn {

/// One query's outcome under a strategy.
struct RunRecord {
  QueryId qid = 0;
  std::uint32_t stop_depth = 0;
  ExitReason reason = ExitReason::kFixed;
  std::vector<ScoredDoc> result;
};

struct MetricValue {
  double mean = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // queries without qrels
  std::vector<std::pair<QueryId, double>> per_query;
};

namespace detail {
inline std::unordered_map<QueryId, const GoldenLabel*> golden_by_qid(const GoldenLabels& golden) {
  std::unordered_map<QueryId, const GoldenLabel*> m;
  for (const auto& l : golden.labels) m.emplace(l.qid, &l);
  return m;
}
}  // namespace detail

/// Mean over queries of |top-cutoff(result) ∩ exact top-cutoff| / cutoff.
/// At cutoff 1 this is the indicator that the returned leader is d*.
inline MetricValue r_star_at_k(const std::vector<RunRecord>& runs, const GoldenLabels& golden, std::size_t cutoff) {
  require(cutoff >= 1, "r_star_at_k: cutoff must be >= 1");
  const auto by_qid = detail::golden_by_qid(golden);
  MetricValue out;
  double sum = 0.0;
  for (const auto& r : runs) {
    const auto it = by_qid.find(r.qid);
    if (it == by_qid.end()) throw InvalidArgument("r_star_at_k: no golden label for query " + std::to_string(r.qid));
    const GoldenLabel& g = *it->second;
    std::unordered_set<DocId> exact;
    if (cutoff == 1) {
      exact.insert(g.d_star);
    } else {
      require(g.exact_topk.size() >= cutoff, "r_star_at_k: golden exact top-k shorter than cutoff");
      for (std::size_t i = 0; i < cutoff; ++i) exact.insert(g.exact_topk[i].id);
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(cutoff, r.result.size()); ++i) hit += exact.count(r.result[i].id);
    const double v = static_cast<double>(hit) / static_cast<double>(cutoff);
    out.per_query.emplace_back(r.qid, v);
    sum += v;
  }
  out.evaluated = runs.size();
  out.mean = runs.empty() ? 0.0 : sum / static_cast<double>(runs.size());
  return out;
}

/// Mean over judged queries of |top-k ∩ relevant| / |relevant|. Unjudged
/// queries are excluded and counted.
inline MetricValue recall_at_k(const std::vector<RunRecord>& runs, const Qrels& qrels, std::size_t k = 100) {
  MetricValue out;
  double sum = 0.0;
  for (const auto& r : runs) {
    const auto it = qrels.find(r.qid);
    if (it == qrels.end() || it->second.empty()) {
      ++out.excluded;
      continue;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(k, r.result.size()); ++i) hit += it->second.count(r.result[i].id);
    const double v = static_cast<double>(hit) / static_cast<double>(it->second.size());
    out.per_query.emplace_back(r.qid, v);
    sum += v;
    ++out.evaluated;
  }
  out.mean = out.evaluated == 0 ? 0.0 : sum / static_cast<double>(out.evaluated);
  return out;
}

/// Mean reciprocal rank of the first relevant document within the top 10.
inline MetricValue mrr_at_10(const std::vector<RunRecord>& runs, const Qrels& qrels) {
  MetricValue out;
  double sum = 0.0;
  for (const auto& r : runs) {
    const auto it = qrels.find(r.qid);
    if (it == qrels.end() || it->second.empty()) {
      ++out.excluded;
      continue;
    }
    double rr = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, r.result.size()); ++i)
      if (it->second.count(r.result[i].id)) {
        rr = 1.0 / static_cast<double>(i + 1);
        break;
      }
    out.per_query.emplace_back(r.qid, rr);
    sum += rr;
    ++out.evaluated;
  }
  out.mean = out.evaluated == 0 ? 0.0 : sum / static_cast<double>(out.evaluated);
  return out;
}

inline double mean_probes(const std::vector<RunRecord>& runs) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += r.stop_depth;
  return s / static_cast<double>(runs.size());
}

/// Runs a policy over every query row. Parallel across queries.
inline std::vector<RunRecord> run_queries(const IvfIndex& index, const VectorSet& queries, std::uint32_t k,
                                          const Policy& policy, unsigned threads = default_threads()) {
  std::vector<RunRecord> out(queries.size());
  parallel_for(
      queries.size(),
      [&](std::size_t i) {
        PolicyDecision d = run_policy(index, queries.row(i), k, policy, queries.id(i));
        out[i] = {queries.id(i), d.stop_depth, d.reason, std::move(d.result)};
      },
      threads);
  return out;
}

/// R*@1 of the fixed-N strategy, by probing. The leader of RS_N does not
/// depend on k, so a size-1 result set is used.
inline double r_star_at_1_fixed(const IvfIndex& index, const VectorSet& queries, const GoldenLabels& golden,
                                std::uint32_t N, unsigned threads = default_threads()) {
  const auto runs = run_queries(index, queries, 1, FixedPolicy{N}, threads);
  return r_star_at_k(runs, golden, 1).mean;
}

struct TuneResult {
  std::uint32_t N = 0;
  double r_star_at_N = 0.0;
  /// R*@1 at N-1; NaN when N == 1.
  double r_star_below = std::numeric_limits<double>::quiet_NaN();
};

/// Smallest N with R*@1(fixed-N) >= rho, by binary search over [1, K].
inline TuneResult tune_min_n(const IvfIndex& index, const VectorSet& queries, const GoldenLabels& golden,
                             double rho = 0.95, unsigned threads = default_threads()) {
  require(rho >= 0.0 && rho <= 1.0, "tune_min_n: rho must be in [0, 1]");
  const std::uint32_t K = index.num_clusters();
  std::map<std::uint32_t, double> cache;
  auto at = [&](std::uint32_t n) {
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    return cache[n] = r_star_at_1_fixed(index, queries, golden, n, threads);
  };
  if (at(K) < rho)
    throw std::runtime_error(fmt::format("tune_min_n: rho={} unreachable; R*@1 at N=K={} is {}", rho, K, at(K)));
  std::uint32_t lo = 1, hi = K;
  while (lo < hi) {
    const std::uint32_t mid = lo + (hi - lo) / 2;
    if (at(mid) >= rho)
      hi = mid;
    else
      lo = mid + 1;
  }
  TuneResult r;
  r.N = lo;
  r.r_star_at_N = at(lo);
  if (lo > 1) {
    r.r_star_below = at(lo - 1);
    if (r.r_star_below >= rho) throw std::logic_error("tune_min_n: R*@1 is not monotone in N");
  }
  return r;
}

struct TimingResult {
  double mean_ms = 0.0;
  std::vector<double> raw_ms;  // every repetition, including the discarded first
};

/// Runs `experiment` `repetitions` times, discards the first run, and averages
/// the rest. `now_ms` is the clock (injectable for tests).
inline TimingResult timing_harness(const std::function<void()>& experiment, std::uint32_t repetitions = 6,
                                   const std::function<double()>& now_ms = [] {
                                     using namespace std::chrono;
                                     return duration<double, std::milli>(steady_clock::now().time_since_epoch())
                                         .count();
                                   }) {
  require(repetitions >= 2, "timing_harness: repetitions must be >= 2");
  TimingResult r;
  for (std::uint32_t i = 0; i < repetitions; ++i) {
    const double start = now_ms();
    experiment();
    r.raw_ms.push_back(now_ms() - start);
  }
  double sum = 0.0;
  for (std::size_t i = 1; i < r.raw_ms.size(); ++i) sum += r.raw_ms[i];
  r.mean_ms = sum / static_cast<double>(repetitions - 1);
  std::string raw;
  for (double v : r.raw_ms) raw += fmt::format(" {:.3f}", v);
  log::info("timing runs (ms, first discarded):{}", raw);
  return r;
}

/// Linear-interpolated percentile over sorted values (p in [0, 100]).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), "percentile: empty sample");
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

struct CurvePoint {
  std::uint32_t depth = 0;
  std::string group;  // "all", "exit" or "continue"
  double mean = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  std::size_t count = 0;
};

/// Mean and 5th/95th percentile of phi_h per depth for all queries and for
/// the Exit (C <= tau) and Continue groups. Empty groups are omitted.
inline std::vector<CurvePoint> intersection_curves(const std::vector<SearchTrace>& traces, const GoldenLabels& labels,
                                                   std::uint32_t tau, std::uint32_t max_depth) {
  const auto by_qid = detail::golden_by_qid(labels);
  std::vector<CurvePoint> out;
  for (std::uint32_t h = 2; h <= max_depth; ++h) {
    std::map<std::string, std::vector<double>> groups{{"all", {}}, {"exit", {}}, {"continue", {}}};
    for (const auto& t : traces) {
      require(t.depth() >= max_depth, "intersection_curves: trace shallower than max_depth");
      const double phi = t.phi(h);
      groups["all"].push_back(phi);
      const auto it = by_qid.find(t.query_id);
      if (it == by_qid.end()) throw InvalidArgument("intersection_curves: no label for query " + std::to_string(t.query_id));
      groups[it->second->C <= tau ? "exit" : "continue"].push_back(phi);
    }
    for (const char* name : {"all", "exit", "continue"}) {
      auto& v = groups[name];
      if (v.empty()) {
        if (h == 2) log::info("intersection_curves: group '{}' is empty; omitted", name);
        continue;
      }
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (double x : v) sum += x;
      out.push_back({h, name, sum / static_cast<double>(v.size()), percentile_sorted(v, 5.0),
                     percentile_sorted(v, 95.0), v.size()});
    }
  }
  return out;
}

inline void write_curves_csv(const std::vector<CurvePoint>& curves, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "depth,group,mean,p5,p95\n";
  for (const auto& c : curves) out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", c.depth, c.group, c.mean, c.p5, c.p95);
}

/// One strategy's row of the results table.
struct EvalReport {
  std::string strategy;
  double r_star_at_1 = 0.0;
  double recall_at_k = 0.0;
  double mrr_at_10 = 0.0;
  double mean_probes = 0.0;
  double probe_speedup = 1.0;
  std::optional<double> mean_time_ms;
  std::optional<double> speedup;
  double t_stat = 0.0;
  double p_adjusted = 1.0;
  std::string marker;
  std::size_t excluded_from_qrels = 0;
  struct PerQuery {
    QueryId qid;
    double rr_at_10;  // NaN when unjudged
    std::uint32_t probes;
  };
  std::vector<PerQuery> per_query;
};

inline EvalReport evaluate_run(const std::string& name, const std::vector<RunRecord>& runs, const GoldenLabels& golden,
                               const Qrels& qrels, std::size_t recall_cutoff = 100) {
  EvalReport r;
  r.strategy = name;
  r.r_star_at_1 = r_star_at_k(runs, golden, 1).mean;
  const MetricValue rec = recall_at_k(runs, qrels, recall_cutoff);
  const MetricValue mrr = mrr_at_10(runs, qrels);
  r.recall_at_k = rec.mean;
  r.mrr_at_10 = mrr.mean;
  r.excluded_from_qrels = mrr.excluded;
  r.mean_probes = mean_probes(runs);
  std::unordered_map<QueryId, double> rr(mrr.per_query.begin(), mrr.per_query.end());
  for (const auto& run : runs) {
    const auto it = rr.find(run.qid);
    r.per_query.push_back({run.qid, it == rr.end() ? std::numeric_limits<double>::quiet_NaN() : it->second,
                           run.stop_depth});
  }
  return r;
}

/// Probe speedup, optional time speedup, and the paired t-test on per-query
/// mRR@10 against `baseline`.
inline void compare_to_baseline(EvalReport& r, const EvalReport& baseline, std::size_t num_comparisons) {
  r.probe_speedup = r.mean_probes > 0 ? baseline.mean_probes / r.mean_probes : 0.0;
  if (r.mean_time_ms && baseline.mean_time_ms && *r.mean_time_ms > 0)
    r.speedup = *baseline.mean_time_ms / *r.mean_time_ms;
  std::unordered_map<QueryId, double> base_rr;
  for (const auto& pq : baseline.per_query)
    if (!std::isnan(pq.rr_at_10)) base_rr.emplace(pq.qid, pq.rr_at_10);
  std::vector<double> a, b;
  for (const auto& pq : r.per_query) {
    if (std::isnan(pq.rr_at_10)) continue;
    const auto it = base_rr.find(pq.qid);
    if (it == base_rr.end()) continue;
    a.push_back(pq.rr_at_10);
    b.push_back(it->second);
  }
  if (a.size() < 2) {
    r.t_stat = 0.0;
    r.p_adjusted = 1.0;
    r.marker.clear();
    return;
  }
  const auto tt = stats::paired_ttest_bonferroni(a, b, num_comparisons);
  r.t_stat = tt.t;
  r.p_adjusted = tt.p_adjusted;
  r.marker = stats::significance_marker(tt.p_adjusted);
}

/// Deterministic metrics table (no timing columns).
inline void write_report_tsv(const std::vector<EvalReport>& reports, const std::string& path,
                             std::size_t recall_cutoff = 100) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << fmt::format("strategy\tR*@1\tR@{}\tmRR@10\tC_hat\tSp_probes\tp_adj\n", recall_cutoff);
  for (const auto& r : reports)
    out << fmt::format("{}\t{:.3f}\t{:.3f}\t{:.3f}{}\t{:.1f}\t{:.2f}\t{:.4g}\n", r.strategy, r.r_star_at_1,
                       r.recall_at_k, r.mrr_at_10, r.marker, r.mean_probes, r.probe_speedup, r.p_adjusted);
}

inline void write_timing_tsv(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "strategy\tT_ms\tSp\n";
  for (const auto& r : reports)
    out << fmt::format("{}\t{}\t{}\n", r.strategy, r.mean_time_ms ? fmt::format("{:.4f}", *r.mean_time_ms) : "-",
                       r.speedup ? fmt::format("{:.2f}", *r.speedup) : "-");
}

inline void write_per_query_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "qid,rr_at_10,probes\n";
  for (const auto& pq : r.per_query)
    out << pq.qid << ',' << (std::isnan(pq.rr_at_10) ? std::string("") : fmt::format("{:.6f}", pq.rr_at_10)) << ','
        << pq.probes << '\n';
}

/// TREC run format: `qid Q0 docid rank score tag`.
inline void write_trec_run(const std::vector<RunRecord>& runs, const std::string& tag, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& r : runs)
    for (std::size_t i = 0; i < r.result.size(); ++i)
      out << fmt::format("{} Q0 {} {} {:.9g} {}\n", r.qid, r.result[i].id, i + 1, r.result[i].score, tag);
}

inline void write_decisions_tsv(const std::vector<RunRecord>& runs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "qid\tstop_depth\texit_reason\n";
  for (const auto& r : runs) out << r.qid << '\t' << r.stop_depth << '\t' << to_string(r.reason) << '\n';
}

inline ExitReason exit_reason_from_string(std::string_view s) {
  for (auto r : {ExitReason::kFixed, ExitReason::kPatience, ExitReason::kRegression, ExitReason::kClassifierExit,
                 ExitReason::kCascadeSecondStage, ExitReason::kBudgetExhausted})
    if (to_string(r) == s) return r;
  throw FormatError("unknown exit reason: " + std::string(s));
}

/// Reads a TREC run plus its decisions file back into run records, in the
/// decisions file's query order.
inline std::vector<RunRecord> read_run(const std::string& trec_path, const std::string& decisions_path) {
  std::ifstream dec(decisions_path);
  if (!dec) throw std::runtime_error("cannot open decisions: " + decisions_path);
  std::vector<RunRecord> runs;
  std::unordered_map<QueryId, std::size_t> pos;
  std::string line;
  std::getline(dec, line);  // header
  std::size_t lineno = 1;
  while (std::getline(dec, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RunRecord r;
    std::string reason;
    if (!(ls >> r.qid >> r.stop_depth >> reason))
      throw FormatError(decisions_path + ": malformed line " + std::to_string(lineno));
    r.reason = exit_reason_from_string(reason);
    pos[r.qid] = runs.size();
    runs.push_back(std::move(r));
  }
  std::ifstream trec(trec_path);
  if (!trec) throw std::runtime_error("cannot open run: " + trec_path);
  lineno = 0;
  while (std::getline(trec, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    QueryId qid = 0;
    std::string q0, tag;
    DocId doc = 0;
    std::size_t rank = 0;
    float score = 0;
    if (!(ls >> qid >> q0 >> doc >> rank >> score >> tag))
      throw FormatError(trec_path + ": malformed line " + std::to_string(lineno));
    const auto it = pos.find(qid);
    if (it == pos.end()) throw FormatError(trec_path + ": query " + std::to_string(qid) + " not in decisions file");
    auto& res = runs[it->second].result;
    if (rank != res.size() + 1) throw FormatError(trec_path + ": ranks out of order at line " + std::to_string(lineno));
    res.push_back({doc, score});
  }
  return runs;
}

}  // namespace eeknn
