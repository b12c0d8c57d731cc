#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eeknn/common.hpp"
#include "eeknn/features.hpp"
#include "eeknn/gbdt.hpp"
#include "eeknn/ivf.hpp"

namespace eeknn {

enum class ExitReason : std::uint8_t {
  kFixed,
  kPatience,
  kRegression,
  kClassifierExit,
  kCascadeSecondStage,
  kBudgetExhausted,
};

inline std::string_view to_string(ExitReason r) {
  switch (r) {
    case ExitReason::kFixed: return "fixed";
    case ExitReason::kPatience: return "patience";
    case ExitReason::kRegression: return "regression";
    case ExitReason::kClassifierExit: return "classifier_exit";
    case ExitReason::kCascadeSecondStage: return "cascade_second_stage";
    case ExitReason::kBudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

struct PolicyDecision {
  std::uint32_t stop_depth = 0;
  ExitReason reason = ExitReason::kFixed;
  std::vector<ScoredDoc> result;  // RS_{stop_depth}
};

struct FixedPolicy {
  std::uint32_t N = 0;
};

/// Stop once phi_h >= phi_min for `delta` consecutive probes.
struct PatiencePolicy {
  std::uint32_t delta = 7;
  double phi_min = 95.0;
  std::uint32_t N = 0;
};

struct RegressionPolicy {
  std::shared_ptr<const TreeEnsemble> model;
  FeatureLayout layout;
  std::uint32_t N = 0;
};

struct ClassifierPolicy {
  std::shared_ptr<const TreeEnsemble> model;
  FeatureLayout layout;
  double threshold = 0.5;
  std::uint32_t N = 0;
};

struct CascadePolicy {
  ClassifierPolicy first;
  std::variant<PatiencePolicy, RegressionPolicy> second;
  /// When true, phi values at h <= tau count toward the second-stage patience run.
  bool count_phi_before_tau = false;
};

using Policy = std::variant<FixedPolicy, PatiencePolicy, RegressionPolicy, ClassifierPolicy, CascadePolicy>;

/// Tracks the current run of consecutive probes with phi >= phi_min.
class PatienceRun {
 public:
  PatienceRun(std::uint32_t delta, double phi_min) : delta_(delta), phi_min_(phi_min) {}

  /// Feeds phi_h; returns true when the run reaches delta.
  bool observe(double phi) {
    run_ = phi >= phi_min_ ? run_ + 1 : 0;
    return run_ >= delta_;
  }
  bool satisfied() const { return run_ >= delta_; }

 private:
  std::uint32_t delta_;
  double phi_min_;
  std::uint32_t run_ = 0;
};

namespace detail {

inline void validate_patience(const PatiencePolicy& p, std::uint32_t K) {
  require(p.delta >= 1, "patience: delta must be >= 1");
  require(p.phi_min >= 90.0 && p.phi_min <= 100.0, "patience: phi must be in [90, 100]");
  require(p.N >= 1 && p.N <= K, "patience: N must be in [1, K]");
}

inline void validate_learned(const std::shared_ptr<const TreeEnsemble>& model, const FeatureLayout& layout,
                             std::uint32_t N, std::uint32_t K) {
  require(model != nullptr, "policy: model missing");
  require(model->num_features == layout.total_len(), "policy: model feature count " +
                                                         std::to_string(model->num_features) +
                                                         " does not match layout length " +
                                                         std::to_string(layout.total_len()));
  require(layout.tau >= 1 && layout.tau < N && N <= K, "policy: requires 1 <= tau < N <= K");
}

inline PolicyDecision finish(const SearchTrace& t, ExitReason reason) {
  return {t.depth(), reason, t.current};
}

/// Continues probing with a patience counter until it fires or N is reached.
inline PolicyDecision continue_patience(SearchTrace& t, const IvfIndex& index, std::span<const float> q,
                                        PatienceRun run, std::uint32_t N, ExitReason fired) {
  if (run.satisfied()) return finish(t, fired);
  while (t.depth() < N) {
    probe_next(t, index, q);
    if (run.observe(t.phi(t.depth()))) return finish(t, fired);
  }
  return finish(t, ExitReason::kBudgetExhausted);
}

inline std::uint32_t round_half_up_clamped(double prediction, std::uint32_t lo, std::uint32_t hi) {
  const double r = std::floor(prediction + 0.5);
  if (!(r >= lo)) return lo;  // also catches NaN
  if (r >= hi) return hi;
  return static_cast<std::uint32_t>(r);
}

inline SearchTrace trace_to_tau(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                std::uint32_t tau, QueryId qid) {
  return probe(index, q, k, tau, qid, tau);
}

inline double exit_probability(const ClassifierPolicy& p, const SearchTrace& t, std::span<const float> q) {
  return predict(*p.model, extract_features(t, q, p.layout));
}

inline std::uint32_t regression_depth(const RegressionPolicy& p, const SearchTrace& t, std::span<const float> q) {
  return round_half_up_clamped(predict(*p.model, extract_features(t, q, p.layout)), p.layout.tau, p.N);
}

}  // namespace detail

inline PolicyDecision run_fixed(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                const FixedPolicy& p, QueryId qid = 0) {
  require(p.N >= 1 && p.N <= index.num_clusters(), "fixed: N must be in [1, K]");
  const SearchTrace t = probe(index, q, k, p.N, qid, 0);
  return detail::finish(t, ExitReason::kFixed);
}

/// Stops at the earliest h >= delta + 1 closing a run of delta probes with
/// phi >= phi_min (phi starts at h = 2); otherwise at N.
inline PolicyDecision run_patience(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                   const PatiencePolicy& p, QueryId qid = 0) {
  detail::validate_patience(p, index.num_clusters());
  SearchTrace t = probe(index, q, k, 1, qid, 0);
  return detail::continue_patience(t, index, q, PatienceRun(p.delta, p.phi_min), p.N, ExitReason::kPatience);
}

/// Probes tau clusters, predicts the total probe count, and resumes to it.
inline PolicyDecision run_regression(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                     const RegressionPolicy& p, QueryId qid = 0) {
  detail::validate_learned(p.model, p.layout, p.N, index.num_clusters());
  SearchTrace t = detail::trace_to_tau(index, q, k, p.layout.tau, qid);
  const std::uint32_t r = detail::regression_depth(p, t, q);
  t = resume_probe(std::move(t), index, q, r);
  return detail::finish(t, ExitReason::kRegression);
}

/// Probes tau clusters; exits there if P(Exit) >= threshold, else probes to N.
inline PolicyDecision run_classifier(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                     const ClassifierPolicy& p, QueryId qid = 0) {
  detail::validate_learned(p.model, p.layout, p.N, index.num_clusters());
  SearchTrace t = detail::trace_to_tau(index, q, k, p.layout.tau, qid);
  if (detail::exit_probability(p, t, q) >= p.threshold) return detail::finish(t, ExitReason::kClassifierExit);
  t = resume_probe(std::move(t), index, q, p.N);
  return detail::finish(t, ExitReason::kBudgetExhausted);
}

/// Classifier at tau; Continue queries are handed to a patience or regression stage.
inline PolicyDecision run_cascade(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                  const CascadePolicy& p, QueryId qid = 0) {
  const ClassifierPolicy& first = p.first;
  detail::validate_learned(first.model, first.layout, first.N, index.num_clusters());
  const std::uint32_t tau = first.layout.tau;
  SearchTrace t = detail::trace_to_tau(index, q, k, tau, qid);
  if (detail::exit_probability(first, t, q) >= first.threshold)
    return detail::finish(t, ExitReason::kClassifierExit);

  if (const auto* reg = std::get_if<RegressionPolicy>(&p.second)) {
    detail::validate_learned(reg->model, reg->layout, reg->N, index.num_clusters());
    require(reg->layout.tau == tau, "cascade: stages must share tau");
    const std::uint32_t r = detail::regression_depth(*reg, t, q);
    t = resume_probe(std::move(t), index, q, r);
    return detail::finish(t, ExitReason::kCascadeSecondStage);
  }
  const auto& pat = std::get<PatiencePolicy>(p.second);
  detail::validate_patience(pat, index.num_clusters());
  require(pat.N > tau, "cascade: patience N must exceed tau");
  PatienceRun run(pat.delta, pat.phi_min);
  if (p.count_phi_before_tau)
    for (std::uint32_t h = 2; h <= tau; ++h) run.observe(t.phi(h));
  return detail::continue_patience(t, index, q, run, pat.N, ExitReason::kCascadeSecondStage);
}

inline PolicyDecision run_policy(const IvfIndex& index, std::span<const float> q, std::uint32_t k,
                                 const Policy& policy, QueryId qid = 0) {
  return std::visit(
      [&](const auto& p) -> PolicyDecision {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPolicy>) return run_fixed(index, q, k, p, qid);
        else if constexpr (std::is_same_v<T, PatiencePolicy>) return run_patience(index, q, k, p, qid);
        else if constexpr (std::is_same_v<T, RegressionPolicy>) return run_regression(index, q, k, p, qid);
        else if constexpr (std::is_same_v<T, ClassifierPolicy>) return run_classifier(index, q, k, p, qid);
        else return run_cascade(index, q, k, p, qid);
      },
      policy);
}

/// Budget N of a policy (upper bound on stop depth).
inline std::uint32_t policy_budget(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> std::uint32_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, CascadePolicy>) return p.first.N;
        else return p.N;
      },
      policy);
}

/// Patience stop depth evaluated offline on a trace already probed to >= N.
/// Agrees with run_patience for the same query.
inline std::pair<std::uint32_t, ExitReason> patience_depth_from_trace(const SearchTrace& t, std::uint32_t delta,
                                                                      double phi_min, std::uint32_t N,
                                                                      std::uint32_t start_after = 1) {
  require(t.depth() >= N, "patience_depth_from_trace: trace shallower than N");
  PatienceRun run(delta, phi_min);
  const std::uint32_t first = std::max<std::uint32_t>(2, start_after + 1);
  for (std::uint32_t h = first; h <= N; ++h)
    if (run.observe(t.phi(h))) return {h, ExitReason::kPatience};
  return {N, ExitReason::kBudgetExhausted};
}

}  // namespace eeknn
