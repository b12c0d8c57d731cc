#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eeknn {

using DocId = std::uint64_t;
using QueryId = std::uint64_t;

/// Raised for malformed on-disk data (vector files, qrels, models, ...).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an argument violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Metric : std::uint8_t { kInnerProduct = 0, kL2 = 1 };

inline std::string_view to_string(Metric m) {
  return m == Metric::kInnerProduct ? "inner_product" : "l2";
}

inline Metric metric_from_string(std::string_view s) {
  if (s == "inner_product" || s == "ip") return Metric::kInnerProduct;
  if (s == "l2") return Metric::kL2;
  throw InvalidArgument("unknown metric: " + std::string(s));
}

/// A scored document. Ordering everywhere: higher score first, then smaller id.
struct ScoredDoc {
  DocId id = 0;
  float score = 0.0f;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// True when `a` ranks strictly ahead of `b`.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Eight independent lanes combined in a fixed order. Every caller (index
// probing, brute force, k-means, features) goes through these, so scores for
// the same pair are bit-identical regardless of call site.
inline float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  const float* x = a.data();
  const float* y = b.data();
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) lane[j] += x[i + j] * y[i + j];
  float tail = 0.0f;
  for (; i < n; ++i) tail += x[i] * y[i];
  return (((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]))) +
         tail;
}

inline float squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  const float* x = a.data();
  const float* y = b.data();
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) {
      const float d = x[i + j] - y[i + j];
      lane[j] += d * d;
    }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = x[i] - y[i];
    tail += d * d;
  }
  return (((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]))) +
         tail;
}

/// Similarity sigma(q, d): larger is closer under both metrics.
inline float similarity(Metric m, std::span<const float> q, std::span<const float> d) {
  return m == Metric::kInnerProduct ? dot(q, d) : -squared_l2(q, d);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace eeknn
