#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eeknn/common.hpp"
#include "eeknn/features.hpp"

namespace eeknn {

enum class Objective : std::uint8_t { kSquaredError = 0, kLogistic = 1 };

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;     // x <= threshold goes left
  bool default_left = true;   // direction for NaN inputs
  std::int32_t left = -1;
  std::int32_t right = -1;
  float value = 0.0f;         // leaf output

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  float eval(std::span<const float> x) const {
    std::int32_t i = 0;
    while (!nodes[i].is_leaf()) {
      const TreeNode& n = nodes[i];
      const float v = x[static_cast<std::size_t>(n.feature)];
      const bool go_left = std::isnan(v) ? n.default_left : v <= n.threshold;
      i = go_left ? n.left : n.right;
    }
    return nodes[i].value;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

/// Additive forest: raw score = base_score + learning_rate * sum of tree outputs.
/// With the logistic objective the raw score is a log-odds.
struct TreeEnsemble {
  std::vector<Tree> trees;
  float base_score = 0.0f;
  float learning_rate = 0.1f;
  Objective objective = Objective::kSquaredError;
  std::size_t num_features = 0;

  double raw_score(std::span<const float> x) const {
    require(x.size() == num_features, "predict: feature length " + std::to_string(x.size()) +
                                          " != model feature count " + std::to_string(num_features));
    double sum = 0.0;
    for (const auto& t : trees) sum += t.eval(x);
    return static_cast<double>(base_score) + static_cast<double>(learning_rate) * sum;
  }

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Regression output, or P(class 1) for logistic models.
inline float predict(const TreeEnsemble& model, std::span<const float> x) {
  const double s = model.raw_score(x);
  return static_cast<float>(model.objective == Objective::kLogistic ? sigmoid(s) : s);
}

inline std::vector<float> predict_batch(const TreeEnsemble& model, const TrainingMatrix& m) {
  require(m.cols == model.num_features, "predict_batch: column count mismatch");
  std::vector<float> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = predict(model, m.row(r));
  return out;
}

struct TrainConfig {
  std::uint32_t num_trees = 100;
  float learning_rate = 0.1f;
  std::uint32_t max_depth = 6;
  std::uint32_t min_samples_leaf = 20;
  float subsample_features = 1.0f;
  std::uint64_t seed = 7;
  /// 0 disables early stopping.
  std::uint32_t early_stopping_rounds = 10;
  /// Multiplier on Exit-class (label 1) rows; classification only.
  float instance_weight_exit = 1.0f;
  /// Multiplier on Continue-class (label 0) rows; classification only.
  float instance_weight_continue = 1.0f;

  void validate() const {
    require(num_trees >= 1, "TrainConfig: num_trees must be positive");
    require(learning_rate > 0.0f, "TrainConfig: learning_rate must be positive");
    require(max_depth >= 1, "TrainConfig: max_depth must be positive");
    require(min_samples_leaf >= 1, "TrainConfig: min_samples_leaf must be positive");
    require(subsample_features > 0.0f && subsample_features <= 1.0f,
            "TrainConfig: subsample_features must be in (0, 1]");
    require(instance_weight_exit >= 1.0f, "TrainConfig: instance_weight_exit must be >= 1");
    require(instance_weight_continue > 0.0f, "TrainConfig: instance_weight_continue must be positive");
  }
};

/// Per accepted tree: training and validation loss after adding it.
struct TrainHistory {
  double initial_train_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::size_t best_num_trees = 0;
};

namespace detail {

inline constexpr double kHessianFloor = 1e-12;

struct GradPair {
  double g = 0.0;
  double h = 0.0;
};

/// Exact greedy tree growth, level by level, over presorted feature orders.
class TreeGrower {
 public:
  TreeGrower(const TrainingMatrix& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {
    sorted_.resize(data.cols);
    for (std::size_t f = 0; f < data.cols; ++f) {
      auto& order = sorted_[f];
      order.resize(data.rows);
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return data.X[a * data.cols + f] < data.X[b * data.cols + f];
      });
    }
  }

  Tree grow(std::span<const GradPair> grad, std::span<const std::uint32_t> features) const {
    const std::size_t n = data_.rows;
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<std::int32_t> node_of(n, 0);
    struct Stats {
      double G = 0, H = 0;
      std::size_t count = 0;
    };
    std::vector<Stats> stats(1);
    for (std::size_t r = 0; r < n; ++r) {
      stats[0].G += grad[r].g;
      stats[0].H += grad[r].h;
      ++stats[0].count;
    }
    std::vector<std::int32_t> active{0};

    for (std::uint32_t depth = 0; depth < cfg_.max_depth && !active.empty(); ++depth) {
      struct Best {
        double gain = 0.0;
        std::int32_t feature = -1;
        float threshold = 0.0f;
      };
      struct Scan {
        double GL = 0, HL = 0;
        std::size_t nL = 0;
        float last = 0.0f;
      };
      std::vector<std::int32_t> slot(tree.nodes.size(), -1);
      for (std::size_t i = 0; i < active.size(); ++i) slot[active[i]] = static_cast<std::int32_t>(i);
      std::vector<Best> best(active.size());
      std::vector<Scan> scan(active.size());

      for (std::uint32_t f : features) {
        std::fill(scan.begin(), scan.end(), Scan{});
        for (std::uint32_t r : sorted_[f]) {
          const std::int32_t node = node_of[r];
          if (node < 0) continue;
          const std::int32_t s = slot[node];
          if (s < 0) continue;
          Scan& sc = scan[s];
          const float v = data_.X[r * data_.cols + f];
          const Stats& st = stats[node];
          if (sc.nL > 0 && v > sc.last && sc.nL >= cfg_.min_samples_leaf &&
              st.count - sc.nL >= cfg_.min_samples_leaf) {
            const double GR = st.G - sc.GL;
            const double HR = st.H - sc.HL;
            const double gain = score(sc.GL, sc.HL) + score(GR, HR) - score(st.G, st.H);
            if (gain > best[s].gain) best[s] = {gain, static_cast<std::int32_t>(f), midpoint(sc.last, v)};
          }
          sc.GL += grad[r].g;
          sc.HL += grad[r].h;
          ++sc.nL;
          sc.last = v;
        }
      }

      std::vector<std::int32_t> next_active;
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (best[i].feature < 0) continue;
        const std::int32_t node = active[i];
        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        stats.resize(tree.nodes.size());
        TreeNode& nd = tree.nodes[node];
        nd.feature = best[i].feature;
        nd.threshold = best[i].threshold;
        nd.left = left;
        nd.right = left + 1;
        next_active.push_back(left);
        next_active.push_back(left + 1);
      }
      for (std::size_t r = 0; r < n; ++r) {
        const std::int32_t node = node_of[r];
        if (node < 0) continue;
        const TreeNode& nd = tree.nodes[node];
        if (nd.is_leaf()) continue;
        const std::int32_t child =
            data_.X[r * data_.cols + static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        node_of[r] = child;
        stats[child].G += grad[r].g;
        stats[child].H += grad[r].h;
        ++stats[child].count;
      }
      active.swap(next_active);
    }

    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      TreeNode& nd = tree.nodes[i];
      if (!nd.is_leaf()) continue;
      nd.value = static_cast<float>(-stats[i].G / std::max(stats[i].H, kHessianFloor));
    }
    return tree;
  }

 private:
  static double score(double G, double H) { return G * G / std::max(H, kHessianFloor); }

  static float midpoint(float lo, float hi) {
    const auto mid = static_cast<float>((static_cast<double>(lo) + static_cast<double>(hi)) / 2.0);
    return (mid >= lo && mid < hi) ? mid : lo;
  }

  const TrainingMatrix& data_;
  const TrainConfig& cfg_;
  std::vector<std::vector<std::uint32_t>> sorted_;
};

inline std::vector<std::uint32_t> pick_features(std::size_t cols, float fraction, std::mt19937_64& rng) {
  std::vector<std::uint32_t> all(cols);
  std::iota(all.begin(), all.end(), 0u);
  if (fraction >= 1.0f) return all;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<float>(cols))));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(keep);
  std::sort(all.begin(), all.end());
  return all;
}

inline double mse(std::span<const double> pred, std::span<const float> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = pred[i] - y[i];
    s += d * d;
  }
  return y.empty() ? 0.0 : s / static_cast<double>(y.size());
}

inline double weighted_logloss(std::span<const double> raw, std::span<const float> y, std::span<const float> w) {
  double s = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    // log(1 + e^z) - y z, computed stably.
    const double z = raw[i];
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    s += w[i] * (softplus - y[i] * z);
    wsum += w[i];
  }
  return wsum == 0.0 ? 0.0 : s / wsum;
}

inline void add_tree(std::vector<double>& raw, const TrainingMatrix& m, const Tree& t, float lr) {
  for (std::size_t r = 0; r < m.rows; ++r) raw[r] += static_cast<double>(lr) * t.eval(m.row(r));
}

struct BoostTask {
  Objective objective;
  std::vector<float> weights;      // training weights
  std::vector<float> val_weights;  // validation weights
};

inline TreeEnsemble boost(const TrainingMatrix& train, const TrainingMatrix* valid, const TrainConfig& cfg,
                          const BoostTask& task, float base_score, TrainHistory* history) {
  TreeEnsemble model;
  model.objective = task.objective;
  model.learning_rate = cfg.learning_rate;
  model.base_score = base_score;
  model.num_features = train.cols;

  const bool logistic = task.objective == Objective::kLogistic;
  auto loss = [&](std::span<const double> raw, const TrainingMatrix& m, std::span<const float> w) {
    return logistic ? weighted_logloss(raw, m.y, w) : mse(raw, m.y);
  };

  std::vector<double> raw(train.rows, base_score);
  std::vector<double> vraw(valid ? valid->rows : 0, base_score);
  const bool early = valid && valid->rows > 0 && cfg.early_stopping_rounds > 0;
  TrainHistory hist;
  hist.initial_train_loss = loss(raw, train, task.weights);
  double train_loss = hist.initial_train_loss;
  double best_val = early ? loss(vraw, *valid, task.val_weights) : 0.0;
  std::size_t best_trees = 0;
  std::uint32_t since_best = 0;

  TreeGrower grower(train, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<GradPair> grad(train.rows);
  for (std::uint32_t it = 0; it < cfg.num_trees; ++it) {
    for (std::size_t r = 0; r < train.rows; ++r) {
      const double w = task.weights[r];
      if (logistic) {
        const double p = sigmoid(raw[r]);
        grad[r] = {w * (p - train.y[r]), w * p * (1.0 - p)};
      } else {
        grad[r] = {w * (raw[r] - train.y[r]), w};
      }
    }
    Tree tree = grower.grow(grad, pick_features(train.cols, cfg.subsample_features, rng));

    std::vector<double> trial = raw;
    add_tree(trial, train, tree, cfg.learning_rate);
    double trial_loss = loss(trial, train, task.weights);
    // Newton steps on log-loss can overshoot; halve the leaves until the
    // weighted training loss does not increase.
    for (int halving = 0; logistic && trial_loss > train_loss && halving < 30; ++halving) {
      for (auto& nd : tree.nodes)
        if (nd.is_leaf()) nd.value *= 0.5f;
      trial = raw;
      add_tree(trial, train, tree, cfg.learning_rate);
      trial_loss = loss(trial, train, task.weights);
    }
    if (trial_loss > train_loss) break;
    raw.swap(trial);
    train_loss = trial_loss;
    model.trees.push_back(std::move(tree));
    hist.train_loss.push_back(train_loss);

    if (valid && valid->rows > 0) {
      add_tree(vraw, *valid, model.trees.back(), cfg.learning_rate);
      const double vl = loss(vraw, *valid, task.val_weights);
      hist.valid_loss.push_back(vl);
      if (early) {
        if (vl < best_val) {
          best_val = vl;
          best_trees = model.trees.size();
          since_best = 0;
        } else if (++since_best >= cfg.early_stopping_rounds) {
          break;
        }
      }
    }
  }
  if (early) model.trees.resize(best_trees);
  hist.best_num_trees = model.trees.size();
  if (history) *history = std::move(hist);
  return model;
}

inline void check_training_inputs(const TrainingMatrix& X, const TrainingMatrix* val, const TrainConfig& cfg) {
  cfg.validate();
  require(X.rows > 0, "train: empty training data");
  require(X.cols > 0, "train: zero feature columns");
  require(X.y.size() == X.rows, "train: target length mismatch");
  require(X.rows >= cfg.min_samples_leaf, "train: fewer rows than min_samples_leaf");
  for (float v : X.y) require(std::isfinite(v), "train: non-finite target");
  if (val && val->rows > 0) require(val->cols == X.cols, "train: validation column count mismatch");
}

}  // namespace detail

/// Squared-error boosting; base score is the (weighted) target mean.
inline TreeEnsemble train_regressor(const TrainingMatrix& X, const TrainingMatrix* X_val, const TrainConfig& cfg,
                                    TrainHistory* history = nullptr) {
  detail::check_training_inputs(X, X_val, cfg);
  detail::BoostTask task{Objective::kSquaredError, std::vector<float>(X.rows, 1.0f),
                         std::vector<float>(X_val ? X_val->rows : 0, 1.0f)};
  double sum = 0.0;
  for (float v : X.y) sum += v;
  const auto base = static_cast<float>(sum / static_cast<double>(X.rows));
  return detail::boost(X, X_val, cfg, task, base, history);
}

/// Weighted logistic (Newton) boosting. Effective row weight is
/// X.weights[r] times the class multiplier from cfg.
inline TreeEnsemble train_classifier(const TrainingMatrix& X, const TrainingMatrix* X_val, const TrainConfig& cfg,
                                     TrainHistory* history = nullptr) {
  detail::check_training_inputs(X, X_val, cfg);
  require(X.weights.size() == X.rows, "train_classifier: weight length mismatch");
  auto class_weights = [&](const TrainingMatrix& m) {
    std::vector<float> w(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
      require(m.y[r] == 0.0f || m.y[r] == 1.0f, "train_classifier: labels must be 0 or 1");
      const float base = m.weights.empty() ? 1.0f : m.weights[r];
      w[r] = base * (m.y[r] == 1.0f ? cfg.instance_weight_exit : cfg.instance_weight_continue);
    }
    return w;
  };
  detail::BoostTask task{Objective::kLogistic, class_weights(X),
                         X_val ? class_weights(*X_val) : std::vector<float>{}};
  double pos = 0.0, neg = 0.0;
  for (std::size_t r = 0; r < X.rows; ++r) (X.y[r] == 1.0f ? pos : neg) += task.weights[r];
  require(pos > 0.0 && neg > 0.0, "train_classifier: both classes must be present");
  const auto base = static_cast<float>(std::log(pos / neg));
  return detail::boost(X, X_val, cfg, task, base, history);
}

struct GridResult {
  TrainConfig best;
  double best_valid_loss = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over learning rate and depth, scored by final validation loss.
template <typename TrainFn>
GridResult grid_search(const TrainingMatrix& X, const TrainingMatrix& X_val, TrainConfig base,
                       std::span<const float> learning_rates, std::span<const std::uint32_t> depths,
                       TrainFn&& train) {
  require(X_val.rows > 0, "grid_search: validation set required");
  GridResult result;
  result.best = base;
  for (float lr : learning_rates)
    for (std::uint32_t d : depths) {
      TrainConfig cfg = base;
      cfg.learning_rate = lr;
      cfg.max_depth = d;
      TrainHistory h;
      train(X, &X_val, cfg, &h);
      const double vl = h.valid_loss.empty() ? std::numeric_limits<double>::infinity()
                                             : *std::min_element(h.valid_loss.begin(), h.valid_loss.end());
      if (vl < result.best_valid_loss) {
        result.best_valid_loss = vl;
        result.best = cfg;
      }
    }
  return result;
}

inline nlohmann::json model_to_json(const TreeEnsemble& m) {
  nlohmann::json j;
  j["format"] = "eeknn-gbdt";
  j["version"] = 1;
  j["objective"] = m.objective == Objective::kLogistic ? "logistic" : "squared_error";
  j["base_score"] = m.base_score;
  j["learning_rate"] = m.learning_rate;
  j["num_features"] = m.num_features;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json jt;
    for (const auto& n : t.nodes) {
      jt["feature"].push_back(n.feature);
      jt["threshold"].push_back(n.threshold);
      jt["default_left"].push_back(n.default_left);
      jt["left"].push_back(n.left);
      jt["right"].push_back(n.right);
      jt["value"].push_back(n.value);
    }
    trees.push_back(std::move(jt));
  }
  return j;
}

inline TreeEnsemble model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "eeknn-gbdt" || j.value("version", 0) != 1)
    throw FormatError("model: unrecognized format/version");
  TreeEnsemble m;
  const std::string obj = j.at("objective");
  if (obj == "logistic")
    m.objective = Objective::kLogistic;
  else if (obj == "squared_error")
    m.objective = Objective::kSquaredError;
  else
    throw FormatError("model: unknown objective " + obj);
  m.base_score = j.at("base_score").get<float>();
  m.learning_rate = j.at("learning_rate").get<float>();
  m.num_features = j.at("num_features").get<std::size_t>();
  for (const auto& jt : j.at("trees")) {
    Tree t;
    const auto& feat = jt.at("feature");
    t.nodes.resize(feat.size());
    for (std::size_t i = 0; i < feat.size(); ++i) {
      TreeNode& n = t.nodes[i];
      n.feature = feat[i].get<std::int32_t>();
      n.threshold = jt.at("threshold")[i].get<float>();
      n.default_left = jt.at("default_left")[i].get<bool>();
      n.left = jt.at("left")[i].get<std::int32_t>();
      n.right = jt.at("right")[i].get<std::int32_t>();
      n.value = jt.at("value")[i].get<float>();
      const auto size = static_cast<std::int32_t>(feat.size());
      if (!n.is_leaf() && (static_cast<std::size_t>(n.feature) >= m.num_features || n.left <= static_cast<std::int32_t>(i) ||
                           n.right <= static_cast<std::int32_t>(i) || n.left >= size || n.right >= size))
        throw FormatError("model: malformed node " + std::to_string(i));
    }
    if (t.nodes.empty()) throw FormatError("model: empty tree");
    m.trees.push_back(std::move(t));
  }
  return m;
}

inline void save_model(const TreeEnsemble& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << model_to_json(m).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline TreeEnsemble load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace eeknn
