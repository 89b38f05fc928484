#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "routoo/core.hpp"

namespace routoo {

/// Trainable part of the correctness predictor: one embedding per model and
/// a linear head applied to (query embedding - model embedding).
struct PredictorParams {
  std::vector<std::string> model_ids;
  std::size_t embedding_dim = 0;
  int k_levels = 2;
  std::vector<double> model_embeddings;  // model-major, |models| x h
  std::vector<double> projection;        // row-major, h x K
  std::vector<double> bias;              // K
  bool use_bias = true;

  std::size_t num_models() const { return model_ids.size(); }

  std::span<const double> embedding(std::size_t model) const {
    return std::span<const double>(model_embeddings).subspan(model * embedding_dim, embedding_dim);
  }

  std::optional<std::size_t> model_index(std::string_view id) const {
    auto it = std::find(model_ids.begin(), model_ids.end(), id);
    if (it == model_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - model_ids.begin());
  }

  std::size_t require_model(std::string_view id) const {
    if (auto i = model_index(id)) return *i;
    throw std::invalid_argument("predictor has no embedding for model '" + std::string(id) + "'");
  }

  void check() const {
    const auto k = static_cast<std::size_t>(k_levels);
    if (k_levels < 2) throw std::invalid_argument("predictor k_levels must be at least 2");
    if (embedding_dim == 0) throw std::invalid_argument("predictor embedding_dim must be positive");
    if (model_embeddings.size() != model_ids.size() * embedding_dim) {
      throw std::invalid_argument("model embedding table does not match |models| x h");
    }
    if (projection.size() != embedding_dim * k) throw std::invalid_argument("projection is not h x K");
    if (bias.size() != k) throw std::invalid_argument("bias is not length K");
    for (const auto* table : {&model_embeddings, &projection, &bias}) {
      for (double v : *table) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite predictor parameter");
      }
    }
  }

  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

/// Model embeddings and projection drawn from a seeded standard normal scaled
/// by 1/sqrt(h); bias starts at zero.
inline PredictorParams init_predictor(std::vector<std::string> model_ids, std::size_t embedding_dim, int k_levels,
                                      std::uint64_t seed, bool use_bias = true) {
  PredictorParams p;
  p.model_ids = std::move(model_ids);
  p.embedding_dim = embedding_dim;
  p.k_levels = k_levels;
  p.use_bias = use_bias;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  p.model_embeddings.resize(p.model_ids.size() * embedding_dim);
  for (double& v : p.model_embeddings) v = normal(rng) * scale;
  p.projection.resize(embedding_dim * static_cast<std::size_t>(k_levels));
  for (double& v : p.projection) v = normal(rng) * scale;
  p.bias.assign(static_cast<std::size_t>(k_levels), 0.0);
  p.check();
  return p;
}

struct Prediction {
  int level = 0;
  std::vector<double> probabilities;

  double expected_level() const {
    double e = 0.0;
    for (std::size_t k = 0; k < probabilities.size(); ++k) e += static_cast<double>(k) * probabilities[k];
    return e;
  }
};

namespace detail {

inline void logits_into(const PredictorParams& p, std::size_t model, std::span<const double> query,
                        std::span<double> diff, std::span<double> logits) {
  const std::size_t h = p.embedding_dim;
  const std::size_t k = static_cast<std::size_t>(p.k_levels);
  const auto emb = p.embedding(model);
  for (std::size_t d = 0; d < h; ++d) diff[d] = query[d] - emb[d];
  for (std::size_t c = 0; c < k; ++c) logits[c] = p.use_bias ? p.bias[c] : 0.0;
  for (std::size_t d = 0; d < h; ++d) {
    const double x = diff[d];
    const double* w = &p.projection[d * k];
    for (std::size_t c = 0; c < k; ++c) logits[c] += w[c] * x;
  }
}

/// Softmax in place; returns log-sum-exp of the input logits.
inline double softmax_inplace(std::span<double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : v) x /= total;
  return top + std::log(total);
}

/// First maximal index: ties resolve to the lower level.
inline int argmax_low(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c) {
    if (v[c] > v[best]) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace detail

inline Prediction predict_index(const PredictorParams& params, std::size_t model, std::span<const double> query) {
  if (query.size() != params.embedding_dim) {
    throw std::invalid_argument("query embedding has dimension " + std::to_string(query.size()) + ", predictor expects " +
                                std::to_string(params.embedding_dim));
  }
  if (model >= params.num_models()) throw std::out_of_range("predictor model index out of range");
  std::vector<double> diff(params.embedding_dim);
  Prediction out;
  out.probabilities.resize(static_cast<std::size_t>(params.k_levels));
  detail::logits_into(params, model, query, diff, out.probabilities);
  // Argmax is taken on the logits, before softmax.
  out.level = detail::argmax_low(out.probabilities);
  detail::softmax_inplace(out.probabilities);
  return out;
}

inline Prediction predict(const PredictorParams& params, std::string_view model_id, std::span<const double> query) {
  return predict_index(params, params.require_model(model_id), query);
}

enum class PredictionMode { argmax, expected };

/// Predicted scores for every (model, query) pair.
inline Predictions predict_matrix(const PredictorParams& params, std::span<const std::string> model_ids,
                                  std::span<const QueryRecord> queries, PredictionMode mode = PredictionMode::argmax) {
  std::vector<std::size_t> rows;
  rows.reserve(model_ids.size());
  for (const auto& id : model_ids) rows.push_back(params.require_model(id));
  std::vector<std::string> qids;
  qids.reserve(queries.size());
  for (const auto& q : queries) qids.push_back(q.query_id);
  std::vector<double> values;
  values.reserve(rows.size() * queries.size());
  for (std::size_t m : rows) {
    for (const auto& q : queries) {
      const Prediction p = predict_index(params, m, q.embedding);
      values.push_back(mode == PredictionMode::argmax ? static_cast<double>(p.level) : p.expected_level());
    }
  }
  return Predictions(std::vector<std::string>(model_ids.begin(), model_ids.end()), std::move(qids), std::move(values));
}

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double l2_penalty = 0.0;
  /// Optional per-class loss weight; empty means unweighted.
  std::vector<double> class_weights;

  void check(int k_levels) const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning_rate must be finite and non-negative");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!(l2_penalty >= 0.0)) throw std::invalid_argument("l2_penalty must be non-negative");
    if (!class_weights.empty()) {
      if (class_weights.size() != static_cast<std::size_t>(k_levels)) {
        throw std::invalid_argument("class_weights must have one entry per level");
      }
      for (double w : class_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("class weights must be finite and >= 0");
      }
    }
  }
};

/// One (model, query, observed level) row. The embedding is a view; the
/// caller keeps the storage alive for the duration of the call.
struct LabeledExample {
  std::string model_id;
  std::span<const double> query_embedding;
  int label = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, std::size_t batch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

/// Gradient with the same layout as PredictorParams.
struct ParamGradient {
  std::vector<double> model_embeddings;
  std::vector<double> projection;
  std::vector<double> bias;
};

struct Objective {
  double loss = 0.0;
  ParamGradient gradient;
};

namespace detail {

struct ResolvedExample {
  std::size_t model;
  std::span<const double> embedding;
  int label;
};

inline std::vector<ResolvedExample> resolve(const PredictorParams& params, std::span<const LabeledExample> examples) {
  std::vector<ResolvedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.label < 0 || ex.label >= params.k_levels) {
      throw std::invalid_argument("label " + std::to_string(ex.label) + " out of range for K=" +
                                  std::to_string(params.k_levels) + " (model '" + ex.model_id + "')");
    }
    if (ex.query_embedding.size() != params.embedding_dim) {
      throw std::invalid_argument("query embedding dimension mismatch for model '" + ex.model_id + "'");
    }
    out.push_back({params.require_model(ex.model_id), ex.query_embedding, ex.label});
  }
  return out;
}

/// Mean (weighted) cross-entropy plus L2 on embeddings and projection over
/// `batch`, with its gradient when `grad` is non-null.
template <class Indices>
double objective_over(const PredictorParams& p, const std::vector<ResolvedExample>& rows, const Indices& batch,
                      const TrainConfig& cfg, ParamGradient* grad) {
  const std::size_t h = p.embedding_dim;
  const std::size_t k = static_cast<std::size_t>(p.k_levels);
  if (grad) {
    grad->model_embeddings.assign(p.model_embeddings.size(), 0.0);
    grad->projection.assign(p.projection.size(), 0.0);
    grad->bias.assign(p.bias.size(), 0.0);
  }
  std::vector<double> diff(h), probs(k), dz(k);
  const double inv_n = 1.0 / static_cast<double>(std::size(batch));
  double loss = 0.0;
  for (std::size_t idx : batch) {
    const ResolvedExample& ex = rows[idx];
    logits_into(p, ex.model, ex.embedding, diff, probs);
    const double z_label = probs[static_cast<std::size_t>(ex.label)];
    const double lse = softmax_inplace(probs);
    const double weight = cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(ex.label)];
    loss += weight * (lse - z_label) * inv_n;
    if (!grad) continue;
    for (std::size_t c = 0; c < k; ++c) dz[c] = weight * inv_n * (probs[c] - (c == static_cast<std::size_t>(ex.label) ? 1.0 : 0.0));
    if (p.use_bias) {
      for (std::size_t c = 0; c < k; ++c) grad->bias[c] += dz[c];
    }
    double* g_emb = &grad->model_embeddings[ex.model * h];
    for (std::size_t d = 0; d < h; ++d) {
      const double* w = &p.projection[d * k];
      double* g_w = &grad->projection[d * k];
      double back = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        g_w[c] += diff[d] * dz[c];
        back += w[c] * dz[c];
      }
      g_emb[d] -= back;
    }
  }
  if (cfg.l2_penalty > 0.0) {
    double sq = 0.0;
    for (double v : p.projection) sq += v * v;
    for (double v : p.model_embeddings) sq += v * v;
    loss += 0.5 * cfg.l2_penalty * sq;
    if (grad) {
      for (std::size_t i = 0; i < p.projection.size(); ++i) grad->projection[i] += cfg.l2_penalty * p.projection[i];
      for (std::size_t i = 0; i < p.model_embeddings.size(); ++i) {
        grad->model_embeddings[i] += cfg.l2_penalty * p.model_embeddings[i];
      }
    }
  }
  return loss;
}

struct AllRows {
  std::size_t n;
  struct iterator {
    std::size_t i;
    std::size_t operator*() const { return i; }
    iterator& operator++() {
      ++i;
      return *this;
    }
    bool operator!=(const iterator& o) const { return i != o.i; }
  };
  iterator begin() const { return {0}; }
  iterator end() const { return {n}; }
  std::size_t size() const { return n; }
};

}  // namespace detail

/// Training objective and its analytic gradient over `examples`.
inline Objective objective(const PredictorParams& params, std::span<const LabeledExample> examples,
                           const TrainConfig& config) {
  if (examples.empty()) throw std::invalid_argument("objective over an empty dataset");
  params.check();
  const auto rows = detail::resolve(params, examples);
  Objective out;
  out.loss = detail::objective_over(params, rows, detail::AllRows{rows.size()}, config, &out.gradient);
  return out;
}

struct TrainResult {
  PredictorParams params;
  /// Full-dataset objective before training, then after each epoch.
  std::vector<double> loss_trace;
};

/// Minibatch gradient descent on the mean cross-entropy over all rows.
/// Deterministic for fixed (examples, config, init).
inline TrainResult train(std::span<const LabeledExample> examples, const TrainConfig& config, PredictorParams init) {
  if (examples.empty()) throw std::invalid_argument("training dataset is empty");
  init.check();
  config.check(init.k_levels);
  const auto rows = detail::resolve(init, examples);

  TrainResult result;
  result.params = std::move(init);
  PredictorParams& p = result.params;
  result.loss_trace.push_back(detail::objective_over(p, rows, detail::AllRows{rows.size()}, config, nullptr));

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  ParamGradient grad;
  std::vector<std::size_t> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
      const double loss = detail::objective_over(p, rows, batch, config, &grad);
      if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", epoch, batch_index);
      const double lr = config.learning_rate;
      for (std::size_t i = 0; i < p.model_embeddings.size(); ++i) p.model_embeddings[i] -= lr * grad.model_embeddings[i];
      for (std::size_t i = 0; i < p.projection.size(); ++i) p.projection[i] -= lr * grad.projection[i];
      if (p.use_bias) {
        for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * grad.bias[i];
      }
    }
    const double epoch_loss = detail::objective_over(p, rows, detail::AllRows{rows.size()}, config, nullptr);
    if (!std::isfinite(epoch_loss)) throw TrainingError("non-finite training loss", epoch, batch_index);
    result.loss_trace.push_back(epoch_loss);
  }
  return result;
}

struct PredictorEvaluation {
  double accuracy = 0.0;
  double mean_ce = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

inline PredictorEvaluation evaluate_predictor(const PredictorParams& params, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw std::invalid_argument("evaluation dataset is empty");
  const auto rows = detail::resolve(params, examples);
  const std::size_t k = static_cast<std::size_t>(params.k_levels);
  PredictorEvaluation out;
  out.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::vector<double> diff(params.embedding_dim), probs(k);
  std::size_t correct = 0;
  double ce = 0.0;
  for (const auto& ex : rows) {
    detail::logits_into(params, ex.model, ex.embedding, diff, probs);
    const int level = detail::argmax_low(probs);
    const double z_label = probs[static_cast<std::size_t>(ex.label)];
    ce += detail::softmax_inplace(probs) - z_label;
    out.confusion[static_cast<std::size_t>(ex.label)][static_cast<std::size_t>(level)] += 1;
    if (level == ex.label) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  out.mean_ce = ce / static_cast<double>(rows.size());
  return out;
}

/// Training rows for every (model, query) pair in `query_ids`, labelled from
/// the truth matrix.
inline std::vector<LabeledExample> examples_from(const Dataset& data, std::span<const std::string> model_ids,
                                                 std::span<const std::string> query_ids) {
  std::vector<LabeledExample> out;
  out.reserve(model_ids.size() * query_ids.size());
  for (const auto& mid : model_ids) {
    const std::size_t m = data.scores.require_model(mid);
    for (const auto& qid : query_ids) {
      const std::size_t q = data.scores.require_query(qid);
      out.push_back({mid, data.queries[q].embedding, data.scores.at(m, q)});
    }
  }
  return out;
}

/// Stand-in for a perfect predictor: returns the ground-truth level.
class OraclePredictor {
 public:
  explicit OraclePredictor(ScoreMatrix truth) : truth_(std::move(truth)) {}

  int predict(std::string_view model_id, std::string_view query_id) const {
    auto m = truth_.model_index(model_id);
    auto q = truth_.query_index(query_id);
    if (!m || !q) {
      throw std::invalid_argument("oracle has no score for (" + std::string(model_id) + ", " + std::string(query_id) + ")");
    }
    return truth_.at(*m, *q);
  }

  Predictions predictions(std::span<const std::string> model_ids, std::span<const std::string> query_ids) const {
    std::vector<double> values;
    values.reserve(model_ids.size() * query_ids.size());
    for (const auto& m : model_ids) {
      for (const auto& q : query_ids) values.push_back(static_cast<double>(predict(m, q)));
    }
    return Predictions(std::vector<std::string>(model_ids.begin(), model_ids.end()),
                       std::vector<std::string>(query_ids.begin(), query_ids.end()), std::move(values));
  }

  Predictions predictions() const { return predictions(truth_.model_ids(), truth_.query_ids()); }

  const ScoreMatrix& truth() const { return truth_; }

 private:
  ScoreMatrix truth_;
};

inline OraclePredictor oracle_predictor(ScoreMatrix scores) { return OraclePredictor(std::move(scores)); }

}  // namespace routoo
