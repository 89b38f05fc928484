#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "routoo/decimal.hpp"

namespace routoo {

class DatasetError : public std::runtime_error {
 public:
  enum class Kind {
    dimension_mismatch,
    duplicate_id,
    unknown_id,
    score_out_of_range,
    zero_cost,
    invalid_model,
    non_finite_embedding,
    invalid_levels,
  };

  DatasetError(Kind kind, std::string offending_id, const std::string& what)
      : std::runtime_error(what + " [" + offending_id + "]"), kind_(kind), offending_id_(std::move(offending_id)) {}

  Kind kind() const { return kind_; }
  const std::string& offending_id() const { return offending_id_; }

 private:
  Kind kind_;
  std::string offending_id_;
};

/// Per-query cost of a model quoted per million tokens. Exact whenever the
/// price carries at most six decimals.
inline Decimal per_query_cost(Decimal price_per_1m_tokens, std::int64_t tokens) {
  const __int128 product = static_cast<__int128>(price_per_1m_tokens.units()) * tokens;
  if (product % 1'000'000 != 0) {
    throw std::invalid_argument("per-query cost not representable: price " + price_per_1m_tokens.to_string() +
                                " x " + std::to_string(tokens) + " tokens");
  }
  const __int128 units = product / 1'000'000;
  if (units > std::numeric_limits<std::int64_t>::max()) throw std::overflow_error("per-query cost overflow");
  return Decimal::from_units(static_cast<std::int64_t>(units));
}

struct ModelSpec {
  std::string model_id;
  Decimal price_per_1m_tokens;
  std::int64_t avg_tokens_per_query = 1;
  std::string size_bucket;
  std::string display_name;

  /// c_i: average cost of one query.
  Decimal avg_query_cost() const { return per_query_cost(price_per_1m_tokens, avg_tokens_per_query); }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

enum class Split { train, eval };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "eval"; }

inline Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "eval") return Split::eval;
  throw std::invalid_argument("unknown split '" + std::string(text) + "'");
}

struct QueryRecord {
  std::string query_id;
  std::string domain;
  std::vector<double> embedding;
  Split split = Split::train;
  /// Overrides the model's avg_tokens_per_query for this query when set.
  std::optional<std::int64_t> tokens;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

/// Dense model x query grid, row-major by model.
template <class T>
class LabeledGrid {
 public:
  LabeledGrid() = default;

  LabeledGrid(std::vector<std::string> model_ids, std::vector<std::string> query_ids, std::vector<T> values)
      : model_ids_(std::move(model_ids)), query_ids_(std::move(query_ids)), values_(std::move(values)) {
    if (values_.size() != model_ids_.size() * query_ids_.size()) {
      throw DatasetError(DatasetError::Kind::dimension_mismatch, "grid",
                         "grid has " + std::to_string(values_.size()) + " cells, expected " +
                             std::to_string(model_ids_.size()) + "x" + std::to_string(query_ids_.size()));
    }
    for (std::size_t i = 0; i < model_ids_.size(); ++i) model_index_.emplace(model_ids_[i], i);
    for (std::size_t j = 0; j < query_ids_.size(); ++j) query_index_.emplace(query_ids_[j], j);
  }

  LabeledGrid(std::vector<std::string> model_ids, std::vector<std::string> query_ids, const T& fill)
      : LabeledGrid(model_ids, query_ids, std::vector<T>(model_ids.size() * query_ids.size(), fill)) {}

  std::size_t num_models() const { return model_ids_.size(); }
  std::size_t num_queries() const { return query_ids_.size(); }
  const std::vector<std::string>& model_ids() const { return model_ids_; }
  const std::vector<std::string>& query_ids() const { return query_ids_; }
  const std::vector<T>& values() const { return values_; }

  const T& at(std::size_t model, std::size_t query) const { return values_[model * query_ids_.size() + query]; }
  T& at(std::size_t model, std::size_t query) { return values_[model * query_ids_.size() + query]; }

  std::span<const T> row(std::size_t model) const {
    return std::span<const T>(values_).subspan(model * query_ids_.size(), query_ids_.size());
  }

  std::optional<std::size_t> model_index(std::string_view id) const {
    auto it = model_index_.find(id);
    if (it == model_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> query_index(std::string_view id) const {
    auto it = query_index_.find(id);
    if (it == query_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require_model(std::string_view id) const {
    if (auto i = model_index(id)) return *i;
    throw DatasetError(DatasetError::Kind::unknown_id, std::string(id), "unknown model id");
  }
  std::size_t require_query(std::string_view id) const {
    if (auto j = query_index(id)) return *j;
    throw DatasetError(DatasetError::Kind::unknown_id, std::string(id), "unknown query id");
  }

  bool has_unique_ids() const {
    return model_index_.size() == model_ids_.size() && query_index_.size() == query_ids_.size();
  }

  LabeledGrid select_models(std::span<const std::string> ids) const {
    std::vector<T> out;
    out.reserve(ids.size() * num_queries());
    for (const auto& id : ids) {
      auto r = row(require_model(id));
      out.insert(out.end(), r.begin(), r.end());
    }
    return LabeledGrid(std::vector<std::string>(ids.begin(), ids.end()), query_ids_, std::move(out));
  }

  LabeledGrid select_queries(std::span<const std::string> ids) const {
    std::vector<std::size_t> cols;
    cols.reserve(ids.size());
    for (const auto& id : ids) cols.push_back(require_query(id));
    std::vector<T> out;
    out.reserve(num_models() * cols.size());
    for (std::size_t i = 0; i < num_models(); ++i) {
      for (std::size_t j : cols) out.push_back(at(i, j));
    }
    return LabeledGrid(model_ids_, std::vector<std::string>(ids.begin(), ids.end()), std::move(out));
  }

  friend bool operator==(const LabeledGrid& a, const LabeledGrid& b) {
    return a.model_ids_ == b.model_ids_ && a.query_ids_ == b.query_ids_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<std::string> query_ids_;
  std::vector<T> values_;
  std::map<std::string, std::size_t, std::less<>> model_index_;
  std::map<std::string, std::size_t, std::less<>> query_index_;
};

/// Ground-truth correctness levels s in [0, K-1] for every (model, query).
class ScoreMatrix : public LabeledGrid<int> {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::vector<std::string> model_ids, std::vector<std::string> query_ids, int k_levels,
              std::vector<int> scores)
      : LabeledGrid<int>(std::move(model_ids), std::move(query_ids), std::move(scores)), k_levels_(k_levels) {}
  ScoreMatrix(LabeledGrid<int> grid, int k_levels) : LabeledGrid<int>(std::move(grid)), k_levels_(k_levels) {}

  int k_levels() const { return k_levels_; }

  ScoreMatrix select_models(std::span<const std::string> ids) const {
    return ScoreMatrix(LabeledGrid<int>::select_models(ids), k_levels_);
  }
  ScoreMatrix select_queries(std::span<const std::string> ids) const {
    return ScoreMatrix(LabeledGrid<int>::select_queries(ids), k_levels_);
  }

  friend bool operator==(const ScoreMatrix& a, const ScoreMatrix& b) {
    return a.k_levels_ == b.k_levels_ &&
           static_cast<const LabeledGrid<int>&>(a) == static_cast<const LabeledGrid<int>&>(b);
  }

 private:
  int k_levels_ = 2;
};

/// Predicted scores fed to the selector; integral under argmax prediction.
using Predictions = LabeledGrid<double>;

/// Per (model, query) cost used for ratio ranking and budget accounting.
using CostTable = LabeledGrid<Decimal>;

inline CostTable uniform_costs(std::span<const std::string> model_ids, std::span<const Decimal> model_costs,
                               std::span<const std::string> query_ids) {
  if (model_ids.size() != model_costs.size()) {
    throw DatasetError(DatasetError::Kind::dimension_mismatch, "costs", "one cost per model required");
  }
  std::vector<Decimal> values;
  values.reserve(model_ids.size() * query_ids.size());
  for (std::size_t i = 0; i < model_ids.size(); ++i) values.insert(values.end(), query_ids.size(), model_costs[i]);
  return CostTable(std::vector<std::string>(model_ids.begin(), model_ids.end()),
                   std::vector<std::string>(query_ids.begin(), query_ids.end()), std::move(values));
}

struct Assignment {
  std::string query_id;
  /// Empty when the query was left unrouted.
  std::string model_id;
  double predicted_score = 0.0;
  Decimal cost;

  bool routed() const { return !model_id.empty(); }
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct RoutingPlan {
  std::vector<Assignment> assignments;
  Decimal total_cost;
  Decimal budget;
  double alpha = 0.0;
  bool feasible = true;
  std::vector<std::string> overflow_queries;
  /// Predictor execution cost, reported separately and not charged to the budget.
  Decimal predictor_overhead;

  friend bool operator==(const RoutingPlan&, const RoutingPlan&) = default;
};

struct SweepPoint {
  Decimal budget;
  double alpha = 0.0;
  double achieved_score = 0.0;
  double predicted_score = 0.0;
  Decimal total_cost;
  bool feasible = true;
  std::map<std::string, double> usage_by_model;
  std::map<std::string, double> usage_by_size;
};

/// A consistency-checked bundle. Models and queries are ordered like the rows
/// and columns of the score matrix.
struct Dataset {
  std::vector<ModelSpec> models;
  std::vector<QueryRecord> queries;
  ScoreMatrix scores;
  std::size_t embedding_dim = 0;

  std::vector<Decimal> model_costs() const {
    std::vector<Decimal> out;
    out.reserve(models.size());
    for (const auto& m : models) out.push_back(m.avg_query_cost());
    return out;
  }

  const ModelSpec& model(std::string_view id) const { return models[scores.require_model(id)]; }
  const QueryRecord& query(std::string_view id) const { return queries[scores.require_query(id)]; }

  /// Cost table over `model_ids` x `query_ids`, honouring per-query token overrides.
  CostTable costs(std::span<const std::string> model_ids, std::span<const std::string> query_ids) const {
    std::vector<Decimal> values;
    values.reserve(model_ids.size() * query_ids.size());
    for (const auto& mid : model_ids) {
      const ModelSpec& m = model(mid);
      for (const auto& qid : query_ids) {
        const QueryRecord& q = query(qid);
        values.push_back(per_query_cost(m.price_per_1m_tokens, q.tokens.value_or(m.avg_tokens_per_query)));
      }
    }
    return CostTable(std::vector<std::string>(model_ids.begin(), model_ids.end()),
                     std::vector<std::string>(query_ids.begin(), query_ids.end()), std::move(values));
  }

  CostTable costs() const { return costs(scores.model_ids(), scores.query_ids()); }

  std::vector<std::string> query_ids(std::optional<Split> split = std::nullopt) const {
    std::vector<std::string> out;
    for (const auto& q : queries) {
      if (!split || q.split == *split) out.push_back(q.query_id);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

template <class Item, class IdOf>
std::map<std::string, const Item*, std::less<>> index_unique(const std::vector<Item>& items, IdOf id_of) {
  std::map<std::string, const Item*, std::less<>> out;
  for (const auto& item : items) {
    const std::string& id = id_of(item);
    if (!out.emplace(id, &item).second) {
      throw DatasetError(DatasetError::Kind::duplicate_id, id, "duplicate id");
    }
  }
  return out;
}

}  // namespace detail

/// Checks every cross-reference and invariant of a dataset bundle and returns
/// it with models and queries reordered to match the score matrix.
inline Dataset validate_dataset(std::vector<ModelSpec> models, std::vector<QueryRecord> queries, ScoreMatrix scores) {
  using Kind = DatasetError::Kind;
  if (scores.k_levels() < 2) {
    throw DatasetError(Kind::invalid_levels, std::to_string(scores.k_levels()), "k_levels must be at least 2");
  }
  if (models.size() != scores.num_models()) {
    throw DatasetError(Kind::dimension_mismatch, "models",
                       std::to_string(models.size()) + " models but score matrix has " +
                           std::to_string(scores.num_models()) + " rows");
  }
  if (queries.size() != scores.num_queries()) {
    throw DatasetError(Kind::dimension_mismatch, "queries",
                       std::to_string(queries.size()) + " queries but score matrix has " +
                           std::to_string(scores.num_queries()) + " columns");
  }
  {
    std::set<std::string_view> seen;
    for (const auto& id : scores.model_ids()) {
      if (!seen.insert(id).second) throw DatasetError(Kind::duplicate_id, id, "duplicate model id in score matrix");
    }
    seen.clear();
    for (const auto& id : scores.query_ids()) {
      if (!seen.insert(id).second) throw DatasetError(Kind::duplicate_id, id, "duplicate query id in score matrix");
    }
  }
  const auto model_by_id = detail::index_unique(models, [](const ModelSpec& m) -> const std::string& { return m.model_id; });
  const auto query_by_id = detail::index_unique(queries, [](const QueryRecord& q) -> const std::string& { return q.query_id; });

  std::vector<ModelSpec> ordered_models;
  ordered_models.reserve(models.size());
  for (const auto& id : scores.model_ids()) {
    auto it = model_by_id.find(id);
    if (it == model_by_id.end()) throw DatasetError(Kind::unknown_id, id, "score row has no model spec");
    const ModelSpec& m = *it->second;
    if (m.price_per_1m_tokens.is_negative()) throw DatasetError(Kind::invalid_model, id, "negative price");
    if (m.avg_tokens_per_query < 1) throw DatasetError(Kind::invalid_model, id, "avg_tokens_per_query must be >= 1");
    if (!m.avg_query_cost().is_positive()) throw DatasetError(Kind::zero_cost, id, "zero-cost model");
    ordered_models.push_back(m);
  }

  std::vector<QueryRecord> ordered_queries;
  ordered_queries.reserve(queries.size());
  std::optional<std::size_t> dim;
  for (const auto& id : scores.query_ids()) {
    auto it = query_by_id.find(id);
    if (it == query_by_id.end()) throw DatasetError(Kind::unknown_id, id, "score column has no query record");
    const QueryRecord& q = *it->second;
    if (!dim) dim = q.embedding.size();
    if (q.embedding.size() != *dim) {
      throw DatasetError(Kind::dimension_mismatch, id,
                         "embedding has dimension " + std::to_string(q.embedding.size()) + ", expected " +
                             std::to_string(*dim));
    }
    for (double v : q.embedding) {
      if (!std::isfinite(v)) throw DatasetError(Kind::non_finite_embedding, id, "non-finite embedding value");
    }
    if (q.tokens && *q.tokens < 1) throw DatasetError(Kind::invalid_model, id, "per-query token count must be >= 1");
    ordered_queries.push_back(q);
  }

  const int k = scores.k_levels();
  for (std::size_t i = 0; i < scores.num_models(); ++i) {
    for (std::size_t j = 0; j < scores.num_queries(); ++j) {
      const int s = scores.at(i, j);
      if (s < 0 || s > k - 1) {
        throw DatasetError(Kind::score_out_of_range, scores.model_ids()[i] + "/" + scores.query_ids()[j],
                           "score out of range: " + std::to_string(s) + " not in [0, " + std::to_string(k - 1) + "]");
      }
    }
  }

  Dataset out;
  out.models = std::move(ordered_models);
  out.queries = std::move(ordered_queries);
  out.scores = std::move(scores);
  out.embedding_dim = dim.value_or(0);
  return out;
}

inline Dataset validate_dataset(const Dataset& bundle) {
  return validate_dataset(bundle.models, bundle.queries, bundle.scores);
}

}  // namespace routoo
