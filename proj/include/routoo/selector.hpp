#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "routoo/core.hpp"

namespace routoo {

enum class OrderPolicy { input_order, global_ratio_desc };
enum class FallbackPolicy { cheapest_model, skip_and_flag };

inline std::string_view to_string(OrderPolicy p) {
  return p == OrderPolicy::input_order ? "input_order" : "global_ratio_desc";
}
inline std::string_view to_string(FallbackPolicy p) {
  return p == FallbackPolicy::cheapest_model ? "cheapest_model" : "skip_and_flag";
}
inline OrderPolicy parse_order_policy(std::string_view s) {
  if (s == "input_order" || s == "input") return OrderPolicy::input_order;
  if (s == "global_ratio_desc" || s == "global") return OrderPolicy::global_ratio_desc;
  throw std::invalid_argument("unknown order policy '" + std::string(s) + "'");
}
inline FallbackPolicy parse_fallback_policy(std::string_view s) {
  if (s == "cheapest_model" || s == "cheapest") return FallbackPolicy::cheapest_model;
  if (s == "skip_and_flag" || s == "skip") return FallbackPolicy::skip_and_flag;
  throw std::invalid_argument("unknown fallback policy '" + std::string(s) + "'");
}

struct SelectorConfig {
  /// Cost-emphasis exponent; larger values favour cheaper models.
  double alpha = 1.0;
  Decimal budget;
  OrderPolicy order_policy = OrderPolicy::input_order;
  FallbackPolicy fallback_policy = FallbackPolicy::skip_and_flag;
  /// Per-query predictor execution cost; reported, not charged to the budget.
  Decimal predictor_overhead;

  void check() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
    if (budget.is_negative()) throw std::invalid_argument("budget must be non-negative");
    if (predictor_overhead.is_negative()) throw std::invalid_argument("predictor overhead must be non-negative");
  }
};

/// Performance-to-cost ratio s / c^alpha.
inline double ratio(double predicted, Decimal cost, double alpha) {
  if (!cost.is_positive()) throw std::invalid_argument("ratio: cost must be positive, got " + cost.to_string());
  if (predicted == 0.0) return 0.0;
  return predicted / std::pow(cost.to_double(), alpha);
}

/// Candidate view of one query used by the per-query rule.
struct QueryCandidates {
  std::span<const std::string> model_ids;
  std::span<const double> predicted;
  std::span<const Decimal> costs;
};

/// Model indices ordered by ratio descending, then cost ascending, then id.
inline std::vector<std::size_t> rank_models(const QueryCandidates& q, double alpha) {
  std::vector<double> r(q.model_ids.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = ratio(q.predicted[i], q.costs[i], alpha);
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (r[a] != r[b]) return r[a] > r[b];
    if (q.costs[a] != q.costs[b]) return q.costs[a] < q.costs[b];
    return q.model_ids[a] < q.model_ids[b];
  });
  return order;
}

/// Highest-ratio model whose cost fits in `remaining`, if any.
inline std::optional<std::size_t> select_for_query(const QueryCandidates& q, Decimal remaining, double alpha) {
  for (std::size_t m : rank_models(q, alpha)) {
    if (q.costs[m] <= remaining) return m;
  }
  return std::nullopt;
}

/// Cheapest model, ties to the smaller id.
inline std::size_t cheapest_model(const QueryCandidates& q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.model_ids.size(); ++i) {
    if (q.costs[i] < q.costs[best] || (q.costs[i] == q.costs[best] && q.model_ids[i] < q.model_ids[best])) best = i;
  }
  return best;
}

namespace detail {

/// Column-major copies so that each query's candidates are contiguous.
struct QueryMajor {
  std::vector<std::string> model_ids;
  std::size_t num_queries = 0;
  std::vector<double> predicted;
  std::vector<Decimal> costs;

  QueryCandidates query(std::size_t j) const {
    const std::size_t m = model_ids.size();
    return {model_ids, std::span<const double>(predicted).subspan(j * m, m),
            std::span<const Decimal>(costs).subspan(j * m, m)};
  }
};

inline QueryMajor transpose_inputs(const Predictions& predictions, const CostTable& costs) {
  if (predictions.num_models() == 0) throw std::invalid_argument("no candidate models");
  if (costs.model_ids() != predictions.model_ids() || costs.query_ids() != predictions.query_ids()) {
    throw std::invalid_argument("missing prediction cell: predictions and cost table cover different (model, query) pairs");
  }
  QueryMajor out;
  out.model_ids = predictions.model_ids();
  out.num_queries = predictions.num_queries();
  const std::size_t m = out.model_ids.size();
  out.predicted.resize(m * out.num_queries);
  out.costs.resize(m * out.num_queries);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < out.num_queries; ++j) {
      const double s = predictions.at(i, j);
      if (!std::isfinite(s)) {
        throw std::invalid_argument("missing prediction cell (" + out.model_ids[i] + ", " + predictions.query_ids()[j] + ")");
      }
      const Decimal c = costs.at(i, j);
      if (!c.is_positive()) throw std::invalid_argument("non-positive cost for model " + out.model_ids[i]);
      out.predicted[j * m + i] = s;
      out.costs[j * m + i] = c;
    }
  }
  return out;
}

}  // namespace detail

/// Cost-aware greedy routing under a hard budget.
inline RoutingPlan assign(const Predictions& predictions, const CostTable& costs, const SelectorConfig& config) {
  config.check();
  const auto in = detail::transpose_inputs(predictions, costs);
  const std::size_t n = in.num_queries;
  const auto& qids = predictions.query_ids();

  std::vector<std::optional<std::size_t>> chosen(n);
  Decimal spent;
  auto remaining = [&] { return config.budget - spent; };

  if (config.order_policy == OrderPolicy::input_order) {
    for (std::size_t j = 0; j < n; ++j) {
      if (auto m = select_for_query(in.query(j), remaining(), config.alpha)) {
        chosen[j] = m;
        spent += in.query(j).costs[*m];
      }
    }
  } else {
    struct Pair {
      double r;
      Decimal cost;
      std::size_t model;
      std::size_t query;
    };
    std::vector<Pair> pairs;
    pairs.reserve(n * in.model_ids.size());
    for (std::size_t j = 0; j < n; ++j) {
      const auto q = in.query(j);
      for (std::size_t i = 0; i < q.model_ids.size(); ++i) {
        pairs.push_back({ratio(q.predicted[i], q.costs[i], config.alpha), q.costs[i], i, j});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
      if (a.r != b.r) return a.r > b.r;
      if (a.cost != b.cost) return a.cost < b.cost;
      if (a.model != b.model) return in.model_ids[a.model] < in.model_ids[b.model];
      return a.query < b.query;
    });
    for (const Pair& p : pairs) {
      if (chosen[p.query] || p.cost > remaining()) continue;
      chosen[p.query] = p.model;
      spent += p.cost;
    }
  }

  RoutingPlan plan;
  plan.budget = config.budget;
  plan.alpha = config.alpha;
  plan.assignments.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto q = in.query(j);
    Assignment a;
    a.query_id = qids[j];
    if (chosen[j]) {
      a.model_id = in.model_ids[*chosen[j]];
      a.predicted_score = q.predicted[*chosen[j]];
      a.cost = q.costs[*chosen[j]];
    } else {
      plan.overflow_queries.push_back(qids[j]);
      if (config.fallback_policy == FallbackPolicy::cheapest_model) {
        const std::size_t m = cheapest_model(q);
        a.model_id = in.model_ids[m];
        a.predicted_score = q.predicted[m];
        a.cost = q.costs[m];
        spent += a.cost;
      }
    }
    plan.assignments.push_back(std::move(a));
  }
  plan.total_cost = spent;
  plan.feasible = plan.overflow_queries.empty() && plan.total_cost <= plan.budget;
  plan.predictor_overhead = config.predictor_overhead * static_cast<std::int64_t>(n);
  return plan;
}

inline constexpr std::uint64_t kExactAssignLimit = 1'000'000;

/// Exhaustive maximization of the predicted score sum subject to the budget.
/// Ties: lower total cost, then the lexicographically smallest tuple of model
/// ids in query order.
inline RoutingPlan exact_assign(const Predictions& predictions, const CostTable& costs, Decimal budget) {
  if (budget.is_negative()) throw std::invalid_argument("budget must be non-negative");
  const auto in = detail::transpose_inputs(predictions, costs);
  const std::size_t m = in.model_ids.size();
  const std::size_t n = in.num_queries;
  {
    unsigned __int128 count = 1;
    for (std::size_t j = 0; j < n; ++j) {
      count *= m;
      if (count > kExactAssignLimit) {
        throw std::length_error("exact_assign: " + std::to_string(m) + "^" + std::to_string(n) +
                                " assignments exceed the enumeration limit");
      }
    }
  }

  std::vector<std::size_t> by_id(m);
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return in.model_ids[a] < in.model_ids[b]; });

  std::vector<std::size_t> digits(n, 0);  // positions in by_id, query 0 most significant
  std::optional<std::vector<std::size_t>> best;
  double best_score = 0.0;
  Decimal best_cost;
  while (true) {
    double score = 0.0;
    Decimal cost;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = by_id[digits[j]];
      score += in.predicted[j * m + i];
      cost += in.costs[j * m + i];
    }
    if (cost <= budget && (!best || score > best_score || (score == best_score && cost < best_cost))) {
      best = digits;
      best_score = score;
      best_cost = cost;
    }
    std::size_t j = n;
    while (j > 0 && digits[j - 1] == m - 1) digits[--j] = 0;
    if (j == 0) break;
    ++digits[j - 1];
  }

  RoutingPlan plan;
  plan.budget = budget;
  plan.alpha = 0.0;
  const auto& qids = predictions.query_ids();
  for (std::size_t j = 0; j < n; ++j) {
    const auto q = in.query(j);
    const std::size_t i = best ? by_id[(*best)[j]] : cheapest_model(q);
    plan.assignments.push_back({qids[j], in.model_ids[i], q.predicted[i], q.costs[i]});
    plan.total_cost += q.costs[i];
    if (!best) plan.overflow_queries.push_back(qids[j]);
  }
  plan.feasible = best.has_value();
  return plan;
}

inline double predicted_total(const RoutingPlan& plan) {
  double total = 0.0;
  for (const auto& a : plan.assignments) {
    if (a.routed()) total += a.predicted_score;
  }
  return total;
}

}  // namespace routoo
