#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "routoo/core.hpp"

namespace routoo {

struct PlanScore {
  /// Mean level divided by K-1, in [0, 1].
  double accuracy = 0.0;
  double raw_mean = 0.0;
};

/// Ground-truth score of a plan; unrouted queries count as 0.
inline PlanScore score_plan(const RoutingPlan& plan, const ScoreMatrix& truth) {
  if (plan.assignments.empty()) return {};
  std::int64_t sum = 0;
  for (const auto& a : plan.assignments) {
    if (!a.routed()) continue;
    auto m = truth.model_index(a.model_id);
    auto q = truth.query_index(a.query_id);
    if (!m || !q) {
      throw DatasetError(DatasetError::Kind::unknown_id, a.model_id + "/" + a.query_id,
                         "assignment not present in the truth matrix");
    }
    sum += truth.at(*m, *q);
  }
  PlanScore out;
  out.raw_mean = static_cast<double>(sum) / static_cast<double>(plan.assignments.size());
  out.accuracy = out.raw_mean / static_cast<double>(truth.k_levels() - 1);
  return out;
}

struct UsageMaps {
  std::map<std::string, double> by_model;
  std::map<std::string, double> by_size;
};

/// Usage fractions over routed queries, per model and per size bucket.
inline UsageMaps routing_distribution(const RoutingPlan& plan, std::span<const ModelSpec> models) {
  std::map<std::string, std::string, std::less<>> bucket_of;
  for (const auto& m : models) bucket_of.emplace(m.model_id, m.size_bucket);
  std::map<std::string, std::size_t> model_counts;
  std::size_t routed = 0;
  for (const auto& a : plan.assignments) {
    if (!a.routed()) continue;
    ++model_counts[a.model_id];
    ++routed;
  }
  UsageMaps out;
  if (routed == 0) return out;
  std::map<std::string, std::size_t> size_counts;
  for (const auto& [id, count] : model_counts) {
    auto it = bucket_of.find(id);
    if (it == bucket_of.end()) throw DatasetError(DatasetError::Kind::unknown_id, id, "plan routes to an unknown model");
    size_counts[it->second] += count;
    out.by_model[id] = static_cast<double>(count) / static_cast<double>(routed);
  }
  for (const auto& [bucket, count] : size_counts) {
    out.by_size[bucket] = static_cast<double>(count) / static_cast<double>(routed);
  }
  return out;
}

struct UpperBoundReport {
  double accuracy = 0.0;
  UsageMaps usage;
  Decimal total_cost;
  double mean_cost = 0.0;
  RoutingPlan plan;
};

/// Ideal-predictor routing: every query goes to its best-scoring model,
/// ties to the cheapest, then the smaller id.
inline UpperBoundReport upper_bound_report(const ScoreMatrix& truth, std::span<const ModelSpec> models) {
  std::vector<Decimal> costs(truth.num_models());
  {
    std::map<std::string, Decimal, std::less<>> cost_of;
    for (const auto& m : models) cost_of.emplace(m.model_id, m.avg_query_cost());
    for (std::size_t i = 0; i < truth.num_models(); ++i) {
      auto it = cost_of.find(truth.model_ids()[i]);
      if (it == cost_of.end()) {
        throw DatasetError(DatasetError::Kind::unknown_id, truth.model_ids()[i], "truth row has no model spec");
      }
      costs[i] = it->second;
    }
  }
  UpperBoundReport out;
  RoutingPlan& plan = out.plan;
  plan.budget = Decimal::max();
  for (std::size_t j = 0; j < truth.num_queries(); ++j) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < truth.num_models(); ++i) {
      if (!best) {
        best = i;
        continue;
      }
      const int s = truth.at(i, j), sb = truth.at(*best, j);
      if (s > sb || (s == sb && (costs[i] < costs[*best] ||
                                 (costs[i] == costs[*best] && truth.model_ids()[i] < truth.model_ids()[*best])))) {
        best = i;
      }
    }
    if (!best) break;
    plan.assignments.push_back(
        {truth.query_ids()[j], truth.model_ids()[*best], static_cast<double>(truth.at(*best, j)), costs[*best]});
    plan.total_cost += costs[*best];
  }
  out.accuracy = score_plan(plan, truth).accuracy;
  out.usage = routing_distribution(plan, models);
  out.total_cost = plan.total_cost;
  if (!plan.assignments.empty()) {
    out.mean_cost = plan.total_cost.to_double() / static_cast<double>(plan.assignments.size());
  }
  return out;
}

/// Accuracy per domain tag; domains without queries in the plan are omitted.
inline std::map<std::string, double> per_domain_report(const RoutingPlan& plan, const ScoreMatrix& truth,
                                                       std::span<const QueryRecord> queries) {
  std::map<std::string, const QueryRecord*, std::less<>> by_id;
  for (const auto& q : queries) by_id.emplace(q.query_id, &q);
  std::map<std::string, std::pair<std::int64_t, std::size_t>> acc;  // domain -> (sum, count)
  for (const auto& a : plan.assignments) {
    auto it = by_id.find(a.query_id);
    if (it == by_id.end()) throw DatasetError(DatasetError::Kind::unknown_id, a.query_id, "plan query has no record");
    auto& [sum, count] = acc[it->second->domain];
    ++count;
    if (!a.routed()) continue;
    auto m = truth.model_index(a.model_id);
    auto q = truth.query_index(a.query_id);
    if (!m || !q) {
      throw DatasetError(DatasetError::Kind::unknown_id, a.model_id + "/" + a.query_id,
                         "assignment not present in the truth matrix");
    }
    sum += truth.at(*m, *q);
  }
  std::map<std::string, double> out;
  const double denom = static_cast<double>(truth.k_levels() - 1);
  for (const auto& [domain, sc] : acc) {
    out[domain] = static_cast<double>(sc.first) / static_cast<double>(sc.second) / denom;
  }
  return out;
}

struct Report {
  double overall_accuracy = 0.0;
  Decimal total_cost;
  std::map<std::string, double> per_domain;
  UsageMaps usage;
  std::optional<double> upper_bound_accuracy;
};

inline Report build_report(const RoutingPlan& plan, const Dataset& data, bool with_upper_bound = false) {
  Report r;
  r.overall_accuracy = score_plan(plan, data.scores).accuracy;
  r.total_cost = plan.total_cost;
  r.per_domain = per_domain_report(plan, data.scores, data.queries);
  r.usage = routing_distribution(plan, data.models);
  if (with_upper_bound) r.upper_bound_accuracy = upper_bound_report(data.scores, data.models).accuracy;
  return r;
}

/// A routed plan to be listed next to the single-model baselines.
struct PlanEntry {
  std::string name;
  const RoutingPlan* plan = nullptr;
};

struct BaselineRow {
  std::string name;
  /// Percentage, 0-100.
  double accuracy_pct = 0.0;
  /// Currency per million tokens.
  Decimal cost_per_1m;
};

/// Tokens a plan spends: model average unless the query overrides it.
inline std::int64_t plan_tokens(const RoutingPlan& plan, std::span<const ModelSpec> models,
                                std::span<const QueryRecord> queries) {
  std::map<std::string, std::int64_t, std::less<>> tokens_of;
  for (const auto& m : models) tokens_of.emplace(m.model_id, m.avg_tokens_per_query);
  std::map<std::string, std::optional<std::int64_t>, std::less<>> override_of;
  for (const auto& q : queries) override_of.emplace(q.query_id, q.tokens);
  std::int64_t total = 0;
  for (const auto& a : plan.assignments) {
    if (!a.routed()) continue;
    auto o = override_of.find(a.query_id);
    if (o != override_of.end() && o->second) {
      total += *o->second;
      continue;
    }
    auto it = tokens_of.find(a.model_id);
    if (it == tokens_of.end()) throw DatasetError(DatasetError::Kind::unknown_id, a.model_id, "unknown model in plan");
    total += it->second;
  }
  return total;
}

/// One row per single-model policy (in model order) followed by one row per
/// routed plan.
inline std::vector<BaselineRow> baseline_rows(const Dataset& data, std::span<const PlanEntry> plans) {
  std::vector<BaselineRow> rows;
  const double denom = static_cast<double>(data.scores.k_levels() - 1);
  for (std::size_t i = 0; i < data.models.size(); ++i) {
    const auto r = data.scores.row(i);
    std::int64_t sum = 0;
    for (int s : r) sum += s;
    const double acc = r.empty() ? 0.0 : static_cast<double>(sum) / static_cast<double>(r.size()) / denom;
    const auto& m = data.models[i];
    rows.push_back({m.display_name.empty() ? m.model_id : m.display_name, acc * 100.0, m.price_per_1m_tokens});
  }
  for (const auto& entry : plans) {
    const double acc = score_plan(*entry.plan, data.scores).accuracy;
    const std::int64_t tokens = plan_tokens(*entry.plan, data.models, data.queries);
    const Decimal per_1m = tokens > 0 ? scale_ratio(entry.plan->total_cost, 1'000'000, tokens) : Decimal{};
    rows.push_back({entry.name, acc * 100.0, per_1m});
  }
  return rows;
}

inline std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

/// Costs are shown rounded to four decimals with trailing zeros trimmed.
inline std::string format_cost(Decimal cost) { return cost.rounded(4).to_string(); }

inline std::string format_baseline_table(std::span<const BaselineRow> rows) {
  const std::string h_model = "Model", h_acc = "Accuracy", h_cost = "Cost ($/1M tok)";
  std::size_t w_model = h_model.size(), w_acc = h_acc.size(), w_cost = h_cost.size();
  for (const auto& r : rows) {
    w_model = std::max(w_model, r.name.size());
    w_acc = std::max(w_acc, format_percent(r.accuracy_pct).size());
    w_cost = std::max(w_cost, format_cost(r.cost_per_1m).size());
  }
  auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  std::ostringstream out;
  out << pad_right(h_model, w_model) << "  " << pad_left(h_acc, w_acc) << "  " << pad_left(h_cost, w_cost) << '\n';
  out << std::string(w_model + w_acc + w_cost + 4, '-') << '\n';
  for (const auto& r : rows) {
    out << pad_right(r.name, w_model) << "  " << pad_left(format_percent(r.accuracy_pct), w_acc) << "  "
        << pad_left(format_cost(r.cost_per_1m), w_cost) << '\n';
  }
  return out.str();
}

}  // namespace routoo
