#pragma once

#include <algorithm>
#include <atomic>
#include <future>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "routoo/evalreport.hpp"
#include "routoo/selector.hpp"

namespace routoo {

struct SweepOptions {
  OrderPolicy order_policy = OrderPolicy::input_order;
  FallbackPolicy fallback_policy = FallbackPolicy::skip_and_flag;
  /// Run grid cells on separate threads; results are identical either way.
  bool parallel = true;
};

/// Routes under every (budget, alpha) pair and scores each plan against the
/// truth. Points come out in ascending budget order, alphas in input order.
inline std::vector<SweepPoint> sweep(const Predictions& predictions, const ScoreMatrix& truth, const CostTable& costs,
                                     std::span<const ModelSpec> models, std::vector<Decimal> budgets,
                                     std::span<const double> alphas, const SweepOptions& options = {}) {
  if (budgets.empty()) throw std::invalid_argument("sweep needs at least one budget");
  if (alphas.empty()) throw std::invalid_argument("sweep needs at least one alpha");
  std::stable_sort(budgets.begin(), budgets.end());

  auto run_cell = [&](Decimal budget, double alpha) {
    SelectorConfig cfg;
    cfg.alpha = alpha;
    cfg.budget = budget;
    cfg.order_policy = options.order_policy;
    cfg.fallback_policy = options.fallback_policy;
    const RoutingPlan plan = assign(predictions, costs, cfg);
    SweepPoint pt;
    pt.budget = budget;
    pt.alpha = alpha;
    pt.achieved_score = score_plan(plan, truth).accuracy;
    const double n = static_cast<double>(plan.assignments.size());
    pt.predicted_score = n > 0 ? predicted_total(plan) / n / static_cast<double>(truth.k_levels() - 1) : 0.0;
    pt.total_cost = plan.total_cost;
    pt.feasible = plan.feasible;
    const UsageMaps usage = routing_distribution(plan, models);
    pt.usage_by_model = usage.by_model;
    pt.usage_by_size = usage.by_size;
    return pt;
  };

  std::vector<SweepPoint> out;
  out.reserve(budgets.size() * alphas.size());
  if (!options.parallel) {
    for (Decimal b : budgets) {
      for (double a : alphas) out.push_back(run_cell(b, a));
    }
    return out;
  }
  const std::size_t cells = budgets.size() * alphas.size();
  out.resize(cells);
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, cells);
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> running;
  for (std::size_t w = 0; w < workers; ++w) {
    running.push_back(std::async(std::launch::async, [&] {
      for (std::size_t c = next++; c < cells; c = next++) {
        out[c] = run_cell(budgets[c / alphas.size()], alphas[c % alphas.size()]);
      }
    }));
  }
  for (auto& f : running) f.get();
  return out;
}

}  // namespace routoo
