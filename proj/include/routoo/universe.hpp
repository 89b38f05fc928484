#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "routoo/core.hpp"

namespace routoo {

struct UniverseSelection {
  /// Greedy insertion order (sorted id order for the exhaustive solver).
  std::vector<std::string> selected_model_ids;
  /// S(U) after each insertion.
  std::vector<double> coverage_trace;
  double final_coverage = 0.0;
};

/// Running per-query maxima over a growing model subset. Coverage sums are
/// kept as integers so marginal gains and ties are exact.
class CoverageState {
 public:
  explicit CoverageState(const ScoreMatrix& scores)
      : scores_(&scores), best_(scores.num_queries(), 0), in_set_(scores.num_models(), false) {}

  std::int64_t covered_sum() const { return sum_; }
  std::size_t size() const { return selected_.size(); }
  const std::vector<std::size_t>& selected() const { return selected_; }
  bool contains(std::size_t model) const { return in_set_[model]; }

  double coverage() const { return normalize(sum_); }

  /// Integer gain in the per-query max sum from adding `model`.
  std::int64_t gain_sum(std::size_t model) const {
    std::int64_t gain = 0;
    const auto row = scores_->row(model);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > best_[j]) gain += row[j] - best_[j];
    }
    return gain;
  }

  double gain(std::size_t model) const { return normalize(gain_sum(model)); }

  void add(std::size_t model) {
    if (in_set_[model]) {
      throw std::invalid_argument("model already selected: " + scores_->model_ids()[model]);
    }
    sum_ += gain_sum(model);
    const auto row = scores_->row(model);
    for (std::size_t j = 0; j < row.size(); ++j) best_[j] = std::max(best_[j], row[j]);
    in_set_[model] = true;
    selected_.push_back(model);
  }

  double normalize(std::int64_t sum) const {
    return static_cast<double>(sum) / static_cast<double>(scores_->num_queries());
  }

 private:
  const ScoreMatrix* scores_;
  std::vector<int> best_;
  std::vector<bool> in_set_;
  std::vector<std::size_t> selected_;
  std::int64_t sum_ = 0;
};

namespace detail {

inline void require_universe_input(const ScoreMatrix& scores) {
  if (scores.num_models() == 0) throw std::invalid_argument("model pool is empty");
  if (scores.num_queries() == 0) throw std::invalid_argument("universe query sample is empty");
}

inline CoverageState coverage_state_for(const ScoreMatrix& scores, std::span<const std::string> subset) {
  CoverageState state(scores);
  for (const auto& id : subset) {
    const std::size_t i = scores.require_model(id);
    if (state.contains(i)) throw std::invalid_argument("duplicate model in subset: " + id);
    state.add(i);
  }
  return state;
}

}  // namespace detail

/// S(U): average over the query sample of the best score any model in
/// `subset` achieves.
inline double coverage_score(std::span<const std::string> subset, const ScoreMatrix& scores) {
  if (subset.empty()) throw std::invalid_argument("coverage_score: subset is empty");
  detail::require_universe_input(scores);
  return detail::coverage_state_for(scores, subset).coverage();
}

/// S(U + {candidate}) - S(U).
inline double marginal_gain(const UniverseSelection& current, const std::string& candidate, const ScoreMatrix& scores) {
  detail::require_universe_input(scores);
  const CoverageState state = detail::coverage_state_for(scores, current.selected_model_ids);
  const std::size_t c = scores.require_model(candidate);
  if (state.contains(c)) throw std::invalid_argument("candidate already selected: " + candidate);
  return state.gain(c);
}

/// Greedy cardinality-constrained maximization of S(U). Ties on coverage go to
/// the lower cost (when `costs` is given, aligned with the score rows), then the
/// lexicographically smaller id. Stops at `max_models` or when no candidate
/// strictly improves coverage; the first insertion is always made.
inline UniverseSelection greedy_universe(const ScoreMatrix& pool, std::size_t max_models,
                                         std::span<const Decimal> costs = {}) {
  if (max_models < 1) throw std::invalid_argument("max_models must be at least 1");
  detail::require_universe_input(pool);
  if (!costs.empty() && costs.size() != pool.num_models()) {
    throw std::invalid_argument("costs must align with the model pool");
  }
  const auto& ids = pool.model_ids();
  auto better = [&](std::size_t a, std::int64_t gain_a, std::size_t b, std::int64_t gain_b) {
    if (gain_a != gain_b) return gain_a > gain_b;
    if (!costs.empty() && costs[a] != costs[b]) return costs[a] < costs[b];
    return ids[a] < ids[b];
  };

  CoverageState state(pool);
  UniverseSelection out;
  while (state.size() < max_models && state.size() < pool.num_models()) {
    std::optional<std::size_t> best;
    std::int64_t best_gain = 0;
    for (std::size_t i = 0; i < pool.num_models(); ++i) {
      if (state.contains(i)) continue;
      const std::int64_t g = state.gain_sum(i);
      if (!best || better(i, g, *best, best_gain)) {
        best = i;
        best_gain = g;
      }
    }
    if (state.size() > 0 && best_gain == 0) break;
    state.add(*best);
    out.selected_model_ids.push_back(ids[*best]);
    out.coverage_trace.push_back(state.coverage());
  }
  out.final_coverage = state.coverage();
  return out;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
    if (result > cap) return cap + 1;
  }
  return static_cast<std::uint64_t>(result);
}

inline constexpr std::uint64_t kExactUniverseLimit = 1'000'000;

/// Exhaustive argmax of S(U) over all subsets of size min(max_models, |pool|).
/// Ties go to the lexicographically smallest sorted id tuple.
inline UniverseSelection exact_universe(const ScoreMatrix& pool, std::size_t max_models) {
  if (max_models < 1) throw std::invalid_argument("max_models must be at least 1");
  detail::require_universe_input(pool);
  const std::size_t n = pool.num_models();
  const std::size_t k = std::min(max_models, n);
  if (binomial(n, k, kExactUniverseLimit) > kExactUniverseLimit) {
    throw std::length_error("exact_universe: C(" + std::to_string(n) + ", " + std::to_string(k) +
                            ") exceeds the enumeration limit");
  }

  std::vector<std::size_t> by_id(n);
  for (std::size_t i = 0; i < n; ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return pool.model_ids()[a] < pool.model_ids()[b]; });

  // Combinations of positions in `by_id`, lexicographic.
  std::vector<std::size_t> combo(k);
  for (std::size_t i = 0; i < k; ++i) combo[i] = i;
  std::vector<std::size_t> best_combo;
  std::int64_t best_sum = -1;
  std::vector<int> maxima(pool.num_queries());
  while (true) {
    std::fill(maxima.begin(), maxima.end(), 0);
    for (std::size_t pos : combo) {
      const auto row = pool.row(by_id[pos]);
      for (std::size_t j = 0; j < row.size(); ++j) maxima[j] = std::max(maxima[j], row[j]);
    }
    std::int64_t sum = 0;
    for (int v : maxima) sum += v;
    if (sum > best_sum) {
      best_sum = sum;
      best_combo = combo;
    }

    std::size_t i = k;
    while (i > 0 && combo[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t t = i; t < k; ++t) combo[t] = combo[t - 1] + 1;
  }

  UniverseSelection out;
  CoverageState state(pool);
  for (std::size_t pos : best_combo) {
    state.add(by_id[pos]);
    out.selected_model_ids.push_back(pool.model_ids()[by_id[pos]]);
    out.coverage_trace.push_back(state.coverage());
  }
  out.final_coverage = state.coverage();
  return out;
}

}  // namespace routoo
