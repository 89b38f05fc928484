#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "routoo/core.hpp"

namespace routoo {

/// Keeps every query the reference model scored 0 on (input order), then
/// appends `n_easy` of the remaining queries drawn uniformly without
/// replacement (draw order).
inline std::vector<std::string> filter_hard_queries(std::span<const std::string> query_ids,
                                                    std::span<const int> reference_scores, std::size_t n_easy,
                                                    std::uint64_t seed) {
  if (query_ids.size() != reference_scores.size()) {
    throw std::invalid_argument("filter_hard_queries: one reference score per query required");
  }
  std::vector<std::string> out;
  std::vector<std::size_t> easy;
  for (std::size_t j = 0; j < query_ids.size(); ++j) {
    if (reference_scores[j] == 0) {
      out.push_back(query_ids[j]);
    } else {
      easy.push_back(j);
    }
  }
  if (n_easy > easy.size()) {
    throw std::invalid_argument("filter_hard_queries: n_easy=" + std::to_string(n_easy) + " exceeds the " +
                                std::to_string(easy.size()) + " non-retained queries");
  }
  std::mt19937_64 rng(seed);
  out.reserve(out.size() + n_easy);
  for (std::size_t i = 0; i < n_easy; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, easy.size() - 1);
    std::swap(easy[i], easy[pick(rng)]);
    out.push_back(query_ids[easy[i]]);
  }
  return out;
}

/// Uniform sample of `count` ids without replacement, kept in input order.
inline std::vector<std::string> sample_universe_queries(std::span<const std::string> query_ids, std::size_t count,
                                                        std::uint64_t seed) {
  if (count > query_ids.size()) {
    throw std::invalid_argument("sample_universe_queries: L=" + std::to_string(count) + " exceeds population " +
                                std::to_string(query_ids.size()));
  }
  std::vector<std::string> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(query_ids.begin(), query_ids.end(), std::back_inserter(out), count, rng);
  return out;
}

enum class SynthProfile {
  /// One shared hidden direction; models differ only by difficulty threshold.
  separable,
  /// Each model tilts the shared direction, so models are right on different queries.
  complementary,
};

struct PriceTier {
  const char* price_per_1m_tokens;
  const char* size_bucket;
  /// Higher skill lowers the model's correctness threshold.
  double skill;
};

inline constexpr PriceTier kDefaultTiers[] = {
    {"0.2", "7b", -0.2},
    {"0.26", "13b", 0.0},
    {"0.6", "34b", 0.2},
    {"0.9", "70b", 0.4},
};

struct SynthSpec {
  std::size_t models = 8;
  std::size_t queries = 1000;
  std::size_t dim = 16;
  int k_levels = 2;
  SynthProfile profile = SynthProfile::separable;
  /// Probability of replacing a level by a uniformly random one.
  double label_noise = 0.0;
  /// Trailing fraction of queries marked as the eval split.
  double eval_fraction = 0.2;
  std::size_t domains = 4;
  std::int64_t avg_tokens_per_query = 1000;
  /// Price tiers cycled across models; empty means kDefaultTiers.
  std::vector<PriceTier> tiers;
  std::uint64_t seed = 0;
};

inline SynthProfile parse_synth_profile(std::string_view s) {
  if (s == "separable") return SynthProfile::separable;
  if (s == "complementary") return SynthProfile::complementary;
  throw std::invalid_argument("unknown synth profile '" + std::string(s) + "'");
}

namespace detail {

inline std::string padded_id(char prefix, std::size_t i, std::size_t count) {
  int width = 1;
  for (std::size_t c = count > 0 ? count - 1 : 0; c >= 10; c /= 10) ++width;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

inline std::vector<double> unit_normal(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace detail

/// Synthetic bundle whose correctness levels follow a hidden linear signal in
/// the query embedding: level = number of cut points (0, 0.75, 1.5, ...)
/// below w_m . x - threshold_m. Deterministic per seed.
inline Dataset synth_generate(const SynthSpec& spec) {
  if (spec.models == 0 || spec.queries == 0 || spec.dim == 0) throw std::invalid_argument("synth sizes must be positive");
  if (spec.k_levels < 2) throw std::invalid_argument("synth k_levels must be at least 2");
  if (spec.domains == 0) throw std::invalid_argument("synth needs at least one domain");
  if (!(spec.label_noise >= 0.0 && spec.label_noise <= 1.0)) throw std::invalid_argument("label_noise must be in [0, 1]");
  if (!(spec.eval_fraction >= 0.0 && spec.eval_fraction <= 1.0)) {
    throw std::invalid_argument("eval_fraction must be in [0, 1]");
  }
  const std::span<const PriceTier> tiers =
      spec.tiers.empty() ? std::span<const PriceTier>(kDefaultTiers) : std::span<const PriceTier>(spec.tiers);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto shared = detail::unit_normal(rng, spec.dim);

  Dataset data;
  std::vector<std::vector<double>> directions;
  std::vector<double> thresholds;
  for (std::size_t i = 0; i < spec.models; ++i) {
    const PriceTier& tier = tiers[i % tiers.size()];
    ModelSpec m;
    m.model_id = detail::padded_id('m', i, spec.models);
    m.price_per_1m_tokens = Decimal::parse(tier.price_per_1m_tokens);
    m.avg_tokens_per_query = spec.avg_tokens_per_query;
    m.size_bucket = tier.size_bucket;
    m.display_name = std::string("synthetic-") + tier.size_bucket + "-" + std::to_string(i);
    data.models.push_back(std::move(m));

    std::vector<double> dir = shared;
    if (spec.profile == SynthProfile::complementary) {
      const auto tilt = detail::unit_normal(rng, spec.dim);
      double norm = 0.0;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        dir[d] += 1.2 * tilt[d];
        norm += dir[d] * dir[d];
      }
      norm = std::sqrt(norm);
      for (double& x : dir) x /= norm;
    }
    directions.push_back(std::move(dir));
    thresholds.push_back(-tier.skill + 0.15 * normal(rng));
  }

  const auto n_eval = static_cast<std::size_t>(std::llround(spec.eval_fraction * static_cast<double>(spec.queries)));
  for (std::size_t j = 0; j < spec.queries; ++j) {
    QueryRecord q;
    q.query_id = detail::padded_id('q', j, spec.queries);
    q.domain = "domain_" + std::to_string(j % spec.domains);
    q.split = j + n_eval >= spec.queries ? Split::eval : Split::train;
    q.embedding.resize(spec.dim);
    for (double& x : q.embedding) x = normal(rng);
    data.queries.push_back(std::move(q));
  }

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_level(0, spec.k_levels - 1);
  std::vector<int> scores(spec.models * spec.queries);
  for (std::size_t i = 0; i < spec.models; ++i) {
    for (std::size_t j = 0; j < spec.queries; ++j) {
      double margin = -thresholds[i];
      for (std::size_t d = 0; d < spec.dim; ++d) margin += directions[i][d] * data.queries[j].embedding[d];
      int level = 0;
      for (int c = 0; c < spec.k_levels - 1; ++c) {
        if (margin > 0.75 * c) level = c + 1;
      }
      if (spec.label_noise > 0.0 && coin(rng) < spec.label_noise) level = any_level(rng);
      scores[i * spec.queries + j] = level;
    }
  }

  std::vector<std::string> mids, qids;
  for (const auto& m : data.models) mids.push_back(m.model_id);
  for (const auto& q : data.queries) qids.push_back(q.query_id);
  return validate_dataset(std::move(data.models), std::move(data.queries),
                          ScoreMatrix(std::move(mids), std::move(qids), spec.k_levels, std::move(scores)));
}

}  // namespace routoo
