#pragma once

#include <filesystem>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "routoo/dataset_io.hpp"
#include "routoo/evalreport.hpp"
#include "routoo/predictor.hpp"
#include "routoo/universe.hpp"

namespace routoo {

using nlohmann::json;

// ---------------------------------------------------------------- predictor

/// nlohmann::json prints doubles in shortest round-trip form, so the
/// document reproduces the parameters bit for bit.
inline json predictor_to_json(const PredictorParams& p) {
  const std::size_t h = p.embedding_dim;
  const std::size_t k = static_cast<std::size_t>(p.k_levels);
  json embeddings = json::array();
  for (std::size_t m = 0; m < p.num_models(); ++m) {
    const auto row = p.embedding(m);
    embeddings.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json projection = json::array();
  for (std::size_t d = 0; d < h; ++d) {
    projection.push_back(std::vector<double>(p.projection.begin() + static_cast<std::ptrdiff_t>(d * k),
                                             p.projection.begin() + static_cast<std::ptrdiff_t>((d + 1) * k)));
  }
  return {
      {"format_version", kFormatVersion},
      {"kind", "predictor"},
      {"embedding_dim", h},
      {"k_levels", p.k_levels},
      {"use_bias", p.use_bias},
      {"model_ids", p.model_ids},
      {"model_embeddings", embeddings},
      {"projection", projection},
      {"bias", p.bias},
  };
}

inline PredictorParams predictor_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion || j.value("kind", std::string()) != "predictor") {
      throw std::invalid_argument("not a supported predictor document");
    }
    PredictorParams p;
    p.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    p.k_levels = j.at("k_levels").get<int>();
    p.use_bias = j.at("use_bias").get<bool>();
    p.model_ids = j.at("model_ids").get<std::vector<std::string>>();
    for (const auto& row : j.at("model_embeddings")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() != p.embedding_dim) throw std::invalid_argument("model embedding row has the wrong length");
      p.model_embeddings.insert(p.model_embeddings.end(), v.begin(), v.end());
    }
    for (const auto& row : j.at("projection")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(p.k_levels)) throw std::invalid_argument("projection row is not length K");
      p.projection.insert(p.projection.end(), v.begin(), v.end());
    }
    p.bias = j.at("bias").get<std::vector<double>>();
    p.check();
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed predictor document: ") + e.what());
  }
}

inline void save_predictor(const std::filesystem::path& path, const PredictorParams& p) {
  auto out = io::open_out(path);
  out << predictor_to_json(p).dump() << '\n';
}

inline PredictorParams load_predictor(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, 0, e.what());
  }
  return predictor_from_json(j);
}

// ---------------------------------------------------------------- universe

inline json universe_to_json(const UniverseSelection& u, const std::string& method) {
  json order = json::array();
  for (std::size_t i = 0; i < u.selected_model_ids.size(); ++i) {
    order.push_back({{"position", i + 1}, {"model_id", u.selected_model_ids[i]}, {"coverage", u.coverage_trace[i]}});
  }
  return {
      {"format_version", kFormatVersion},
      {"kind", "universe"},
      {"method", method},
      {"selected_model_ids", u.selected_model_ids},
      {"insertion_order", order},
      {"coverage_trace", u.coverage_trace},
      {"final_coverage", u.final_coverage},
  };
}

inline UniverseSelection universe_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion || j.value("kind", std::string()) != "universe") {
      throw std::invalid_argument("not a supported universe document");
    }
    UniverseSelection u;
    u.selected_model_ids = j.at("selected_model_ids").get<std::vector<std::string>>();
    u.coverage_trace = j.at("coverage_trace").get<std::vector<double>>();
    u.final_coverage = j.at("final_coverage").get<double>();
    return u;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed universe document: ") + e.what());
  }
}

inline UniverseSelection load_universe(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, 0, e.what());
  }
  return universe_from_json(j);
}

// ---------------------------------------------------------------- reports

inline json usage_to_json(const UsageMaps& u) { return {{"by_model", u.by_model}, {"by_size", u.by_size}}; }

inline json sweep_to_json(std::span<const SweepPoint> points) {
  json rows = json::array();
  for (const auto& p : points) {
    rows.push_back({
        {"budget", p.budget.to_string()},
        {"alpha", p.alpha},
        {"accuracy", p.achieved_score},
        {"predicted_score", p.predicted_score},
        {"cost", p.total_cost.to_string()},
        {"feasible", p.feasible},
        {"usage_by_model", p.usage_by_model},
        {"usage_by_size", p.usage_by_size},
    });
  }
  return {{"format_version", kFormatVersion}, {"kind", "sweep"}, {"points", rows}};
}

/// Plot-ready table, one row per sweep point.
inline void write_sweep_table(std::ostream& out, std::span<const SweepPoint> points) {
  io::write_version(out);
  out << "budget\talpha\taccuracy\tcost\tpredicted_score\tfeasible\n";
  for (const auto& p : points) {
    out << p.budget.to_string() << '\t' << io::format_real(p.alpha) << '\t' << io::format_real(p.achieved_score) << '\t'
        << p.total_cost.to_string() << '\t' << io::format_real(p.predicted_score) << '\t' << (p.feasible ? 1 : 0) << '\n';
  }
}

inline json baseline_to_json(std::span<const BaselineRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"model", r.name},
                   {"accuracy", format_percent(r.accuracy_pct)},
                   {"cost_per_1m_tokens", format_cost(r.cost_per_1m)}});
  }
  return {{"format_version", kFormatVersion}, {"kind", "baseline_table"}, {"rows", out}};
}

inline json report_to_json(const Report& r) {
  json j = {
      {"format_version", kFormatVersion},
      {"kind", "report"},
      {"overall_accuracy", r.overall_accuracy},
      {"total_cost", r.total_cost.to_string()},
      {"per_domain", r.per_domain},
      {"usage", usage_to_json(r.usage)},
  };
  if (r.upper_bound_accuracy) j["upper_bound_accuracy"] = *r.upper_bound_accuracy;
  return j;
}

inline json upper_bound_to_json(const UpperBoundReport& u) {
  return {
      {"format_version", kFormatVersion},
      {"kind", "upper_bound"},
      {"accuracy", u.accuracy},
      {"total_cost", u.total_cost.to_string()},
      {"mean_cost", u.mean_cost},
      {"usage", usage_to_json(u.usage)},
  };
}

}  // namespace routoo
