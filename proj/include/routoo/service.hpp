#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "routoo/core.hpp"
#include "routoo/predictor.hpp"
#include "routoo/selector.hpp"

namespace routoo {

class ServiceError : public std::runtime_error {
 public:
  enum class Code { not_ready, unknown_session, duplicate_session, malformed_request, dimension_mismatch, budget_exhausted };

  ServiceError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

inline std::string_view to_string(ServiceError::Code c) {
  switch (c) {
    case ServiceError::Code::not_ready: return "not_ready";
    case ServiceError::Code::unknown_session: return "unknown_session";
    case ServiceError::Code::duplicate_session: return "duplicate_session";
    case ServiceError::Code::malformed_request: return "malformed_request";
    case ServiceError::Code::dimension_mismatch: return "dimension_mismatch";
    case ServiceError::Code::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

struct SessionPolicy {
  double alpha = 1.0;
  /// skip_and_flag makes the session strict: spent never exceeds budget.
  FallbackPolicy fallback = FallbackPolicy::skip_and_flag;
};

struct SessionLedger {
  std::string session_id;
  Decimal budget;
  Decimal spent;
  std::uint64_t assignments_count = 0;
  SessionPolicy policy;

  bool strict() const { return policy.fallback == FallbackPolicy::skip_and_flag; }
  Decimal remaining() const { return budget - spent; }
};

struct RouteDecision {
  std::string model_id;
  double predicted_score = 0.0;
  double ratio = 0.0;
  Decimal cost;
  Decimal remaining_budget;
  /// Nothing was affordable and the cheapest model was charged anyway.
  bool fallback = false;
};

/// 64-bit FNV-1a over the raw bytes of an embedding, as 16 hex digits.
inline std::string embedding_hash(std::span<const double> embedding) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(embedding.data());
  for (std::size_t i = 0; i < embedding.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Append-only, newline-delimited JSON record of session creations and debits.
class DebitLog {
 public:
  explicit DebitLog(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  std::vector<nlohmann::json> read_all() const {
    std::vector<nlohmann::json> out;
    std::ifstream in(path_);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        out.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        // A torn final line from a crash mid-write is dropped; anything else is corruption.
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw std::runtime_error(path_.string() + ":" + std::to_string(line_no) + ": corrupt debit log: " + e.what());
      }
    }
    return out;
  }

  void append(const nlohmann::json& record) {
    std::lock_guard lock(mu_);
    if (!out_.is_open()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      out_.open(path_, std::ios::app);
      if (!out_) throw std::runtime_error("cannot open debit log " + path_.string());
    }
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("debit log write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

/// Online router: predictor + universe shared read-only across requests,
/// one serialized ledger per session.
class RouterService {
 public:
  /// Replays `debit_log` (if given and present) before accepting requests.
  explicit RouterService(std::optional<std::filesystem::path> debit_log = std::nullopt) {
    if (debit_log) {
      log_ = std::make_unique<DebitLog>(*debit_log);
      replay();
    }
  }

  void load(PredictorParams params, std::vector<ModelSpec> universe) {
    params.check();
    if (universe.empty()) throw std::invalid_argument("universe is empty");
    auto state = std::make_shared<State>();
    for (const auto& m : universe) {
      state->rows.push_back(params.require_model(m.model_id));
      state->model_ids.push_back(m.model_id);
      const Decimal c = m.avg_query_cost();
      if (!c.is_positive()) throw std::invalid_argument("zero-cost model in universe: " + m.model_id);
      state->costs.push_back(c);
    }
    state->params = std::move(params);
    state->universe = std::move(universe);
    std::lock_guard lock(state_mu_);
    state_ = std::move(state);
  }

  bool ready() const {
    std::lock_guard lock(state_mu_);
    return state_ != nullptr;
  }

  std::vector<ModelSpec> get_universe() const { return require_state()->universe; }

  std::size_t embedding_dim() const { return require_state()->params.embedding_dim; }

  std::string create_session(Decimal budget, SessionPolicy policy = {}, std::optional<std::string> session_id = {}) {
    if (budget.is_negative()) throw ServiceError(ServiceError::Code::malformed_request, "budget must be non-negative");
    if (!(policy.alpha >= 0.0) || !std::isfinite(policy.alpha)) {
      throw ServiceError(ServiceError::Code::malformed_request, "alpha must be finite and >= 0");
    }
    std::unique_lock lock(sessions_mu_);
    std::string id = session_id.value_or("");
    if (id.empty()) {
      do {
        id = "s" + std::to_string(++next_id_);
      } while (sessions_.count(id));
    } else if (sessions_.count(id)) {
      throw ServiceError(ServiceError::Code::duplicate_session, "session already exists: " + id);
    }
    auto session = std::make_unique<Session>();
    session->ledger = {id, budget, Decimal{}, 0, policy};
    if (log_) {
      log_->append({{"type", "create"},
                    {"session_id", id},
                    {"budget", budget.to_string()},
                    {"alpha", policy.alpha},
                    {"fallback", std::string(to_string(policy.fallback))},
                    {"timestamp", now_ms()}});
    }
    sessions_.emplace(id, std::move(session));
    return id;
  }

  SessionLedger get_session(const std::string& session_id) const {
    Session& s = find(session_id);
    std::lock_guard lock(s.mu);
    return s.ledger;
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(sessions_mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
  }

  /// Predicts every universe model for the query, applies the selector's
  /// per-query rule against the remaining session budget and debits the
  /// chosen cost atomically.
  RouteDecision route_request(const std::string& session_id, std::span<const double> embedding,
                              std::optional<double> alpha_override = std::nullopt) {
    const auto state = require_state();
    if (embedding.size() != state->params.embedding_dim) {
      throw ServiceError(ServiceError::Code::dimension_mismatch,
                         "embedding has dimension " + std::to_string(embedding.size()) + ", expected " +
                             std::to_string(state->params.embedding_dim));
    }
    if (alpha_override && (!(*alpha_override >= 0.0) || !std::isfinite(*alpha_override))) {
      throw ServiceError(ServiceError::Code::malformed_request, "alpha must be finite and >= 0");
    }
    std::vector<double> predicted;
    predicted.reserve(state->rows.size());
    for (std::size_t row : state->rows) {
      predicted.push_back(static_cast<double>(predict_index(state->params, row, embedding).level));
    }
    const QueryCandidates candidates{state->model_ids, predicted, state->costs};

    Session& s = find(session_id);
    std::lock_guard lock(s.mu);
    const double alpha = alpha_override.value_or(s.ledger.policy.alpha);
    RouteDecision d;
    std::optional<std::size_t> pick = select_for_query(candidates, s.ledger.remaining(), alpha);
    if (!pick) {
      if (s.ledger.strict()) {
        throw ServiceError(ServiceError::Code::budget_exhausted,
                           "budget exhausted: no model affordable with remaining " + s.ledger.remaining().to_string());
      }
      pick = cheapest_model(candidates);
      d.fallback = true;
    }
    d.model_id = state->model_ids[*pick];
    d.predicted_score = predicted[*pick];
    d.ratio = ratio(predicted[*pick], state->costs[*pick], alpha);
    d.cost = state->costs[*pick];
    if (log_) {
      log_->append({{"type", "debit"},
                    {"session_id", session_id},
                    {"query_hash", embedding_hash(embedding)},
                    {"model_id", d.model_id},
                    {"cost", d.cost.to_string()},
                    {"timestamp", now_ms()}});
    }
    s.ledger.spent += d.cost;
    s.ledger.assignments_count += 1;
    d.remaining_budget = s.ledger.remaining();
    return d;
  }

 private:
  struct State {
    PredictorParams params;
    std::vector<ModelSpec> universe;
    std::vector<std::size_t> rows;  // predictor row per universe model
    std::vector<std::string> model_ids;
    std::vector<Decimal> costs;
  };

  struct Session {
    mutable std::mutex mu;
    SessionLedger ledger;
  };

  static std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }

  std::shared_ptr<const State> require_state() const {
    std::shared_ptr<const State> s;
    {
      std::lock_guard lock(state_mu_);
      s = state_;
    }
    if (!s) throw ServiceError(ServiceError::Code::not_ready, "no predictor or universe loaded");
    return s;
  }

  Session& find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(ServiceError::Code::unknown_session, "unknown session: " + id);
    return *it->second;
  }

  void replay() {
    for (const auto& rec : log_->read_all()) {
      const std::string type = rec.at("type").get<std::string>();
      const std::string id = rec.at("session_id").get<std::string>();
      if (type == "create") {
        auto session = std::make_unique<Session>();
        session->ledger.session_id = id;
        session->ledger.budget = Decimal::parse(rec.at("budget").get<std::string>());
        session->ledger.policy.alpha = rec.at("alpha").get<double>();
        session->ledger.policy.fallback = parse_fallback_policy(rec.at("fallback").get<std::string>());
        sessions_[id] = std::move(session);
        if (id.size() > 1 && id[0] == 's' && id.find_first_not_of("0123456789", 1) == std::string::npos) {
          next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)));
        }
      } else if (type == "debit") {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw std::runtime_error("debit log references unknown session " + id);
        it->second->ledger.spent += Decimal::parse(rec.at("cost").get<std::string>());
        it->second->ledger.assignments_count += 1;
      } else {
        throw std::runtime_error("unknown debit log record type '" + type + "'");
      }
    }
  }

  mutable std::mutex state_mu_;
  std::shared_ptr<const State> state_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
  std::unique_ptr<DebitLog> log_;
};

}  // namespace routoo
