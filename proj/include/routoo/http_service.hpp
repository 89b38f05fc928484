#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "routoo/service.hpp"

// Endpoints (JSON bodies; decimal amounts are strings):
//   GET  /health                 -> {"status": "ready" | "not ready"}  (503 when not ready)
//   GET  /universe               -> {"models": [{model_id, cost, price_per_1m_tokens, size_bucket}]}
//   POST /sessions               <- {"budget", "alpha"?, "fallback"?, "session_id"?}  -> 201 ledger
//   GET  /sessions/{id}          -> ledger
//   POST /sessions/{id}/route    <- {"embedding": [...], "alpha"?}
//                                -> {model_id, predicted_score, ratio, cost, remaining_budget, fallback}
// Errors carry {"error": code, "message": text}.

namespace routoo {

inline nlohmann::json ledger_to_json(const SessionLedger& l) {
  return {
      {"session_id", l.session_id},
      {"budget", l.budget.to_string()},
      {"spent", l.spent.to_string()},
      {"remaining", l.remaining().to_string()},
      {"assignments_count", l.assignments_count},
      {"alpha", l.policy.alpha},
      {"fallback", std::string(to_string(l.policy.fallback))},
  };
}

inline int http_status(ServiceError::Code c) {
  switch (c) {
    case ServiceError::Code::not_ready: return 503;
    case ServiceError::Code::unknown_session: return 404;
    case ServiceError::Code::duplicate_session: return 409;
    case ServiceError::Code::malformed_request: return 400;
    case ServiceError::Code::dimension_mismatch: return 400;
    case ServiceError::Code::budget_exhausted: return 402;
  }
  return 500;
}

class HttpFrontend {
 public:
  explicit HttpFrontend(RouterService& service) : service_(service) { install(); }

  /// Binds and serves until stop(); returns false if the bind fails.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds to an ephemeral port and returns it (or -1).
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool serve_bound() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, const ServiceError& e) {
    reply(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
  }

  template <class Handler>
  static void guarded(httplib::Response& res, Handler&& handler) {
    try {
      handler();
    } catch (const ServiceError& e) {
      reply_error(res, e);
    } catch (const nlohmann::json::exception& e) {
      reply(res, 400, {{"error", "malformed_request"}, {"message", e.what()}});
    } catch (const std::invalid_argument& e) {
      reply(res, 400, {{"error", "malformed_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  }

  void install() {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      if (service_.ready()) {
        reply(res, 200, {{"status", "ready"}});
      } else {
        reply(res, 503, {{"status", "not ready"}});
      }
    });

    server_.Get("/universe", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        nlohmann::json models = nlohmann::json::array();
        for (const auto& m : service_.get_universe()) {
          models.push_back({{"model_id", m.model_id},
                            {"cost", m.avg_query_cost().to_string()},
                            {"price_per_1m_tokens", m.price_per_1m_tokens.to_string()},
                            {"size_bucket", m.size_bucket}});
        }
        reply(res, 200, {{"models", models}});
      });
    });

    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        if (!body.contains("budget") || !body["budget"].is_string()) {
          throw ServiceError(ServiceError::Code::malformed_request, "budget must be a decimal string");
        }
        Decimal budget;
        try {
          budget = Decimal::parse(body["budget"].get<std::string>());
        } catch (const std::exception& e) {
          throw ServiceError(ServiceError::Code::malformed_request, std::string("malformed budget: ") + e.what());
        }
        SessionPolicy policy;
        policy.alpha = body.value("alpha", policy.alpha);
        if (body.contains("fallback")) policy.fallback = parse_fallback_policy(body["fallback"].get<std::string>());
        std::optional<std::string> id;
        if (body.contains("session_id")) id = body["session_id"].get<std::string>();
        const std::string created = service_.create_session(budget, policy, id);
        reply(res, 201, ledger_to_json(service_.get_session(created)));
      });
    });

    server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, ledger_to_json(service_.get_session(req.matches[1]))); });
    });

    server_.Post(R"(/sessions/([^/]+)/route)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        const auto embedding = body.at("embedding").get<std::vector<double>>();
        std::optional<double> alpha;
        if (body.contains("alpha")) alpha = body["alpha"].get<double>();
        const RouteDecision d = service_.route_request(req.matches[1], embedding, alpha);
        reply(res, 200,
              {{"model_id", d.model_id},
               {"predicted_score", d.predicted_score},
               {"ratio", d.ratio},
               {"cost", d.cost.to_string()},
               {"remaining_budget", d.remaining_budget.to_string()},
               {"fallback", d.fallback}});
      });
    });
  }

  RouterService& service_;
  httplib::Server server_;
};

}  // namespace routoo
