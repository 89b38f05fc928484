#include <atomic>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "oracles.hpp"
#include "routoo/http_service.hpp"
#include "routoo/selector.hpp"
#include "routoo/service.hpp"
#include "temp_dir.hpp"

using namespace routoo;

namespace {

constexpr std::size_t kDim = 6;

/// Token count of one million makes each model's per-query cost equal its price.
std::vector<ModelSpec> universe_with_prices(const std::vector<std::string>& prices) {
  std::vector<ModelSpec> out;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    out.push_back({oracle::mid(i), Decimal::parse(prices[i]), 1'000'000, "b" + std::to_string(i), ""});
  }
  return out;
}

std::vector<std::string> ids_of(const std::vector<ModelSpec>& models) {
  std::vector<std::string> ids;
  for (const auto& m : models) ids.push_back(m.model_id);
  return ids;
}

void load_into(RouterService& svc, const std::vector<ModelSpec>& universe, std::uint64_t seed) {
  svc.load(init_predictor(ids_of(universe), kDim, 2, seed), universe);
}

std::vector<double> random_embedding(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> e(kDim);
  for (double& v : e) v = normal(rng);
  return e;
}

}  // namespace

TEST(Service, NotReadyBeforeLoad) {
  RouterService svc;
  EXPECT_FALSE(svc.ready());
  const auto id = svc.create_session(Decimal::parse("1"));
  try {
    svc.route_request(id, std::vector<double>(kDim, 0.0));
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.code(), ServiceError::Code::not_ready);
  }
  EXPECT_THROW(svc.get_universe(), ServiceError);
}

TEST(Service, CreateThenGetEchoesBudget) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.2", "0.6"}), 1);
  EXPECT_TRUE(svc.ready());
  const auto id = svc.create_session(Decimal::parse("12.5"), {0.1, FallbackPolicy::cheapest_model});
  const auto l = svc.get_session(id);
  EXPECT_EQ(l.session_id, id);
  EXPECT_EQ(l.budget, Decimal::parse("12.5"));
  EXPECT_EQ(l.spent, Decimal());
  EXPECT_EQ(l.assignments_count, 0u);
  EXPECT_EQ(l.policy.alpha, 0.1);
  EXPECT_FALSE(l.strict());
}

TEST(Service, ErrorsHaveDistinctCodes) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.2"}), 1);
  svc.create_session(Decimal::parse("1"), {}, "fixed");
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const ServiceError& e) {
      return e.code();
    }
    ADD_FAILURE() << "no ServiceError";
    return ServiceError::Code::malformed_request;
  };
  EXPECT_EQ(code_of([&] { svc.create_session(Decimal::parse("1"), {}, "fixed"); }),
            ServiceError::Code::duplicate_session);
  EXPECT_EQ(code_of([&] { svc.get_session("nope"); }), ServiceError::Code::unknown_session);
  EXPECT_EQ(code_of([&] { svc.route_request("fixed", std::vector<double>(kDim + 1)); }),
            ServiceError::Code::dimension_mismatch);
  EXPECT_EQ(code_of([&] { svc.create_session(Decimal::parse("-1")); }), ServiceError::Code::malformed_request);
  EXPECT_EQ(code_of([&] { svc.route_request("fixed", std::vector<double>(kDim), -1.0); }),
            ServiceError::Code::malformed_request);
}

TEST(Service, StrictSessionBelowCheapestIsExhaustedAndSpentUnchanged) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.2", "0.6"}), 1);
  const auto id = svc.create_session(Decimal::parse("0.1"));
  try {
    svc.route_request(id, std::vector<double>(kDim, 0.5));
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.code(), ServiceError::Code::budget_exhausted);
  }
  EXPECT_EQ(svc.get_session(id).spent, Decimal());
  EXPECT_EQ(svc.get_session(id).assignments_count, 0u);
}

TEST(Service, LenientSessionFallsBackToCheapest) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.6", "0.2"}), 1);
  const auto id = svc.create_session(Decimal::parse("0.1"), {1.0, FallbackPolicy::cheapest_model});
  const auto d = svc.route_request(id, std::vector<double>(kDim, 0.5));
  EXPECT_TRUE(d.fallback);
  EXPECT_EQ(d.model_id, "m1");
  EXPECT_EQ(d.remaining_budget, Decimal::parse("-0.1"));
}

TEST(Service, SingleQueryMatchesBatchSelector) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> cents(1, 100), count(2, 6);
    std::vector<std::string> prices;
    const int m = count(rng);
    for (int i = 0; i < m; ++i) prices.push_back(Decimal::from_units(cents(rng) * Decimal::kScale / 100).to_string());
    const auto universe = universe_with_prices(prices);
    RouterService svc;
    load_into(svc, universe, static_cast<std::uint64_t>(trial));
    const PredictorParams params = init_predictor(ids_of(universe), kDim, 2, static_cast<std::uint64_t>(trial));

    std::uniform_real_distribution<double> alpha_dist(0.0, 2.0);
    const double alpha = alpha_dist(rng);
    const auto id = svc.create_session(Decimal::from_units(cents(rng) * Decimal::kScale / 20), {alpha, FallbackPolicy::skip_and_flag});
    std::uniform_int_distribution<int> warmup(0, 3);
    for (int w = warmup(rng); w > 0; --w) {
      try {
        svc.route_request(id, random_embedding(rng));
      } catch (const ServiceError&) {
      }
    }

    const auto before = svc.get_session(id);
    QueryRecord q{"q", "d", random_embedding(rng), Split::eval, std::nullopt};
    const std::vector<QueryRecord> queries{q};
    const auto ids = ids_of(universe);
    const std::vector<std::string> qids{"q"};
    std::vector<Decimal> costs;
    for (const auto& s : universe) costs.push_back(s.avg_query_cost());
    SelectorConfig cfg;
    cfg.alpha = alpha;
    cfg.budget = before.remaining();
    const RoutingPlan plan = assign(predict_matrix(params, ids, queries), uniform_costs(ids, costs, qids), cfg);
    const Assignment& want = plan.assignments.at(0);

    if (want.routed()) {
      const auto got = svc.route_request(id, q.embedding);
      EXPECT_EQ(got.model_id, want.model_id) << "trial " << trial;
      EXPECT_EQ(got.predicted_score, want.predicted_score);
      EXPECT_EQ(got.cost, want.cost);
      EXPECT_EQ(svc.get_session(id).spent, before.spent + want.cost);
    } else {
      EXPECT_THROW(svc.route_request(id, q.embedding), ServiceError) << "trial " << trial;
      EXPECT_EQ(svc.get_session(id).spent, before.spent);
    }
  }
}

TEST(Service, ConcurrentRequestsNeverLoseOrOverdraw) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.03", "0.07", "0.11"}), 9);
  const Decimal budget = Decimal::parse("20");
  const auto id = svc.create_session(budget);
  constexpr int kWorkers = 16, kPerWorker = 80;
  std::vector<std::int64_t> granted_units(kWorkers, 0);
  std::vector<int> granted_count(kWorkers, 0);
  std::atomic<int> exhausted{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < kWorkers; ++w) {
    workers.emplace_back([&, w] {
      std::mt19937_64 rng(static_cast<std::uint64_t>(w));
      for (int r = 0; r < kPerWorker; ++r) {
        try {
          const auto d = svc.route_request(id, random_embedding(rng));
          granted_units[w] += d.cost.units();
          granted_count[w] += 1;
        } catch (const ServiceError& e) {
          if (e.code() == ServiceError::Code::budget_exhausted) exhausted++;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  std::int64_t total = 0;
  int count = 0;
  for (int w = 0; w < kWorkers; ++w) {
    total += granted_units[w];
    count += granted_count[w];
  }
  const auto l = svc.get_session(id);
  EXPECT_EQ(l.spent.units(), total);
  EXPECT_EQ(l.assignments_count, static_cast<std::uint64_t>(count));
  EXPECT_LE(l.spent, budget);
  EXPECT_EQ(count + exhausted.load(), kWorkers * kPerWorker);
  EXPECT_GT(exhausted.load(), 0);
}

TEST(Service, RestartReplaysSpentExactly) {
  TempDir dir;
  const auto log_path = dir / "debits.jsonl";
  const auto universe = universe_with_prices({"0.2", "0.26", "0.6"});
  std::mt19937_64 rng(3);
  SessionLedger before, other;
  {
    RouterService svc(log_path);
    load_into(svc, universe, 4);
    const auto id = svc.create_session(Decimal::parse("5"));
    svc.create_session(Decimal::parse("2"), {0.5, FallbackPolicy::cheapest_model}, "named");
    for (int i = 0; i < 3; ++i) svc.route_request(id, random_embedding(rng));
    before = svc.get_session(id);
    other = svc.get_session("named");
    EXPECT_GT(before.spent, Decimal());
  }
  RouterService restarted(log_path);
  EXPECT_FALSE(restarted.ready());
  const auto after = restarted.get_session(before.session_id);
  EXPECT_EQ(after.spent, before.spent);
  EXPECT_EQ(after.budget, before.budget);
  EXPECT_EQ(after.assignments_count, 3u);
  EXPECT_EQ(restarted.get_session("named").policy.fallback, FallbackPolicy::cheapest_model);
  EXPECT_EQ(restarted.get_session("named").policy.alpha, other.policy.alpha);
  EXPECT_NE(restarted.create_session(Decimal::parse("1")), before.session_id);
}

TEST(Service, DebitLogRecordsQueryHash) {
  TempDir dir;
  const auto log_path = dir / "debits.jsonl";
  const std::vector<double> e(kDim, 0.25);
  {
    RouterService svc(log_path);
    load_into(svc, universe_with_prices({"0.2"}), 4);
    svc.route_request(svc.create_session(Decimal::parse("1")), e);
  }
  const auto records = DebitLog(log_path).read_all();
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0]["type"], "create");
  EXPECT_EQ(records[1]["type"], "debit");
  EXPECT_EQ(records[1]["query_hash"], embedding_hash(e));
  EXPECT_EQ(records[1]["cost"], "0.2");
}

TEST(Service, TornFinalLogLineIsIgnored) {
  TempDir dir;
  const auto log_path = dir / "debits.jsonl";
  {
    std::ofstream out(log_path);
    out << R"({"type":"create","session_id":"s1","budget":"3","alpha":1.0,"fallback":"skip_and_flag"})" << '\n';
    out << R"({"type":"debit","session_id":"s1","cost":"0.5"})" << '\n';
    out << R"({"type":"debit","sess)";
  }
  RouterService svc(log_path);
  EXPECT_EQ(svc.get_session("s1").spent, Decimal::parse("0.5"));
}

TEST(Http, EndpointsRoundTrip) {
  RouterService svc;
  load_into(svc, universe_with_prices({"0.2", "0.6"}), 1);
  HttpFrontend http(svc);
  const int port = http.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread server([&] { http.serve_bound(); });
  http.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto universe = client.Get("/universe");
  ASSERT_TRUE(universe);
  const auto models = nlohmann::json::parse(universe->body)["models"];
  ASSERT_EQ(models.size(), 2u);
  EXPECT_EQ(models[1]["cost"], "0.6");

  auto created = client.Post("/sessions", R"({"budget": "0.7", "session_id": "web"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(nlohmann::json::parse(created->body)["spent"], "0");

  auto dup = client.Post("/sessions", R"({"budget": "1", "session_id": "web"})", "application/json");
  EXPECT_EQ(dup->status, 409);
  auto numeric_budget = client.Post("/sessions", R"({"budget": 1})", "application/json");
  EXPECT_EQ(numeric_budget->status, 400);
  auto garbage = client.Post("/sessions", "{", "application/json");
  EXPECT_EQ(garbage->status, 400);

  const std::string body = nlohmann::json{{"embedding", std::vector<double>(kDim, 0.1)}}.dump();
  auto routed = client.Post("/sessions/web/route", body, "application/json");
  ASSERT_TRUE(routed);
  EXPECT_EQ(routed->status, 200);
  const auto decision = nlohmann::json::parse(routed->body);
  EXPECT_TRUE(decision.contains("model_id"));
  EXPECT_TRUE(decision.contains("ratio"));

  auto ledger = client.Get("/sessions/web");
  EXPECT_EQ(nlohmann::json::parse(ledger->body)["spent"], decision["cost"]);

  auto missing = client.Get("/sessions/none");
  EXPECT_EQ(missing->status, 404);
  auto wrong_dim = client.Post("/sessions/web/route", R"({"embedding": [1, 2]})", "application/json");
  EXPECT_EQ(wrong_dim->status, 400);

  while (true) {
    auto r = client.Post("/sessions/web/route", body, "application/json");
    if (r->status != 200) {
      EXPECT_EQ(r->status, 402);
      break;
    }
  }

  http.stop();
  server.join();
}

TEST(Http, HealthIsUnavailableBeforeLoad) {
  RouterService svc;
  HttpFrontend http(svc);
  const int port = http.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread server([&] { http.serve_bound(); });
  http.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 503);
  EXPECT_EQ(nlohmann::json::parse(health->body)["status"], "not ready");
  http.stop();
  server.join();
}
