#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "routoo/evalreport.hpp"
#include "routoo/selector.hpp"
#include "routoo/universe.hpp"

using namespace routoo;

namespace {

RoutingPlan plan_of(std::vector<std::pair<std::string, std::string>> pairs) {
  RoutingPlan p;
  for (auto& [q, m] : pairs) p.assignments.push_back({q, m, 0.0, Decimal{}});
  return p;
}

std::vector<ModelSpec> specs(std::size_t n) {
  std::vector<ModelSpec> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].model_id = oracle::mid(i);
    out[i].price_per_1m_tokens = Decimal::parse(i % 2 ? "0.9" : "0.2");
    out[i].avg_tokens_per_query = 1000;
    out[i].size_bucket = i % 2 ? "70b" : "7b";
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ScorePlan, Counting) {
  ScoreMatrix s({"a"}, {"q1", "q2", "q3", "q4"}, 2, {1, 1, 1, 0});
  const auto p = plan_of({{"q1", "a"}, {"q2", "a"}, {"q3", "a"}, {"q4", "a"}});
  EXPECT_DOUBLE_EQ(score_plan(p, s).accuracy, 0.75);
  ScoreMatrix zeros({"a"}, {"q1", "q2", "q3", "q4"}, 2, {0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(score_plan(p, zeros).accuracy, 0.0);
  auto skipped = p;
  skipped.assignments[0].model_id.clear();
  EXPECT_DOUBLE_EQ(score_plan(skipped, s).accuracy, 0.5);
  EXPECT_THROW(score_plan(plan_of({{"q1", "zz"}}), s), DatasetError);
}

TEST(ScorePlan, RawMeanKeepsLevels) {
  ScoreMatrix s({"a"}, {"q1", "q2"}, 3, {2, 1});
  const auto r = score_plan(plan_of({{"q1", "a"}, {"q2", "a"}}), s);
  EXPECT_DOUBLE_EQ(r.raw_mean, 1.5);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
}

TEST(Distribution, Fractions) {
  const auto models = specs(2);
  const auto all_one = routing_distribution(plan_of({{"q1", "m0"}, {"q2", "m0"}}), models);
  EXPECT_EQ(all_one.by_model, (std::map<std::string, double>{{"m0", 1.0}}));
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int j = 0; j < 10; ++j) pairs.push_back({oracle::qid(j), oracle::mid(j % 2)});
  const auto split = routing_distribution(plan_of(pairs), models);
  EXPECT_DOUBLE_EQ(split.by_model.at("m0"), 0.5);
  EXPECT_DOUBLE_EQ(split.by_model.at("m1"), 0.5);
  EXPECT_DOUBLE_EQ(split.by_size.at("7b"), 0.5);
}

TEST(Distribution, IdealRoutingFixtureReproducesReferenceShares) {
  const auto d = oracle::ideal_distribution_fixture();
  const auto ub = upper_bound_report(d.scores, d.models);
  EXPECT_DOUBLE_EQ(ub.usage.by_size.at("7b"), 0.664);
  EXPECT_DOUBLE_EQ(ub.usage.by_size.at("13b"), 0.161);
  EXPECT_DOUBLE_EQ(ub.usage.by_size.at("34b"), 0.175);
  EXPECT_DOUBLE_EQ(ub.accuracy, 1.0);
}

TEST(UpperBound, CheapestWinsWhenEveryoneIsRight) {
  auto models = specs(3);
  models[2].price_per_1m_tokens = Decimal::parse("0.1");
  ScoreMatrix s({"m0", "m1", "m2"}, {"q1", "q2"}, 2, {1, 1, 1, 1, 1, 1});
  const auto ub = upper_bound_report(s, models);
  EXPECT_EQ(ub.usage.by_model, (std::map<std::string, double>{{"m2", 1.0}}));
  EXPECT_EQ(ub.total_cost, Decimal::parse("0.0002"));
  EXPECT_DOUBLE_EQ(ub.mean_cost, 0.0001);
}

TEST(UpperBound, EqualsOracleRoutingAndCoverage) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng() % 5, n = 1 + rng() % 40;
    const int k = 2 + static_cast<int>(rng() % 3);
    const auto t = oracle::random_table(rng, m, n, k);
    const auto s = oracle::to_matrix(t, k);
    const auto models = specs(m);
    const auto ub = upper_bound_report(s, models);
    SelectorConfig cfg;
    cfg.alpha = 0.0;
    cfg.budget = Decimal::from_integer(1'000'000);
    std::vector<Decimal> model_costs;
    for (const auto& spec : models) model_costs.push_back(spec.avg_query_cost());
    const auto plan =
        assign(oracle_predictor(s).predictions(), uniform_costs(s.model_ids(), model_costs, s.query_ids()), cfg);
    EXPECT_EQ(score_plan(plan, s).accuracy, ub.accuracy);
    EXPECT_EQ(coverage_score(s.model_ids(), s) / static_cast<double>(k - 1), ub.accuracy);
  }
}

TEST(PerDomain, BreakdownAndRecombination) {
  std::vector<QueryRecord> qs;
  for (int j = 0; j < 4; ++j) qs.push_back({oracle::qid(j), j < 2 ? "law" : "math", {0.0}, Split::eval, std::nullopt});
  ScoreMatrix s({"m0"}, {"q0", "q1", "q2", "q3"}, 2, {1, 1, 0, 0});
  const auto p = plan_of({{"q0", "m0"}, {"q1", "m0"}, {"q2", "m0"}, {"q3", "m0"}});
  EXPECT_EQ(per_domain_report(p, s, qs), (std::map<std::string, double>{{"law", 1.0}, {"math", 0.0}}));

  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng() % 50;
    const auto t = oracle::random_table(rng, 3, n, 3);
    const auto sm = oracle::to_matrix(t, 3);
    std::vector<QueryRecord> queries;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::map<std::string, std::size_t> count;
    for (std::size_t j = 0; j < n; ++j) {
      const std::string dom = "d" + std::to_string(rng() % 4);
      queries.push_back({oracle::qid(j), dom, {0.0}, Split::eval, std::nullopt});
      ++count[dom];
      pairs.push_back({oracle::qid(j), rng() % 5 ? oracle::mid(rng() % 3) : ""});
    }
    const auto plan = plan_of(pairs);
    const auto by_domain = per_domain_report(plan, sm, queries);
    double recombined = 0.0;
    for (const auto& [dom, acc] : by_domain) {
      EXPECT_GE(acc, 0.0);
      EXPECT_LE(acc, 1.0);
      recombined += static_cast<double>(count[dom]) / static_cast<double>(n) * acc;
    }
    const double overall = score_plan(plan, sm).accuracy;
    EXPECT_LE(std::abs(recombined - overall), 1e-12 * std::max(1.0, overall));
  }
}

TEST(PerDomain, SingleDomainEqualsOverall) {
  std::vector<QueryRecord> qs;
  for (int j = 0; j < 3; ++j) qs.push_back({oracle::qid(j), "all", {0.0}, Split::eval, std::nullopt});
  ScoreMatrix s({"m0"}, {"q0", "q1", "q2"}, 2, {1, 0, 1});
  const auto p = plan_of({{"q0", "m0"}, {"q1", "m0"}, {"q2", "m0"}});
  const auto r = per_domain_report(p, s, qs);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r.at("all"), score_plan(p, s).accuracy);
}

TEST(IdealDominance, NoPlanBeatsUpperBound) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = oracle::random_table(rng, 4, 20, 3);
    const auto s = oracle::to_matrix(t, 3);
    const auto ub = upper_bound_report(s, specs(4));
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t j = 0; j < 20; ++j) pairs.push_back({oracle::qid(j), oracle::mid(rng() % 4)});
    EXPECT_LE(score_plan(plan_of(pairs), s).accuracy, ub.accuracy);
  }
}

TEST(BaselineTable, BaselineFixtureMatchesGoldenFile) {
  const auto f = oracle::baseline_fixture();
  const std::vector<PlanEntry> plans{{"Routoo (open-source)", &f.routed}};
  const auto rows = baseline_rows(f.data, plans);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(format_percent(rows[1].accuracy_pct), "64.20");
  EXPECT_EQ(format_cost(rows[1].cost_per_1m), "0.2");
  EXPECT_EQ(format_percent(rows[3].accuracy_pct), "70.60");
  EXPECT_EQ(format_cost(rows[3].cost_per_1m), "0.6");
  EXPECT_EQ(format_percent(rows[5].accuracy_pct), "75.87");
  EXPECT_EQ(format_cost(rows[5].cost_per_1m), "0.6");
  EXPECT_EQ(format_baseline_table(rows), read_file(ROUTOO_TEST_DATA "/open_source_baseline.golden"));
}

TEST(BaselineTable, ReportBundle) {
  const auto f = oracle::baseline_fixture();
  const auto r = build_report(f.routed, f.data, true);
  EXPECT_DOUBLE_EQ(r.overall_accuracy, 0.7587);
  EXPECT_EQ(r.total_cost, Decimal::parse("6"));
  ASSERT_TRUE(r.upper_bound_accuracy.has_value());
  EXPECT_GE(*r.upper_bound_accuracy, r.overall_accuracy);
  double total = 0.0;
  for (const auto& [id, share] : r.usage.by_model) total += share;
  EXPECT_NEAR(total, 1.0, 1e-9);
}
