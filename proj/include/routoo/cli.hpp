#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "routoo/dataset_io.hpp"
#include "routoo/evalreport.hpp"
#include "routoo/http_service.hpp"
#include "routoo/json_io.hpp"
#include "routoo/predictor.hpp"
#include "routoo/prep.hpp"
#include "routoo/selector.hpp"
#include "routoo/service.hpp"
#include "routoo/sweep.hpp"
#include "routoo/universe.hpp"

namespace routoo {

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Flag > ROUTOO_SEED (handled by CLI11 as the flag's environment mirror) > manifest > 0.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::optional<std::uint64_t> manifest) {
  if (flag) return *flag;
  return manifest.value_or(0);
}

inline std::optional<Split> parse_split_filter(const std::string& s) {
  if (s == "all") return std::nullopt;
  return parse_split(s);
}

/// Writes to `path`, or to `fallback` when the path is empty or "-".
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  auto out = io::open_out(path);
  fn(out);
}

struct Loaded {
  DatasetManifest manifest;
  Dataset data;
};

inline Loaded load(const std::string& manifest_path) {
  Loaded l;
  l.manifest = read_manifest(manifest_path);
  l.data = load_dataset(l.manifest);
  return l;
}

/// Models named by a universe document, or every dataset model.
inline std::vector<std::string> universe_models(const Dataset& data, const std::string& universe_path) {
  if (universe_path.empty()) {
    std::vector<std::string> ids;
    for (const auto& m : data.models) ids.push_back(m.model_id);
    return ids;
  }
  auto u = load_universe(universe_path);
  for (const auto& id : u.selected_model_ids) data.scores.require_model(id);
  return u.selected_model_ids;
}

inline std::vector<QueryRecord> queries_in(const Dataset& data, std::span<const std::string> ids) {
  std::vector<QueryRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(data.query(id));
  return out;
}

inline std::vector<ModelSpec> specs_for(const Dataset& data, std::span<const std::string> ids) {
  std::vector<ModelSpec> out;
  for (const auto& id : ids) out.push_back(data.model(id));
  return out;
}

inline RoutingPlan read_plan_file(const std::string& path) {
  auto in = io::open_in(path);
  return read_plan(in, path);
}

struct PredictionSource {
  std::string params_path;
  bool oracle = false;
  std::string mode = "argmax";

  Predictions make(const Dataset& data, std::span<const std::string> model_ids,
                   std::span<const std::string> query_ids) const {
    if (oracle == !params_path.empty()) throw std::invalid_argument("give exactly one of --params or --oracle");
    if (oracle) return oracle_predictor(data.scores).predictions(model_ids, query_ids);
    const auto params = load_predictor(params_path);
    const auto queries = queries_in(data, query_ids);
    const auto m = mode == "expected" ? PredictionMode::expected : PredictionMode::argmax;
    return predict_matrix(params, model_ids, queries, m);
  }
};

inline void add_prediction_flags(CLI::App* app, PredictionSource& src) {
  app->add_option("--params", src.params_path, "Trained predictor (JSON)");
  app->add_flag("--oracle", src.oracle, "Use the ground-truth scores as predictions");
  app->add_option("--mode", src.mode, "argmax or expected")->check(CLI::IsMember({"argmax", "expected"}));
}

}  // namespace cli

/// Runs one command line (args exclude the program name). Returns the exit status.
inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli;
  CLI::App app{"Cost-aware LLM routing: universe selection, score prediction and budgeted assignment", "routoo"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed (overrides the manifest)")->envname("ROUTOO_SEED");
  };

  std::string data_path;
  auto add_data = [&](CLI::App* sub) { sub->add_option("--data", data_path, "Dataset manifest (JSON)")->required(); };

  std::string out_path;
  std::string split = "all";
  std::string universe_path;
  auto add_split = [&](CLI::App* sub) {
    sub->add_option("--split", split, "Query split: train, eval or all")->check(CLI::IsMember({"train", "eval", "all"}));
  };

  // validate
  auto* validate = app.add_subcommand("validate", "Load and validate a dataset bundle");
  add_data(validate);

  // universe
  auto* universe = app.add_subcommand("universe", "Select the serving universe by coverage");
  std::string method = "greedy";
  std::size_t max_models = 0;
  std::size_t sample = 0;
  add_data(universe);
  universe->add_option("--method", method, "greedy or exact")->check(CLI::IsMember({"greedy", "exact"}));
  universe->add_option("--max-models", max_models, "Universe size limit")->required();
  universe->add_option("--sample", sample, "Sample this many queries first (0 = all)");
  add_split(universe);
  add_seed(universe);
  universe->add_option("--out", out_path, "Output file (default stdout)");

  // train-predictor
  auto* trainer = app.add_subcommand("train-predictor", "Train the score predictor");
  TrainConfig tc;
  bool no_bias = false;
  std::string train_split = "train";
  add_data(trainer);
  trainer->add_option("--universe", universe_path, "Universe document; default all models");
  trainer->add_option("--learning-rate", tc.learning_rate, "Step size");
  trainer->add_option("--epochs", tc.epochs, "Passes over the data");
  trainer->add_option("--batch-size", tc.batch_size, "Minibatch size");
  trainer->add_option("--l2", tc.l2_penalty, "L2 penalty on projection and model embeddings");
  trainer->add_option("--class-weights", tc.class_weights, "Per-level loss weights")->delimiter(',');
  trainer->add_flag("--no-bias", no_bias, "Drop the output bias");
  trainer->add_option("--split", train_split, "Training split")->check(CLI::IsMember({"train", "eval", "all"}));
  add_seed(trainer);
  trainer->add_option("--out", out_path, "Predictor output (JSON)")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict levels for every (model, query) pair");
  PredictionSource pred_src;
  add_data(predict_cmd);
  add_prediction_flags(predict_cmd, pred_src);
  predict_cmd->add_option("--universe", universe_path, "Universe document");
  add_split(predict_cmd);
  predict_cmd->add_option("--out", out_path, "Output table (default stdout)");

  // route
  auto* route = app.add_subcommand("route", "Assign one model per query under a budget");
  std::string budget_text;
  double alpha = 1.0;
  std::string order = "input_order";
  std::string fallback = "skip_and_flag";
  std::string overhead_text = "0";
  PredictionSource route_src;
  add_data(route);
  route->add_option("--budget", budget_text, "Total budget (decimal)")->required();
  route->add_option("--alpha", alpha, "Cost-emphasis exponent");
  route->add_option("--order", order, "input_order or global_ratio_desc");
  route->add_option("--fallback", fallback, "skip_and_flag or cheapest_model");
  route->add_option("--overhead", overhead_text, "Per-query predictor cost, reported separately");
  add_prediction_flags(route, route_src);
  route->add_option("--universe", universe_path, "Universe document");
  add_split(route);
  route->add_option("--out", out_path, "Plan output (default stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Route over a grid of budgets and alphas");
  std::vector<std::string> budgets_text;
  std::vector<double> alphas{1.0, 0.1, 0.01};
  std::string format = "tsv";
  bool serial = false;
  PredictionSource sweep_src;
  add_data(sweep_cmd);
  sweep_cmd->add_option("--budgets", budgets_text, "Comma-separated budgets")->delimiter(',')->required();
  sweep_cmd->add_option("--alphas", alphas, "Comma-separated alphas")->delimiter(',');
  sweep_cmd->add_option("--order", order, "input_order or global_ratio_desc");
  sweep_cmd->add_option("--fallback", fallback, "skip_and_flag or cheapest_model");
  add_prediction_flags(sweep_cmd, sweep_src);
  sweep_cmd->add_option("--universe", universe_path, "Universe document");
  add_split(sweep_cmd);
  sweep_cmd->add_option("--format", format, "tsv or json")->check(CLI::IsMember({"tsv", "json"}));
  sweep_cmd->add_flag("--serial", serial, "Evaluate grid cells on one thread");
  sweep_cmd->add_option("--out", out_path, "Output (default stdout)");

  // report
  auto* report = app.add_subcommand("report", "Evaluation reports");
  report->require_subcommand(1);
  std::string report_format = "text";
  std::vector<std::string> named_plans;
  std::string plan_path;

  auto* table = report->add_subcommand("table", "Single-model baselines plus routed plans");
  add_data(table);
  table->add_option("--plan", named_plans, "NAME=PLAN_FILE, repeatable");
  table->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* per_domain = report->add_subcommand("per-domain", "Accuracy per query domain");
  add_data(per_domain);
  per_domain->add_option("--plan", plan_path, "Plan file")->required();
  per_domain->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* distribution = report->add_subcommand("distribution", "Share of queries per model and size bucket");
  add_data(distribution);
  distribution->add_option("--plan", plan_path, "Plan file")->required();
  distribution->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* upper = report->add_subcommand("upper-bound", "Ideal routing with a perfect predictor");
  add_data(upper);
  upper->add_option("--universe", universe_path, "Universe document");
  add_split(upper);
  upper->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  // filter-hard
  auto* filter = app.add_subcommand("filter-hard", "Keep the queries a reference model fails plus a random easy sample");
  std::string reference_model;
  std::size_t n_easy = 0;
  add_data(filter);
  filter->add_option("--model", reference_model, "Reference model id")->required();
  filter->add_option("--n-easy", n_easy, "Number of easy queries to sample")->required();
  add_seed(filter);
  filter->add_option("--out", out_path, "Id list output (default stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset bundle");
  SynthSpec spec;
  std::string profile = "separable";
  bool binary = false;
  synth->add_option("--models", spec.models, "Number of models");
  synth->add_option("--queries", spec.queries, "Number of queries");
  synth->add_option("--dim", spec.dim, "Embedding dimension");
  synth->add_option("--k-levels", spec.k_levels, "Correctness levels");
  synth->add_option("--profile", profile, "separable or complementary")
      ->check(CLI::IsMember({"separable", "complementary"}));
  synth->add_option("--noise", spec.label_noise, "Label noise probability");
  synth->add_option("--eval-fraction", spec.eval_fraction, "Trailing fraction marked eval");
  synth->add_option("--domains", spec.domains, "Number of domains");
  synth->add_option("--tokens", spec.avg_tokens_per_query, "Average tokens per query");
  synth->add_flag("--binary", binary, "Write binary embeddings");
  add_seed(synth);
  synth->add_option("--out", out_path, "Output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the online routing service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string debit_log;
  std::string serve_params;
  add_data(serve);
  serve->add_option("--params", serve_params, "Trained predictor (JSON)")->required();
  serve->add_option("--universe", universe_path, "Universe document");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--debit-log", debit_log, "Append-only session log, replayed at startup");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("routoo");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->check_name(args[0]);
    if (!known) {
      err << "error: unknown subcommand '" << args[0] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) {
      failed = sub;
      for (auto* inner : sub->get_subcommands()) failed = inner;
    }
    err << failed->help();
    return kExitUsage;
  }

  try {
    if (validate->parsed()) {
      const auto l = load(data_path);
      out << "ok\tmodels=" << l.data.models.size() << "\tqueries=" << l.data.queries.size()
          << "\tk_levels=" << l.data.scores.k_levels() << "\tembedding_dim=" << l.data.embedding_dim << '\n';
      return kExitOk;
    }

    if (universe->parsed()) {
      const auto l = load(data_path);
      auto qids = l.data.query_ids(parse_split_filter(split));
      if (sample > 0) qids = sample_universe_queries(qids, sample, resolve_seed(seed, l.manifest.seed));
      const ScoreMatrix pool = l.data.scores.select_queries(qids);
      const auto costs = l.data.model_costs();
      const auto u = method == "exact" ? exact_universe(pool, max_models) : greedy_universe(pool, max_models, costs);
      emit(out_path, out, [&](std::ostream& o) { o << universe_to_json(u, method).dump(2) << '\n'; });
      return kExitOk;
    }

    if (trainer->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      const auto train_ids = l.data.query_ids(parse_split_filter(train_split));
      tc.seed = resolve_seed(seed, l.manifest.seed);
      const auto examples = examples_from(l.data, models, train_ids);
      auto init = init_predictor(models, l.data.embedding_dim, l.data.scores.k_levels(), tc.seed, !no_bias);
      const auto result = train(examples, tc, std::move(init));
      save_predictor(out_path, result.params);
      out << "loss\t" << io::format_real(result.loss_trace.front()) << " -> "
          << io::format_real(result.loss_trace.back()) << '\n';
      out << "train_accuracy\t" << io::format_real(evaluate_predictor(result.params, examples).accuracy) << '\n';
      if (train_split == "train") {
        const auto eval_ids = l.data.query_ids(Split::eval);
        if (!eval_ids.empty()) {
          const auto eval_examples = examples_from(l.data, models, eval_ids);
          out << "eval_accuracy\t" << io::format_real(evaluate_predictor(result.params, eval_examples).accuracy)
              << '\n';
        }
      }
      return kExitOk;
    }

    if (predict_cmd->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      const auto qids = l.data.query_ids(parse_split_filter(split));
      const auto pred = pred_src.make(l.data, models, qids);
      emit(out_path, out, [&](std::ostream& o) {
        io::write_version(o);
        o << "model_id\tquery_id\tpredicted\n";
        for (std::size_t i = 0; i < pred.num_models(); ++i) {
          for (std::size_t j = 0; j < pred.num_queries(); ++j) {
            o << pred.model_ids()[i] << '\t' << pred.query_ids()[j] << '\t' << io::format_real(pred.at(i, j)) << '\n';
          }
        }
      });
      return kExitOk;
    }

    if (route->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      const auto qids = l.data.query_ids(parse_split_filter(split));
      SelectorConfig cfg;
      cfg.alpha = alpha;
      cfg.budget = Decimal::parse(budget_text);
      cfg.order_policy = parse_order_policy(order);
      cfg.fallback_policy = parse_fallback_policy(fallback);
      cfg.predictor_overhead = Decimal::parse(overhead_text);
      const auto plan = assign(route_src.make(l.data, models, qids), l.data.costs(models, qids), cfg);
      emit(out_path, out, [&](std::ostream& o) { write_plan(o, plan); });
      if (!out_path.empty() && out_path != "-") {
        out << "total_cost\t" << plan.total_cost.to_string() << "\tfeasible\t" << (plan.feasible ? "true" : "false")
            << "\toverflow\t" << plan.overflow_queries.size() << '\n';
      }
      return kExitOk;
    }

    if (sweep_cmd->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      const auto qids = l.data.query_ids(parse_split_filter(split));
      std::vector<Decimal> budgets;
      for (const auto& b : budgets_text) budgets.push_back(Decimal::parse(b));
      SweepOptions opts;
      opts.order_policy = parse_order_policy(order);
      opts.fallback_policy = parse_fallback_policy(fallback);
      opts.parallel = !serial;
      const auto specs = specs_for(l.data, models);
      const ScoreMatrix truth = l.data.scores.select_models(models).select_queries(qids);
      const auto points = routoo::sweep(sweep_src.make(l.data, models, qids), truth, l.data.costs(models, qids), specs,
                                        budgets, alphas, opts);
      emit(out_path, out, [&](std::ostream& o) {
        if (format == "json") {
          o << sweep_to_json(points).dump(2) << '\n';
        } else {
          write_sweep_table(o, points);
        }
      });
      return kExitOk;
    }

    if (table->parsed()) {
      const auto l = load(data_path);
      std::vector<RoutingPlan> plans;
      std::vector<std::string> names;
      plans.reserve(named_plans.size());
      for (const auto& spec_text : named_plans) {
        const auto eq = spec_text.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--plan expects NAME=PLAN_FILE");
        names.push_back(spec_text.substr(0, eq));
        plans.push_back(read_plan_file(spec_text.substr(eq + 1)));
      }
      std::vector<PlanEntry> entries;
      for (std::size_t i = 0; i < plans.size(); ++i) entries.push_back({names[i], &plans[i]});
      const auto rows = baseline_rows(l.data, entries);
      if (report_format == "json") {
        out << baseline_to_json(rows).dump(2) << '\n';
      } else {
        out << format_baseline_table(rows);
      }
      return kExitOk;
    }

    if (per_domain->parsed()) {
      const auto l = load(data_path);
      const auto plan = read_plan_file(plan_path);
      const auto domains = per_domain_report(plan, l.data.scores, l.data.queries);
      if (report_format == "json") {
        out << json(domains).dump(2) << '\n';
      } else {
        for (const auto& [domain, acc] : domains) out << domain << '\t' << io::format_real(acc) << '\n';
      }
      return kExitOk;
    }

    if (distribution->parsed()) {
      const auto l = load(data_path);
      const auto usage = routing_distribution(read_plan_file(plan_path), l.data.models);
      if (report_format == "json") {
        out << usage_to_json(usage).dump(2) << '\n';
      } else {
        for (const auto& [id, share] : usage.by_model) out << "model\t" << id << '\t' << io::format_real(share) << '\n';
        for (const auto& [b, share] : usage.by_size) out << "size\t" << b << '\t' << io::format_real(share) << '\n';
      }
      return kExitOk;
    }

    if (upper->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      const auto qids = l.data.query_ids(parse_split_filter(split));
      const ScoreMatrix truth = l.data.scores.select_models(models).select_queries(qids);
      const auto ub = upper_bound_report(truth, specs_for(l.data, models));
      if (report_format == "json") {
        out << upper_bound_to_json(ub).dump(2) << '\n';
      } else {
        out << "accuracy\t" << io::format_real(ub.accuracy) << '\n';
        out << "total_cost\t" << ub.total_cost.to_string() << '\n';
        out << "mean_cost\t" << io::format_real(ub.mean_cost) << '\n';
        for (const auto& [b, share] : ub.usage.by_size) out << "size\t" << b << '\t' << io::format_real(share) << '\n';
      }
      return kExitOk;
    }

    if (filter->parsed()) {
      const auto l = load(data_path);
      const auto row = l.data.scores.row(l.data.scores.require_model(reference_model));
      const auto kept = filter_hard_queries(l.data.scores.query_ids(), std::vector<int>(row.begin(), row.end()), n_easy,
                                            resolve_seed(seed, l.manifest.seed));
      emit(out_path, out, [&](std::ostream& o) {
        for (const auto& id : kept) o << id << '\n';
      });
      return kExitOk;
    }

    if (synth->parsed()) {
      spec.profile = parse_synth_profile(profile);
      spec.seed = resolve_seed(seed, std::nullopt);
      const auto data = synth_generate(spec);
      const auto manifest =
          write_dataset(data, out_path, binary ? EmbeddingFormat::binary : EmbeddingFormat::text, spec.seed);
      out << manifest.string() << '\n';
      return kExitOk;
    }

    if (serve->parsed()) {
      const auto l = load(data_path);
      const auto models = universe_models(l.data, universe_path);
      std::optional<std::filesystem::path> log;
      if (!debit_log.empty()) log = debit_log;
      RouterService service(log);
      service.load(load_predictor(serve_params), specs_for(l.data, models));
      HttpFrontend http(service);
      int bound = port;
      if (port == 0) {
        bound = http.bind_any(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
      }
      out << "listening on " << host << ':' << bound << std::endl;
      const bool ok = port == 0 ? http.serve_bound() : http.listen(host, port);
      if (!ok) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace routoo
