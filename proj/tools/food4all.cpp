#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "food4all/config.hpp"
#include "food4all/error.hpp"
#include "food4all/heuristic_agent.hpp"
#include "food4all/metrics.hpp"
#include "food4all/negatives.hpp"
#include "food4all/service.hpp"
#include "food4all/simulate.hpp"
#include "food4all/structured_output.hpp"
#include "food4all/synth.hpp"
#include "food4all/training.hpp"

namespace fs = std::filesystem;
using namespace food4all;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Data {
  Registry registry;
  Geocoder geocoder;
  std::shared_ptr<const NutrientDb> nutrients;
  fs::path fixtures;
};

// Data files come from --config when given, else from the --data directory.
Data load_data(const std::string& config_path, const std::string& data_dir) {
  DataConfig d;
  if (!config_path.empty()) {
    d = load_config(config_path).data;
  } else {
    d.registry = fs::path(data_dir) / "registry.csv";
    d.geocode = fs::path(data_dir) / "geocode.csv";
    d.nutrients = fs::path(data_dir) / "nutrients.jsonl";
    d.fixtures = fs::path(data_dir) / "fixtures";
  }
  for (const auto& p : {d.registry, d.geocode}) {
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing data file: " + p.string());
  }
  Data out{Registry::load_csv(d.registry), Geocoder::load_csv(d.geocode), nullptr, d.fixtures};
  out.nutrients = std::make_shared<const NutrientDb>(
      fs::is_regular_file(d.nutrients) ? NutrientDb::load_jsonl(d.nutrients) : NutrientDb{});
  return out;
}

// Default snapshot date: the newest registry verification, so runs do not
// drift with the wall clock.
Date snapshot_date(const Registry& registry, const std::string& override) {
  if (!override.empty()) return Date::parse(override);
  Date latest;
  for (const auto& r : registry.records()) latest = std::max(latest, r.last_verified);
  return latest;
}

RewardWeights parse_weights(const std::string& text) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      w.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw UsageError("--weights: '" + part + "' is not a number");
    }
  }
  if (w.size() != 4) throw UsageError("--weights needs exactly 4 comma-separated values, got " + std::to_string(w.size()));
  return RewardWeights::from_array({w[0], w[1], w[2], w[3]});
}

std::vector<CaseRecord> load_dataset(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kIo, "missing dataset: " + path);
  return load_cases(path);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, j.dump(2) + "\n");
}

int cmd_serve(const std::string& config_path, int port) {
  if (config_path.empty()) throw UsageError("--config is required");
  ServiceConfig c = load_config(config_path);
  apply_env(c);
  if (port >= 0) c.port = port;
  run_server(c, std::cout);
  return 0;
}

std::vector<Prediction> load_answers(const std::string& path, const std::vector<CaseRecord>& cases) {
  std::map<std::string, Prediction> by_id;
  for (const auto& line : read_jsonl(path)) {
    const auto id = line.at("id").get<std::string>();
    Prediction p;
    if (line.contains("answer")) {
      p.answer = line.at("answer").get<CandidateAnswer>();
    } else if (line.contains("answer_text")) {
      try {
        const auto parsed = parse_structured_output(line.at("answer_text").get<std::string>());
        p.answer = parsed.answer;
        p.format_ok = parsed.diagnostics.empty();
      } catch (const Error&) {
        p.format_ok = false;
      }
    } else {
      throw Error(ErrorCode::kParse, "answer record " + id + " has neither answer nor answer_text");
    }
    by_id[id] = std::move(p);
  }
  std::vector<Prediction> out;
  for (const auto& c : cases) {
    const auto it = by_id.find(c.id);
    out.push_back(it != by_id.end() ? it->second : Prediction{{}, false});
  }
  return out;
}

int cmd_evaluate(const std::string& dataset, const std::string& answers, bool live, const std::string& out,
                 const std::string& config_path, const std::string& data_dir, const std::string& today) {
  if (answers.empty() == !live) throw UsageError("give exactly one of --answers or --live");
  const auto cases = load_dataset(dataset);
  if (cases.empty()) throw Error(ErrorCode::kUndefinedMetric, "dataset " + dataset + " has no cases");
  const Data data = load_data(config_path, data_dir);
  std::vector<Prediction> predictions;
  if (live) {
    const auto tools = make_toolkit(ToolkitConfig{data.fixtures, data.nutrients, std::nullopt, std::nullopt, ""});
    const Date date = snapshot_date(data.registry, today);
    for (const auto& c : cases) {
      HeuristicPlanner planner;
      HeuristicExecutor executor;
      SessionOptions opts;
      opts.session_id = c.id;
      opts.zip = c.zip;
      opts.session_date = date;
      const auto r = run_session(c.query, planner, executor, tools, data.registry, data.geocoder, AgentConfig{}, opts);
      predictions.push_back(r.synthesis ? Prediction{r.synthesis->answer, true} : Prediction{{}, false});
    }
  } else {
    predictions = load_answers(answers, cases);
  }
  const auto report = evaluate(cases, predictions, data.registry, data.geocoder);
  write_json(out, report);
  std::cout << render_report_table(report);
  return 0;
}

int cmd_train_offline(const std::string& dataset, int epochs, double beta, double lr, const std::string& weights,
                      double lambda, std::size_t batch, std::uint64_t seed, const std::string& ordering,
                      const std::string& ops_list, const std::string& out, std::string curve,
                      const std::string& config_path, const std::string& data_dir, const std::string& today) {
  if (epochs < 0) throw UsageError("--epochs must be non-negative");
  if (batch == 0) throw UsageError("--batch-size must be positive");
  if (ordering != "label" && ordering != "reward") throw UsageError("--ordering must be label or reward");
  RewardConfig rc;
  rc.weights = parse_weights(weights);
  rc.lambda = lambda;
  std::vector<CorruptionOp> ops;
  try {
    ops = parse_corruption_ops(ops_list);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto cases = load_dataset(dataset);
  const Data data = load_data(config_path, data_dir);
  const RewardEngine engine(data.registry, data.geocoder, rc);
  const auto examples = build_examples(cases, engine, snapshot_date(data.registry, today), seed, ops);

  OfflineConfig oc;
  oc.beta = beta;
  oc.lr = lr;
  oc.epochs = epochs;
  oc.batch_size = batch;
  oc.ordering = ordering == "reward" ? PairOrdering::kReward : PairOrdering::kLabel;
  oc.weights = rc.weights;
  oc.seed = seed;
  const auto res = train_offline(examples, oc);
  write_json(out, checkpoint_json(res.params, OnlineWeights{}));
  if (curve.empty()) curve = (fs::path(out).parent_path() / (fs::path(out).stem().string() + "_curve.csv")).string();
  write_file(curve, curve_csv(res.curve));
  std::cout << "pairs used " << res.pairs_used << ", filtered " << res.pairs_filtered << "\n"
            << "loss " << format_number(res.initial_loss) << " -> " << format_number(res.final_loss) << "\n"
            << "ranking accuracy " << format_number(ranking_accuracy(res.params.theta, examples)) << "\n"
            << "checkpoint " << out << " (version " << res.params.version << "), curve " << curve << "\n";
  return 0;
}

int cmd_gen_negatives(const std::string& dataset, const std::string& ops_list, std::uint64_t seed,
                      const std::string& out, const std::string& config_path, const std::string& data_dir) {
  std::vector<CorruptionOp> ops;
  try {
    ops = parse_corruption_ops(ops_list);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  auto cases = load_dataset(dataset);
  const Data data = load_data(config_path, data_dir);
  const RewardEngine engine(data.registry, data.geocoder);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    try {
      cases[i].y_minus = generate_negative(cases[i], ops, engine, seed + i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRejected) throw;
      cases[i].y_minus.reset();
      ++failed;
      std::cerr << "case " << cases[i].id << ": " << e.what() << "\n";
    }
  }
  save_cases(out, cases);
  std::cout << "wrote " << cases.size() - failed << " negatives to " << out;
  if (failed) std::cout << " (" << failed << " cases left without one)";
  std::cout << "\n";
  return 0;
}

int cmd_simulate(const SimulateOptions& opts, const std::string& dataset, const std::string& config_path,
                 const std::string& data_dir) {
  if (opts.n == 0) throw UsageError("--n must be positive");
  const Data data = load_data(config_path, data_dir);
  std::vector<CaseRecord> cases;
  if (!dataset.empty()) cases = load_dataset(dataset);
  const RewardEngine engine(data.registry, data.geocoder);
  const auto r = simulate_feedback(opts, engine, cases);
  json summary{{"submitted", r.submitted},
               {"accepted", r.accepted},
               {"rejected", r.rejected},
               {"skipped", r.skipped},
               {"server_errors", r.server_errors},
               {"versions", r.versions},
               {"training_rounds", r.versions.empty() ? 0 : r.versions.back() - r.versions.front()},
               {"initial_theta", r.initial_policy.at("theta")},
               {"final_theta", r.final_policy.at("theta")}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& in) {
  if (!fs::is_regular_file(in)) throw Error(ErrorCode::kIo, "missing report: " + in);
  EvalReport report;
  try {
    report = json::parse(read_file(in)).get<EvalReport>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, in + " is not a report: " + e.what());
  }
  std::cout << render_report_table(report);
  return 0;
}

int cmd_gen_world(const std::string& out, std::uint64_t seed, int zips, std::size_t n_cases, const std::string& as_of) {
  WorldConfig wc;
  wc.seed = seed;
  wc.zips = zips;
  if (!as_of.empty()) wc.as_of = Date::parse(as_of);
  const World w = generate_world(wc);
  write_world(w, out);
  save_cases(fs::path(out) / "cases.jsonl", generate_cases(w, n_cases, seed + 1));
  std::cout << "wrote " << w.registry.size() << " banks over " << zips << " ZIPs and " << n_cases << " cases to "
            << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"food4all: free-food question answering with preference learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir = "data";
  std::string today;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--config", config_path, "service config (JSON)")->required();
  serve->add_option("--port", port, "override server.port");

  std::string dataset, answers, out, in;
  bool live = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score answers against a case dataset");
  evaluate_cmd->add_option("--dataset", dataset)->required();
  evaluate_cmd->add_option("--answers", answers, "JSONL of {id, answer|answer_text}");
  evaluate_cmd->add_flag("--live", live, "run the orchestrator on each case against the fixtures");
  evaluate_cmd->add_option("--out", out)->required();

  int epochs = 1;
  double beta = 0.2, lr = 1e-5, lambda = 0.4;
  std::string weights = "0.3,0.3,0.3,0.1";
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  std::string ordering = "label";
  std::string ops = "item-drop,zip-shift,nutr-noise,hallucinate";
  std::string curve;
  auto* train = app.add_subcommand("train-offline", "preference-train the policy on a case dataset");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--epochs", epochs)->required();
  train->add_option("--beta", beta);
  train->add_option("--lr", lr);
  train->add_option("--weights", weights);
  train->add_option("--lambda", lambda);
  train->add_option("--batch-size", batch);
  train->add_option("--seed", seed);
  train->add_option("--ordering", ordering, "label or reward");
  train->add_option("--ops", ops, "corruptions for cases without y_minus");
  train->add_option("--out", out)->required();
  train->add_option("--curve", curve, "training curve CSV (default beside --out)");

  auto* negs = app.add_subcommand("gen-negatives", "fill y_minus by corrupting y_plus");
  negs->add_option("--dataset", dataset)->required();
  negs->add_option("--ops", ops)->required();
  negs->add_option("--seed", seed);
  negs->add_option("--out", out)->required();

  SimulateOptions sim;
  std::string prefer = "nearer";
  auto* simulate = app.add_subcommand("simulate-feedback", "drive the feedback endpoints with a simulated rater");
  simulate->add_option("--n", sim.n)->required();
  simulate->add_option("--prefer", prefer, "nearer or gold");
  simulate->add_option("--server", sim.server_url);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--parallelism", sim.parallelism);
  simulate->add_option("--questionnaire-every", sim.questionnaire_every);
  simulate->add_option("--dataset", dataset, "cases to draw queries from");

  auto* report = app.add_subcommand("report", "render a report as a table");
  report->add_option("--in", in)->required();

  int zips = 24;
  std::size_t n_cases = 200;
  std::string as_of;
  std::uint64_t world_seed = WorldConfig{}.seed;
  auto* world = app.add_subcommand("gen-world", "generate a synthetic registry, fixtures and cases");
  world->add_option("--out", out)->required();
  world->add_option("--seed", world_seed);
  world->add_option("--zips", zips);
  world->add_option("--cases", n_cases);
  world->add_option("--as-of", as_of, "snapshot date YYYY-MM-DD");

  for (auto* sub : {evaluate_cmd, train, negs, simulate}) {
    sub->add_option("--config", config_path, "take data paths from a service config");
    sub->add_option("--data", data_dir, "directory with registry.csv, geocode.csv, nutrients.jsonl, fixtures/");
  }
  for (auto* sub : {evaluate_cmd, train}) sub->add_option("--today", today, "snapshot date YYYY-MM-DD");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*serve) return cmd_serve(config_path, port);
    if (*evaluate_cmd) return cmd_evaluate(dataset, answers, live, out, config_path, data_dir, today);
    if (*train) {
      return cmd_train_offline(dataset, epochs, beta, lr, weights, lambda, batch, seed, ordering, ops, out, curve,
                               config_path, data_dir, today);
    }
    if (*negs) return cmd_gen_negatives(dataset, ops, seed, out, config_path, data_dir);
    if (*simulate) {
      try {
        sim.prefer = parse_rater_preference(prefer);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      return cmd_simulate(sim, dataset, config_path, data_dir);
    }
    if (*report) return cmd_report(in);
    if (*world) return cmd_gen_world(out, world_seed, zips, n_cases, as_of);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
