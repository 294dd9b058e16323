#include "food4all/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <regex>

#include "food4all/candidates.hpp"
#include "food4all/chat.hpp"
#include "food4all/error.hpp"
#include "food4all/heuristic_agent.hpp"
#include "food4all/rng.hpp"
#include "food4all/structured_output.hpp"
#include "httplib.h"

namespace food4all {

namespace fs = std::filesystem;

FilterVerdict filter_low_effort(std::span<const ResponseRecord> history, const ResponseRecord& candidate,
                                std::int64_t elapsed_ms, const FilterConfig& config) {
  if (elapsed_ms < config.min_elapsed_ms) {
    return {false, "response too fast to count (" + std::to_string(elapsed_ms) + " ms < " +
                       std::to_string(config.min_elapsed_ms) + " ms)"};
  }
  for (const auto& h : history) {
    if (h.key == candidate.key && h.response != candidate.response) {
      return {false, "conflicts with an earlier submission for " + candidate.key};
    }
  }
  if (config.identical_window > 0) {
    std::vector<const std::string*> recent;
    for (auto it = history.rbegin(); it != history.rend() && recent.size() < config.identical_window; ++it) {
      if (it->accepted && it->respondent == candidate.respondent) recent.push_back(&it->response);
    }
    if (recent.size() == config.identical_window &&
        std::all_of(recent.begin(), recent.end(), [&](const std::string* r) { return *r == *recent.front(); })) {
      return {false, "last " + std::to_string(config.identical_window) +
                         " responses from this respondent are identical"};
    }
  }
  return {};
}

namespace {

HttpReply fail(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", code}, {"message", message}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse: return 400;
    case ErrorCode::kNotFound:
    case ErrorCode::kToolNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kDuplicate: return 409;
    case ErrorCode::kEmptyAnswer:
    case ErrorCode::kRejected: return 422;
    case ErrorCode::kTransport:
    case ErrorCode::kProtocol: return 502;
    default: return 500;
  }
}

json answer_view(const CandidateAnswer& a) { return json{{"answer", a}, {"answer_text", format_structured_output(a)}}; }

json reward_view(const RewardVector& r) {
  return json{{"geo", r.geo}, {"items", r.items}, {"nutr", r.nutr}, {"hall", r.hall}};
}

std::string seq_id(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::int64_t elapsed_field(const json& body) {
  const auto it = body.find("client_elapsed_ms");
  if (it == body.end() || !it->is_number()) {
    throw Error(ErrorCode::kInvalidArgument, "client_elapsed_ms is required");
  }
  return static_cast<std::int64_t>(it->get<double>());
}

void write_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp, contents);
  fs::rename(tmp, path);
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)), buffer_(config_.training.buffer_capacity) {
  validate_config(config_);
  registry_ = Registry::load_csv(config_.data.registry);
  geocoder_ = Geocoder::load_csv(config_.data.geocode);
  nutrients_ = std::make_shared<const NutrientDb>(NutrientDb::load_jsonl(config_.data.nutrients));
  tools_ = make_toolkit(ToolkitConfig{config_.data.fixtures, nutrients_, config_.backends.search_url,
                                      config_.backends.social_url, config_.backends.api_key});
  if (config_.data.cases) {
    for (auto& c : load_cases(*config_.data.cases)) {
      cases_by_zip_.emplace(c.zip.str(), c);
      cases_by_query_.emplace(c.query, std::move(c));
    }
  }

  fs::create_directories(config_.state_dir / "sessions");
  PolicySnapshot initial;
  const fs::path saved = config_.state_dir / "checkpoint.json";
  if (fs::exists(saved)) {
    std::tie(initial.params, initial.weights) = parse_checkpoint(json::parse(read_file(saved)));
  } else if (config_.checkpoint) {
    std::tie(initial.params, initial.weights) = parse_checkpoint(json::parse(read_file(*config_.checkpoint)));
  }
  policy_ = std::make_shared<const PolicySnapshot>(initial);

  const fs::path log = config_.state_dir / "feedback.jsonl";
  log_fd_ = ::open(log.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + log.string());
  fail_rounds_ = config_.training.fail_rounds;
  trainer_ = std::thread([this] { train_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(train_mu_);
    stop_ = true;
  }
  train_cv_.notify_all();
  if (trainer_.joinable()) trainer_.join();
  if (log_fd_ >= 0) ::close(log_fd_);
}

Date Service::today() const { return config_.today ? *config_.today : Date::today(); }

std::shared_ptr<const PolicySnapshot> Service::current_policy() const {
  std::lock_guard lock(policy_mu_);
  return policy_;
}

std::size_t Service::buffer_fill() const {
  // Claimed events stay counted until their round commits.
  return buffer_.unconsumed();
}

HttpReply Service::query(const json& body) {
  if (!body.is_object() || !body.contains("query") || !body["query"].is_string() ||
      body["query"].get<std::string>().empty()) {
    return fail(400, "invalid_argument", "query is required");
  }
  SessionOptions opts;
  if (const auto z = body.find("zip"); z != body.end() && !z->is_null()) {
    const auto zip = z->is_string() ? ZipCode::try_parse(z->get<std::string>()) : std::nullopt;
    if (!zip) return fail(400, "invalid_zip", "zip must be five digits");
    opts.zip = *zip;
  }
  const std::string query = body["query"].get<std::string>();
  if (!opts.zip) {
    static const std::regex kZip(R"((?:^|\D)(\d{5})(?:\D|$))");
    std::smatch m;
    if (!std::regex_search(query, m, kZip)) return fail(400, "invalid_zip", "no ZIP code in the request or the query");
    opts.zip = ZipCode::parse(m[1].str());
  }
  const auto snapshot = current_policy();
  {
    std::lock_guard lock(sessions_mu_);
    opts.session_id = seq_id("s", next_session_++);
  }
  opts.session_date = today();
  opts.policy_version = snapshot->params.version;
  opts.audit_dir = config_.state_dir / "sessions" / opts.session_id;

  std::unique_ptr<ChatBackend> planner;
  std::unique_ptr<ChatBackend> executor;
  if (config_.backends.chat_url) {
    const std::chrono::milliseconds timeout(config_.backends.timeout_ms);
    planner = std::make_unique<HttpChatBackend>(*config_.backends.chat_url, config_.backends.chat_model,
                                                config_.backends.api_key, timeout);
    executor = std::make_unique<HttpChatBackend>(*config_.backends.chat_url, config_.backends.chat_model,
                                                 config_.backends.api_key, timeout);
  } else {
    planner = std::make_unique<HeuristicPlanner>();
    executor = std::make_unique<HeuristicExecutor>();
  }
  AgentConfig agent;
  agent.budget = config_.budget;

  SessionResult result;
  try {
    result = run_session(query, *planner, *executor, tools_, registry_, geocoder_, agent, opts);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) return fail(400, "invalid_argument", e.what());
    return fail(status_for(e.code()), to_string(e.code()), e.what());
  }
  if (!result.synthesis) return fail(422, "empty_answer", result.error.value_or("no food bank survived verification"));

  ServedSession s;
  s.id = opts.session_id;
  s.query = query;
  s.zip = *result.state.zip;
  s.policy_version = snapshot->params.version;
  s.pool = candidate_pool(result.synthesis->answer);
  const FeatureContext ctx{registry_, geocoder_, s.zip, result.synthesis->answer.item_names(), opts.session_date,
                           config_.reward.d_max_miles};
  for (const auto& c : s.pool) s.features.push_back(extract_features(c, ctx));
  s.served = served_index(snapshot->params.theta, s.features);
  const CandidateAnswer served = s.pool[s.served];

  json reply = answer_view(served);
  reply["session_id"] = s.id;
  reply["policy_version"] = s.policy_version;
  reply["status"] = to_string(result.state.status);
  reply["rounds"] = result.state.round;
  reply["token_spend"] = result.state.token_spend;
  reply["candidates"] = s.pool.size();
  {
    std::lock_guard lock(sessions_mu_);
    sessions_.emplace(s.id, std::move(s));
  }
  ++sessions_served_;

  const CaseRecord* gold = nullptr;
  if (auto it = cases_by_query_.find(query); it != cases_by_query_.end()) {
    gold = &it->second;
  } else if (auto jt = cases_by_zip_.find(result.state.zip->str()); jt != cases_by_zip_.end()) {
    gold = &jt->second;
  }
  if (gold) {
    auto eval = evaluate_case(*gold, Prediction{served, true}, registry_, geocoder_);
    std::lock_guard lock(metrics_mu_);
    window_.push_back(std::move(eval));
    while (window_.size() > config_.metrics_window) window_.pop_front();
  }
  return {200, reply};
}

HttpReply Service::candidates(const std::string& session_id, std::optional<std::uint64_t> seed) {
  ServedSession s;
  std::uint64_t pair_n = 0;
  {
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return fail(404, "not_found", "unknown session '" + session_id + "'");
    s = it->second;
    pair_n = next_pair_++;
  }
  const std::uint64_t draw_seed = seed ? *seed : 0x9e3779b97f4a7c15ULL * pair_n;
  const auto snapshot = current_policy();
  const auto alt = sample_alternative(snapshot->params.theta, s.pool, s.features, s.served, draw_seed);
  if (!alt) return fail(409, "degenerate_pool", "no candidate distinct from the served answer after 5 draws");

  IssuedPair pair{s.id, s.served, *alt, false};
  Rng order(draw_seed ^ 0x5bd1e995ULL);
  if (order.coin()) std::swap(pair.a, pair.b);
  const std::string pair_id = seq_id("p", pair_n);
  {
    std::lock_guard lock(sessions_mu_);
    pairs_.emplace(pair_id, pair);
  }
  return {200, json{{"pair_id", pair_id},
                    {"session_id", s.id},
                    {"seed", draw_seed},
                    {"y_a", s.pool[pair.a]},
                    {"y_b", s.pool[pair.b]},
                    {"y_a_text", format_structured_output(s.pool[pair.a])},
                    {"y_b_text", format_structured_output(s.pool[pair.b])}}};
}

HttpReply Service::preference(const json& body) {
  if (!body.is_object() || !body.contains("pair_id") || !body["pair_id"].is_string()) {
    return fail(400, "invalid_argument", "pair_id is required");
  }
  const std::string choice = body.value("choice", std::string{});
  if (choice != "a" && choice != "b") return fail(400, "invalid_argument", "choice must be \"a\" or \"b\"");
  std::int64_t elapsed = 0;
  try {
    elapsed = elapsed_field(body);
  } catch (const Error& e) {
    return fail(400, "invalid_argument", e.what());
  }
  const std::string pair_id = body["pair_id"].get<std::string>();
  IssuedPair pair;
  ServedSession s;
  {
    std::lock_guard lock(sessions_mu_);
    const auto it = pairs_.find(pair_id);
    if (it == pairs_.end()) return fail(404, "not_found", "unknown pair '" + pair_id + "'");
    pair = it->second;
    s = sessions_.at(pair.session_id);
  }
  const std::size_t win = choice == "a" ? pair.a : pair.b;
  const std::size_t lose = choice == "a" ? pair.b : pair.a;
  FeedbackEvent e;
  e.query = s.query;
  e.session_id = s.id;
  e.pair_id = pair_id;
  e.respondent = body.value("respondent", std::string("anonymous"));
  e.received_at = now_iso();
  e.payload = PairwiseFeedback{s.pool[win], s.pool[lose], s.features[win], s.features[lose]};
  return admit(std::move(e), ResponseRecord{body.value("respondent", std::string("anonymous")), pair_id, choice},
               elapsed);
}

HttpReply Service::questionnaire(const json& body) {
  if (!body.is_object() || !body.contains("session_id") || !body["session_id"].is_string()) {
    return fail(400, "invalid_argument", "session_id is required");
  }
  if (!body.contains("accurate") || !body["accurate"].is_boolean()) {
    return fail(400, "invalid_argument", "accurate must be true or false");
  }
  Questionnaire q;
  std::int64_t elapsed = 0;
  try {
    q.accurate = body["accurate"].get<bool>();
    q.flagged = body.value("flagged", std::set<std::string>{});
    elapsed = elapsed_field(body);
  } catch (const json::exception&) {
    return fail(400, "invalid_argument", "flagged must be a list of strings");
  } catch (const Error& e) {
    return fail(400, "invalid_argument", e.what());
  }
  RewardVector reward;
  try {
    reward = map_questionnaire(q);
  } catch (const Error& e) {
    return fail(e.code() == ErrorCode::kRejected ? 422 : 400, to_string(e.code()), e.what());
  }
  const std::string session_id = body["session_id"].get<std::string>();
  ServedSession s;
  {
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return fail(404, "not_found", "unknown session '" + session_id + "'");
    s = it->second;
  }
  std::string response = q.accurate ? "yes" : "no:";
  if (!q.accurate) {
    for (const auto& f : q.flagged) response += f + ",";
  }
  FeedbackEvent e;
  e.query = s.query;
  e.session_id = s.id;
  e.respondent = body.value("respondent", std::string("anonymous"));
  e.received_at = now_iso();
  e.payload = QuestionnaireFeedback{s.pool[s.served], q, reward, s.features, s.served};
  auto reply = admit(std::move(e), ResponseRecord{body.value("respondent", std::string("anonymous")),
                                                  "q:" + session_id, response},
                     elapsed);
  if (reply.status == 200) reply.body["reward"] = reward_view(reward);
  return reply;
}

HttpReply Service::admit(FeedbackEvent event, const ResponseRecord& record, std::int64_t elapsed_ms) {
  std::unique_lock lock(feedback_mu_);
  {
    std::lock_guard slock(sessions_mu_);
    if (event.is_pairwise()) {
      if (pairs_.at(event.pair_id).answered) {
        return fail(409, "duplicate", "pair " + event.pair_id + " already has a recorded preference");
      }
    } else if (sessions_.at(event.session_id).questionnaire_done) {
      return fail(409, "duplicate", "session " + event.session_id + " already has a questionnaire");
    }
  }
  const auto verdict = filter_low_effort(history_, record, elapsed_ms, config_.filter);
  ResponseRecord rec = record;
  rec.accepted = verdict.accepted;
  history_.push_back(rec);
  if (!verdict.accepted) {
    ++feedback_rejected_;
    lock.unlock();
    return {200, json{{"accepted", false}, {"reason", verdict.reason}, {"buffer_fill", buffer_fill()}}};
  }
  event.seq = appended_ + 1;
  try {
    persist(event);
  } catch (const Error& e) {
    history_.back().accepted = false;
    return fail(500, "io", e.what());
  }
  appended_ = buffer_.append(event);
  {
    std::lock_guard slock(sessions_mu_);
    if (event.is_pairwise()) {
      pairs_.at(event.pair_id).answered = true;
    } else {
      sessions_.at(event.session_id).questionnaire_done = true;
    }
  }
  ++feedback_accepted_;
  const std::size_t fill = buffer_fill();
  lock.unlock();
  {
    std::lock_guard tlock(train_mu_);
    blocked_ = false;
  }
  train_cv_.notify_all();
  return {200, json{{"accepted", true}, {"buffer_fill", fill}, {"seq", event.seq}}};
}

void Service::persist(const FeedbackEvent& event) {
  const std::string line = json(event).dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(log_fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, "feedback log write failed");
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error(ErrorCode::kIo, "feedback log fsync failed");
}

HttpReply Service::metrics() const {
  json body{{"policy_version", current_policy()->params.version},
            {"buffer_fill", buffer_fill()},
            {"buffer_capacity", buffer_.capacity()},
            {"buffer_evicted", buffer_.evicted()},
            {"trigger", config_.training.online.trigger},
            {"sessions_served", sessions_served_.load()},
            {"feedback_accepted", feedback_accepted_.load()},
            {"feedback_rejected", feedback_rejected_.load()},
            {"training_rounds", training_rounds_.load()},
            {"training_failures", training_failures_.load()}};
  {
    std::lock_guard lock(train_mu_);
    body["training_in_progress"] = training_;
  }
  std::vector<CaseEvaluation> recent;
  {
    std::lock_guard lock(metrics_mu_);
    recent.assign(window_.begin(), window_.end());
  }
  if (recent.empty()) {
    body["report"] = nullptr;
  } else {
    json report = summarize(std::move(recent));
    report.erase("per_case");
    body["report"] = report;
  }
  return {200, body};
}

HttpReply Service::policy() const {
  const auto p = current_policy();
  json names = json::array();
  for (const char* n : kFeatureNames) names.push_back(n);
  return {200, json{{"version", p->params.version},
                    {"theta", p->params.theta},
                    {"feature_names", names},
                    {"online_weights",
                     {{"w", p->weights.w},
                      {"alpha", p->weights.alpha},
                      {"baseline", p->weights.baseline},
                      {"baseline_decay", p->weights.baseline_decay}}}}};
}

bool Service::round_due() const { return !blocked_ && buffer_.pending() >= config_.training.online.trigger; }

void Service::train_loop() {
  std::unique_lock lock(train_mu_);
  for (;;) {
    train_cv_.wait(lock, [this] { return stop_ || round_due(); });
    if (stop_) return;
    training_ = true;
    bool inject = false;
    if (fail_rounds_ > 0) {
      --fail_rounds_;
      inject = true;
    }
    lock.unlock();

    const auto batch = buffer_.claim(config_.training.online.trigger);
    std::vector<std::uint64_t> seqs;
    for (const auto& e : batch) seqs.push_back(e.seq);
    bool ok = false;
    try {
      if (config_.training.simulated_delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(config_.training.simulated_delay_ms));
      }
      if (inject) throw Error(ErrorCode::kIo, "injected training failure");
      const auto current = current_policy();
      const auto res = online_update(batch, current->params, current->weights, config_.training.online);
      if (!res.updated) throw Error(ErrorCode::kPrecondition, res.reason);
      publish(PolicySnapshot{res.params, res.weights});
      buffer_.commit(seqs);
      ++training_rounds_;
      ok = true;
    } catch (const std::exception& e) {
      buffer_.release(seqs);
      ++training_failures_;
      incident(std::string("training round failed, keeping version ") +
               std::to_string(current_policy()->params.version) + ": " + e.what());
    }

    lock.lock();
    training_ = false;
    if (!ok) blocked_ = true;
    train_cv_.notify_all();
  }
}

void Service::publish(const PolicySnapshot& snapshot) {
  write_atomic(config_.state_dir / "checkpoint.json", checkpoint_json(snapshot.params, snapshot.weights).dump(2) + "\n");
  auto next = std::make_shared<const PolicySnapshot>(snapshot);
  std::lock_guard lock(policy_mu_);
  policy_ = std::move(next);
}

void Service::incident(const std::string& what) {
  std::cerr << "food4all: " << what << "\n";
  try {
    const std::string line = json{{"at", now_iso()}, {"incident", what}}.dump() + "\n";
    std::FILE* f = std::fopen((config_.state_dir / "incidents.jsonl").c_str(), "a");
    if (f) {
      std::fputs(line.c_str(), f);
      std::fclose(f);
    }
  } catch (...) {
  }
}

bool Service::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(train_mu_);
  return train_cv_.wait_for(lock, timeout, [this] { return !training_ && !round_due(); });
}

void Service::inject_training_failures(int rounds) {
  std::lock_guard lock(train_mu_);
  fail_rounds_ = rounds;
}

void Service::mount(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  // Unrouted paths and bad methods come back from httplib with an empty body.
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const char* code = res.status == 404 ? "not_found" : "http_error";
    res.set_content(json{{"error", code}, {"message", req.method + " " + req.path}}.dump(), "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });

  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto with_body = [send](auto fn) {
    return [send, fn](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        send(res, fail(400, "invalid_json", e.what()));
        return;
      }
      send(res, fn(body));
    };
  };
  server.Post("/v1/query", with_body([this](const json& b) { return query(b); }));
  server.Post("/v1/feedback/preference", with_body([this](const json& b) { return preference(b); }));
  server.Post("/v1/feedback/questionnaire", with_body([this](const json& b) { return questionnaire(b); }));
  server.Get("/v1/candidates", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("session")) {
      send(res, fail(400, "invalid_argument", "session parameter is required"));
      return;
    }
    std::optional<std::uint64_t> seed;
    if (req.has_param("seed")) {
      try {
        seed = std::stoull(req.get_param_value("seed"));
      } catch (const std::exception&) {
        send(res, fail(400, "invalid_argument", "seed must be a non-negative integer"));
        return;
      }
    }
    send(res, candidates(req.get_param_value("session"), seed));
  });
  server.Get("/v1/metrics", [this, send](const httplib::Request&, httplib::Response& res) { send(res, metrics()); });
  server.Get("/v1/policy", [this, send](const httplib::Request&, httplib::Response& res) { send(res, policy()); });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send(res, fail(status_for(e.code()), to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
      send(res, fail(500, "internal", e.what()));
    }
  });
}

namespace {
httplib::Server* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

void run_server(const ServiceConfig& config, std::ostream& log) {
  Service service(config);
  httplib::Server server;
  service.mount(server);
  if (!server.bind_to_port(config.host, config.port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + config.host + ":" + std::to_string(config.port));
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  log << "food4all listening on http://" << config.host << ":" << config.port << " (policy version "
      << service.current_policy()->params.version << ")" << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
}

}  // namespace food4all
