#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>

#include "food4all/config.hpp"
#include "food4all/data_io.hpp"
#include "food4all/error.hpp"
#include "food4all/http_client.hpp"
#include "food4all/service.hpp"
#include "food4all/simulate.hpp"
#include "food4all/structured_output.hpp"
#include "support.hpp"

using namespace food4all;
using food4all::support::ServedService;
using food4all::support::TempDir;
using food4all::support::WorldOnDisk;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

ResponseRecord rec(const std::string& who, const std::string& key, const std::string& resp, bool accepted = true) {
  return ResponseRecord{who, key, resp, accepted};
}

// Serves a query and hands back the session id.
std::string serve(Service& s, const std::string& zip) {
  const auto r = s.query(json{{"query", "I need free food near " + zip}});
  EXPECT_EQ(r.status, 200) << r.body.dump();
  return r.body.value("session_id", "");
}

json preference(const std::string& pair_id, const std::string& choice, const std::string& who,
                std::int64_t elapsed = 3000) {
  return json{{"pair_id", pair_id}, {"choice", choice}, {"respondent", who}, {"client_elapsed_ms", elapsed}};
}

// Issues pairs until one comes back; small pools can be degenerate.
std::string pair_for(Service& s, const std::string& session) {
  for (std::uint64_t seed = 1; seed < 64; ++seed) {
    const auto r = s.candidates(session, seed);
    if (r.status == 200) return r.body.at("pair_id");
  }
  ADD_FAILURE() << "no pair for " << session;
  return "";
}

}  // namespace

// ---- low-effort filter ----

TEST(Filter, TooFast) {
  const auto v = filter_low_effort({}, rec("r", "p-1", "a"), 1999);
  EXPECT_FALSE(v.accepted);
  EXPECT_EQ(v.reason, "response too fast to count (1999 ms < 2000 ms)");
  EXPECT_TRUE(filter_low_effort({}, rec("r", "p-1", "a"), 2000).accepted);
}

TEST(Filter, ContradictionOnSameKey) {
  const std::vector<ResponseRecord> h{rec("r", "p-1", "a")};
  EXPECT_FALSE(filter_low_effort(h, rec("r", "p-1", "b"), 5000).accepted);
  EXPECT_TRUE(filter_low_effort(h, rec("r", "p-2", "b"), 5000).accepted);
}

TEST(Filter, IdenticalStreak) {
  std::vector<ResponseRecord> h;
  for (int i = 0; i < 10; ++i) h.push_back(rec("r", "p-" + std::to_string(i), "a"));
  EXPECT_FALSE(filter_low_effort(h, rec("r", "p-x", "b"), 5000).accepted);
  EXPECT_TRUE(filter_low_effort(h, rec("other", "p-x", "a"), 5000).accepted);
  h[3].accepted = false;  // rejected answers do not count toward the streak
  EXPECT_TRUE(filter_low_effort(h, rec("r", "p-x", "a"), 5000).accepted);
  h[3].response = "b";
  h[3].accepted = true;
  EXPECT_TRUE(filter_low_effort(h, rec("r", "p-x", "a"), 5000).accepted);
}

// ---- config ----

TEST(Config, ParsesSectionsAndResolvesPaths) {
  const auto j = json::parse(R"({
    "server": {"host": "0.0.0.0", "port": 9000},
    "budget": {"J_max": 1000, "T_max": 5},
    "reward": {"weights": [0.25, 0.25, 0.25, 0.25], "lambda": 0.5, "D_max": 8, "geo_aggregation": "min"},
    "training": {"trigger": 64, "lr": 1e-4, "buffer_capacity": 10},
    "backends": {"chat_url": "http://127.0.0.1:1", "tool_urls": {"search": "http://s", "social": "http://p"}},
    "data": {"registry": "d/registry.csv", "cases": "/abs/cases.jsonl"},
    "clock": {"today": "2025-06-01"},
    "state_dir": "st"
  })");
  const auto c = parse_config(j, "/etc/f4a");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.budget.j_max, 1000);
  EXPECT_EQ(c.budget.t_max, 5);
  EXPECT_EQ(c.reward.weights.hall, 0.25);
  EXPECT_EQ(c.reward.geo_aggregation, GeoAggregation::kMin);
  EXPECT_EQ(c.training.online.trigger, 64u);
  EXPECT_EQ(c.training.online.lr, 1e-4);
  EXPECT_EQ(c.training.buffer_capacity, 10u);
  EXPECT_EQ(*c.backends.search_url, "http://s");
  EXPECT_EQ(c.data.registry, fs::path("/etc/f4a/d/registry.csv"));
  EXPECT_EQ(*c.data.cases, fs::path("/abs/cases.jsonl"));
  EXPECT_EQ(c.state_dir, fs::path("/etc/f4a/st"));
  EXPECT_EQ(c.today->iso(), "2025-06-01");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* bad : {R"({"servr": {}})", R"({"budget": {"J_max": -1}})", R"({"reward": {"weights": [1, 2]}})",
                          R"({"clock": {"today": "June"}})"}) {
    try {
      parse_config(json::parse(bad));
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == ErrorCode::kInvalidArgument || e.code() == ErrorCode::kParse) << bad;
    }
  }
}

TEST(Config, EnvOverridesAndSecretsStayOut) {
  ServiceConfig c;
  ::setenv("FOOD4ALL_BACKEND_URL", "http://127.0.0.1:5555", 1);
  ::setenv("FOOD4ALL_API_KEY", "sk-test", 1);
  apply_env(c);
  ::unsetenv("FOOD4ALL_BACKEND_URL");
  ::unsetenv("FOOD4ALL_API_KEY");
  EXPECT_EQ(*c.backends.chat_url, "http://127.0.0.1:5555");
  EXPECT_EQ(c.backends.api_key, "sk-test");
  EXPECT_EQ(config_json(c).dump().find("sk-test"), std::string::npos);
}

TEST(Config, MissingDataFileNamed) {
  ServiceConfig c;
  c.data.registry = "/nonexistent/registry.csv";
  try {
    validate_config(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/registry.csv"), std::string::npos);
  }
}

TEST(Config, RepoConfigLoads) {
  const auto c = load_config(fs::path(FOOD4ALL_DATA).parent_path() / "config" / "food4all.json");
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(c.training.online.trigger, 128u);
}

// ---- service handlers ----

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = disk.service_config();
    cfg.training.online.trigger = 4;
    zip = disk.world.geocoder.zips().front().str();
  }
  WorldOnDisk disk;
  ServiceConfig cfg;
  std::string zip;
};

TEST_F(ServiceTest, QueryValidation) {
  Service s(cfg);
  EXPECT_EQ(s.query(json::object()).status, 400);
  EXPECT_EQ(s.query(json{{"query", "food"}, {"zip", "12"}}).body["error"], "invalid_zip");
  EXPECT_EQ(s.query(json{{"query", "food please"}}).status, 400);
  const auto ok = s.query(json{{"query", "groceries"}, {"zip", zip}});
  ASSERT_EQ(ok.status, 200) << ok.body.dump();
  EXPECT_EQ(ok.body["session_id"], "s-000001");
  EXPECT_EQ(ok.body["policy_version"], 0);
  EXPECT_EQ(ok.body["status"], "done");
  EXPECT_GE(ok.body["candidates"].get<int>(), 2);
  // The text form carries no registry ids or servings; everything else must survive the round trip.
  auto answer = ok.body["answer"].get<CandidateAnswer>();
  for (auto& b : answer.banks) {
    b.registry_id.reset();
    for (auto& i : b.items) i.serving.clear();
  }
  EXPECT_EQ(parse_structured_output(ok.body["answer_text"].get<std::string>()).answer, answer);
  EXPECT_TRUE(fs::exists(cfg.state_dir / "sessions" / "s-000001" / "answer.txt"));
}

TEST_F(ServiceTest, PairsAndPreferences) {
  Service s(cfg);
  const auto sid = serve(s, zip);
  EXPECT_EQ(s.candidates("s-999999", 1).status, 404);
  const auto c1 = s.candidates(sid, 5);
  if (c1.status == 200) {
    const auto c2 = s.candidates(sid, 5);
    EXPECT_EQ(c1.body["y_a"], c2.body["y_a"]);  // same seed, same pair and order
    EXPECT_EQ(c1.body["y_b"], c2.body["y_b"]);
    EXPECT_NE(c1.body["y_a"], c1.body["y_b"]);
    EXPECT_NE(c1.body["pair_id"], c2.body["pair_id"]);
  } else {
    EXPECT_EQ(c1.status, 409);
  }
  const auto pid = pair_for(s, sid);
  EXPECT_EQ(s.preference(json{{"pair_id", pid}, {"choice", "c"}, {"client_elapsed_ms", 3000}}).status, 400);
  EXPECT_EQ(s.preference(json{{"pair_id", pid}, {"choice", "a"}}).status, 400);
  EXPECT_EQ(s.preference(preference("p-999999", "a", "r")).status, 404);
  const auto fast = s.preference(preference(pid, "a", "r", 500));
  EXPECT_EQ(fast.status, 200);
  EXPECT_FALSE(fast.body["accepted"].get<bool>());
  const auto ok = s.preference(preference(pid, "a", "r2"));
  EXPECT_TRUE(ok.body["accepted"].get<bool>());
  EXPECT_EQ(ok.body["buffer_fill"], 1);
  EXPECT_EQ(s.preference(preference(pid, "a", "r3")).status, 409);
  // Persisted before it was acknowledged.
  EXPECT_EQ(read_jsonl(cfg.state_dir / "feedback.jsonl").size(), 1u);
}

TEST_F(ServiceTest, Questionnaire) {
  Service s(cfg);
  const auto sid = serve(s, zip);
  auto q = [&](json extra) {
    json b{{"session_id", sid}, {"client_elapsed_ms", 4000}, {"respondent", "rq"}};
    b.update(extra);
    return s.questionnaire(b);
  };
  EXPECT_EQ(s.questionnaire(json{{"accurate", true}}).status, 400);
  EXPECT_EQ(q(json{{"accurate", false}, {"flagged", {"vibes"}}}).status, 400);
  EXPECT_EQ(q(json{{"accurate", false}}).status, 422);
  EXPECT_EQ(s.questionnaire(json{{"session_id", "s-404"}, {"accurate", true}, {"client_elapsed_ms", 4000}}).status, 404);
  const auto ok = q(json{{"accurate", false}, {"flagged", {"location", "nutrition"}}});
  ASSERT_EQ(ok.status, 200) << ok.body.dump();
  EXPECT_TRUE(ok.body["accepted"].get<bool>());
  EXPECT_EQ(ok.body["reward"]["geo"], -1.0);
  EXPECT_EQ(ok.body["reward"]["nutr"], 0.0);
  EXPECT_EQ(ok.body["reward"]["items"], 1.0);
  EXPECT_EQ(q(json{{"accurate", true}}).status, 409);
}

TEST_F(ServiceTest, TriggerTrainsAndPublishes) {
  Service s(cfg);
  std::vector<std::string> sessions;
  for (const auto& z : disk.world.geocoder.zips()) sessions.push_back(serve(s, z.str()));
  int sent = 0;
  for (std::size_t i = 0; sent < 4 && i < sessions.size(); ++i) {
    json body{{"session_id", sessions[i]},
              {"accurate", i % 2 == 0},
              {"respondent", "t" + std::to_string(i)},
              {"client_elapsed_ms", 2500}};
    if (i % 2 != 0) body["flagged"] = json::array({"location"});
    const auto r = s.questionnaire(body);
    ASSERT_EQ(r.status, 200);
    sent += r.body["accepted"].get<bool>() ? 1 : 0;
  }
  ASSERT_EQ(sent, 4);
  ASSERT_TRUE(s.wait_idle(10s));
  const auto m = s.metrics().body;
  EXPECT_EQ(m["training_rounds"], 1);
  EXPECT_EQ(m["policy_version"], 1);
  EXPECT_EQ(m["buffer_fill"], 0);
  EXPECT_EQ(s.policy().body["version"], 1);
  const auto saved = parse_checkpoint(json::parse(read_file(cfg.state_dir / "checkpoint.json")));
  EXPECT_EQ(saved.first, s.current_policy()->params);
}

TEST_F(ServiceTest, RestartResumesCheckpoint) {
  {
    Service s(cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto sid = serve(s, disk.world.geocoder.zips()[i].str());
      s.questionnaire(json{{"session_id", sid}, {"accurate", true}, {"respondent", "x" + std::to_string(i)},
                           {"client_elapsed_ms", 2500}});
    }
    ASSERT_TRUE(s.wait_idle(10s));
    ASSERT_EQ(s.current_policy()->params.version, 1);
  }
  Service again(cfg);
  EXPECT_EQ(again.current_policy()->params.version, 1);
}

TEST_F(ServiceTest, FailedRoundKeepsVersionAndRetries) {
  Service s(cfg);
  s.inject_training_failures(1);
  std::vector<std::string> sessions;
  for (const auto& z : disk.world.geocoder.zips()) sessions.push_back(serve(s, z.str()));
  for (std::size_t i = 0; i < 4; ++i) {
    s.questionnaire(json{{"session_id", sessions[i]}, {"accurate", true}, {"respondent", "f" + std::to_string(i)},
                         {"client_elapsed_ms", 2500}});
  }
  ASSERT_TRUE(s.wait_idle(10s));
  auto m = s.metrics().body;
  EXPECT_EQ(m["training_failures"], 1);
  EXPECT_EQ(m["policy_version"], 0);
  EXPECT_EQ(m["buffer_fill"], 4);  // released back, nothing lost
  EXPECT_TRUE(fs::exists(cfg.state_dir / "incidents.jsonl"));
  // The next accepted event unblocks training and the retry succeeds.
  s.questionnaire(json{{"session_id", sessions[4]}, {"accurate", true}, {"respondent", "f4"},
                       {"client_elapsed_ms", 2500}});
  ASSERT_TRUE(s.wait_idle(10s));
  m = s.metrics().body;
  EXPECT_EQ(m["policy_version"], 1);
  EXPECT_EQ(m["buffer_fill"], 1);
}

TEST_F(ServiceTest, RollingMetricsWithGoldCases) {
  const auto cases = generate_cases(disk.world, 6, 2);
  save_cases(disk.dir / "cases.jsonl", cases);
  cfg.data.cases = disk.dir / "cases.jsonl";
  Service s(cfg);
  EXPECT_TRUE(s.metrics().body["report"].is_null());
  s.query(json{{"query", cases[0].query}});
  const auto report = s.metrics().body["report"];
  ASSERT_TRUE(report.is_object());
  EXPECT_EQ(report["n"], 1);
  EXPECT_FALSE(report.contains("per_case"));
}

TEST_F(ServiceTest, DeadChatBackendIs502) {
  cfg.backends.chat_url = "http://127.0.0.1:9";
  cfg.backends.timeout_ms = 2000;
  Service s(cfg);
  const auto r = s.query(json{{"query", "food near " + zip}});
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(r.body["error"], "transport_error");
}

// ---- over HTTP ----

TEST_F(ServiceTest, HttpRoutesAndCors) {
  ServedService srv(cfg);
  HttpClient c(srv.url());
  const auto q = c.post_json("/v1/query", json{{"query", "food near " + zip}}.dump());
  ASSERT_EQ(q.status, 200) << q.body;
  const auto sid = json::parse(q.body)["session_id"].get<std::string>();
  const auto cand = c.get("/v1/candidates", {{"session", sid}, {"seed", "3"}}).status;
  EXPECT_TRUE(cand == 200 || cand == 409) << cand;
  EXPECT_EQ(c.get("/v1/candidates").status, 400);
  EXPECT_EQ(c.get("/v1/candidates", {{"session", sid}, {"seed", "x"}}).status, 400);
  EXPECT_EQ(c.post_json("/v1/query", "{not json").status, 400);
  EXPECT_EQ(json::parse(c.get("/v1/policy").body)["feature_names"].size(), 6u);
  EXPECT_EQ(json::parse(c.get("/v1/metrics").body)["sessions_served"], 1);

  httplib::Client raw("127.0.0.1", srv.port);
  const auto pre = raw.Options("/v1/query");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto missing = raw.Post("/v1/feedback/pair", "{}", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"], "not_found");
  const auto bad = raw.Post("/v1/query", "{}", "application/json");
  EXPECT_EQ(json::parse(bad->body)["error"], "invalid_argument") << bad->body;
  const auto m = raw.Get("/v1/metrics");
  EXPECT_EQ(m->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, SimulatorDrivesTwoRounds) {
  cfg.training.online.trigger = 16;
  ServedService srv(cfg);
  SimulateOptions so;
  so.n = 32;
  so.server_url = srv.url();
  const RewardEngine engine(disk.world.registry, disk.world.geocoder);
  const auto r = simulate_feedback(so, engine, std::span<const CaseRecord>{});
  EXPECT_EQ(r.accepted, 32u);
  EXPECT_EQ(r.rejected, 0u);
  EXPECT_EQ(r.final_policy["version"], 2);
  EXPECT_EQ(r.versions.front(), 0);
  EXPECT_EQ(r.versions.back(), 2);
}

TEST(RunServer, BindFailureIsIoError) {
  WorldOnDisk disk;
  auto cfg = disk.service_config();
  // A plain listener without SO_REUSEPORT, so the second bind must fail.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(fd, 1), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  cfg.port = ntohs(addr.sin_port);
  std::ostringstream log;
  try {
    run_server(cfg, log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  ::close(fd);
}
