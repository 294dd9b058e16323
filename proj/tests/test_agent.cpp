#include <gtest/gtest.h>

#include "food4all/agent.hpp"
#include "food4all/chat.hpp"
#include "food4all/data_io.hpp"
#include "food4all/digest.hpp"
#include "food4all/error.hpp"
#include "food4all/heuristic_agent.hpp"
#include "food4all/tools.hpp"
#include "support.hpp"

using namespace food4all;
using food4all::support::TempDir;
using food4all::support::WorldOnDisk;
namespace fs = std::filesystem;

namespace {

struct Toolbox {
  WorldOnDisk disk;
  ToolRegistry tools = make_toolkit(ToolkitConfig{disk.dir / "fixtures",
                                                  std::make_shared<const NutrientDb>(disk.world.nutrients),
                                                  std::nullopt, std::nullopt, ""});
  ToolContext ctx{disk.world.as_of, disk.dir / "audit"};
  ZipCode zip() const { return disk.world.geocoder.zips().front(); }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

// ---- tools ----

TEST(Tools, ToolkitHasFiveValidatedTools) {
  Toolbox t;
  EXPECT_EQ(t.tools.names(), (std::vector<std::string>{"doc", "search", "social", "table_eval", "write"}));
  EXPECT_EQ(code_of([&] { t.tools.lookup("teleport"); }), ErrorCode::kToolNotFound);
  EXPECT_EQ(code_of([&] { t.tools.call("search", json{{"zip", 94102}}, t.ctx); }), ErrorCode::kInvalidArgument);
  ToolRegistry r;
  r.register_tool(doc_spec(), doc_tool());
  EXPECT_EQ(code_of([&] { r.register_tool(doc_spec(), doc_tool()); }), ErrorCode::kDuplicate);
}

TEST(Tools, ResultsAreSchemaChecked) {
  ToolRegistry r;
  auto spec = search_spec();
  r.register_tool(spec, [](const json&, const ToolContext&) { return json{{"banks", "not a list"}}; });
  EXPECT_EQ(code_of([&] { r.call("search", json{{"zip", "94102"}}, ToolContext{}); }), ErrorCode::kProtocol);
}

TEST(Tools, SearchByZipAndItem) {
  Toolbox t;
  const auto banks = t.tools.call("search", json{{"zip", t.zip().str()}}, t.ctx);
  ASSERT_FALSE(banks.at("banks").empty());
  EXPECT_TRUE(banks["banks"][0].contains("document"));
  EXPECT_TRUE(t.tools.call("search", json{{"zip", "00000"}}, t.ctx).at("banks").empty());
  const auto item = t.tools.call("search", json{{"item_name", "Canned Black Beans"}}, t.ctx);
  EXPECT_EQ(item["source"], "usda");
  EXPECT_EQ(item["item"]["nutrients"]["protein_g"], 7.0);
  EXPECT_EQ(code_of([&] { t.tools.call("search", json{{"item_name", "unobtainium"}}, t.ctx); }), ErrorCode::kNotFound);
}

TEST(Tools, SocialClampsFuturePosts) {
  Toolbox t;
  bool saw_flag = false;
  for (const auto& rec : t.disk.world.registry.records()) {
    const auto posts = t.tools.call("social", json{{"bank_name", rec.name}}, t.ctx).at("posts");
    for (const auto& p : posts) {
      EXPECT_LE(p.at("observed_at").get<std::string>(), t.ctx.session_date.iso());
      saw_flag = saw_flag || p.contains("clamped");
    }
  }
  EXPECT_TRUE(t.tools.call("social", json{{"bank_name", "Nobody Here"}}, t.ctx).at("posts").empty());
  (void)saw_flag;
}

TEST(Tools, DocParsesFlyers) {
  const auto r = parse_document(
      "Oak Family Food Share (94102):\n"
      "- Canned Black Beans (1/2 cup, 130 g) — 120 kcal, Protein: 7 g\n"
      "- Milk (1 cup, 2%)\n"
      "random prose\n");
  const auto& items = r.at("items");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0]["name"], "canned black bean");
  EXPECT_EQ(items[0]["bank"]["zip"], "94102");
  EXPECT_EQ(items[0]["nutrients"]["kcal"], 120.0);
  EXPECT_EQ(items[0]["nutrients"]["protein_g"], 7.0);
  EXPECT_FALSE(items[0]["nutrients"].contains("fat_g"));
  EXPECT_TRUE(parse_document("   ").at("items").empty());
}

TEST(Tools, WriteStaysInsideAuditDir) {
  Toolbox t;
  const auto r = t.tools.call("write", json{{"path", "out/answer.json"}, {"payload", R"({"k": 1})"}}, t.ctx);
  EXPECT_EQ(r.at("sha256"), sha256_hex(read_file(t.ctx.audit_dir / "out/answer.json")));
  EXPECT_EQ(code_of([&] { t.tools.call("write", json{{"path", "../x"}, {"payload", "x"}}, t.ctx); }),
            ErrorCode::kRejected);
  EXPECT_EQ(code_of([&] { t.tools.call("write", json{{"path", "/etc/x"}, {"payload", "x"}}, t.ctx); }),
            ErrorCode::kRejected);
}

TEST(Tools, HttpSearchAgainstLocalServer) {
  httplib::Server srv;
  srv.Get("/search", [](const httplib::Request& req, httplib::Response& res) {
    const json body{{"banks", json::array({{{"name", "Remote Pantry"},
                                            {"zip", req.get_param_value("zip")},
                                            {"registry_id", nullptr},
                                            {"source", "web"},
                                            {"observed_at", "2025-05-30"},
                                            {"document", ""}}})}};
    res.set_content(body.dump(), "application/json");
  });
  srv.Get("/broken", [](const httplib::Request&, httplib::Response& res) { res.set_content("{", "application/json"); });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  const auto fn = http_search_tool(base + "/search", "", nullptr);
  const auto r = fn(json{{"zip", "94110"}}, ToolContext{});
  EXPECT_EQ(r["banks"][0]["zip"], "94110");
  const auto broken = http_search_tool(base + "/broken", "", nullptr);
  EXPECT_EQ(code_of([&] { broken(json{{"zip", "94110"}}, ToolContext{}); }), ErrorCode::kProtocol);
  srv.stop();
  th.join();
  EXPECT_EQ(code_of([&] { fn(json{{"zip", "94110"}}, ToolContext{}); }), ErrorCode::kTransport);
}

// ---- chat ----

TEST(Chat, ScriptedReplayAndRecording) {
  TempDir tmp;
  const std::vector<ChatMessage> msgs{{"system", "s"}, {"user", "u"}};
  FunctionChatBackend live([](const ChatRequest& r) {
    return ChatResponse{"echo:" + r.messages.back().content, TokenUsage{3, 4}};
  });
  RecordingChatBackend rec(live, tmp.path());
  rec.complete(ChatRequest{msgs});
  EXPECT_TRUE(fs::exists(tmp / (message_digest(msgs) + ".json")));

  auto replay = ScriptedChatBackend::from_directory(tmp.path());
  EXPECT_EQ(replay.size(), 1u);
  const auto r = replay.complete(ChatRequest{msgs});
  EXPECT_EQ(r.text, "echo:u");
  EXPECT_EQ(r.usage->total(), 7);
  EXPECT_EQ(replay.complete(ChatRequest{{{"user", "other"}}}).text, kNoScriptedReply);
  EXPECT_EQ(replay.misses(), 1u);
  EXPECT_NE(message_digest({{"user", "a"}, {"user", "b"}}), message_digest({{"user", "ab"}}));
}

TEST(Chat, HttpBackendSpeaksChatCompletions) {
  httplib::Server srv;
  json seen;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    seen["auth"] = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":2}})",
                    "application/json");
  });
  srv.Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpChatBackend ok(base, "gpt-oss-20b", "secret");
  ChatRequest req{{{"user", "hello"}}};
  req.seed = 9;
  const auto r = ok.complete(req);
  EXPECT_EQ(r.text, "hi");
  EXPECT_EQ(r.usage->total(), 7);
  EXPECT_EQ(seen["model"], "gpt-oss-20b");
  EXPECT_EQ(seen["seed"], 9);
  EXPECT_EQ(seen["messages"][0]["content"], "hello");
  EXPECT_EQ(seen["auth"], "Bearer secret");

  HttpChatBackend bad(base + "/bad/chat/completions", "m");
  try {
    bad.complete(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransport);
    EXPECT_EQ(e.http_status(), 503);
  }
  srv.stop();
  th.join();
  EXPECT_EQ(code_of([&] { ok.complete(req); }), ErrorCode::kTransport);
  EXPECT_EQ(code_of([] { parse_chat_response_body(R"({"choices": []})"); }), ErrorCode::kProtocol);
}

// ---- instructions ----

TEST(Agent, InstructionValidation) {
  EXPECT_FALSE(instruction_problem("Retrieve food banks serving ZIP 94102"));
  EXPECT_TRUE(instruction_problem(""));
  EXPECT_TRUE(instruction_problem("Food banks near 94102"));
  EXPECT_TRUE(instruction_problem("Search for food banks near 94102 and parse their flyers"));
  EXPECT_TRUE(instruction_problem("Search for food banks; then parse flyers"));
  EXPECT_TRUE(instruction_problem("Search for food banks.\nParse flyers."));
  EXPECT_EQ(classify_instruction("Look up USDA nutrients for each item"), StepKind::kNutrition);
  EXPECT_EQ(classify_instruction("Check recent social posts"), StepKind::kFreshness);
  for (auto k : kWorkflow) {
    const auto text = canonical_instruction(k, ZipCode::parse("94102"));
    EXPECT_FALSE(instruction_problem(text)) << text;
    EXPECT_EQ(classify_instruction(text), k) << text;
  }
}

TEST(Agent, PlannerGetsOneRetryThenFallback) {
  Toolbox t;
  auto s = init_session("food near " + t.zip().str(), t.tools, BudgetConfig{});
  int calls = 0;
  FunctionChatBackend sloppy([&](const ChatRequest&) {
    ++calls;
    return ChatResponse{"Banks and flyers, please", std::nullopt};
  });
  const auto ins = plan_step(s, sloppy);
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(ins.fallback);
  EXPECT_EQ(ins.step_kind, StepKind::kGeoRetrieval);
  EXPECT_GT(s.token_spend, 0);

  FunctionChatBackend done([](const ChatRequest&) { return ChatResponse{"TASK_DONE", std::nullopt}; });
  EXPECT_TRUE(plan_step(s, done).is_done_marker);
}

TEST(Agent, ParseToolCallsShapes) {
  EXPECT_EQ(parse_tool_calls(R"({"calls": [{"tool": "search", "arguments": {"zip": "94102"}}]})").size(), 1u);
  EXPECT_EQ(parse_tool_calls(R"(Here: {"tool": "doc", "arguments": {"document": "x"}})").size(), 1u);
  EXPECT_EQ(parse_tool_calls(R"([{"tool": "a", "arguments": {}}, {"tool": "b", "arguments": {}}])").size(), 2u);
  EXPECT_EQ(code_of([] { parse_tool_calls("nothing to do"); }), ErrorCode::kParse);
}

TEST(Agent, EvidenceRules) {
  const Date today = Date::parse("2025-06-01");
  Evidence e;
  e.kind = "post";
  e.payload = json{{"bank_name", "Oak"}, {"text", "open"}, {"observed_at", "2025-05-30"}, {"source_id", "p1"}, {"clamped", false}};
  e.source_kind = SourceKind::kSocial;
  e.observed_at = Date::parse("2025-05-30");
  EXPECT_EQ(validate_evidence(e, today).reason, "uncorroborated");
  e.corroborations = 2;
  EXPECT_TRUE(validate_evidence(e, today).accepted) << validate_evidence(e, today).reason;
  e.observed_at = Date::parse("2025-04-01");
  EXPECT_EQ(validate_evidence(e, today).reason, "stale");
  e.observed_at = Date::parse("2025-06-02");
  EXPECT_EQ(validate_evidence(e, today).reason, "future-dated");
  e.failed = true;
  EXPECT_EQ(validate_evidence(e, today).reason, "failed");
}

TEST(Agent, TerminationPrecedence) {
  Toolbox t;
  auto s = init_session("food near " + t.zip().str(), t.tools, BudgetConfig{100, 3});
  Instruction go{"Retrieve food banks", StepKind::kGeoRetrieval, false, false};
  Instruction done{"TASK_DONE", StepKind::kGeoRetrieval, true, false};
  EXPECT_EQ(check_termination(s, go), SessionStatus::kRunning);
  s.round = 3;
  EXPECT_EQ(check_termination(s, go), SessionStatus::kRoundLimited);
  s.token_spend = 101;
  EXPECT_EQ(check_termination(s, go), SessionStatus::kBudgetExhausted);
  EXPECT_EQ(check_termination(s, done), SessionStatus::kDone);
  EXPECT_EQ(code_of([&] { init_session("  ", t.tools, BudgetConfig{}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { init_session("q", t.tools, BudgetConfig{0, 3}); }), ErrorCode::kInvalidArgument);
}

TEST(Agent, CompressMemoryKeepsFacts) {
  const auto j = json::parse(read_file(support::fixture("memory_history.json")));
  std::vector<MemoryTurn> turns;
  for (const auto& t : j.at("turns")) turns.push_back({t["instruction"], t["observation"], false});
  const auto c = compress_memory(turns);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_TRUE(c[0].summary);
  EXPECT_EQ(c[0].instruction, "[summary of 17 earlier turns]");
  EXPECT_EQ(extract_facts(c), extract_facts(turns));
  // A second fold counts the turns the first summary already covered.
  auto more = c;
  for (int i = 0; i < 3; ++i) more.push_back(turns[static_cast<std::size_t>(i)]);
  const auto again = compress_memory(more, 3, 0);
  EXPECT_EQ(again[0].instruction, "[summary of 20 earlier turns]");
  EXPECT_EQ(extract_facts(again), extract_facts(more));
  // Under the trigger nothing changes.
  const std::vector<MemoryTurn> small(turns.end() - 3, turns.end());
  EXPECT_EQ(compress_memory(small, 1, 1 << 20), small);
  EXPECT_EQ(estimate_tokens("abcde"), 2);
}

// ---- full sessions ----

TEST(Agent, HeuristicSessionAnswersFromVerifiedEvidence) {
  Toolbox t;
  HeuristicPlanner planner;
  HeuristicExecutor executor;
  SessionOptions so;
  so.session_date = t.disk.world.as_of;
  so.audit_dir = t.disk.dir / "audit-session";
  const auto res = run_session("Where can I get groceries near " + t.zip().str() + "?", planner, executor, t.tools,
                               t.disk.world.registry, t.disk.world.geocoder, AgentConfig{}, so);
  ASSERT_TRUE(res.synthesis) << res.error.value_or("");
  EXPECT_EQ(res.state.status, SessionStatus::kDone);
  EXPECT_LE(res.state.round, 15);
  const auto& a = res.synthesis->answer;
  ASSERT_FALSE(a.empty());
  for (const auto& b : a.banks) EXPECT_TRUE(t.disk.world.registry.verified(b)) << b.name;
  EXPECT_FALSE(a.item_names().empty());
  for (const char* f : {"chat.jsonl", "banks.csv", "nutrients.jsonl", "answer.txt"}) {
    EXPECT_TRUE(fs::exists(so.audit_dir / f)) << f;
  }
  EXPECT_EQ(read_file(so.audit_dir / "answer.txt"), res.synthesis->answer_text);
  // Stale web listings never make it into the answer.
  for (const auto& b : a.banks) EXPECT_EQ(b.name.find("Pop-Up"), std::string::npos);
}

TEST(Agent, SilentExecutorEndsRoundLimitedWithoutAnswer) {
  Toolbox t;
  HeuristicPlanner planner;
  FunctionChatBackend mute([](const ChatRequest&) { return ChatResponse{"nothing", TokenUsage{1, 1}}; });
  AgentConfig ac;
  ac.budget = BudgetConfig{25000, 4};
  SessionOptions so;
  so.session_date = t.disk.world.as_of;
  const auto res = run_session("food near " + t.zip().str(), planner, mute, t.tools, t.disk.world.registry,
                               t.disk.world.geocoder, ac, so);
  EXPECT_NE(res.state.status, SessionStatus::kRunning);
  EXPECT_LE(res.state.round, 4);
  EXPECT_FALSE(res.synthesis);
  EXPECT_TRUE(res.error);
}

TEST(Agent, TokenBudgetStopsSession) {
  Toolbox t;
  HeuristicPlanner planner;
  FunctionChatBackend hungry([](const ChatRequest&) { return ChatResponse{"{\"calls\": []}", TokenUsage{20000, 0}}; });
  SessionOptions so;
  so.session_date = t.disk.world.as_of;
  const auto res = run_session("food near " + t.zip().str(), planner, hungry, t.tools, t.disk.world.registry,
                               t.disk.world.geocoder, AgentConfig{}, so);
  EXPECT_EQ(res.state.status, SessionStatus::kBudgetExhausted);
  EXPECT_LE(res.state.round, 2);
}

TEST(Agent, TransportErrorsPropagate) {
  Toolbox t;
  FunctionChatBackend down([](const ChatRequest&) -> ChatResponse {
    throw Error(ErrorCode::kTransport, "connection refused");
  });
  HeuristicExecutor executor;
  EXPECT_EQ(code_of([&] {
              run_session("food near " + t.zip().str(), down, executor, t.tools, t.disk.world.registry,
                          t.disk.world.geocoder, AgentConfig{}, SessionOptions{});
            }),
            ErrorCode::kTransport);
}
