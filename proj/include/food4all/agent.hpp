#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/chat.hpp"
#include "food4all/data_io.hpp"
#include "food4all/date.hpp"
#include "food4all/domain.hpp"
#include "food4all/tools.hpp"

namespace food4all {

enum class StepKind { kGeoRetrieval, kFreshness, kDocParse, kNutrition, kGeoFilter, kSynthesis };

inline constexpr std::array<StepKind, 6> kWorkflow{StepKind::kGeoRetrieval, StepKind::kFreshness,
                                                   StepKind::kDocParse,     StepKind::kNutrition,
                                                   StepKind::kGeoFilter,    StepKind::kSynthesis};

const char* to_string(StepKind kind);
std::optional<StepKind> step_kind_from(std::string_view name);

inline constexpr std::string_view kTaskDone = "TASK_DONE";

struct Instruction {
  std::string text;
  StepKind step_kind = StepKind::kGeoRetrieval;
  bool is_done_marker = false;
  bool fallback = false;  // produced by the deterministic fallback, not the planner
};

// Which workflow stage an instruction addresses, by its target vocabulary.
std::optional<StepKind> classify_instruction(std::string_view text);
// Empty when the text is one imperative clause naming a concrete target;
// otherwise the reason it is not.
std::optional<std::string> instruction_problem(std::string_view text);
// Canonical single-action instruction for a stage.
std::string canonical_instruction(StepKind kind, const std::optional<ZipCode>& zip, double radius_miles = 10.0);

enum class SessionStatus { kRunning, kDone, kBudgetExhausted, kRoundLimited };
const char* to_string(SessionStatus status);

enum class SourceKind { kRegistry, kUsda, kWeb, kSocial, kComputed };
const char* to_string(SourceKind kind);
inline bool is_verified_source(SourceKind k) {
  return k == SourceKind::kRegistry || k == SourceKind::kUsda || k == SourceKind::kComputed;
}

// One observation unit. `kind` names the payload shape: bank, nutrients,
// post, item, rows, receipt, or failure.
struct Evidence {
  std::string tool;
  std::string kind;
  json arguments;
  json payload;
  std::string source_id;
  SourceKind source_kind = SourceKind::kWeb;
  Date observed_at;
  int corroborations = 1;
  StepKind step = StepKind::kGeoRetrieval;
  int round = 0;
  bool failed = false;
  std::string error;
};

struct EvidenceVerdict {
  bool accepted = false;
  std::string reason;  // "ok", "failed", "stale", "uncorroborated", "schema: ..."
};

json evidence_schema(std::string_view kind);

inline constexpr int kFreshnessDays = 30;

// Accepted iff the payload matches its schema, the observation is at most
// 30 days old, and it is corroborated twice or comes from a verified source.
EvidenceVerdict validate_evidence(const Evidence& evidence, Date session_start);

// Recounts, for every bank, the distinct sources mentioning it (its own
// listing plus fresh social posts) and propagates the count to the posts and
// items tied to that bank.
void corroborate(std::vector<Evidence>& evidence, Date session_start);

struct MemoryTurn {
  std::string instruction;
  std::string observation;
  bool summary = false;
  friend bool operator==(const MemoryTurn&, const MemoryTurn&) = default;
};

struct ItemFact {
  std::string bank;  // empty for table lookups not tied to a bank
  std::string item;
  std::array<std::optional<double>, 4> nutrients;
  friend auto operator<=>(const ItemFact&, const ItemFact&) = default;
};

struct MemoryFacts {
  std::set<std::pair<std::string, std::string>> banks;  // (name, zip)
  std::set<ItemFact> items;
  friend bool operator==(const MemoryFacts&, const MemoryFacts&) = default;
};

MemoryFacts extract_facts(const std::vector<MemoryTurn>& memory);
json facts_json(const MemoryFacts& facts);

std::int64_t estimate_tokens(std::string_view text);
std::int64_t estimate_tokens(const std::vector<MemoryTurn>& memory);
// Backend-reported usage when present, otherwise the character estimate of
// the prompt plus the reply.
std::int64_t charged_tokens(const ChatRequest& request, const ChatResponse& response);

inline constexpr int kKeepRecent = 3;
inline constexpr std::int64_t kCompressionTrigger = 2000;

// Keeps the newest `keep_recent` turns verbatim and folds everything older
// into one summary turn carrying the extracted facts. No-op at or below the
// trigger.
std::vector<MemoryTurn> compress_memory(const std::vector<MemoryTurn>& memory, int keep_recent = kKeepRecent,
                                        std::int64_t trigger_tokens = kCompressionTrigger);

struct BudgetConfig {
  std::int64_t j_max = 25000;
  int t_max = 15;
};

struct SessionOptions {
  std::string session_id = "session";
  std::optional<ZipCode> zip;  // else the first 5-digit token in the query
  Date session_date;
  std::int64_t policy_version = 0;
  std::filesystem::path audit_dir;  // empty: no audit bundle
  double radius_miles = 10.0;
};

struct SessionState {
  std::string id;
  std::string query;
  std::optional<ZipCode> zip;
  Date session_date;
  BudgetConfig budget;
  const ToolRegistry* tools = nullptr;
  std::int64_t policy_version = 0;
  std::filesystem::path audit_dir;
  double radius_miles = 10.0;

  std::vector<MemoryTurn> memory;
  int round = 0;
  std::int64_t token_spend = 0;
  std::int64_t query_tokens = 0;
  SessionStatus status = SessionStatus::kRunning;
  std::vector<Evidence> evidence;
  std::set<StepKind> completed;
  std::vector<json> transcript;  // {"round", "agent", "role", "content"}
};

// Throws Error(kInvalidArgument) on an empty query.
SessionState init_session(std::string query, const ToolRegistry& tools, BudgetConfig budget,
                          const SessionOptions& options = {});

std::vector<ChatMessage> planner_messages(const SessionState& state);
// One planner call, one re-prompt when the reply fails validation, then the
// canonical instruction for the next open stage (or TASK_DONE when all are
// closed). Transport errors propagate with the state unchanged.
Instruction plan_step(SessionState& state, ChatBackend& planner);

struct ExecutionContext {
  const Registry& registry;
  const Geocoder& geocoder;
  int max_calls_per_step = 24;
};

json step_context(const SessionState& state, StepKind kind, const ExecutionContext& ctx);
std::vector<ChatMessage> executor_messages(const SessionState& state, const Instruction& instruction,
                                           const ExecutionContext& ctx);
// Parses {"calls": [{"tool", "arguments"}]}, a bare call object, or an array
// of calls. Throws Error(kParse) when none of these is present.
std::vector<std::pair<std::string, json>> parse_tool_calls(std::string_view reply);

// Runs one round: the executor picks tool calls, each becomes Evidence (a
// failure or unknown tool is recorded as failed evidence). The round counter
// advances whatever happens.
std::vector<Evidence> execute_step(SessionState& state, const Instruction& instruction, ChatBackend& executor,
                                   const ExecutionContext& ctx);

// Precedence: done, budget_exhausted (spend > J_max), round_limited (round >= T_max).
SessionStatus check_termination(const SessionState& state, const Instruction& instruction);

struct SynthesisResult {
  CandidateAnswer answer;
  std::string answer_text;
  SessionStatus status = SessionStatus::kDone;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// Merges accepted evidence into an answer: banks deduplicated by registry
// id (else name and ZIP), items by normalized name, ranked by the last
// geo-filter table when there is one, else by distance.
// Throws Error(kEmptyAnswer) when no bank survives.
SynthesisResult build_answer(const SessionState& state, const Registry& registry, const Geocoder& geocoder);
// build_answer plus the audit bundle (chat.jsonl, banks.csv, nutrients.jsonl,
// answer.txt) when the session has an audit directory.
SynthesisResult synthesize_answer(const SessionState& state, const Registry& registry, const Geocoder& geocoder);

struct SessionResult {
  SessionState state;
  std::optional<SynthesisResult> synthesis;
  std::optional<std::string> error;  // empty-answer message when synthesis failed
};

struct AgentConfig {
  BudgetConfig budget;
  int keep_recent = kKeepRecent;
  std::int64_t compression_trigger = kCompressionTrigger;
  int max_calls_per_step = 24;
};

// Full loop until a terminal status, then synthesis. Transport errors from
// either backend propagate.
SessionResult run_session(std::string query, ChatBackend& planner, ChatBackend& executor, const ToolRegistry& tools,
                          const Registry& registry, const Geocoder& geocoder, const AgentConfig& config,
                          const SessionOptions& options);

}  // namespace food4all
