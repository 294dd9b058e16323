#include "food4all/agent.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <sstream>

#include "food4all/digest.hpp"
#include "food4all/error.hpp"
#include "food4all/json_schema.hpp"
#include "food4all/reward.hpp"
#include "food4all/structured_output.hpp"

namespace food4all {

namespace fs = std::filesystem;

const char* to_string(StepKind kind) {
  switch (kind) {
    case StepKind::kGeoRetrieval: return "geo-retrieval";
    case StepKind::kFreshness: return "freshness";
    case StepKind::kDocParse: return "doc-parse";
    case StepKind::kNutrition: return "nutrition";
    case StepKind::kGeoFilter: return "geo-filter";
    case StepKind::kSynthesis: return "synthesis";
  }
  return "?";
}

std::optional<StepKind> step_kind_from(std::string_view name) {
  for (StepKind k : kWorkflow) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

const char* to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::kRunning: return "running";
    case SessionStatus::kDone: return "done";
    case SessionStatus::kBudgetExhausted: return "budget_exhausted";
    case SessionStatus::kRoundLimited: return "round_limited";
  }
  return "?";
}

const char* to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kRegistry: return "registry";
    case SourceKind::kUsda: return "usda";
    case SourceKind::kWeb: return "web";
    case SourceKind::kSocial: return "social";
    case SourceKind::kComputed: return "computed";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool has_any(const std::string& text, std::initializer_list<const char*> needles) {
  return std::any_of(needles.begin(), needles.end(), [&](const char* n) { return text.find(n) != std::string::npos; });
}

const std::set<std::string>& imperative_verbs() {
  static const std::set<std::string> verbs{
      "annotate", "assemble", "calculate", "check",  "collect",   "compose", "compute", "confirm",  "extract",
      "fetch",    "filter",   "find",      "gather", "get",       "identify", "list",   "locate",   "look",
      "lookup",   "map",      "mine",      "parse",  "produce",   "query",   "rank",    "read",     "record",
      "retrieve", "save",     "scan",      "search", "select",    "sort",    "summarize", "synthesize", "verify",
      "write"};
  return verbs;
}

std::vector<std::string> words_of(const std::string& lowered) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : lowered) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<ZipCode> first_zip(std::string_view text) {
  static const std::regex re(R"((?:^|[^0-9])([0-9]{5})(?![0-9]))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, re)) return std::nullopt;
  return ZipCode::try_parse(m[1].str());
}

std::string bank_name_key(std::string_view name, const std::string& zip) { return normalize_text(name) + "|" + zip; }

}  // namespace

std::optional<StepKind> classify_instruction(std::string_view text) {
  const std::string t = lower(text);
  if (has_any(t, {"nutri", "usda", "calori"})) return StepKind::kNutrition;
  if (has_any(t, {"fresh", "recent", "social", "post", "review", "community"})) return StepKind::kFreshness;
  if (has_any(t, {"parse", "flyer", "inventor", "document", "menu", "extract"})) return StepKind::kDocParse;
  if (has_any(t, {"filter", "distance", "nearest", "within", "radius", "rank"})) return StepKind::kGeoFilter;
  if (has_any(t, {"synthes", "structured answer", "final answer", "compose", "audit", "write"})) {
    return StepKind::kSynthesis;
  }
  if (has_any(t, {"food bank", "pantr", "zip", "retriev", "locate"})) return StepKind::kGeoRetrieval;
  return std::nullopt;
}

std::optional<std::string> instruction_problem(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return "empty instruction";
  if (t.find('\n') != std::string::npos) return "spans several lines";
  if (t.size() > 240) return "longer than one action";
  const std::string l = lower(t);
  const auto words = words_of(l);
  if (words.empty() || !imperative_verbs().count(words.front())) return "does not open with an imperative verb";
  if (l.find(';') != std::string::npos || l.find(" then ") != std::string::npos) return "chains several actions";
  for (std::size_t i = 1; i + 1 < words.size(); ++i) {
    if ((words[i] == "and" || words[i] == "or") && imperative_verbs().count(words[i + 1])) {
      return "chains several actions";
    }
  }
  const auto stop = l.find(". ");
  if (stop != std::string::npos && stop + 2 < l.size()) return "contains more than one sentence";
  if (!classify_instruction(t)) return "names no concrete target";
  return std::nullopt;
}

std::string canonical_instruction(StepKind kind, const std::optional<ZipCode>& zip, double radius_miles) {
  const std::string where = zip ? "ZIP " + zip->str() : "the user's ZIP code";
  switch (kind) {
    case StepKind::kGeoRetrieval: return "Retrieve food banks serving " + where;
    case StepKind::kFreshness: return "Check recent community posts for each retrieved food bank";
    case StepKind::kDocParse: return "Parse the inventory documents of the retrieved food banks";
    case StepKind::kNutrition: return "Look up USDA nutrients for every extracted food item";
    case StepKind::kGeoFilter:
      return "Filter the food banks to those within " + format_number(radius_miles) + " miles of " + where;
    case StepKind::kSynthesis: return "Write the structured answer to the audit directory";
  }
  return {};
}

json evidence_schema(std::string_view kind) {
  if (kind == "bank") return bank_listing_schema();
  if (kind == "nutrients") return nutrient_result_schema();
  if (kind == "post") return post_schema();
  if (kind == "item") return doc_item_schema();
  if (kind == "receipt") return receipt_schema();
  if (kind == "rows") {
    return json{{"type", "object"}, {"required", json::array({"rows"})}, {"properties", {{"rows", {{"type", "array"}}}}}};
  }
  return json{{"enum", json::array()}};
}

EvidenceVerdict validate_evidence(const Evidence& evidence, Date session_start) {
  if (evidence.failed) return {false, "failed"};
  if (auto err = validate_schema(evidence_schema(evidence.kind), evidence.payload)) return {false, "schema: " + *err};
  const auto age = session_start.days_since(evidence.observed_at);
  if (age < 0) return {false, "future-dated"};
  if (age > kFreshnessDays) return {false, "stale"};
  if (evidence.corroborations < 2 && !is_verified_source(evidence.source_kind)) return {false, "uncorroborated"};
  return {true, "ok"};
}

void corroborate(std::vector<Evidence>& evidence, Date session_start) {
  // sources per bank key and per normalized bank name
  std::map<std::string, std::set<std::string>> by_key;
  std::map<std::string, std::set<std::string>> posts_by_name;
  std::map<std::string, std::set<std::string>> keys_by_name;
  for (const auto& e : evidence) {
    if (e.failed) continue;
    if (e.kind == "bank") {
      const auto name = normalize_text(e.payload.value("name", std::string{}));
      const auto key = bank_name_key(name, e.payload.value("zip", std::string{}));
      by_key[key].insert(e.source_id);
      keys_by_name[name].insert(key);
    } else if (e.kind == "post") {
      const auto age = session_start.days_since(e.observed_at);
      if (age < 0 || age > kFreshnessDays) continue;
      posts_by_name[normalize_text(e.payload.value("bank_name", std::string{}))].insert(e.source_id);
    }
  }
  auto count_for_key = [&](const std::string& key, const std::string& name) {
    std::set<std::string> sources = by_key[key];
    const auto& posts = posts_by_name[name];
    sources.insert(posts.begin(), posts.end());
    return std::max<int>(1, static_cast<int>(sources.size()));
  };
  for (auto& e : evidence) {
    if (e.failed) continue;
    if (e.kind == "bank") {
      const auto name = normalize_text(e.payload.value("name", std::string{}));
      e.corroborations = count_for_key(bank_name_key(name, e.payload.value("zip", std::string{})), name);
    } else if (e.kind == "post") {
      const auto name = normalize_text(e.payload.value("bank_name", std::string{}));
      int best = std::max<int>(1, static_cast<int>(posts_by_name[name].size()));
      for (const auto& key : keys_by_name[name]) best = std::max(best, count_for_key(key, name));
      e.corroborations = best;
    } else if (e.kind == "item") {
      const auto& bank = e.payload.value("bank", json(nullptr));
      if (!bank.is_object()) continue;
      const auto name = normalize_text(bank.value("name", std::string{}));
      const auto key = bank_name_key(name, bank.value("zip", std::string{}));
      if (by_key.count(key)) e.corroborations = count_for_key(key, name);
    }
  }
}

namespace {

std::array<std::optional<double>, 4> nutrient_fields(const json& n) {
  std::array<std::optional<double>, 4> out;
  if (!n.is_object()) return out;
  const char* keys[] = {"kcal", "protein_g", "fat_g", "carb_g"};
  for (int i = 0; i < 4; ++i) {
    const auto it = n.find(keys[i]);
    if (it != n.end() && it->is_number()) out[i] = it->get<double>();
  }
  return out;
}

void facts_from_call(const json& call, MemoryFacts& facts) {
  const auto result = call.find("result");
  if (result == call.end() || !result->is_object()) return;
  const std::string tool = call.value("tool", std::string{});
  if (tool == "search") {
    if (auto banks = result->find("banks"); banks != result->end() && banks->is_array()) {
      for (const auto& b : *banks) {
        if (b.is_object() && b.contains("name") && b.contains("zip")) {
          facts.banks.emplace(b["name"].get<std::string>(), b["zip"].get<std::string>());
        }
      }
    }
    if (auto item = result->find("item"); item != result->end() && item->is_object()) {
      facts.items.insert(ItemFact{"", item->value("name", std::string{}), nutrient_fields(item->value("nutrients", json()))});
    }
  } else if (tool == "doc") {
    if (auto items = result->find("items"); items != result->end() && items->is_array()) {
      for (const auto& it : *items) {
        const auto bank = it.value("bank", json(nullptr));
        facts.items.insert(ItemFact{bank.is_object() ? bank.value("name", std::string{}) : std::string{},
                                    it.value("name", std::string{}), nutrient_fields(it.value("nutrients", json()))});
      }
    }
  }
}

std::optional<double> opt_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  return std::nullopt;
}

}  // namespace

MemoryFacts extract_facts(const std::vector<MemoryTurn>& memory) {
  MemoryFacts facts;
  for (const auto& turn : memory) {
    json obs;
    try {
      obs = json::parse(turn.observation);
    } catch (const json::exception&) {
      continue;
    }
    if (!obs.is_object()) continue;
    if (auto f = obs.find("facts"); f != obs.end() && f->is_object()) {
      for (const auto& b : f->value("banks", json::array())) {
        facts.banks.emplace(b.at(0).get<std::string>(), b.at(1).get<std::string>());
      }
      for (const auto& i : f->value("items", json::array())) {
        facts.items.insert(ItemFact{i.at(0).get<std::string>(),
                                    i.at(1).get<std::string>(),
                                    {opt_number(i.at(2)), opt_number(i.at(3)), opt_number(i.at(4)), opt_number(i.at(5))}});
      }
    }
    if (auto calls = obs.find("calls"); calls != obs.end() && calls->is_array()) {
      for (const auto& call : *calls) facts_from_call(call, facts);
    }
  }
  return facts;
}

json facts_json(const MemoryFacts& facts) {
  json banks = json::array();
  for (const auto& [name, zip] : facts.banks) banks.push_back(json::array({name, zip}));
  json items = json::array();
  for (const auto& f : facts.items) {
    json row = json::array({f.bank, f.item});
    for (const auto& v : f.nutrients) row.push_back(v ? json(*v) : json(nullptr));
    items.push_back(std::move(row));
  }
  return json{{"facts", {{"banks", banks}, {"items", items}}}};
}

std::int64_t estimate_tokens(std::string_view text) { return static_cast<std::int64_t>((text.size() + 3) / 4); }

std::int64_t estimate_tokens(const std::vector<MemoryTurn>& memory) {
  std::int64_t total = 0;
  for (const auto& t : memory) total += estimate_tokens(t.instruction) + estimate_tokens(t.observation);
  return total;
}

std::int64_t charged_tokens(const ChatRequest& request, const ChatResponse& response) {
  if (response.usage) return response.usage->total();
  std::int64_t prompt = 0;
  for (const auto& m : request.messages) prompt += estimate_tokens(m.content);
  return prompt + estimate_tokens(response.text);
}

std::vector<MemoryTurn> compress_memory(const std::vector<MemoryTurn>& memory, int keep_recent,
                                        std::int64_t trigger_tokens) {
  const auto keep = static_cast<std::size_t>(std::max(keep_recent, 0));
  if (memory.size() <= keep || estimate_tokens(memory) <= trigger_tokens) return memory;
  const std::size_t folded = memory.size() - keep;
  std::vector<MemoryTurn> older(memory.begin(), memory.begin() + static_cast<std::ptrdiff_t>(folded));
  std::size_t covered = 0;
  for (const auto& t : older) {
    if (!t.summary) {
      ++covered;
    } else {
      try {
        covered += json::parse(t.observation).value("turns", std::size_t{0});
      } catch (const json::exception&) {
      }
    }
  }
  json summary = facts_json(extract_facts(older));
  summary["turns"] = covered;
  std::vector<MemoryTurn> out;
  out.push_back(MemoryTurn{"[summary of " + std::to_string(covered) + " earlier turns]", summary.dump(), true});
  out.insert(out.end(), memory.begin() + static_cast<std::ptrdiff_t>(folded), memory.end());
  return out;
}

SessionState init_session(std::string query, const ToolRegistry& tools, BudgetConfig budget,
                          const SessionOptions& options) {
  if (trim(query).empty()) throw Error(ErrorCode::kInvalidArgument, "query is empty");
  if (budget.j_max <= 0 || budget.t_max <= 0) throw Error(ErrorCode::kInvalidArgument, "budget must be positive");
  SessionState s;
  s.id = options.session_id;
  s.zip = options.zip ? options.zip : first_zip(query);
  s.query = std::move(query);
  s.session_date = options.session_date;
  s.budget = budget;
  s.tools = &tools;
  s.policy_version = options.policy_version;
  s.audit_dir = options.audit_dir;
  s.radius_miles = options.radius_miles;
  s.query_tokens = estimate_tokens(s.query);
  return s;
}

namespace {

constexpr std::string_view kPlannerSystem =
    "You plan the work of a free-food assistant. Reply with exactly one imperative instruction that names its "
    "target, or with TASK_DONE once the answer is complete.\n"
    "Stages, in order: geo-retrieval (find food banks for the ZIP), freshness (check recent community posts), "
    "doc-parse (extract food items from bank documents), nutrition (look up USDA nutrients per item), geo-filter "
    "(keep nearby banks, nearest first), synthesis (write the structured answer).";

constexpr std::string_view kRetryPrompt =
    "That instruction was rejected ({reason}). Reply with one imperative action naming its target, or TASK_DONE.";

std::string render_memory(const std::vector<MemoryTurn>& memory) {
  std::string out;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    out += "[" + std::to_string(i + 1) + "] " + memory[i].instruction + "\n-> " + memory[i].observation + "\n";
  }
  return out.empty() ? "(empty)\n" : out;
}

std::string completed_line(const SessionState& state) {
  std::string out;
  for (StepKind k : kWorkflow) {
    if (!state.completed.count(k)) continue;
    if (!out.empty()) out += ", ";
    out += to_string(k);
  }
  return out.empty() ? "none" : out;
}

void record(SessionState& state, const char* agent, const ChatRequest& req, const ChatResponse& resp) {
  state.token_spend += charged_tokens(req, resp);
  const auto& last = req.messages.back();
  state.transcript.push_back(json{{"round", state.round}, {"agent", agent}, {"role", last.role}, {"content", last.content}});
  state.transcript.push_back(json{{"round", state.round}, {"agent", agent}, {"role", "assistant"}, {"content", resp.text}});
}

Instruction make_instruction(const std::string& text) {
  Instruction ins;
  ins.text = trim(text);
  ins.is_done_marker = ins.text == kTaskDone;
  if (!ins.is_done_marker) ins.step_kind = classify_instruction(ins.text).value_or(StepKind::kGeoRetrieval);
  return ins;
}

}  // namespace

std::vector<ChatMessage> planner_messages(const SessionState& state) {
  std::ostringstream user;
  user << "Query: " << state.query << "\n"
       << "ZIP: " << (state.zip ? state.zip->str() : "unknown") << "\n"
       << "Session date: " << state.session_date.iso() << "\n"
       << "Round: " << state.round << " of " << state.budget.t_max << "\n"
       << "Radius miles: " << format_number(state.radius_miles) << "\n"
       << "Completed stages: " << completed_line(state) << "\n"
       << "Memory:\n"
       << render_memory(state.memory) << "Next instruction:";
  return {{"system", std::string(kPlannerSystem)}, {"user", user.str()}};
}

Instruction plan_step(SessionState& state, ChatBackend& planner) {
  if (state.status != SessionStatus::kRunning) throw Error(ErrorCode::kPrecondition, "session is not running");
  ChatRequest req;
  req.messages = planner_messages(state);
  req.max_tokens = 256;
  const ChatResponse first = planner.complete(req);
  record(state, "planner", req, first);
  Instruction ins = make_instruction(first.text);
  if (ins.is_done_marker) return ins;
  auto problem = instruction_problem(ins.text);
  if (!problem) return ins;

  std::string retry(kRetryPrompt);
  retry.replace(retry.find("{reason}"), 8, *problem);
  req.messages.push_back({"assistant", first.text});
  req.messages.push_back({"user", retry});
  const ChatResponse second = planner.complete(req);
  record(state, "planner", req, second);
  ins = make_instruction(second.text);
  if (ins.is_done_marker || !instruction_problem(ins.text)) return ins;

  for (StepKind k : kWorkflow) {
    if (state.completed.count(k)) continue;
    Instruction fb;
    fb.text = canonical_instruction(k, state.zip, state.radius_miles);
    fb.step_kind = k;
    fb.fallback = true;
    return fb;
  }
  Instruction done;
  done.text = std::string(kTaskDone);
  done.is_done_marker = true;
  done.fallback = true;
  return done;
}

namespace {

std::vector<const Evidence*> live_of_kind(const SessionState& state, std::string_view kind) {
  std::vector<const Evidence*> out;
  for (const auto& e : state.evidence) {
    if (!e.failed && e.kind == kind) out.push_back(&e);
  }
  return out;
}

std::optional<double> distance_from_user(const SessionState& state, const BankEntry& bank, const Registry& registry,
                                         const Geocoder& geocoder) {
  if (!state.zip) return std::nullopt;
  const auto user = geocoder.locate(*state.zip);
  const auto at = resolve_location(bank, registry, geocoder);
  if (!user || !at) return std::nullopt;
  return haversine_miles(*user, *at);
}

BankEntry listing_entry(const json& doc, const Registry& registry) {
  BankEntry b;
  b.name = doc.value("name", std::string{});
  b.zip = ZipCode::try_parse(doc.value("zip", std::string{})).value_or(ZipCode{});
  const auto id = doc.value("registry_id", json(nullptr));
  if (id.is_string()) {
    b.registry_id = id.get<std::string>();
    if (!registry.match(b)) b.registry_id.reset();
  }
  if (const auto* rec = registry.match(b)) {
    b.name = rec->name;
    b.zip = rec->zip;
    b.registry_id = rec->registry_id;
  }
  return b;
}

std::string entry_key(const BankEntry& b) {
  return b.registry_id ? "id:" + *b.registry_id : "nz:" + bank_name_key(b.name, b.zip.str());
}

}  // namespace

json step_context(const SessionState& state, StepKind kind, const ExecutionContext& ctx) {
  switch (kind) {
    case StepKind::kGeoRetrieval:
      return json{{"zip", state.zip ? json(state.zip->str()) : json(nullptr)}, {"query", state.query}};
    case StepKind::kFreshness: {
      json names = json::array();
      std::set<std::string> seen;
      for (const auto* e : live_of_kind(state, "bank")) {
        const auto name = e->payload.value("name", std::string{});
        if (seen.insert(normalize_text(name)).second) names.push_back(name);
      }
      return json{{"banks", names}};
    }
    case StepKind::kDocParse: {
      json docs = json::array();
      std::set<std::string> seen;
      for (const auto* e : live_of_kind(state, "bank")) {
        const auto doc = e->payload.value("document", std::string{});
        if (doc.empty() || !seen.insert(doc).second) continue;
        docs.push_back(json{{"bank", e->payload.value("name", std::string{})},
                            {"zip", e->payload.value("zip", std::string{})},
                            {"document", doc}});
      }
      return json{{"documents", docs}};
    }
    case StepKind::kNutrition: {
      json items = json::array();
      std::set<std::string> seen;
      for (const auto* e : live_of_kind(state, "item")) {
        const auto name = e->payload.value("name", std::string{});
        if (seen.insert(name).second) items.push_back(name);
      }
      return json{{"items", items}};
    }
    case StepKind::kGeoFilter: {
      json rows = json::array();
      std::set<std::string> seen;
      for (const auto* e : live_of_kind(state, "bank")) {
        const BankEntry b = listing_entry(e->payload, ctx.registry);
        if (!seen.insert(entry_key(b)).second) continue;
        json row{{"name", b.name}, {"zip", b.zip.str()}, {"registry_id", b.registry_id ? json(*b.registry_id) : json(nullptr)}};
        if (auto d = distance_from_user(state, b, ctx.registry, ctx.geocoder)) row["distance_miles"] = *d;
        rows.push_back(std::move(row));
      }
      return json{{"radius_miles", state.radius_miles}, {"banks", rows}};
    }
    case StepKind::kSynthesis: {
      std::string draft;
      try {
        draft = build_answer(state, ctx.registry, ctx.geocoder).answer_text;
      } catch (const Error&) {
      }
      return json{{"path", "answer.txt"}, {"answer_text", draft}};
    }
  }
  return json::object();
}

std::vector<ChatMessage> executor_messages(const SessionState& state, const Instruction& instruction,
                                           const ExecutionContext& ctx) {
  std::ostringstream sys;
  sys << "You execute one instruction of a free-food assistant by calling tools. Reply with JSON only: "
         "{\"calls\": [{\"tool\": <name>, \"arguments\": {...}}]}. Several calls may be chained in one reply.\n"
         "Tools:\n";
  if (state.tools) {
    for (const auto& name : state.tools->names()) {
      const auto& spec = state.tools->lookup(name);
      sys << "- " << spec.name << ": " << spec.description << " Arguments: " << spec.argument_schema.dump() << "\n";
    }
  }
  std::ostringstream user;
  user << "Instruction: " << instruction.text << "\n"
       << "Step: " << to_string(instruction.step_kind) << "\n"
       << "Query: " << state.query << "\n"
       << "ZIP: " << (state.zip ? state.zip->str() : "unknown") << "\n"
       << "Session date: " << state.session_date.iso() << "\n"
       << "Context: " << step_context(state, instruction.step_kind, ctx).dump();
  return {{"system", sys.str()}, {"user", user.str()}};
}

std::vector<std::pair<std::string, json>> parse_tool_calls(std::string_view reply) {
  const auto open = reply.find_first_of("{[");
  const auto close = reply.find_last_of("}]");
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw Error(ErrorCode::kParse, "executor reply holds no JSON", std::string(reply));
  }
  json j;
  try {
    j = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("executor reply is not JSON: ") + e.what(), std::string(reply));
  }
  json list;
  if (j.is_object() && j.contains("calls") && j["calls"].is_array()) {
    list = j["calls"];
  } else if (j.is_object() && j.contains("tool")) {
    list = json::array({j});
  } else if (j.is_array()) {
    list = j;
  } else {
    throw Error(ErrorCode::kParse, "executor reply names no tool call", std::string(reply));
  }
  std::vector<std::pair<std::string, json>> calls;
  for (const auto& c : list) {
    if (!c.is_object() || !c.contains("tool") || !c["tool"].is_string()) {
      throw Error(ErrorCode::kParse, "malformed tool call", c.dump());
    }
    calls.emplace_back(c["tool"].get<std::string>(), c.value("arguments", json::object()));
  }
  return calls;
}

namespace {

Date date_or(const json& doc, const char* key, Date fallback) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) return fallback;
  try {
    return Date::parse(it->get<std::string>());
  } catch (const Error&) {
    return Date::from_days(0);
  }
}

const Evidence* listing_for(const SessionState& state, const json& bank, const std::string& document) {
  const Evidence* by_doc = nullptr;
  for (const auto& e : state.evidence) {
    if (e.failed || e.kind != "bank") continue;
    if (bank.is_object() && normalize_text(e.payload.value("name", std::string{})) ==
                                normalize_text(bank.value("name", std::string{})) &&
        e.payload.value("zip", std::string{}) == bank.value("zip", std::string{})) {
      return &e;
    }
    if (!by_doc && !document.empty() && e.payload.value("document", std::string{}) == document) by_doc = &e;
  }
  return by_doc;
}

std::vector<Evidence> wrap_result(const SessionState& state, const Instruction& ins, const std::string& tool,
                                  const json& args, const json& result, const Registry& registry) {
  std::vector<Evidence> out;
  auto base = [&](std::string kind, json payload) {
    Evidence e;
    e.tool = tool;
    e.kind = std::move(kind);
    e.arguments = args;
    e.payload = std::move(payload);
    e.step = ins.step_kind;
    e.round = state.round;
    e.observed_at = state.session_date;
    return e;
  };
  if (tool == "search" && result.contains("banks")) {
    for (const auto& doc : result["banks"]) {
      Evidence e = base("bank", doc);
      const BankEntry entry = listing_entry(doc, registry);
      const bool from_registry = doc.value("source", std::string{}) == "registry" && entry.registry_id;
      e.source_kind = from_registry ? SourceKind::kRegistry : SourceKind::kWeb;
      e.source_id = "search:" + doc.value("zip", std::string{}) + ":" +
                    (doc.value("registry_id", json(nullptr)).is_string() ? doc["registry_id"].get<std::string>()
                                                                          : normalize_text(doc.value("name", std::string{})));
      e.observed_at = date_or(doc, "observed_at", state.session_date);
      out.push_back(std::move(e));
    }
  } else if (tool == "search") {
    Evidence e = base("nutrients", result);
    e.source_kind = SourceKind::kUsda;
    e.source_id = "usda:" + result["item"].value("name", std::string{});
    out.push_back(std::move(e));
  } else if (tool == "social") {
    for (const auto& post : result["posts"]) {
      json payload = post;
      payload["bank_name"] = args.value("bank_name", std::string{});
      Evidence e = base("post", payload);
      e.source_kind = SourceKind::kSocial;
      e.source_id = "social:" + post.value("source_id", std::string{});
      e.observed_at = date_or(post, "observed_at", state.session_date);
      out.push_back(std::move(e));
    }
  } else if (tool == "doc") {
    const std::string document = args.value("document", std::string{});
    for (const auto& item : result["items"]) {
      json payload = item;
      const Evidence* listing = listing_for(state, item.value("bank", json(nullptr)), document);
      Evidence e = base("item", json());
      if (listing) {
        if (!payload.value("bank", json(nullptr)).is_object()) {
          payload["bank"] = json{{"name", listing->payload.value("name", std::string{})},
                                 {"zip", listing->payload.value("zip", std::string{})}};
        }
        e.source_kind = listing->source_kind;
        e.source_id = listing->source_id + "#doc";
        e.observed_at = listing->observed_at;
        e.corroborations = listing->corroborations;
      } else {
        e.source_kind = SourceKind::kWeb;
        e.source_id = "doc:" + sha256_hex(document).substr(0, 12);
      }
      e.payload = std::move(payload);
      out.push_back(std::move(e));
    }
  } else if (tool == "table_eval") {
    Evidence e = base("rows", result);
    e.source_kind = SourceKind::kComputed;
    e.source_id = "table_eval:" + std::to_string(state.round);
    out.push_back(std::move(e));
  } else if (tool == "write") {
    Evidence e = base("receipt", result);
    e.source_kind = SourceKind::kComputed;
    e.source_id = "write:" + result.value("path", std::string{});
    out.push_back(std::move(e));
  }
  return out;
}

Evidence failure(const SessionState& state, const Instruction& ins, std::string tool, json args, std::string error) {
  Evidence e;
  e.tool = std::move(tool);
  e.kind = "failure";
  e.arguments = std::move(args);
  e.payload = nullptr;
  e.step = ins.step_kind;
  e.round = state.round;
  e.observed_at = state.session_date;
  e.failed = true;
  e.error = std::move(error);
  return e;
}

}  // namespace

std::vector<Evidence> execute_step(SessionState& state, const Instruction& instruction, ChatBackend& executor,
                                   const ExecutionContext& ctx) {
  if (instruction.is_done_marker) throw Error(ErrorCode::kPrecondition, "cannot execute the completion marker");
  if (!state.tools) throw Error(ErrorCode::kPrecondition, "session has no tool registry");
  ChatRequest req;
  req.messages = executor_messages(state, instruction, ctx);
  const ChatResponse resp = executor.complete(req);
  record(state, "executor", req, resp);

  std::vector<Evidence> produced;
  json observation{{"calls", json::array()}};
  const ToolContext tctx{state.session_date, state.audit_dir};
  try {
    auto calls = parse_tool_calls(resp.text);
    if (calls.size() > static_cast<std::size_t>(ctx.max_calls_per_step)) {
      calls.resize(static_cast<std::size_t>(ctx.max_calls_per_step));
    }
    for (auto& [tool, args] : calls) {
      json entry{{"tool", tool}, {"arguments", args}};
      try {
        if (!state.tools->contains(tool)) {
          throw Error(ErrorCode::kToolNotFound, "no tool named '" + tool + "'");
        }
        json result = state.tools->call(tool, args, tctx);
        for (auto& e : wrap_result(state, instruction, tool, args, result, ctx.registry)) produced.push_back(std::move(e));
        entry["result"] = std::move(result);
      } catch (const Error& e) {
        const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
        produced.push_back(failure(state, instruction, tool, args, msg));
        entry["error"] = msg;
      } catch (const json::exception& e) {
        const std::string msg = std::string("invalid-argument: ") + e.what();
        produced.push_back(failure(state, instruction, tool, args, msg));
        entry["error"] = msg;
      }
      observation["calls"].push_back(std::move(entry));
    }
  } catch (const Error& e) {
    produced.push_back(failure(state, instruction, "", nullptr, std::string("parse: ") + e.what()));
    observation["error"] = e.what();
  }

  state.memory.push_back(MemoryTurn{instruction.text, observation.dump(), false});
  state.evidence.insert(state.evidence.end(), produced.begin(), produced.end());
  corroborate(state.evidence, state.session_date);
  state.completed.insert(instruction.step_kind);
  ++state.round;
  return produced;
}

SessionStatus check_termination(const SessionState& state, const Instruction& instruction) {
  if (state.status != SessionStatus::kRunning) return state.status;
  if (instruction.is_done_marker) return SessionStatus::kDone;
  if (state.token_spend > state.budget.j_max) return SessionStatus::kBudgetExhausted;
  if (state.round >= state.budget.t_max) return SessionStatus::kRoundLimited;
  return SessionStatus::kRunning;
}

SynthesisResult build_answer(const SessionState& state, const Registry& registry, const Geocoder& geocoder) {
  SynthesisResult res;
  res.status = state.status;
  std::vector<const Evidence*> accepted;
  for (const auto& e : state.evidence) {
    if (validate_evidence(e, state.session_date).accepted) {
      accepted.push_back(&e);
    } else {
      ++res.rejected;
    }
  }
  res.accepted = accepted.size();

  std::vector<BankEntry> banks;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::string> alias;  // listing name|zip -> entry key
  for (const auto* e : accepted) {
    if (e->kind != "bank") continue;
    BankEntry b = listing_entry(e->payload, registry);
    const std::string key = entry_key(b);
    alias[bank_name_key(e->payload.value("name", std::string{}), e->payload.value("zip", std::string{}))] = key;
    if (index.count(key)) continue;
    index[key] = banks.size();
    banks.push_back(std::move(b));
  }

  std::map<std::string, NutrientVector> lookups;
  for (const auto* e : accepted) {
    if (e->kind != "nutrients") continue;
    const auto& item = e->payload["item"];
    lookups[normalize_item_name(item.value("name", std::string{}))] = item["nutrients"].get<NutrientVector>();
  }

  for (const auto* e : accepted) {
    if (e->kind != "item") continue;
    const auto bank = e->payload.value("bank", json(nullptr));
    if (!bank.is_object()) continue;
    const auto a = alias.find(bank_name_key(bank.value("name", std::string{}), bank.value("zip", std::string{})));
    if (a == alias.end()) continue;
    BankEntry& target = banks[index.at(a->second)];
    FoodItem item;
    item.name = normalize_item_name(e->payload.value("name", std::string{}));
    if (item.name.empty()) continue;
    if (std::any_of(target.items.begin(), target.items.end(), [&](const FoodItem& f) { return f.name == item.name; })) {
      continue;
    }
    item.serving = e->payload.value("serving", std::string{});
    if (auto l = lookups.find(item.name); l != lookups.end()) {
      item.nutrients = l->second;
    } else {
      const auto f = nutrient_fields(e->payload.value("nutrients", json()));
      if (f[0] && f[1] && f[2] && f[3]) item.nutrients = NutrientVector::make(*f[0], *f[1], *f[2], *f[3]);
    }
    target.items.push_back(std::move(item));
  }

  const Evidence* filter = nullptr;
  for (const auto* e : accepted) {
    if (e->kind == "rows" && e->step == StepKind::kGeoFilter) filter = e;
  }
  std::vector<BankEntry> ranked;
  if (filter) {
    std::set<std::string> used;
    for (const auto& row : filter->payload["rows"]) {
      if (!row.is_object() || !row.contains("name") || !row.contains("zip")) continue;
      std::string key;
      if (row.value("registry_id", json(nullptr)).is_string()) key = "id:" + row["registry_id"].get<std::string>();
      if (!index.count(key)) {
        const auto a = alias.find(bank_name_key(row.value("name", std::string{}), row.value("zip", std::string{})));
        if (a == alias.end()) continue;
        key = a->second;
      }
      if (index.count(key) && used.insert(key).second) ranked.push_back(banks[index[key]]);
    }
  }
  if (ranked.empty()) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < banks.size(); ++i) {
      const auto d = distance_from_user(state, banks[i], registry, geocoder);
      order.emplace_back(d.value_or(std::numeric_limits<double>::infinity()), i);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [d, i] : order) ranked.push_back(banks[i]);
  }
  if (ranked.empty()) throw Error(ErrorCode::kEmptyAnswer, "no accepted evidence names a food bank");
  res.answer.banks = std::move(ranked);
  res.answer_text = format_structured_output(res.answer);
  return res;
}

namespace {

void write_audit(const SessionState& state, const SynthesisResult* res, const Registry& registry,
                 const Geocoder& geocoder) {
  std::string chat;
  for (const auto& t : state.transcript) chat += t.dump() + "\n";
  write_file(state.audit_dir / "chat.jsonl", chat);
  if (!res) return;

  std::string banks = "rank,name,zip,registry_id,lat,lon,distance_miles\n";
  std::string nutrients;
  int rank = 0;
  for (const auto& b : res->answer.banks) {
    const auto at = resolve_location(b, registry, geocoder);
    const auto d = distance_from_user(state, b, registry, geocoder);
    banks += std::to_string(++rank) + "," + csv_escape(b.name) + "," + b.zip.str() + "," +
             csv_escape(b.registry_id.value_or("")) + "," + (at ? format_number(at->lat) : "") + "," +
             (at ? format_number(at->lon) : "") + "," + (d ? format_number(*d) : "") + "\n";
    for (const auto& item : b.items) {
      json row{{"bank", b.name}, {"zip", b.zip.str()}, {"name", item.name}, {"serving", item.serving}};
      row["nutrients"] = item.nutrients ? json(*item.nutrients) : json(nullptr);
      nutrients += row.dump() + "\n";
    }
  }
  write_file(state.audit_dir / "banks.csv", banks);
  write_file(state.audit_dir / "nutrients.jsonl", nutrients);
  write_file(state.audit_dir / "answer.txt", res->answer_text);
}

}  // namespace

SynthesisResult synthesize_answer(const SessionState& state, const Registry& registry, const Geocoder& geocoder) {
  if (state.status == SessionStatus::kRunning) throw Error(ErrorCode::kPrecondition, "session is still running");
  SynthesisResult res;
  try {
    res = build_answer(state, registry, geocoder);
  } catch (const Error& e) {
    if (!state.audit_dir.empty()) write_audit(state, nullptr, registry, geocoder);
    throw;
  }
  if (!state.audit_dir.empty()) write_audit(state, &res, registry, geocoder);
  return res;
}

SessionResult run_session(std::string query, ChatBackend& planner, ChatBackend& executor, const ToolRegistry& tools,
                          const Registry& registry, const Geocoder& geocoder, const AgentConfig& config,
                          const SessionOptions& options) {
  SessionResult out{init_session(std::move(query), tools, config.budget, options), std::nullopt, std::nullopt};
  SessionState& state = out.state;
  const ExecutionContext ectx{registry, geocoder, config.max_calls_per_step};
  while (state.status == SessionStatus::kRunning) {
    const Instruction ins = plan_step(state, planner);
    state.status = check_termination(state, ins);
    if (state.status != SessionStatus::kRunning) break;
    execute_step(state, ins, executor, ectx);
    state.memory = compress_memory(state.memory, config.keep_recent, config.compression_trigger);
    state.status = check_termination(state, Instruction{"", ins.step_kind, false, false});
  }
  try {
    out.synthesis = synthesize_answer(state, registry, geocoder);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptyAnswer) throw;
    out.error = e.what();
  }
  return out;
}

}  // namespace food4all
