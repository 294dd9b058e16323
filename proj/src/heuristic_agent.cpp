#include "food4all/heuristic_agent.hpp"

#include <optional>
#include <string>

#include "food4all/agent.hpp"

namespace food4all {

namespace {

std::optional<std::string> field(const std::string& text, std::string_view label) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    if (line.starts_with(label)) return std::string(line.substr(label.size()));
    pos = end + 1;
  }
  return std::nullopt;
}

const std::string* last_with(const ChatRequest& request, std::string_view marker) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user" && it->content.find(marker) != std::string::npos) return &it->content;
  }
  return nullptr;
}

}  // namespace

ChatResponse HeuristicPlanner::complete(const ChatRequest& request) {
  const std::string* prompt = last_with(request, "Completed stages: ");
  if (!prompt) return {std::string(kTaskDone), std::nullopt};
  const std::string done = field(*prompt, "Completed stages: ").value_or("");
  const auto zip = ZipCode::try_parse(field(*prompt, "ZIP: ").value_or(""));
  double radius = 10.0;
  if (auto r = field(*prompt, "Radius miles: ")) {
    try {
      radius = std::stod(*r);
    } catch (const std::exception&) {
    }
  }
  for (StepKind k : kWorkflow) {
    if (done.find(to_string(k)) == std::string::npos) return {canonical_instruction(k, zip, radius), std::nullopt};
  }
  return {std::string(kTaskDone), std::nullopt};
}

ChatResponse HeuristicExecutor::complete(const ChatRequest& request) {
  const std::string* prompt = last_with(request, "Context: ");
  json calls = json::array();
  if (!prompt) return {json{{"calls", calls}}.dump(), std::nullopt};
  const auto step = step_kind_from(field(*prompt, "Step: ").value_or(""));
  json ctx;
  try {
    ctx = json::parse(field(*prompt, "Context: ").value_or("{}"));
  } catch (const json::exception&) {
    ctx = json::object();
  }
  auto call = [&](const char* tool, json args) { calls.push_back(json{{"tool", tool}, {"arguments", std::move(args)}}); };
  switch (step.value_or(StepKind::kSynthesis)) {
    case StepKind::kGeoRetrieval:
      if (ctx.value("zip", json(nullptr)).is_string()) {
        call("search", json{{"zip", ctx["zip"]}, {"query", ctx.value("query", std::string{})}});
      }
      break;
    case StepKind::kFreshness:
      for (const auto& name : ctx.value("banks", json::array())) call("social", json{{"bank_name", name}});
      break;
    case StepKind::kDocParse:
      for (const auto& d : ctx.value("documents", json::array())) call("doc", json{{"document", d.value("document", "")}});
      break;
    case StepKind::kNutrition:
      for (const auto& item : ctx.value("items", json::array())) call("search", json{{"item_name", item}});
      break;
    case StepKind::kGeoFilter:
      call("table_eval", json{{"table", ctx.value("banks", json::array())},
                              {"expression", "filter distance_miles <= " +
                                                 json(ctx.value("radius_miles", 10.0)).dump() +
                                                 " | sort distance_miles asc"}});
      break;
    case StepKind::kSynthesis:
      if (!ctx.value("answer_text", std::string{}).empty()) {
        call("write", json{{"path", ctx.value("path", std::string("answer.txt"))}, {"payload", ctx["answer_text"]}});
      }
      break;
  }
  return {json{{"calls", calls}}.dump(), std::nullopt};
}

}  // namespace food4all
