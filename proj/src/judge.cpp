#include "food4all/judge.hpp"

#include <cmath>
#include <numeric>

#include "food4all/error.hpp"

namespace food4all {

namespace {

constexpr std::string_view kPromptHead =
    "[System Instruction]\n"
    "You are an expert evaluator assessing the quality of an AI-generated response for food access and "
    "nutrition information retrieval.\n"
    "Your goal is to provide objective, criterion-based scores from 1 to 5 for three dimensions:\n"
    "\n"
    "- Usefulness (U): How well does the answer address the user’s intent?\n"
    "  5 = fully relevant and actionable; 1 = unrelated or unusable.\n"
    "- Completeness (C): Does the response cover all required elements (food bank, food items, and nutrition "
    "information)?\n"
    "  5 = all elements present and consistent; 1 = major omissions.\n"
    "- Trustworthiness (T): Are the facts, values, and attributions correct and verifiable?\n"
    "  5 = entirely factual and accurate; 1 = mostly incorrect or hallucinated.\n"
    "\n"
    "[User Query]\n";

constexpr std::string_view kPromptMiddle = "\n\n[System Response]\n";

constexpr std::string_view kPromptTail =
    "\n\n[Output Format]\n"
    "Return a JSON object in the form:\n"
    "{\n"
    "  \"Usefulness\": <1-5>,\n"
    "  \"Completeness\": <1-5>,\n"
    "  \"Trustworthiness\": <1-5>,\n"
    "  \"Justification\": \"<brief rationale>\"\n"
    "}\n";

int score_field(const json& j, const char* key, std::string_view raw) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw Error(ErrorCode::kParse, std::string("judge reply lacks numeric \"") + key + "\"", std::string(raw));
  }
  const double v = it->get<double>();
  if (v != std::floor(v) || v < 1 || v > 5) {
    throw Error(ErrorCode::kParse, std::string("judge score \"") + key + "\" outside 1..5", std::string(raw));
  }
  return static_cast<int>(v);
}

}  // namespace

std::string build_judge_prompt(std::string_view query, std::string_view response) {
  std::string out;
  out.reserve(kPromptHead.size() + query.size() + kPromptMiddle.size() + response.size() + kPromptTail.size());
  out += kPromptHead;
  out += query;
  out += kPromptMiddle;
  out += response;
  out += kPromptTail;
  return out;
}

std::pair<std::string, std::string> extract_judge_payload(std::string_view prompt) {
  if (!prompt.starts_with(kPromptHead) || !prompt.ends_with(kPromptTail)) {
    throw Error(ErrorCode::kParse, "not a judge prompt");
  }
  const auto body = prompt.substr(kPromptHead.size(), prompt.size() - kPromptHead.size() - kPromptTail.size());
  const auto mid = body.find(kPromptMiddle);
  if (mid == std::string_view::npos) throw Error(ErrorCode::kParse, "judge prompt lacks response section");
  return {std::string(body.substr(0, mid)), std::string(body.substr(mid + kPromptMiddle.size()))};
}

JudgeScore parse_judge_reply(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw Error(ErrorCode::kParse, "judge reply contains no JSON object", std::string(reply));
  }
  json j;
  try {
    j = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("judge reply is not valid JSON: ") + e.what(), std::string(reply));
  }
  JudgeScore s;
  s.usefulness = score_field(j, "Usefulness", reply);
  s.completeness = score_field(j, "Completeness", reply);
  s.trustworthiness = score_field(j, "Trustworthiness", reply);
  const auto just = j.find("Justification");
  if (just == j.end() || !just->is_string()) {
    throw Error(ErrorCode::kParse, "judge reply lacks \"Justification\"", std::string(reply));
  }
  s.justification = just->get<std::string>();
  return s;
}

JudgeSummary aggregate_judge(std::span<const JudgeScore> runs) {
  if (runs.empty()) throw Error(ErrorCode::kInvalidArgument, "no judge runs to aggregate");
  JudgeSummary s;
  for (const auto& r : runs) {
    s.usefulness += r.usefulness;
    s.completeness += r.completeness;
    s.trustworthiness += r.trustworthiness;
  }
  const double n = static_cast<double>(runs.size());
  s.usefulness /= n;
  s.completeness /= n;
  s.trustworthiness /= n;
  s.overall = (s.usefulness + s.completeness + s.trustworthiness) / 3.0;
  return s;
}

std::vector<double> zscore_calibrate(std::span<const double> model_scores, double human_mean, double human_sd) {
  if (!(human_sd > 0.0)) throw Error(ErrorCode::kInvalidArgument, "human_sd must be positive");
  std::vector<double> out(model_scores.size(), human_mean);
  if (model_scores.empty()) return out;
  const double n = static_cast<double>(model_scores.size());
  const double mean = std::accumulate(model_scores.begin(), model_scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : model_scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < model_scores.size(); ++i) {
    out[i] = human_mean + human_sd * (model_scores[i] - mean) / sd;
  }
  return out;
}

JudgeSummary judge_response(ChatBackend& backend, std::string_view query, std::string_view response, int runs,
                            std::uint64_t seed) {
  if (runs < 1) throw Error(ErrorCode::kInvalidArgument, "judge needs at least one run");
  const std::string prompt = build_judge_prompt(query, response);
  std::vector<JudgeScore> scores;
  for (int i = 0; i < runs; ++i) {
    ChatRequest req;
    req.messages = {{"user", prompt}};
    req.max_tokens = 512;
    req.seed = seed + static_cast<std::uint64_t>(i);
    scores.push_back(parse_judge_reply(backend.complete(req).text));
  }
  return aggregate_judge(scores);
}

}  // namespace food4all
