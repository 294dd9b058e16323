#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/chat.hpp"
#include "food4all/metrics.hpp"

namespace food4all {

struct JudgeScore {
  int usefulness = 0;
  int completeness = 0;
  int trustworthiness = 0;
  std::string justification;
  friend bool operator==(const JudgeScore&, const JudgeScore&) = default;
};

// The evaluator rubric with {q} and {y} substituted.
std::string build_judge_prompt(std::string_view query, std::string_view response);
// Inverse of build_judge_prompt. Throws Error(kParse) on a foreign prompt.
std::pair<std::string, std::string> extract_judge_payload(std::string_view prompt);

// Accepts surrounding prose or code fences around the JSON object. Throws
// Error(kParse) with the raw reply attached when keys are missing or a score
// is outside 1..5.
JudgeScore parse_judge_reply(std::string_view reply);

// Per-dimension mean over the runs, then the mean of the three dimensions.
JudgeSummary aggregate_judge(std::span<const JudgeScore> runs);

// s' = human_mean + human_sd * (s - mean) / sd over the model scores
// (population sd). Constant model scores all map to human_mean.
std::vector<double> zscore_calibrate(std::span<const double> model_scores, double human_mean, double human_sd);

// Runs the judge `runs` times with consecutive seeds starting at `seed`.
JudgeSummary judge_response(ChatBackend& backend, std::string_view query, std::string_view response, int runs = 3,
                            std::uint64_t seed = 0);

}  // namespace food4all
