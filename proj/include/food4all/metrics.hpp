#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "food4all/data_io.hpp"
#include "food4all/domain.hpp"

namespace food4all {

using ItemSet = std::set<std::string>;

struct SetScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Empty prediction: precision 0. Empty gold: recall 0. F1 is 0 when P+R = 0.
SetScores set_prf(const ItemSet& pred, const ItemSet& gold);
// Both empty is 1.
double jaccard(const ItemSet& pred, const ItemSet& gold);

// Within ±10% of the reference value; a reference of exactly 0 uses an
// absolute tolerance of 0.5 units.
bool field_hit(double pred, double truth);

struct FieldTally {
  int hits = 0;
  int total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(hits) / total; }
};

// Four fields per gold item; a gold item with no name-matched, annotated
// prediction counts four misses. Extra predicted items are ignored.
FieldTally field_tally(const std::vector<FoodItem>& pred_items, const std::vector<FoodItem>& gold_items);
// Throws Error(kUndefinedMetric) when there are no gold items.
double field_accuracy(const std::vector<FoodItem>& pred_items, const std::vector<FoodItem>& gold_items);

// Registry id of the answer's first-ranked bank, if it resolves.
std::optional<std::string> top1_registry_id(const CandidateAnswer& answer, const Registry& registry);
double top1_accuracy(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers,
                     const Registry& registry);

// Smallest distance from any resolvable returned bank to the gold bank;
// `penalty_miles` when nothing resolves or the answer is empty.
double case_min_distance(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                         const Geocoder& geocoder, double penalty_miles = 10.0);
double mini_dis(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers,
                const Registry& registry, const Geocoder& geocoder, double penalty_miles = 10.0);

enum class BankRule { kZipEquality, kRadius };

struct SuccessCriteria {
  double f1_threshold = 0.6;     // strict
  double field_threshold = 0.8;  // strict
  BankRule bank_rule = BankRule::kZipEquality;
  double radius_miles = 1.0;  // kRadius only
};

bool valid_bank(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                const Geocoder& geocoder, const SuccessCriteria& criteria = {});
bool task_success(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                  const Geocoder& geocoder, const SuccessCriteria& criteria = {});
double tsr(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers, const Registry& registry,
           const Geocoder& geocoder, const SuccessCriteria& criteria = {});

struct JudgeSummary {
  double usefulness = 0.0;
  double completeness = 0.0;
  double trustworthiness = 0.0;
  double overall = 0.0;
};

struct CaseEvaluation {
  std::string id;
  bool top1 = false;
  double min_distance_miles = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
  int field_hits = 0;
  int field_total = 0;
  bool valid_bank = false;
  bool success = false;
  bool format_ok = true;
  std::optional<JudgeSummary> judge;
};

struct EvalReport {
  std::size_t n = 0;
  double top1_acc = 0.0;
  double minidis_miles = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
  double field_acc = 0.0;
  double tsr = 0.0;
  double format_acc = 0.0;
  std::optional<JudgeSummary> judge;
  std::vector<CaseEvaluation> per_case;
};

struct Prediction {
  CandidateAnswer answer;
  bool format_ok = true;  // parsed without diagnostics
};

struct EvalOptions {
  double minidis_penalty_miles = 10.0;
  SuccessCriteria criteria;
};

CaseEvaluation evaluate_case(const CaseRecord& c, const Prediction& p, const Registry& registry,
                             const Geocoder& geocoder, const EvalOptions& options = {});
// Headline numbers from per-case records: set metrics are macro means,
// field accuracy is total hits over 4 x total gold items.
EvalReport summarize(std::vector<CaseEvaluation> per_case);
// Throws Error(kUndefinedMetric) for an empty dataset.
EvalReport evaluate(std::span<const CaseRecord> cases, std::span<const Prediction> predictions,
                    const Registry& registry, const Geocoder& geocoder, const EvalOptions& options = {});

void to_json(json& j, const JudgeSummary& s);
void from_json(const json& j, JudgeSummary& s);
void to_json(json& j, const CaseEvaluation& c);
void from_json(const json& j, CaseEvaluation& c);
void to_json(json& j, const EvalReport& r);
void from_json(const json& j, EvalReport& r);

// Plain-text table with one column per headline metric.
std::string render_report_table(const EvalReport& report);
// Column name -> value, read back from render_report_table output.
std::map<std::string, double> parse_report_table(std::string_view text);

inline constexpr const char* kReportColumns[] = {"Top-1 Acc.", "MiniDis (miles)", "F1 Score",   "Jaccard",
                                                 "Field Acc.", "Task Succ.",      "Format Acc."};

}  // namespace food4all
