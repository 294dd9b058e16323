#include "food4all/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "food4all/error.hpp"
#include "food4all/reward.hpp"
#include "food4all/structured_output.hpp"

namespace food4all {

namespace {

std::size_t intersection_size(const ItemSet& a, const ItemSet& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

void check_lengths(std::size_t cases, std::size_t answers) {
  if (cases != answers) throw Error(ErrorCode::kInvalidArgument, "cases and answers differ in length");
  if (cases == 0) throw Error(ErrorCode::kUndefinedMetric, "metric undefined for an empty dataset");
}

}  // namespace

SetScores set_prf(const ItemSet& pred, const ItemSet& gold) {
  const double hit = static_cast<double>(intersection_size(pred, gold));
  SetScores s;
  s.precision = pred.empty() ? 0.0 : hit / static_cast<double>(pred.size());
  s.recall = gold.empty() ? 0.0 : hit / static_cast<double>(gold.size());
  // 2PR/(P+R) reduced to counts, so the value is one correctly rounded division.
  const double denom = static_cast<double>(pred.size() + gold.size());
  s.f1 = hit == 0.0 ? 0.0 : 2.0 * hit / denom;
  return s;
}

double jaccard(const ItemSet& pred, const ItemSet& gold) {
  const std::size_t inter = intersection_size(pred, gold);
  const std::size_t uni = pred.size() + gold.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool field_hit(double pred, double truth) {
  if (truth == 0.0) return std::abs(pred) <= 0.5;
  return std::abs(pred - truth) <= 0.10 * std::abs(truth);
}

FieldTally field_tally(const std::vector<FoodItem>& pred_items, const std::vector<FoodItem>& gold_items) {
  FieldTally t;
  for (const auto& gold : gold_items) {
    t.total += 4;
    const auto p = std::find_if(pred_items.begin(), pred_items.end(),
                                [&](const FoodItem& x) { return x.name == gold.name; });
    if (p == pred_items.end() || !p->nutrients || !gold.nutrients) continue;
    const auto pv = p->nutrients->as_array();
    const auto gv = gold.nutrients->as_array();
    for (std::size_t k = 0; k < 4; ++k) t.hits += field_hit(pv[k], gv[k]) ? 1 : 0;
  }
  return t;
}

double field_accuracy(const std::vector<FoodItem>& pred_items, const std::vector<FoodItem>& gold_items) {
  if (gold_items.empty()) throw Error(ErrorCode::kUndefinedMetric, "field accuracy needs gold items");
  return field_tally(pred_items, gold_items).accuracy();
}

std::optional<std::string> top1_registry_id(const CandidateAnswer& answer, const Registry& registry) {
  if (answer.banks.empty()) return std::nullopt;
  const auto* rec = registry.match(answer.banks.front());
  if (!rec) return std::nullopt;
  return rec->registry_id;
}

double top1_accuracy(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers,
                     const Registry& registry) {
  check_lengths(cases.size(), answers.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto id = top1_registry_id(answers[i], registry);
    hits += id && *id == cases[i].gold_bank.registry_id ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

double case_min_distance(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                         const Geocoder& geocoder, double penalty_miles) {
  std::optional<double> best;
  for (const auto& bank : answer.banks) {
    const auto loc = resolve_location(bank, registry, geocoder);
    if (!loc) continue;
    const double d = haversine_miles(*loc, c.gold_bank.location);
    if (!best || d < *best) best = d;
  }
  return best.value_or(penalty_miles);
}

double mini_dis(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers,
                const Registry& registry, const Geocoder& geocoder, double penalty_miles) {
  check_lengths(cases.size(), answers.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    total += case_min_distance(cases[i], answers[i], registry, geocoder, penalty_miles);
  }
  return total / static_cast<double>(cases.size());
}

bool valid_bank(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                const Geocoder& geocoder, const SuccessCriteria& criteria) {
  const auto origin = geocoder.locate(c.zip);
  for (const auto& bank : answer.banks) {
    const auto* rec = registry.match(bank);
    if (!rec) continue;
    if (criteria.bank_rule == BankRule::kZipEquality) {
      if (rec->zip == c.zip) return true;
    } else if (origin && haversine_miles(*origin, rec->location) <= criteria.radius_miles) {
      return true;
    }
  }
  return false;
}

bool task_success(const CaseRecord& c, const CandidateAnswer& answer, const Registry& registry,
                  const Geocoder& geocoder, const SuccessCriteria& criteria) {
  if (!valid_bank(c, answer, registry, geocoder, criteria)) return false;
  if (set_prf(answer.item_names(), c.gold_item_names()).f1 <= criteria.f1_threshold) return false;
  return field_accuracy(answer.distinct_items(), c.gold_items) > criteria.field_threshold;
}

double tsr(std::span<const CaseRecord> cases, std::span<const CandidateAnswer> answers, const Registry& registry,
           const Geocoder& geocoder, const SuccessCriteria& criteria) {
  check_lengths(cases.size(), answers.size());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ok += task_success(cases[i], answers[i], registry, geocoder, criteria) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(cases.size());
}

CaseEvaluation evaluate_case(const CaseRecord& c, const Prediction& p, const Registry& registry,
                             const Geocoder& geocoder, const EvalOptions& options) {
  CaseEvaluation e;
  e.id = c.id;
  const auto id = top1_registry_id(p.answer, registry);
  e.top1 = id && *id == c.gold_bank.registry_id;
  e.min_distance_miles = case_min_distance(c, p.answer, registry, geocoder, options.minidis_penalty_miles);
  const auto pred = p.answer.item_names();
  const auto gold = c.gold_item_names();
  const auto prf = set_prf(pred, gold);
  e.precision = prf.precision;
  e.recall = prf.recall;
  e.f1 = prf.f1;
  e.jaccard = jaccard(pred, gold);
  const auto tally = field_tally(p.answer.distinct_items(), c.gold_items);
  e.field_hits = tally.hits;
  e.field_total = tally.total;
  e.valid_bank = valid_bank(c, p.answer, registry, geocoder, options.criteria);
  e.success = task_success(c, p.answer, registry, geocoder, options.criteria);
  e.format_ok = p.format_ok;
  return e;
}

EvalReport summarize(std::vector<CaseEvaluation> per_case) {
  if (per_case.empty()) throw Error(ErrorCode::kUndefinedMetric, "metric undefined for an empty dataset");
  EvalReport r;
  r.n = per_case.size();
  const double n = static_cast<double>(r.n);
  long hits = 0, total = 0;
  std::size_t judged = 0;
  JudgeSummary judge;
  for (const auto& e : per_case) {
    r.top1_acc += e.top1 ? 1.0 : 0.0;
    r.minidis_miles += e.min_distance_miles;
    r.precision += e.precision;
    r.recall += e.recall;
    r.f1 += e.f1;
    r.jaccard += e.jaccard;
    r.tsr += e.success ? 1.0 : 0.0;
    r.format_acc += e.format_ok ? 1.0 : 0.0;
    hits += e.field_hits;
    total += e.field_total;
    if (e.judge) {
      ++judged;
      judge.usefulness += e.judge->usefulness;
      judge.completeness += e.judge->completeness;
      judge.trustworthiness += e.judge->trustworthiness;
      judge.overall += e.judge->overall;
    }
  }
  r.top1_acc /= n;
  r.minidis_miles /= n;
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  r.jaccard /= n;
  r.tsr /= n;
  r.format_acc /= n;
  r.field_acc = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  if (judged > 0) {
    const double m = static_cast<double>(judged);
    judge.usefulness /= m;
    judge.completeness /= m;
    judge.trustworthiness /= m;
    judge.overall /= m;
    r.judge = judge;
  }
  r.per_case = std::move(per_case);
  return r;
}

EvalReport evaluate(std::span<const CaseRecord> cases, std::span<const Prediction> predictions,
                    const Registry& registry, const Geocoder& geocoder, const EvalOptions& options) {
  check_lengths(cases.size(), predictions.size());
  std::vector<CaseEvaluation> per_case;
  per_case.reserve(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    per_case.push_back(evaluate_case(cases[i], predictions[i], registry, geocoder, options));
  }
  return summarize(std::move(per_case));
}

void to_json(json& j, const JudgeSummary& s) {
  j = json{{"usefulness", s.usefulness},
           {"completeness", s.completeness},
           {"trustworthiness", s.trustworthiness},
           {"overall", s.overall}};
}

void from_json(const json& j, JudgeSummary& s) {
  s.usefulness = j.at("usefulness").get<double>();
  s.completeness = j.at("completeness").get<double>();
  s.trustworthiness = j.at("trustworthiness").get<double>();
  s.overall = j.at("overall").get<double>();
}

void to_json(json& j, const CaseEvaluation& c) {
  j = json{{"id", c.id},
           {"top1", c.top1},
           {"min_distance_miles", c.min_distance_miles},
           {"precision", c.precision},
           {"recall", c.recall},
           {"f1", c.f1},
           {"jaccard", c.jaccard},
           {"field_hits", c.field_hits},
           {"field_total", c.field_total},
           {"valid_bank", c.valid_bank},
           {"success", c.success},
           {"format_ok", c.format_ok}};
  if (c.judge) j["judge"] = *c.judge;
}

void from_json(const json& j, CaseEvaluation& c) {
  c.id = j.at("id").get<std::string>();
  c.top1 = j.at("top1").get<bool>();
  c.min_distance_miles = j.at("min_distance_miles").get<double>();
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.jaccard = j.at("jaccard").get<double>();
  c.field_hits = j.at("field_hits").get<int>();
  c.field_total = j.at("field_total").get<int>();
  c.valid_bank = j.at("valid_bank").get<bool>();
  c.success = j.at("success").get<bool>();
  c.format_ok = j.value("format_ok", true);
  if (j.contains("judge")) c.judge = j.at("judge").get<JudgeSummary>();
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"n", r.n},
           {"top1_acc", r.top1_acc},
           {"minidis_miles", r.minidis_miles},
           {"precision", r.precision},
           {"recall", r.recall},
           {"f1", r.f1},
           {"jaccard", r.jaccard},
           {"field_acc", r.field_acc},
           {"tsr", r.tsr},
           {"format_acc", r.format_acc},
           {"per_case", r.per_case}};
  if (r.judge) j["judge"] = *r.judge;
}

void from_json(const json& j, EvalReport& r) {
  r.n = j.at("n").get<std::size_t>();
  r.top1_acc = j.at("top1_acc").get<double>();
  r.minidis_miles = j.at("minidis_miles").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.jaccard = j.at("jaccard").get<double>();
  r.field_acc = j.at("field_acc").get<double>();
  r.tsr = j.at("tsr").get<double>();
  r.format_acc = j.value("format_acc", 1.0);
  r.per_case = j.value("per_case", json::array()).get<std::vector<CaseEvaluation>>();
  if (j.contains("judge")) r.judge = j.at("judge").get<JudgeSummary>();
}

namespace {

std::vector<std::pair<std::string, double>> report_cells(const EvalReport& r) {
  std::vector<std::pair<std::string, double>> cells = {
      {kReportColumns[0], r.top1_acc}, {kReportColumns[1], r.minidis_miles}, {kReportColumns[2], r.f1},
      {kReportColumns[3], r.jaccard},  {kReportColumns[4], r.field_acc},     {kReportColumns[5], r.tsr},
      {kReportColumns[6], r.format_acc}};
  if (r.judge) {
    cells.emplace_back("Usefulness", r.judge->usefulness);
    cells.emplace_back("Completeness", r.judge->completeness);
    cells.emplace_back("Trustworthiness", r.judge->trustworthiness);
  }
  return cells;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = line.find('|');
  while (start != std::string_view::npos) {
    const std::size_t next = line.find('|', start + 1);
    if (next == std::string_view::npos) break;
    cells.push_back(trim(line.substr(start + 1, next - start - 1)));
    start = next;
  }
  return cells;
}

}  // namespace

std::string render_report_table(const EvalReport& report) {
  const auto cells = report_cells(report);
  std::vector<std::string> values;
  for (const auto& [name, v] : cells) values.push_back(format_number(v));

  std::string header = "|", rule = "|", row = "|";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::size_t width = std::max(cells[i].first.size(), values[i].size());
    header += " " + cells[i].first + std::string(width - cells[i].first.size(), ' ') + " |";
    rule += std::string(width + 2, '-') + "|";
    row += " " + values[i] + std::string(width - values[i].size(), ' ') + " |";
  }
  std::ostringstream os;
  os << "Evaluation report (N = " << report.n << ")\n"
     << header << "\n"
     << rule << "\n"
     << row << "\n"
     << "Precision: " << format_number(report.precision) << "  Recall: " << format_number(report.recall) << "\n";
  return os.str();
}

std::map<std::string, double> parse_report_table(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    lines.emplace_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  std::vector<std::string> header, values;
  for (const auto& line : lines) {
    if (line.empty() || line.front() != '|') continue;
    if (line.find_first_not_of("|-") == std::string::npos) continue;
    if (header.empty()) {
      header = split_row(line);
    } else if (values.empty()) {
      values = split_row(line);
    }
  }
  if (header.empty() || header.size() != values.size()) {
    throw Error(ErrorCode::kParse, "report table not found", std::string(text));
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    try {
      std::size_t used = 0;
      out[header[i]] = std::stod(values[i], &used);
      if (used != values[i].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "bad report cell for " + header[i], values[i]);
    }
  }
  return out;
}

}  // namespace food4all
