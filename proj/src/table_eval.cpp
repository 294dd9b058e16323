#include "food4all/table_eval.hpp"

#include <algorithm>
#include <charconv>
#include <string>
#include <vector>

#include "food4all/error.hpp"

namespace food4all {

namespace {

[[noreturn]] void reject(const std::string& why) { throw Error(ErrorCode::kRejected, "table expression rejected: " + why); }

std::vector<std::string> tokenize(std::string_view stage) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < stage.size()) {
    if (stage[i] == ' ' || stage[i] == '\t') {
      ++i;
      continue;
    }
    if (stage[i] == '"') {
      const auto end = stage.find('"', i + 1);
      if (end == std::string_view::npos) reject("unterminated string");
      out.emplace_back(stage.substr(i, end - i + 1));
      i = end + 1;
      continue;
    }
    std::size_t j = i;
    while (j < stage.size() && stage[j] != ' ' && stage[j] != '\t') ++j;
    out.emplace_back(stage.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_field(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::optional<double> to_number(const std::string& s) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename T>
bool compare(const T& a, const std::string& op, const T& b) {
  if (op == "<") return a < b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == ">=") return a >= b;
  if (op == "==") return a == b;
  return a != b;
}

const json* field_of(const json& row, const std::string& field) {
  if (!row.is_object()) return nullptr;
  const auto it = row.find(field);
  return it == row.end() ? nullptr : &*it;
}

json apply(json rows, const std::vector<std::string>& t) {
  const std::string& verb = t[0];
  if (verb == "filter") {
    if (t.size() != 4 || !is_field(t[1])) reject("filter takes <field> <op> <value>");
    static const std::vector<std::string> kOps{"<", "<=", ">", ">=", "==", "!="};
    if (std::find(kOps.begin(), kOps.end(), t[2]) == kOps.end()) reject("unknown operator '" + t[2] + "'");
    const bool quoted = t[3].size() >= 2 && t[3].front() == '"';
    const auto number = quoted ? std::nullopt : to_number(t[3]);
    if (!quoted && !number) reject("filter value must be a number or a quoted string");
    json out = json::array();
    for (auto& row : rows) {
      const json* v = field_of(row, t[1]);
      if (!v) continue;
      bool keep = false;
      if (number && v->is_number()) {
        keep = compare(v->get<double>(), t[2], *number);
      } else if (quoted && v->is_string()) {
        keep = compare(v->get<std::string>(), t[2], t[3].substr(1, t[3].size() - 2));
      }
      if (keep) out.push_back(std::move(row));
    }
    return out;
  }
  if (verb == "sort") {
    if (t.size() < 2 || t.size() > 3 || !is_field(t[1])) reject("sort takes <field> [asc|desc]");
    bool desc = false;
    if (t.size() == 3) {
      if (t[2] != "asc" && t[2] != "desc") reject("sort direction must be asc or desc");
      desc = t[2] == "desc";
    }
    std::vector<json> v(rows.begin(), rows.end());
    std::stable_sort(v.begin(), v.end(), [&](const json& a, const json& b) {
      const json* fa = field_of(a, t[1]);
      const json* fb = field_of(b, t[1]);
      if (!fa || !fb) return fa != nullptr && fb == nullptr;
      return desc ? *fb < *fa : *fa < *fb;
    });
    return json(v);
  }
  if (verb == "take") {
    if (t.size() != 2) reject("take takes <n>");
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(t[1].data(), t[1].data() + t[1].size(), n);
    if (ec != std::errc() || ptr != t[1].data() + t[1].size()) reject("take count must be a non-negative integer");
    if (rows.size() > n) rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(n), rows.end());
    return rows;
  }
  if (verb == "sum" || verb == "mean") {
    if (t.size() != 2 || !is_field(t[1])) reject(verb + " takes <field>");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& row : rows) {
      const json* v = field_of(row, t[1]);
      if (v && v->is_number()) {
        total += v->get<double>();
        ++count;
      }
    }
    if (verb == "mean" && count == 0) return json::array();
    return json::array({json{{verb + "_" + t[1], verb == "sum" ? total : total / static_cast<double>(count)}}});
  }
  reject("unknown stage '" + verb + "'");
}

}  // namespace

json table_eval(const json& table, std::string_view expression) {
  if (!table.is_array()) reject("table must be an array of rows");
  json rows = table;
  std::size_t start = 0;
  bool any = false;
  while (start <= expression.size()) {
    auto bar = expression.find('|', start);
    if (bar == std::string_view::npos) bar = expression.size();
    const auto tokens = tokenize(expression.substr(start, bar - start));
    if (tokens.empty()) reject("empty stage");
    rows = apply(std::move(rows), tokens);
    any = true;
    start = bar + 1;
  }
  if (!any) reject("empty expression");
  return rows;
}

}  // namespace food4all
