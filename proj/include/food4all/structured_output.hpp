#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "food4all/domain.hpp"

namespace food4all {

struct ParseDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string text;
  std::string reason;
};

struct ParseResult {
  CandidateAnswer answer;
  std::vector<ParseDiagnostic> diagnostics;
};

// Line grammar, one entry per line:
//   <bank>, <zip>: <item> (<kcal> kcal, <g> g protein, <g> g fat, <g> g carbs)
//   <bank>, <zip>: <item>          item without nutrient annotation
//   <bank>, <zip>:                 bank without items
// Lines sharing (bank, zip) merge into one bank entry in first-seen order.
// Blank lines are ignored; any other unmatched line becomes a diagnostic.
// Throws Error(kEmptyAnswer) when no line parses.
ParseResult parse_structured_output(std::string_view text);

std::string format_structured_output(const CandidateAnswer& answer);

// Shortest round-trippable decimal form.
std::string format_number(double value);

}  // namespace food4all
