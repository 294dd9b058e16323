#include "food4all/structured_output.hpp"

#include <charconv>
#include <regex>
#include <sstream>

#include "food4all/error.hpp"

namespace food4all {

namespace {

const std::regex& head_pattern() {
  static const std::regex re(R"(^\s*(.*\S),\s*(\d{5})\s*:\s*(.*?)\s*$)");
  return re;
}

const std::regex& nutrient_pattern() {
  static const std::string num = R"(([0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?))";
  static const std::regex re("^(.+?)\\s*\\(\\s*" + num + "\\s*kcal\\s*,\\s*" + num + "\\s*g\\s+protein\\s*,\\s*" +
                                 num + "\\s*g\\s+fat\\s*,\\s*" + num + "\\s*g\\s+carbs?\\s*\\)$",
                             std::regex::icase);
  return re;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, "bad number", s);
  }
  return v;
}

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

ParseResult parse_structured_output(std::string_view text) {
  ParseResult result;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t parsed = 0;

  auto bank_for = [&](const std::string& name, const ZipCode& zip) -> BankEntry& {
    for (auto& b : result.answer.banks) {
      if (b.name == name && b.zip == zip) return b;
    }
    result.answer.banks.push_back(BankEntry{name, zip, std::nullopt, {}});
    return result.answer.banks.back();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    auto diag = [&](std::string reason) {
      result.diagnostics.push_back(ParseDiagnostic{line_no, line, std::move(reason)});
    };

    std::smatch head;
    if (!std::regex_match(line, head, head_pattern())) {
      diag("line does not start with '<bank>, <zip>:'");
      continue;
    }
    const std::string bank_name = head[1].str();
    const ZipCode zip = ZipCode::parse(head[2].str());
    const std::string rest = head[3].str();

    if (rest.empty()) {
      bank_for(bank_name, zip);
      ++parsed;
      continue;
    }

    FoodItem item;
    std::smatch tail;
    if (std::regex_match(rest, tail, nutrient_pattern())) {
      item.name = normalize_item_name(tail[1].str());
      item.nutrients = NutrientVector::make(to_double(tail[2].str()), to_double(tail[3].str()),
                                            to_double(tail[4].str()), to_double(tail[5].str()));
    } else if (rest.find_first_of("()") == std::string::npos) {
      item.name = normalize_item_name(rest);
    } else {
      diag("malformed nutrient annotation");
      continue;
    }
    if (item.name.empty()) {
      diag("item name empty after normalization");
      continue;
    }
    bank_for(bank_name, zip).items.push_back(std::move(item));
    ++parsed;
  }

  if (parsed == 0) {
    std::string detail;
    for (const auto& d : result.diagnostics) detail += d.text + "\n";
    throw Error(ErrorCode::kEmptyAnswer, "no parseable answer line", detail);
  }
  return result;
}

std::string format_structured_output(const CandidateAnswer& answer) {
  std::string out;
  for (const auto& bank : answer.banks) {
    const std::string head = bank.name + ", " + bank.zip.str() + ":";
    if (bank.items.empty()) {
      out += head + "\n";
      continue;
    }
    for (const auto& item : bank.items) {
      out += head + " " + item.name;
      if (item.nutrients) {
        const auto& n = *item.nutrients;
        out += " (" + format_number(n.kcal) + " kcal, " + format_number(n.protein_g) + " g protein, " +
               format_number(n.fat_g) + " g fat, " + format_number(n.carb_g) + " g carbs)";
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace food4all
