#include "food4all/domain.hpp"

#include <cmath>
#include <sstream>

#include "food4all/error.hpp"

namespace food4all {

GeoPoint GeoPoint::make(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -180.0 ||
      lon > 180.0) {
    std::ostringstream os;
    os << "coordinates out of range: " << lat << ", " << lon;
    throw Error(ErrorCode::kInvalidArgument, os.str());
  }
  return GeoPoint{lat, lon};
}

std::optional<ZipCode> ZipCode::try_parse(std::string_view text) {
  if (text.size() != 5) return std::nullopt;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  return ZipCode(std::string(text));
}

ZipCode ZipCode::parse(std::string_view text) {
  auto zip = try_parse(text);
  if (!zip) throw Error(ErrorCode::kInvalidArgument, "invalid ZIP code: '" + std::string(text) + "'");
  return *zip;
}

NutrientVector NutrientVector::make(double kcal, double protein_g, double fat_g, double carb_g) {
  for (double v : {kcal, protein_g, fat_g, carb_g}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "nutrient values must be finite and non-negative");
    }
  }
  return NutrientVector{kcal, protein_g, fat_g, carb_g};
}

std::size_t CandidateAnswer::item_count() const {
  std::size_t n = 0;
  for (const auto& b : banks) n += b.items.size();
  return n;
}

std::set<std::string> CandidateAnswer::item_names() const {
  std::set<std::string> names;
  for (const auto& b : banks) {
    for (const auto& item : b.items) names.insert(item.name);
  }
  return names;
}

std::vector<FoodItem> CandidateAnswer::distinct_items() const {
  std::vector<FoodItem> out;
  std::set<std::string> seen;
  for (const auto& b : banks) {
    for (const auto& item : b.items) {
      if (seen.insert(item.name).second) out.push_back(item);
    }
  }
  return out;
}

CandidateAnswer CaseRecord::gold_answer() const {
  BankEntry bank{gold_bank.name, gold_bank.zip, gold_bank.registry_id, gold_items};
  return CandidateAnswer{{std::move(bank)}};
}

std::set<std::string> CaseRecord::gold_item_names() const {
  std::set<std::string> names;
  for (const auto& item : gold_items) names.insert(item.name);
  return names;
}

namespace {

bool is_ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

// Lowercase ASCII; apostrophes vanish; other ASCII punctuation becomes a
// separator; bytes >= 0x80 pass through untouched.
std::vector<std::string> fold_words(std::string_view raw) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : raw) {
    if (c >= 0x80 || is_ascii_alnum(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (c == '\'') {
      continue;
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

std::string normalize_text(std::string_view raw) { return join(fold_words(raw)); }

std::string normalize_item_name(std::string_view raw) {
  auto words = fold_words(raw);
  auto ends_with = [](const std::string& w, std::string_view tail) {
    return w.size() >= tail.size() && w.compare(w.size() - tail.size(), tail.size(), tail) == 0;
  };
  for (auto& w : words) {
    const std::size_t n = w.size();
    if (n < 4 || w[n - 1] != 's') continue;
    if (n >= 5 && (ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "xes") || ends_with(w, "oes"))) {
      w.resize(n - 2);  // peaches, radishes, boxes, potatoes
      continue;
    }
    const char prev = w[n - 2];
    if (prev != 's' && prev != 'u' && prev != 'i') w.pop_back();
  }
  return join(words);
}

void to_json(json& j, const GeoPoint& p) { j = json{{"lat", p.lat}, {"lon", p.lon}}; }

void to_json(json& j, const NutrientVector& n) {
  j = json{{"kcal", n.kcal}, {"protein_g", n.protein_g}, {"fat_g", n.fat_g}, {"carb_g", n.carb_g}};
}

void from_json(const json& j, NutrientVector& n) {
  n = NutrientVector::make(j.at("kcal").get<double>(), j.at("protein_g").get<double>(),
                           j.at("fat_g").get<double>(), j.at("carb_g").get<double>());
}

void to_json(json& j, const FoodItem& item) {
  j = json{{"name", item.name}};
  if (!item.serving.empty()) j["serving"] = item.serving;
  j["nutrients"] = item.nutrients ? json(*item.nutrients) : json(nullptr);
}

void from_json(const json& j, FoodItem& item) {
  item.name = normalize_item_name(j.at("name").get<std::string>());
  if (item.name.empty()) throw Error(ErrorCode::kInvalidArgument, "item name empty after normalization");
  item.serving = j.value("serving", std::string{});
  const auto it = j.find("nutrients");
  if (it != j.end() && !it->is_null()) {
    item.nutrients = it->get<NutrientVector>();
  } else {
    item.nutrients.reset();
  }
}

void to_json(json& j, const BankEntry& bank) {
  j = json{{"name", bank.name},
           {"zip", bank.zip.str()},
           {"registry_id", bank.registry_id ? json(*bank.registry_id) : json(nullptr)},
           {"items", bank.items}};
}

void from_json(const json& j, BankEntry& bank) {
  bank.name = j.at("name").get<std::string>();
  bank.zip = ZipCode::parse(j.at("zip").get<std::string>());
  const auto id = j.find("registry_id");
  if (id != j.end() && !id->is_null()) {
    bank.registry_id = id->get<std::string>();
  } else {
    bank.registry_id.reset();
  }
  bank.items = j.value("items", json::array()).get<std::vector<FoodItem>>();
}

void to_json(json& j, const CandidateAnswer& answer) { j = json{{"banks", answer.banks}}; }

void from_json(const json& j, CandidateAnswer& answer) {
  answer.banks = j.at("banks").get<std::vector<BankEntry>>();
}

void to_json(json& j, const FoodBankRecord& r) {
  j = json{{"registry_id", r.registry_id}, {"name", r.name},           {"zip", r.zip.str()},
           {"lat", r.location.lat},        {"lon", r.location.lon}, {"last_verified", r.last_verified.iso()}};
}

void from_json(const json& j, FoodBankRecord& r) {
  r.registry_id = j.at("registry_id").get<std::string>();
  r.name = j.at("name").get<std::string>();
  r.zip = ZipCode::parse(j.at("zip").get<std::string>());
  r.location = GeoPoint::make(j.at("lat").get<double>(), j.at("lon").get<double>());
  r.last_verified = Date::parse(j.at("last_verified").get<std::string>());
}

void to_json(json& j, const CaseRecord& c) {
  j = json{{"id", c.id},
           {"query", c.query},
           {"zip", c.zip.str()},
           {"gold_bank", c.gold_bank},
           {"gold_items", c.gold_items},
           {"y_plus", c.y_plus},
           {"y_minus", c.y_minus ? json(*c.y_minus) : json(nullptr)}};
}

void from_json(const json& j, CaseRecord& c) {
  c.id = j.at("id").get<std::string>();
  c.query = j.at("query").get<std::string>();
  c.zip = ZipCode::parse(j.at("zip").get<std::string>());
  c.gold_bank = j.at("gold_bank").get<FoodBankRecord>();
  c.gold_items = j.at("gold_items").get<std::vector<FoodItem>>();
  if (c.gold_items.empty()) throw Error(ErrorCode::kInvalidArgument, "case " + c.id + " has no gold items");
  const auto plus = j.find("y_plus");
  c.y_plus = plus != j.end() && !plus->is_null() ? plus->get<CandidateAnswer>() : c.gold_answer();
  const auto minus = j.find("y_minus");
  if (minus != j.end() && !minus->is_null()) {
    c.y_minus = minus->get<CandidateAnswer>();
  } else {
    c.y_minus.reset();
  }
}

}  // namespace food4all
