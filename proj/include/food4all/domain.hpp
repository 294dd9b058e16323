#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/date.hpp"
#include "json.hpp"

namespace food4all {

using json = nlohmann::json;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  // Throws Error(kInvalidArgument) when out of bounds or non-finite.
  static GeoPoint make(double lat, double lon);
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Five decimal digits, leading zeros kept.
class ZipCode {
 public:
  ZipCode() : code_("00000") {}
  static ZipCode parse(std::string_view text);
  static std::optional<ZipCode> try_parse(std::string_view text);

  const std::string& str() const { return code_; }
  friend auto operator<=>(const ZipCode&, const ZipCode&) = default;

 private:
  explicit ZipCode(std::string code) : code_(std::move(code)) {}
  std::string code_;
};

struct NutrientVector {
  double kcal = 0.0;
  double protein_g = 0.0;
  double fat_g = 0.0;
  double carb_g = 0.0;

  static NutrientVector make(double kcal, double protein_g, double fat_g, double carb_g);
  std::array<double, 4> as_array() const { return {kcal, protein_g, fat_g, carb_g}; }
  bool all_zero() const { return kcal == 0 && protein_g == 0 && fat_g == 0 && carb_g == 0; }
  friend bool operator==(const NutrientVector&, const NutrientVector&) = default;
};

struct FoodItem {
  std::string name;     // normalized
  std::string serving;  // free text, may be empty
  std::optional<NutrientVector> nutrients;
  friend bool operator==(const FoodItem&, const FoodItem&) = default;
};

struct FoodBankRecord {
  std::string registry_id;
  std::string name;
  ZipCode zip;
  GeoPoint location;
  Date last_verified;
  friend bool operator==(const FoodBankRecord&, const FoodBankRecord&) = default;
};

// One ranked bank in an answer. A missing registry_id marks a bank that was
// not resolved against the verified registry.
struct BankEntry {
  std::string name;
  ZipCode zip;
  std::optional<std::string> registry_id;
  std::vector<FoodItem> items;
  friend bool operator==(const BankEntry&, const BankEntry&) = default;
};

struct CandidateAnswer {
  std::vector<BankEntry> banks;  // ranking order

  bool empty() const { return banks.empty(); }
  std::size_t item_count() const;
  // Distinct normalized item names across all banks.
  std::set<std::string> item_names() const;
  // First occurrence of each distinct item name, in answer order.
  std::vector<FoodItem> distinct_items() const;
  friend bool operator==(const CandidateAnswer&, const CandidateAnswer&) = default;
};

struct CaseRecord {
  std::string id;
  std::string query;
  ZipCode zip;
  FoodBankRecord gold_bank;
  std::vector<FoodItem> gold_items;
  CandidateAnswer y_plus;
  std::optional<CandidateAnswer> y_minus;

  // The gold bank carrying the gold items, resolved to its registry id.
  CandidateAnswer gold_answer() const;
  std::set<std::string> gold_item_names() const;
};

// Lowercase, punctuation stripped, whitespace collapsed, plain plural "s"
// dropped from words of four or more letters.
std::string normalize_item_name(std::string_view raw);
// Same folding without plural stripping; used for bank-name matching.
std::string normalize_text(std::string_view raw);

void to_json(json& j, const GeoPoint& p);
void to_json(json& j, const NutrientVector& n);
void from_json(const json& j, NutrientVector& n);
void to_json(json& j, const FoodItem& item);
void from_json(const json& j, FoodItem& item);
void to_json(json& j, const BankEntry& bank);
void from_json(const json& j, BankEntry& bank);
void to_json(json& j, const CandidateAnswer& answer);
void from_json(const json& j, CandidateAnswer& answer);
void to_json(json& j, const FoodBankRecord& record);
void from_json(const json& j, FoodBankRecord& record);
void to_json(json& j, const CaseRecord& c);
void from_json(const json& j, CaseRecord& c);

}  // namespace food4all
