#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "food4all/domain.hpp"

namespace food4all {

// Splits one CSV record; double quotes escape commas and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
std::vector<json> read_jsonl(const std::filesystem::path& path);

// Verified food-bank registry. CSV: registry_id,name,zip,lat,lon,last_verified
class Registry {
 public:
  Registry() = default;
  explicit Registry(std::vector<FoodBankRecord> records);
  static Registry load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  const FoodBankRecord* find(std::string_view registry_id) const;
  // By registry id when present, else by normalized name and ZIP.
  const FoodBankRecord* match(const BankEntry& bank) const;
  bool verified(const BankEntry& bank) const { return match(bank) != nullptr; }
  bool contains_name(std::string_view name) const;

  const std::vector<FoodBankRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<FoodBankRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::pair<std::string, std::string>, std::size_t> by_name_zip_;
};

// ZIP -> centroid table. CSV: zip,lat,lon
class Geocoder {
 public:
  static Geocoder load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
  void add(const ZipCode& zip, GeoPoint point) { table_[zip.str()] = point; }
  std::optional<GeoPoint> locate(const ZipCode& zip) const;
  std::vector<ZipCode> zips() const;

 private:
  std::map<std::string, GeoPoint> table_;
};

// Bank location: registry coordinates when the bank resolves, else the
// centroid of its ZIP.
std::optional<GeoPoint> resolve_location(const BankEntry& bank, const Registry& registry, const Geocoder& geocoder);

// Nutrient reference table. JSONL: {"name","serving","kcal","protein_g","fat_g","carb_g","aliases":[...]}
class NutrientDb {
 public:
  static NutrientDb load_jsonl(const std::filesystem::path& path);
  void save_jsonl(const std::filesystem::path& path) const;
  void add(FoodItem item, std::vector<std::string> aliases = {});

  // Exact normalized-name match, then alias table. Never synthesizes values.
  std::optional<FoodItem> lookup(std::string_view raw_name) const;
  const std::map<std::string, FoodItem>& entries() const { return entries_; }

 private:
  std::map<std::string, FoodItem> entries_;
  std::map<std::string, std::string> aliases_;
  std::map<std::string, std::vector<std::string>> aliases_by_name_;
};

std::vector<CaseRecord> load_cases(const std::filesystem::path& path);
void save_cases(const std::filesystem::path& path, const std::vector<CaseRecord>& cases);

}  // namespace food4all
