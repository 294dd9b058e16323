#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "food4all/data_io.hpp"

namespace food4all {

// Reference foods with per-serving values; names are display names that
// normalize to the table keys.
struct ReferenceFood {
  const char* display;
  const char* serving;
  double kcal;
  double protein_g;
  double fat_g;
  double carb_g;
};

const std::vector<ReferenceFood>& reference_foods();
NutrientDb reference_nutrient_db();

struct WorldConfig {
  std::uint64_t seed = 7;
  int zips = 24;
  int banks_per_zip = 3;
  Date as_of = Date::from_ymd(2025, 6, 1);
  double search_radius_miles = 4.0;
};

// A small synthetic city: ZIP centroids, a verified registry, each bank's
// inventory, and the fixture files the search and social tools read.
struct World {
  Date as_of;
  Geocoder geocoder;
  Registry registry;
  NutrientDb nutrients;
  std::map<std::string, std::vector<FoodItem>> inventory;  // registry_id -> items
  std::map<std::string, json> search_fixtures;             // zip -> {"banks": [...]}
  std::map<std::string, json> social_fixtures;             // social key -> {"posts": [...]}
};

World generate_world(const WorldConfig& config);

// Cases over random ZIPs; the gold bank is the registry bank nearest the ZIP
// centroid and the gold items are its inventory. y_minus is left empty.
std::vector<CaseRecord> generate_cases(const World& world, std::size_t n, std::uint64_t seed,
                                       const std::string& id_prefix = "c");

// geocode.csv, registry.csv, nutrients.jsonl, fixtures/search/*.json,
// fixtures/social/*.json under `dir`.
void write_world(const World& world, const std::filesystem::path& dir);

}  // namespace food4all
