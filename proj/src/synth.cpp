#include "food4all/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "food4all/error.hpp"
#include "food4all/reward.hpp"
#include "food4all/rng.hpp"
#include "food4all/structured_output.hpp"
#include "food4all/tools.hpp"

namespace food4all {

namespace fs = std::filesystem;

const std::vector<ReferenceFood>& reference_foods() {
  static const std::vector<ReferenceFood> kFoods{
      {"Apple", "1 medium, 182 g", 95, 0.5, 0.3, 25},
      {"Canned Black Beans", "1/2 cup, 130 g", 120, 7, 0.5, 22},
      {"White Rice", "1 cup cooked, 158 g", 205, 4.3, 0.4, 45},
      {"Vegetable Soup", "1 cup, 240 mL", 100, 3, 2, 18},
      {"Whole Wheat Bread", "1 slice, 28 g", 70, 4, 1, 12},
      {"Muffin", "1 piece, 85 g", 240, 4, 10, 35},
      {"Turkey Sandwich", "1 sandwich, 200 g", 300, 15, 10, 35},
      {"Garden Salad", "1 bowl, 100 g", 50, 2, 0.5, 10},
      {"Chocolate Chip Cookie", "1 cookie, 35 g", 150, 2, 8, 20},
      {"Canned Tuna", "5 oz can", 179, 39, 1, 0},
      {"Peanut Butter", "2 tbsp", 190, 8, 16, 6},
      {"Pasta", "1 cup cooked", 200, 7, 1, 40},
      {"Milk", "1 cup, 2%", 120, 8, 5, 12},
      {"Breakfast Cereal", "1 cup", 120, 3, 2, 24},
      {"Canned Peaches", "1/2 cup", 80, 0.8, 0, 20},
      {"Macaroni and Cheese", "1 cup", 360, 12, 12, 35},
      {"Canned Corn", "1 cup", 80, 3, 1, 16},
      {"Orange", "1 medium", 70, 1, 0.2, 16},
      {"Tomato", "1 cup", 25, 1.5, 0.2, 5},
      {"Lentils", "1/2 cup cooked", 115, 9, 0.4, 20},
      {"Oatmeal", "1 cup cooked", 150, 5, 3, 27},
      {"Eggs", "1 large", 70, 6, 5, 0.6},
      {"Canned Green Beans", "1 cup", 60, 2, 0.5, 12},
      {"Banana", "1 medium", 105, 1.3, 0.4, 27},
  };
  return kFoods;
}

NutrientDb reference_nutrient_db() {
  NutrientDb db;
  for (const auto& f : reference_foods()) {
    db.add(FoodItem{normalize_item_name(f.display), f.serving,
                    NutrientVector::make(f.kcal, f.protein_g, f.fat_g, f.carb_g)});
  }
  return db;
}

namespace {

constexpr const char* kNameFirst[] = {"Mission", "Bayview", "Sunset", "Harbor", "Hillside", "Cedar",  "Golden",
                                      "Oak",     "Valley",  "Union",  "Marina", "Lakeside", "Pioneer", "Civic",
                                      "Maple",   "Summit",  "Grace",  "River",  "Market",  "Orchard"};
constexpr const char* kNameSecond[] = {"Community", "Neighborhood", "Family", "Westside", "Eastside",
                                       "Unity",     "Hope",         "Open",   "Common",   "Good Neighbor"};
constexpr const char* kNameKind[] = {"Food Bank", "Food Pantry", "Free Market", "Pantry", "Food Share"};
constexpr const char* kStreets[] = {"Alder", "Birch", "Cypress", "Dogwood", "Elm", "Fir", "Juniper", "Laurel"};

std::string fmt(double v) { return format_number(std::round(v * 10.0) / 10.0); }

// Flyer text in the loose style of pantry announcements; some items carry
// full nutrient facts, some partial, some none.
std::string flyer(const FoodBankRecord& bank, const std::vector<FoodItem>& items, Rng& rng) {
  std::string out = bank.name + " (" + bank.zip.str() + "):\n";
  const auto& foods = reference_foods();
  for (const auto& item : items) {
    const auto it = std::find_if(foods.begin(), foods.end(),
                                 [&](const ReferenceFood& f) { return normalize_item_name(f.display) == item.name; });
    const ReferenceFood& f = *it;
    out += "- " + std::string(f.display) + " (" + f.serving + ")";
    const int detail = static_cast<int>(rng.below(3));
    if (detail == 0) {
      out += " — " + fmt(f.kcal) + " kcal, Protein: " + fmt(f.protein_g) + " g, Fat: " + fmt(f.fat_g) +
             " g, Carbohydrates: " + fmt(f.carb_g) + " g";
    } else if (detail == 1) {
      out += " — " + fmt(f.kcal) + " kcal";
    }
    out += "\n";
  }
  return out;
}

json post(const std::string& id, const std::string& text, Date at) {
  return json{{"source_id", id}, {"text", text}, {"observed_at", at.iso()}};
}

}  // namespace

World generate_world(const WorldConfig& config) {
  if (config.zips < 1 || config.zips > 90) throw Error(ErrorCode::kInvalidArgument, "zips must be in [1, 90]");
  if (config.banks_per_zip < 1) throw Error(ErrorCode::kInvalidArgument, "banks_per_zip must be positive");
  Rng rng(config.seed);
  World w;
  w.as_of = config.as_of;
  w.nutrients = reference_nutrient_db();

  std::vector<ZipCode> zips;
  for (int i = 0; i < config.zips; ++i) {
    const auto zip = ZipCode::parse(std::to_string(94102 + i));
    const GeoPoint p = i == 0 ? GeoPoint{37.7793, -122.4193}
                              : GeoPoint::make(37.7793 + rng.uniform(-0.25, 0.25), -122.4193 + rng.uniform(-0.3, 0.3));
    w.geocoder.add(zip, p);
    zips.push_back(zip);
  }

  std::vector<FoodBankRecord> records;
  std::set<std::string> used_names;
  const std::size_t n_foods = reference_foods().size();
  int serial = 0;
  for (const auto& zip : zips) {
    const GeoPoint c = *w.geocoder.locate(zip);
    for (int k = 0; k < config.banks_per_zip; ++k) {
      std::string name;
      do {
        name = std::string(kNameFirst[rng.below(std::size(kNameFirst))]) + " " +
               kNameSecond[rng.below(std::size(kNameSecond))] + " " + kNameKind[rng.below(std::size(kNameKind))];
      } while (!used_names.insert(normalize_text(name)).second);
      char id[16];
      std::snprintf(id, sizeof id, "fb-%04d", ++serial);
      FoodBankRecord r{id, name, zip,
                       GeoPoint::make(c.lat + rng.uniform(-0.018, 0.018), c.lon + rng.uniform(-0.022, 0.022)),
                       config.as_of.plus_days(-static_cast<std::int64_t>(rng.below(26)))};
      // Inventory: 3 to 8 distinct reference foods.
      std::vector<std::size_t> idx(n_foods);
      for (std::size_t i = 0; i < n_foods; ++i) idx[i] = i;
      for (std::size_t i = n_foods; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
      const std::size_t count = 3 + rng.below(6);
      std::vector<FoodItem> items;
      for (std::size_t i = 0; i < count; ++i) {
        const auto& f = reference_foods()[idx[i]];
        items.push_back(*w.nutrients.lookup(f.display));
      }
      w.inventory[r.registry_id] = std::move(items);
      records.push_back(std::move(r));
    }
  }
  w.registry = Registry(records);

  std::map<std::string, std::string> documents;
  for (const auto& r : records) {
    documents[r.registry_id] = flyer(r, w.inventory.at(r.registry_id), rng);
    // Community chatter: zero to two recent posts, now and then one dated
    // after the snapshot (the social tool clamps it).
    json posts = json::array();
    const std::size_t n_posts = rng.below(3);
    for (std::size_t i = 0; i < n_posts; ++i) {
      const auto back = static_cast<std::int64_t>(rng.below(21)) - (rng.below(10) == 0 ? 3 : 0);
      posts.push_back(post("post-" + r.registry_id + "-" + std::to_string(i),
                           r.name + " had fresh produce out this week.", config.as_of.plus_days(-back)));
    }
    if (!posts.empty()) w.social_fixtures[social_fixture_key(r.name)] = json{{"posts", posts}};
  }

  for (const auto& zip : zips) {
    const GeoPoint c = *w.geocoder.locate(zip);
    json banks = json::array();
    for (const auto& r : records) {
      if (haversine_miles(c, r.location) > config.search_radius_miles) continue;
      banks.push_back(json{{"name", r.name},
                           {"zip", r.zip.str()},
                           {"registry_id", r.registry_id},
                           {"source", "registry"},
                           {"observed_at", r.last_verified.iso()},
                           {"lat", r.location.lat},
                           {"lon", r.location.lon},
                           {"document", documents.at(r.registry_id)}});
    }
    // An unlisted pantry scraped from the web whose only chatter is stale;
    // the orchestrator should refuse it.
    const std::string street = kStreets[rng.below(std::size(kStreets))];
    const std::string web_name = street + " Street Pop-Up Pantry " + zip.str();
    const auto stale = config.as_of.plus_days(-(45 + static_cast<std::int64_t>(rng.below(60))));
    const auto& f = reference_foods()[rng.below(n_foods)];
    banks.push_back(json{{"name", web_name},
                         {"zip", zip.str()},
                         {"registry_id", nullptr},
                         {"source", "web"},
                         {"observed_at", stale.iso()},
                         {"document", web_name + " (" + zip.str() + "):\n- " + f.display + "\n"}});
    w.social_fixtures[social_fixture_key(web_name)] =
        json{{"posts", json::array({post("post-web-" + zip.str(), "Is the pop-up on " + street + " still running?",
                                         stale)})}};
    w.search_fixtures[zip.str()] = json{{"banks", banks}};
  }
  return w;
}

std::vector<CaseRecord> generate_cases(const World& world, std::size_t n, std::uint64_t seed,
                                       const std::string& id_prefix) {
  static const char* kTemplates[] = {"I live in {zip}, where can I get free food nearby?",
                                     "Free groceries near {zip}?",
                                     "Where is the closest food pantry to {zip} and what do they have?",
                                     "Any food banks open around {zip} this week?"};
  // Gold is the bank nearest the centroid among those registered in the query ZIP,
  // so the gold answer itself satisfies the ZIP-equality success rule.
  std::vector<ZipCode> zips;
  for (const auto& z : world.geocoder.zips()) {
    const auto& recs = world.registry.records();
    if (std::any_of(recs.begin(), recs.end(), [&](const FoodBankRecord& r) { return r.zip == z; })) zips.push_back(z);
  }
  if (zips.empty()) throw Error(ErrorCode::kPrecondition, "world has no ZIP with a registered bank");
  Rng rng(seed);
  std::vector<CaseRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const ZipCode zip = zips[rng.below(zips.size())];
    const GeoPoint c = *world.geocoder.locate(zip);
    const FoodBankRecord* best = nullptr;
    double best_d = 0.0;
    for (const auto& r : world.registry.records()) {
      if (r.zip != zip) continue;
      const double d = haversine_miles(c, r.location);
      if (!best || d < best_d) {
        best = &r;
        best_d = d;
      }
    }
    std::string query = kTemplates[rng.below(std::size(kTemplates))];
    query.replace(query.find("{zip}"), 5, zip.str());
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04zu", id_prefix.c_str(), i + 1);
    CaseRecord rec;
    rec.id = id;
    rec.query = query;
    rec.zip = zip;
    rec.gold_bank = *best;
    rec.gold_items = world.inventory.at(best->registry_id);
    rec.y_plus = rec.gold_answer();
    out.push_back(std::move(rec));
  }
  return out;
}

void write_world(const World& world, const fs::path& dir) {
  fs::create_directories(dir / "fixtures" / "search");
  fs::create_directories(dir / "fixtures" / "social");
  world.geocoder.save_csv(dir / "geocode.csv");
  world.registry.save_csv(dir / "registry.csv");
  world.nutrients.save_jsonl(dir / "nutrients.jsonl");
  for (const auto& [zip, doc] : world.search_fixtures) {
    write_file(dir / "fixtures" / "search" / (zip + ".json"), doc.dump(2) + "\n");
  }
  for (const auto& [key, doc] : world.social_fixtures) {
    write_file(dir / "fixtures" / "social" / (key + ".json"), doc.dump(2) + "\n");
  }
}

}  // namespace food4all
