#include "food4all/negatives.hpp"

#include <cmath>

#include "food4all/error.hpp"
#include "food4all/rng.hpp"

namespace food4all {

const char* to_string(CorruptionOp op) {
  switch (op) {
    case CorruptionOp::kItemDrop: return "item-drop";
    case CorruptionOp::kZipShift: return "zip-shift";
    case CorruptionOp::kNutrNoise: return "nutr-noise";
    case CorruptionOp::kHallucinate: return "hallucinate";
  }
  return "?";
}

std::vector<CorruptionOp> parse_corruption_ops(std::string_view list) {
  std::vector<CorruptionOp> ops;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    const auto name = list.substr(start, comma - start);
    bool known = false;
    for (auto op : {CorruptionOp::kItemDrop, CorruptionOp::kZipShift, CorruptionOp::kNutrNoise,
                    CorruptionOp::kHallucinate}) {
      if (name == to_string(op)) {
        ops.push_back(op);
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::kInvalidArgument, "unknown corruption op '" + std::string(name) + "'");
    start = comma + 1;
  }
  return ops;
}

void corrupt_item_drop(CandidateAnswer& a, Rng& rng) {
  const std::size_t total = a.item_count();
  std::size_t drop = (total + 3) / 4;
  while (drop-- > 0) {
    std::size_t pick = rng.below(a.item_count());
    for (auto& b : a.banks) {
      if (pick < b.items.size()) {
        b.items.erase(b.items.begin() + static_cast<std::ptrdiff_t>(pick));
        break;
      }
      pick -= b.items.size();
    }
  }
}

void corrupt_zip_shift(CandidateAnswer& a, const Registry& registry, const Geocoder& geocoder, Rng& rng) {
  if (a.banks.empty()) return;
  BankEntry& bank = a.banks[rng.below(a.banks.size())];
  const auto here = resolve_location(bank, registry, geocoder);
  std::vector<const FoodBankRecord*> far;
  for (const auto& r : registry.records()) {
    if (!here || haversine_miles(*here, r.location) >= kZipShiftMinMiles) far.push_back(&r);
  }
  if (far.empty()) return;
  const auto* pick = far[rng.below(far.size())];
  bank.name = pick->name;
  bank.zip = pick->zip;
  bank.registry_id = pick->registry_id;
}

void corrupt_nutr_noise(CandidateAnswer& a, Rng& rng) {
  std::vector<FoodItem*> annotated;
  for (auto& b : a.banks) {
    for (auto& item : b.items) {
      if (item.nutrients && !item.nutrients->all_zero()) annotated.push_back(&item);
    }
  }
  if (annotated.empty()) return;
  NutrientVector& n = *annotated[rng.below(annotated.size())]->nutrients;
  double* fields[] = {&n.kcal, &n.protein_g, &n.fat_g, &n.carb_g};
  std::vector<double*> nonzero;
  for (double* f : fields) {
    if (*f != 0.0) nonzero.push_back(f);
  }
  double* target = nonzero[rng.below(nonzero.size())];
  // magnitude in (0.1, 0.5], either direction: factor outside [0.9, 1.1]
  const double m = 0.5 - 0.4 * rng.uniform();
  *target *= rng.coin() ? 1.0 + m : 1.0 - m;
}

void corrupt_hallucinate(CandidateAnswer& a, const ZipCode& zip, const Registry& registry, Rng& rng) {
  static const char* kStems[] = {"Hope", "Harvest", "Unity", "Riverside", "Cornerstone", "Good Neighbor", "Open Table"};
  static const char* kKinds[] = {"Pantry", "Food Shelf", "Community Kitchen", "Food Hub"};
  std::string name;
  do {
    name = std::string(kStems[rng.below(std::size(kStems))]) + " " + kKinds[rng.below(std::size(kKinds))] + " #" +
           std::to_string(100 + rng.below(900));
  } while (registry.contains_name(name));
  BankEntry fake{name, zip, std::nullopt, {}};
  if (a.item_count() > 0) {
    const auto items = a.distinct_items();
    fake.items.push_back(items[rng.below(items.size())]);
  }
  const auto pos = rng.below(a.banks.size() + 1);
  a.banks.insert(a.banks.begin() + static_cast<std::ptrdiff_t>(pos), std::move(fake));
}

CandidateAnswer generate_negative(const CaseRecord& c, std::span<const CorruptionOp> ops, const RewardEngine& engine,
                                  std::uint64_t seed) {
  if (ops.empty()) throw Error(ErrorCode::kInvalidArgument, "no corruption ops selected");
  Rng rng(seed);
  const double best = engine.composite(c.y_plus, c);
  for (int attempt = 0; attempt < kNegativeAttempts; ++attempt) {
    CandidateAnswer y = c.y_plus;
    for (auto op : ops) {
      switch (op) {
        case CorruptionOp::kItemDrop: corrupt_item_drop(y, rng); break;
        case CorruptionOp::kZipShift: corrupt_zip_shift(y, engine.registry(), engine.geocoder(), rng); break;
        case CorruptionOp::kNutrNoise: corrupt_nutr_noise(y, rng); break;
        case CorruptionOp::kHallucinate: corrupt_hallucinate(y, c.zip, engine.registry(), rng); break;
      }
    }
    if (engine.composite(y, c) < best) return y;
  }
  throw Error(ErrorCode::kRejected, "case " + c.id + ": no lower-scoring negative in " +
                                        std::to_string(kNegativeAttempts) + " attempts");
}

}  // namespace food4all
