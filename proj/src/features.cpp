#include "food4all/features.hpp"

#include <algorithm>

#include "food4all/reward.hpp"

namespace food4all {

FeatureVector extract_features(const CandidateAnswer& answer, const FeatureContext& ctx) {
  FeatureVector f{};
  if (answer.empty()) {
    f[kFeatDistance] = -ctx.d_max_miles;
    return f;
  }

  const auto user = ctx.geocoder.locate(ctx.user_zip);
  double total = 0.0;
  double fresh = 0.0;
  int verified = 0;
  for (const auto& bank : answer.banks) {
    double d = ctx.d_max_miles;
    if (user) {
      if (const auto at = resolve_location(bank, ctx.registry, ctx.geocoder)) d = haversine_miles(*user, *at);
    }
    total += std::min(d, ctx.d_max_miles);
    if (const auto* rec = ctx.registry.match(bank)) {
      ++verified;
      const double age = static_cast<double>(ctx.as_of.days_since(rec->last_verified));
      fresh += std::clamp(1.0 - std::max(age, 0.0) / 30.0, 0.0, 1.0);
    }
  }
  const double n_banks = static_cast<double>(answer.banks.size());
  f[kFeatDistance] = -std::min(total / n_banks, ctx.d_max_miles);
  f[kFeatVerified] = verified / n_banks;
  f[kFeatFreshness] = fresh / n_banks;

  const auto items = answer.distinct_items();
  if (!ctx.reference_items.empty()) {
    std::size_t hit = 0;
    for (const auto& name : answer.item_names()) hit += ctx.reference_items.count(name);
    f[kFeatCoverage] = static_cast<double>(hit) / static_cast<double>(ctx.reference_items.size());
  }
  if (!items.empty()) {
    const auto annotated = std::count_if(items.begin(), items.end(), [](const FoodItem& i) { return i.nutrients.has_value(); });
    f[kFeatNutrients] = static_cast<double>(annotated) / static_cast<double>(items.size());
  }
  f[kFeatLength] = -static_cast<double>(items.size() > ctx.max_items ? items.size() - ctx.max_items : 0);
  return f;
}

}  // namespace food4all
