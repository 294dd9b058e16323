#include "food4all/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "food4all/error.hpp"

namespace food4all {

double haversine_miles(GeoPoint a, GeoPoint b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(a.lat * kRad) * std::cos(b.lat * kRad) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

RewardWeights RewardWeights::from_array(const std::array<double, 4>& w) {
  for (double v : w) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "reward weights must be finite");
  }
  return RewardWeights{w[0], w[1], w[2], w[3]};
}

RewardVector RewardVector::from_array(const std::array<double, 4>& r) { return RewardVector{r[0], r[1], r[2], r[3]}; }

bool RewardVector::within_bounds() const {
  const auto v = as_array();
  const auto lo = kRewardLowerBounds.as_array();
  const auto hi = kRewardUpperBounds.as_array();
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(v[i] >= lo[i] && v[i] <= hi[i])) return false;
  }
  return true;
}

double geo_reward(const CandidateAnswer& answer, const ZipCode& user_zip, const Registry& registry,
                  const Geocoder& geocoder, double d_max_miles, GeoAggregation aggregation) {
  if (answer.banks.empty()) return -1.0;
  const auto origin = geocoder.locate(user_zip);
  std::vector<double> distances;
  for (const auto& bank : answer.banks) {
    const auto loc = resolve_location(bank, registry, geocoder);
    distances.push_back(origin && loc ? haversine_miles(*origin, *loc) : d_max_miles);
  }
  double d = 0.0;
  if (aggregation == GeoAggregation::kMin) {
    d = *std::min_element(distances.begin(), distances.end());
  } else {
    for (double x : distances) d += x;
    d /= static_cast<double>(distances.size());
  }
  return -std::min(d / d_max_miles, 1.0);
}

double item_reward(const std::set<std::string>& pred, const std::set<std::string>& gold, double lambda) {
  if (lambda < 0.0) throw Error(ErrorCode::kInvalidArgument, "lambda must be non-negative");
  std::size_t hit = 0;
  for (const auto& p : pred) hit += gold.count(p);
  const std::size_t extra = pred.size() - hit;
  double r = 0.0;
  if (gold.empty()) {
    r = pred.empty() ? 1.0 : -lambda;
  } else {
    r = static_cast<double>(hit) / static_cast<double>(gold.size());
    if (!pred.empty()) r -= lambda * static_cast<double>(extra) / static_cast<double>(pred.size());
  }
  return std::clamp(r, -0.5, 1.0);
}

double nutrition_similarity(const NutrientVector& pred, const NutrientVector& truth) {
  const bool pz = pred.all_zero();
  const bool tz = truth.all_zero();
  if (pz && tz) return 1.0;
  if (pz || tz) return 0.0;
  const auto a = pred.as_array();
  const auto b = truth.as_array();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double nutrition_reward(const CandidateAnswer& answer, const std::vector<FoodItem>& gold_items) {
  const auto items = answer.distinct_items();
  if (items.empty()) return 0.0;
  double total = 0.0;
  for (const auto& item : items) {
    if (!item.nutrients) continue;
    const auto gold = std::find_if(gold_items.begin(), gold_items.end(),
                                   [&](const FoodItem& g) { return g.name == item.name; });
    if (gold == gold_items.end() || !gold->nutrients) continue;
    total += nutrition_similarity(*item.nutrients, *gold->nutrients);
  }
  return std::clamp(total / static_cast<double>(items.size()), 0.0, 1.0);
}

double hallucination_reward(const CandidateAnswer& answer, const Registry& registry) {
  if (answer.banks.empty()) return -2.0;
  std::size_t unverified = 0;
  for (const auto& bank : answer.banks) unverified += registry.verified(bank) ? 0 : 1;
  return -2.0 * static_cast<double>(unverified) / static_cast<double>(answer.banks.size());
}

RewardVector RewardEngine::components(const CandidateAnswer& answer, const CaseRecord& c) const {
  RewardVector r;
  r.geo = geo_reward(answer, c.zip, registry_, geocoder_, config_.d_max_miles, config_.geo_aggregation);
  r.items = item_reward(answer.item_names(), c.gold_item_names(), config_.lambda);
  r.nutr = nutrition_reward(answer, c.gold_items);
  r.hall = hallucination_reward(answer, registry_);
  return r;
}

double RewardEngine::composite(const CandidateAnswer& answer, const CaseRecord& c) const {
  return composite_reward(components(answer, c), config_.weights);
}

double composite_reward(const RewardVector& r, const RewardWeights& w) {
  return w.geo * r.geo + w.items * r.items + w.nutr * r.nutr + w.hall * r.hall;
}

std::vector<RewardVector> batch_normalize(std::span<const RewardVector> rewards) {
  if (rewards.empty()) throw Error(ErrorCode::kInvalidArgument, "batch_normalize needs at least one vector");
  const double n = static_cast<double>(rewards.size());
  std::array<double, 4> mean{}, var{};
  for (const auto& r : rewards) {
    const auto v = r.as_array();
    for (std::size_t k = 0; k < 4; ++k) mean[k] += v[k];
  }
  for (auto& m : mean) m /= n;
  for (const auto& r : rewards) {
    const auto v = r.as_array();
    for (std::size_t k = 0; k < 4; ++k) var[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
  }
  std::array<double, 4> sd{};
  for (std::size_t k = 0; k < 4; ++k) sd[k] = std::sqrt(var[k] / n);

  std::vector<RewardVector> out;
  out.reserve(rewards.size());
  for (const auto& r : rewards) {
    const auto v = r.as_array();
    std::array<double, 4> z{};
    for (std::size_t k = 0; k < 4; ++k) {
      // Relative guard so rounding noise in a constant column reads as zero variance.
      const bool flat = sd[k] <= 1e-12 * std::max(1.0, std::abs(mean[k]));
      z[k] = flat ? 0.0 : (v[k] - mean[k]) / sd[k];
    }
    out.push_back(RewardVector::from_array(z));
  }
  return out;
}

}  // namespace food4all
