#pragma once

#include <array>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "food4all/data_io.hpp"
#include "food4all/domain.hpp"

namespace food4all {

inline constexpr double kEarthRadiusMiles = 3958.7613;

// Great-circle distance on a sphere of radius kEarthRadiusMiles.
double haversine_miles(GeoPoint a, GeoPoint b);

struct RewardWeights {
  double geo = 0.3;
  double items = 0.3;
  double nutr = 0.3;
  double hall = 0.1;

  std::array<double, 4> as_array() const { return {geo, items, nutr, hall}; }
  static RewardWeights from_array(const std::array<double, 4>& w);
  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

// Component intervals: geo [-1,0], items [-0.5,1], nutr [0,1], hall [-2,0].
struct RewardVector {
  double geo = 0.0;
  double items = 0.0;
  double nutr = 0.0;
  double hall = 0.0;

  std::array<double, 4> as_array() const { return {geo, items, nutr, hall}; }
  static RewardVector from_array(const std::array<double, 4>& r);
  bool within_bounds() const;
  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

inline constexpr RewardVector kRewardLowerBounds{-1.0, -0.5, 0.0, -2.0};
inline constexpr RewardVector kRewardUpperBounds{0.0, 1.0, 1.0, 0.0};

enum class GeoAggregation { kMean, kMin };

struct RewardConfig {
  RewardWeights weights;
  double lambda = 0.4;
  double d_max_miles = 10.0;
  GeoAggregation geo_aggregation = GeoAggregation::kMean;
};

// -min(d/D_max, 1) where d aggregates the bank distances from the user ZIP
// centroid. Unresolvable banks (and an unknown user ZIP) count as D_max; an
// answer without banks scores -1.
double geo_reward(const CandidateAnswer& answer, const ZipCode& user_zip, const Registry& registry,
                  const Geocoder& geocoder, double d_max_miles = 10.0,
                  GeoAggregation aggregation = GeoAggregation::kMean);

// |P∩G|/|G| - λ|P\G|/|P|, clamped to [-0.5, 1]. Empty P has no penalty term;
// both empty is 1; empty G with non-empty P is -λ.
double item_reward(const std::set<std::string>& pred, const std::set<std::string>& gold, double lambda = 0.4);

// Cosine similarity of two nutrient vectors in [0, 1]. Both zero is 1.
double nutrition_similarity(const NutrientVector& pred, const NutrientVector& truth);

// Mean over the answer's distinct items of the similarity to the gold item
// with the same name; unmatched or unannotated items contribute 0.
double nutrition_reward(const CandidateAnswer& answer, const std::vector<FoodItem>& gold_items);

// -2 * (unverified banks / banks); an empty bank list scores -2.
double hallucination_reward(const CandidateAnswer& answer, const Registry& registry);

class RewardEngine {
 public:
  RewardEngine(const Registry& registry, const Geocoder& geocoder, RewardConfig config = {})
      : registry_(registry), geocoder_(geocoder), config_(config) {}

  RewardVector components(const CandidateAnswer& answer, const CaseRecord& c) const;
  double composite(const CandidateAnswer& answer, const CaseRecord& c) const;
  const RewardConfig& config() const { return config_; }
  const Registry& registry() const { return registry_; }
  const Geocoder& geocoder() const { return geocoder_; }

 private:
  const Registry& registry_;
  const Geocoder& geocoder_;
  RewardConfig config_;
};

double composite_reward(const RewardVector& r, const RewardWeights& w);

// Per-component z-score across the batch (population sd). Zero-variance
// components map to 0. Training-time only.
std::vector<RewardVector> batch_normalize(std::span<const RewardVector> rewards);

}  // namespace food4all
