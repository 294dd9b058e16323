#pragma once

#include <array>
#include <set>
#include <string>

#include "food4all/data_io.hpp"
#include "food4all/date.hpp"
#include "food4all/domain.hpp"

namespace food4all {

inline constexpr std::size_t kFeatureDim = 6;
using FeatureVector = std::array<double, kFeatureDim>;

enum FeatureIndex : std::size_t {
  kFeatDistance = 0,      // -min(mean miles, D_max); an empty answer scores -D_max
  kFeatCoverage = 1,      // |answer items ∩ reference| / |reference|
  kFeatNutrients = 2,     // fraction of distinct items carrying nutrients
  kFeatVerified = 3,      // fraction of banks found in the registry
  kFeatFreshness = 4,     // mean over banks of max(0, 1 - age/30 days)
  kFeatLength = 5,        // -max(0, distinct items - 12)
};

inline constexpr const char* kFeatureNames[kFeatureDim] = {"distance", "coverage", "nutrients",
                                                           "verified", "freshness", "length"};

// Reference items are the gold items offline and the session's evidence
// inventory online. Freshness ages come from the registry's last-verified
// dates relative to `as_of`; unverified banks count as stale.
struct FeatureContext {
  const Registry& registry;
  const Geocoder& geocoder;
  ZipCode user_zip;
  std::set<std::string> reference_items;
  Date as_of;
  double d_max_miles = 10.0;
  std::size_t max_items = 12;
};

FeatureVector extract_features(const CandidateAnswer& answer, const FeatureContext& ctx);

}  // namespace food4all
