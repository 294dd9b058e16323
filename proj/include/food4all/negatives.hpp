#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/reward.hpp"
#include "food4all/rng.hpp"

namespace food4all {

enum class CorruptionOp { kItemDrop, kZipShift, kNutrNoise, kHallucinate };

const char* to_string(CorruptionOp op);
// Comma-separated op names; throws Error(kInvalidArgument) on an unknown name.
std::vector<CorruptionOp> parse_corruption_ops(std::string_view list);

inline constexpr int kNegativeAttempts = 10;
inline constexpr double kZipShiftMinMiles = 5.0;

// Applies every selected op to a copy of the case's y_plus and redraws until
// the copy scores strictly below y_plus under the engine's composite reward.
// Throws Error(kRejected) after kNegativeAttempts failed draws.
CandidateAnswer generate_negative(const CaseRecord& c, std::span<const CorruptionOp> ops, const RewardEngine& engine,
                                  std::uint64_t seed);

// Single corruption steps, exposed for tests.

void corrupt_item_drop(CandidateAnswer& a, Rng& rng);
void corrupt_zip_shift(CandidateAnswer& a, const Registry& registry, const Geocoder& geocoder, Rng& rng);
void corrupt_nutr_noise(CandidateAnswer& a, Rng& rng);
void corrupt_hallucinate(CandidateAnswer& a, const ZipCode& zip, const Registry& registry, Rng& rng);

}  // namespace food4all
