#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "food4all/features.hpp"
#include "food4all/policy.hpp"

namespace food4all {

inline constexpr int kResampleAttempts = 5;

// Alternatives derived from a synthesized answer: the answer itself, each
// bank alone, the ranking rotated by one, and every bank cut to the first
// half (rounded up) of its items. Duplicates are dropped; order is stable.
std::vector<CandidateAnswer> candidate_pool(const CandidateAnswer& full);

// Highest policy score, first index on ties.
std::size_t served_index(const FeatureVector& theta, std::span<const FeatureVector> features);

// Draws from candidate_distribution until the draw differs from the served
// answer, at most kResampleAttempts times. nullopt when every draw matched
// or the pool has fewer than two distinct answers.
std::optional<std::size_t> sample_alternative(const FeatureVector& theta, std::span<const CandidateAnswer> pool,
                                              std::span<const FeatureVector> features, std::size_t served,
                                              std::uint64_t seed);

}  // namespace food4all
