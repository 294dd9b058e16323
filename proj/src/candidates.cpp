#include "food4all/candidates.hpp"

#include <algorithm>

#include "food4all/error.hpp"
#include "food4all/rng.hpp"

namespace food4all {

std::vector<CandidateAnswer> candidate_pool(const CandidateAnswer& full) {
  std::vector<CandidateAnswer> pool;
  auto add = [&pool](CandidateAnswer a) {
    if (a.empty()) return;
    if (std::find(pool.begin(), pool.end(), a) == pool.end()) pool.push_back(std::move(a));
  };
  add(full);
  for (const auto& b : full.banks) add(CandidateAnswer{{b}});
  if (full.banks.size() > 1) {
    CandidateAnswer rotated = full;
    std::rotate(rotated.banks.begin(), rotated.banks.begin() + 1, rotated.banks.end());
    add(std::move(rotated));
  }
  CandidateAnswer halved = full;
  for (auto& b : halved.banks) b.items.resize((b.items.size() + 1) / 2);
  add(std::move(halved));
  return pool;
}

std::size_t served_index(const FeatureVector& theta, std::span<const FeatureVector> features) {
  if (features.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidates to serve");
  std::size_t best = 0;
  double best_score = policy_score(theta, features[0]);
  for (std::size_t i = 1; i < features.size(); ++i) {
    const double s = policy_score(theta, features[i]);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::optional<std::size_t> sample_alternative(const FeatureVector& theta, std::span<const CandidateAnswer> pool,
                                              std::span<const FeatureVector> features, std::size_t served,
                                              std::uint64_t seed) {
  if (pool.size() != features.size()) throw Error(ErrorCode::kInvalidArgument, "pool and features differ in size");
  if (pool.size() < 2 || served >= pool.size()) return std::nullopt;
  const auto p = candidate_distribution(theta, features);
  Rng rng(seed);
  for (int attempt = 0; attempt < kResampleAttempts; ++attempt) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        k = i;
        break;
      }
    }
    if (k != served && !(pool[k] == pool[served])) return k;
  }
  return std::nullopt;
}

}  // namespace food4all
