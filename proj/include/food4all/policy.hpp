#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "food4all/features.hpp"

namespace food4all {

struct PolicyParams {
  FeatureVector theta{};
  std::int64_t version = 0;
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

double policy_score(const FeatureVector& theta, const FeatureVector& phi);

// Softmax over policy scores. Throws Error(kInvalidArgument) for fewer than
// two candidates.
std::vector<double> candidate_distribution(const FeatureVector& theta, std::span<const FeatureVector> candidates);
double log_prob(const FeatureVector& theta, std::span<const FeatureVector> candidates, std::size_t k);
// φ_k - Σ_j p_j φ_j
FeatureVector grad_log_prob(const FeatureVector& theta, std::span<const FeatureVector> candidates, std::size_t k);

// -log σ(β·gap), evaluated without overflow.
double pair_loss_from_gap(double gap, double beta);
double pair_loss(const FeatureVector& theta, const FeatureVector& preferred, const FeatureVector& rejected,
                 double beta = 0.2);
// -β σ(-β·gap) (φ_pref - φ_rej)
FeatureVector pair_loss_gradient(const FeatureVector& theta, const FeatureVector& preferred,
                                 const FeatureVector& rejected, double beta = 0.2);

double sigmoid(double x);

}  // namespace food4all
