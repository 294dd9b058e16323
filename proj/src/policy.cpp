#include "food4all/policy.hpp"

#include <algorithm>
#include <cmath>

#include "food4all/error.hpp"

namespace food4all {

double policy_score(const FeatureVector& theta, const FeatureVector& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) s += theta[i] * phi[i];
  return s;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> candidate_distribution(const FeatureVector& theta, std::span<const FeatureVector> candidates) {
  if (candidates.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two candidates");
  std::vector<double> p(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) p[i] = policy_score(theta, candidates[i]);
  const double top = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(v - top);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

double log_prob(const FeatureVector& theta, std::span<const FeatureVector> candidates, std::size_t k) {
  if (candidates.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two candidates");
  if (k >= candidates.size()) throw Error(ErrorCode::kInvalidArgument, "candidate index out of range");
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) s[i] = policy_score(theta, candidates[i]);
  // log(z) via log1p over the non-top terms keeps digits when one candidate dominates.
  const auto top_it = std::max_element(s.begin(), s.end());
  const double top = *top_it;
  double rest = 0.0;
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (it != top_it) rest += std::exp(*it - top);
  }
  return s[k] - top - std::log1p(rest);
}

FeatureVector grad_log_prob(const FeatureVector& theta, std::span<const FeatureVector> candidates, std::size_t k) {
  if (k >= candidates.size()) throw Error(ErrorCode::kInvalidArgument, "candidate index out of range");
  const auto p = candidate_distribution(theta, candidates);
  FeatureVector g = candidates[k];
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    for (std::size_t i = 0; i < kFeatureDim; ++i) g[i] -= p[j] * candidates[j][i];
  }
  return g;
}

double pair_loss_from_gap(double gap, double beta) {
  const double x = beta * gap;
  // softplus(-x)
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double pair_loss(const FeatureVector& theta, const FeatureVector& preferred, const FeatureVector& rejected,
                 double beta) {
  return pair_loss_from_gap(policy_score(theta, preferred) - policy_score(theta, rejected), beta);
}

FeatureVector pair_loss_gradient(const FeatureVector& theta, const FeatureVector& preferred,
                                 const FeatureVector& rejected, double beta) {
  const double gap = policy_score(theta, preferred) - policy_score(theta, rejected);
  const double c = -beta * sigmoid(-beta * gap);
  FeatureVector g{};
  for (std::size_t i = 0; i < kFeatureDim; ++i) g[i] = c * (preferred[i] - rejected[i]);
  return g;
}

}  // namespace food4all
