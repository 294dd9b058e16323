#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "food4all/negatives.hpp"
#include "food4all/policy.hpp"
#include "food4all/reward.hpp"

namespace food4all {

// ---- offline ----

struct PreferenceExample {
  std::string case_id;
  FeatureVector preferred{};
  FeatureVector rejected{};
  RewardVector r_preferred;
  RewardVector r_rejected;
};

// Features and rewards of every case's (y_plus, y_minus). A missing y_minus
// is generated with `ops`, seeded by seed + case index.
std::vector<PreferenceExample> build_examples(std::span<const CaseRecord> cases, const RewardEngine& engine,
                                              Date as_of, std::uint64_t seed = 0,
                                              std::span<const CorruptionOp> ops = {});

enum class PairOrdering {
  kLabel,   // y_plus is preferred as labeled
  kReward,  // order by batch-normalized composite reward
};

struct OfflineConfig {
  double beta = 0.2;
  double lr = 1e-5;
  int epochs = 1;
  std::size_t batch_size = 8;
  PairOrdering ordering = PairOrdering::kLabel;
  double min_reward_gap = 0.05;  // on the raw composite reward
  RewardWeights weights;
  std::uint64_t seed = 0;  // minibatch shuffling
};

struct CurvePoint {
  int step = 0;
  double loss = 0.0;
};

struct OfflineResult {
  PolicyParams params;
  std::vector<CurvePoint> curve;  // mean minibatch loss before each step
  double initial_loss = 0.0;      // mean loss over the kept pairs
  double final_loss = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_filtered = 0;
};

// Minibatch gradient descent on the mean pair loss. Throws
// Error(kInvalidArgument) on an empty dataset.
OfflineResult train_offline(std::span<const PreferenceExample> examples, const OfflineConfig& config,
                            PolicyParams init = {});

double mean_pair_loss(const FeatureVector& theta, std::span<const PreferenceExample> examples, double beta);
// Fraction of pairs with s(preferred) strictly above s(rejected).
double ranking_accuracy(const FeatureVector& theta, std::span<const PreferenceExample> examples);
std::string curve_csv(std::span<const CurvePoint> curve);

// ---- online ----

struct Questionnaire {
  bool accurate = true;
  std::set<std::string> flagged;  // location, items, nutrition, hallucination
};

// Yes maps every component to its best endpoint; no sets each flagged
// component to its worst. Unknown flags throw Error(kInvalidArgument); no
// with nothing flagged throws Error(kRejected).
RewardVector map_questionnaire(const Questionnaire& q);

struct OnlineWeights {
  std::array<double, 4> w{0.3, 0.3, 0.3, 0.1};
  double alpha = 0.9;
  double baseline = 0.0;
  double baseline_decay = 0.98;
  friend bool operator==(const OnlineWeights&, const OnlineWeights&) = default;
};

// w <- αw + (1-α)v with v = |observed| normalized to sum 1. An all-zero
// observation leaves w unchanged.
OnlineWeights update_ema_weights(const OnlineWeights& weights, const std::array<double, 4>& observed);
double online_reward(const OnlineWeights& weights, const RewardVector& r);

struct PairwiseFeedback {
  CandidateAnswer preferred;
  CandidateAnswer rejected;
  FeatureVector phi_preferred{};
  FeatureVector phi_rejected{};
};

struct QuestionnaireFeedback {
  CandidateAnswer answer;
  Questionnaire responses;
  RewardVector reward;
  std::vector<FeatureVector> candidates;  // the pool the answer was served from
  std::size_t served_index = 0;
};

struct FeedbackEvent {
  std::uint64_t seq = 0;
  std::string query;
  std::string session_id;
  std::string pair_id;
  std::string respondent;
  std::string received_at;
  std::variant<PairwiseFeedback, QuestionnaireFeedback> payload;

  bool is_pairwise() const { return std::holds_alternative<PairwiseFeedback>(payload); }
};

void to_json(json& j, const FeedbackEvent& e);
void from_json(const json& j, FeedbackEvent& e);

struct ReinforceStep {
  FeatureVector theta{};
  double baseline = 0.0;
  double r_online = 0.0;
};

// θ <- θ + lr ∇log π(served) (R_online - b), then b <- decay b + (1-decay) R_online.
// Throws Error(kPrecondition) for a pairwise event or one without a served pool.
ReinforceStep reinforce_update(const FeatureVector& theta, double baseline, const FeedbackEvent& event,
                               const OnlineWeights& weights, double lr = 5e-6, double decay = 0.98);

// Bounded FIFO. Events are claimed for training, then committed (kept for
// audit, never trained on again) or released back on failure.
class FeedbackBuffer {
 public:
  explicit FeedbackBuffer(std::size_t capacity = 5000) : capacity_(capacity) {}

  std::uint64_t append(FeedbackEvent event);
  std::size_t size() const;
  std::size_t pending() const;
  // Pending plus claimed: events not yet folded into a published version.
  std::size_t unconsumed() const;
  std::size_t capacity() const { return capacity_; }
  std::vector<FeedbackEvent> claim(std::size_t n);
  void commit(std::span<const std::uint64_t> seqs);
  void release(std::span<const std::uint64_t> seqs);
  std::vector<FeedbackEvent> snapshot() const;
  std::size_t evicted() const;

 private:
  enum class Mark { kPending, kClaimed, kConsumed };
  struct Slot {
    FeedbackEvent event;
    Mark mark = Mark::kPending;
  };
  void set_mark(std::span<const std::uint64_t> seqs, Mark from, Mark to);

  mutable std::mutex mu_;
  std::deque<Slot> slots_;
  std::size_t capacity_;
  std::uint64_t next_seq_ = 1;
  std::size_t evicted_ = 0;
};

struct OnlineConfig {
  std::size_t trigger = 128;
  double pairwise_weight = 0.7;
  double questionnaire_weight = 0.3;
  double beta = 0.2;
  double lr = 5e-6;
};

struct OnlineUpdateResult {
  bool updated = false;
  std::string reason;
  PolicyParams params;
  OnlineWeights weights;
  double objective = 0.0;
  std::size_t pairwise = 0;
  std::size_t questionnaire = 0;
};

// One gradient step on 0.7·mean pair loss + 0.3·(-mean (R_online - b) log π)
// over the batch, then the baseline and EMA weights absorb the batch's
// questionnaire rewards. Fewer than `trigger` events is a no-op with reason.
OnlineUpdateResult online_update(std::span<const FeedbackEvent> batch, const PolicyParams& params,
                                 const OnlineWeights& weights, const OnlineConfig& config);

json checkpoint_json(const PolicyParams& params, const OnlineWeights& weights);
std::pair<PolicyParams, OnlineWeights> parse_checkpoint(const json& j);

}  // namespace food4all
