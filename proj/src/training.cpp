#include "food4all/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "food4all/error.hpp"
#include "food4all/rng.hpp"
#include "food4all/structured_output.hpp"

namespace food4all {

std::vector<PreferenceExample> build_examples(std::span<const CaseRecord> cases, const RewardEngine& engine,
                                              Date as_of, std::uint64_t seed, std::span<const CorruptionOp> ops) {
  static const std::vector<CorruptionOp> kAllOps{CorruptionOp::kItemDrop, CorruptionOp::kZipShift,
                                                 CorruptionOp::kNutrNoise, CorruptionOp::kHallucinate};
  if (ops.empty()) ops = kAllOps;
  std::vector<PreferenceExample> out;
  out.reserve(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const CandidateAnswer minus = c.y_minus ? *c.y_minus : generate_negative(c, ops, engine, seed + i);
    const FeatureContext ctx{engine.registry(), engine.geocoder(), c.zip, c.gold_item_names(), as_of,
                             engine.config().d_max_miles};
    out.push_back(PreferenceExample{c.id, extract_features(c.y_plus, ctx), extract_features(minus, ctx),
                                    engine.components(c.y_plus, c), engine.components(minus, c)});
  }
  return out;
}

double mean_pair_loss(const FeatureVector& theta, std::span<const PreferenceExample> examples, double beta) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : examples) total += pair_loss(theta, e.preferred, e.rejected, beta);
  return total / static_cast<double>(examples.size());
}

double ranking_accuracy(const FeatureVector& theta, std::span<const PreferenceExample> examples) {
  if (examples.empty()) throw Error(ErrorCode::kUndefinedMetric, "no pairs to rank");
  std::size_t right = 0;
  for (const auto& e : examples) right += policy_score(theta, e.preferred) > policy_score(theta, e.rejected);
  return static_cast<double>(right) / static_cast<double>(examples.size());
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::string out = "step,loss\n";
  for (const auto& p : curve) out += std::to_string(p.step) + "," + format_number(p.loss) + "\n";
  return out;
}

OfflineResult train_offline(std::span<const PreferenceExample> examples, const OfflineConfig& config,
                            PolicyParams init) {
  if (examples.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  if (!(config.beta > 0)) throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");

  OfflineResult res;
  std::vector<PreferenceExample> kept;
  for (const auto& e : examples) {
    const double gap = composite_reward(e.r_preferred, config.weights) - composite_reward(e.r_rejected, config.weights);
    if (std::abs(gap) < config.min_reward_gap) {
      ++res.pairs_filtered;
    } else {
      kept.push_back(e);
    }
  }
  res.pairs_used = kept.size();
  res.params = init;
  if (kept.empty()) return res;

  if (config.ordering == PairOrdering::kLabel) {
    res.initial_loss = mean_pair_loss(init.theta, kept, config.beta);
  }

  Rng rng(config.seed);
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  FeatureVector& theta = res.params.theta;
  int step = 0;
  std::vector<PreferenceExample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(kept[order[k]]);

      if (config.ordering == PairOrdering::kReward) {
        std::vector<RewardVector> rewards;
        for (const auto& e : batch) {
          rewards.push_back(e.r_preferred);
          rewards.push_back(e.r_rejected);
        }
        const auto z = batch_normalize(rewards);
        for (std::size_t k = 0; k < batch.size(); ++k) {
          double a = composite_reward(z[2 * k], config.weights);
          double b = composite_reward(z[2 * k + 1], config.weights);
          if (a == b) {
            a = composite_reward(batch[k].r_preferred, config.weights);
            b = composite_reward(batch[k].r_rejected, config.weights);
          }
          if (a < b) {
            std::swap(batch[k].preferred, batch[k].rejected);
            std::swap(batch[k].r_preferred, batch[k].r_rejected);
          }
        }
      }

      FeatureVector grad{};
      double loss = 0.0;
      for (const auto& e : batch) {
        loss += pair_loss(theta, e.preferred, e.rejected, config.beta);
        const auto g = pair_loss_gradient(theta, e.preferred, e.rejected, config.beta);
        for (std::size_t i = 0; i < kFeatureDim; ++i) grad[i] += g[i];
      }
      const double n = static_cast<double>(batch.size());
      for (std::size_t i = 0; i < kFeatureDim; ++i) theta[i] -= config.lr * grad[i] / n;
      res.curve.push_back(CurvePoint{step++, loss / n});
    }
  }
  if (step > 0) ++res.params.version;
  if (config.ordering == PairOrdering::kLabel) {
    res.final_loss = mean_pair_loss(theta, kept, config.beta);
  } else if (!res.curve.empty()) {
    res.initial_loss = res.curve.front().loss;
    res.final_loss = res.curve.back().loss;
  }
  return res;
}

RewardVector map_questionnaire(const Questionnaire& q) {
  static const std::set<std::string> kFlags{"location", "items", "nutrition", "hallucination"};
  for (const auto& f : q.flagged) {
    if (!kFlags.count(f)) throw Error(ErrorCode::kInvalidArgument, "unknown questionnaire flag '" + f + "'");
  }
  RewardVector r = kRewardUpperBounds;
  if (q.accurate) return r;
  if (q.flagged.empty()) throw Error(ErrorCode::kRejected, "answer marked inaccurate without naming what was wrong");
  if (q.flagged.count("location")) r.geo = kRewardLowerBounds.geo;
  if (q.flagged.count("items")) r.items = kRewardLowerBounds.items;
  if (q.flagged.count("nutrition")) r.nutr = kRewardLowerBounds.nutr;
  if (q.flagged.count("hallucination")) r.hall = kRewardLowerBounds.hall;
  return r;
}

OnlineWeights update_ema_weights(const OnlineWeights& weights, const std::array<double, 4>& observed) {
  std::array<double, 4> v{};
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    v[i] = std::abs(observed[i]);
    total += v[i];
  }
  if (total == 0.0 || !std::isfinite(total)) return weights;
  OnlineWeights out = weights;
  for (std::size_t i = 0; i < 4; ++i) out.w[i] = weights.alpha * weights.w[i] + (1.0 - weights.alpha) * v[i] / total;
  return out;
}

double online_reward(const OnlineWeights& weights, const RewardVector& r) {
  const auto c = r.as_array();
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += weights.w[i] * c[i];
  return s;
}

ReinforceStep reinforce_update(const FeatureVector& theta, double baseline, const FeedbackEvent& event,
                               const OnlineWeights& weights, double lr, double decay) {
  const auto* q = std::get_if<QuestionnaireFeedback>(&event.payload);
  if (!q) throw Error(ErrorCode::kPrecondition, "policy-gradient step needs a questionnaire event");
  if (q->candidates.size() < 2 || q->served_index >= q->candidates.size()) {
    throw Error(ErrorCode::kPrecondition, "questionnaire event lacks its served candidate pool");
  }
  ReinforceStep out;
  out.r_online = online_reward(weights, q->reward);
  const auto g = grad_log_prob(theta, q->candidates, q->served_index);
  const double adv = out.r_online - baseline;
  for (std::size_t i = 0; i < kFeatureDim; ++i) out.theta[i] = theta[i] + lr * g[i] * adv;
  out.baseline = decay * baseline + (1.0 - decay) * out.r_online;
  return out;
}

std::uint64_t FeedbackBuffer::append(FeedbackEvent event) {
  std::lock_guard lock(mu_);
  event.seq = next_seq_++;
  if (capacity_ == 0) return event.seq;
  while (slots_.size() >= capacity_) {
    slots_.pop_front();
    ++evicted_;
  }
  const auto seq = event.seq;
  slots_.push_back(Slot{std::move(event), Mark::kPending});
  return seq;
}

std::size_t FeedbackBuffer::size() const {
  std::lock_guard lock(mu_);
  return slots_.size();
}

std::size_t FeedbackBuffer::pending() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const Slot& s) { return s.mark == Mark::kPending; }));
}

std::size_t FeedbackBuffer::unconsumed() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const Slot& s) { return s.mark != Mark::kConsumed; }));
}

std::size_t FeedbackBuffer::evicted() const {
  std::lock_guard lock(mu_);
  return evicted_;
}

std::vector<FeedbackEvent> FeedbackBuffer::claim(std::size_t n) {
  std::lock_guard lock(mu_);
  std::vector<FeedbackEvent> out;
  for (auto& s : slots_) {
    if (out.size() == n) break;
    if (s.mark != Mark::kPending) continue;
    s.mark = Mark::kClaimed;
    out.push_back(s.event);
  }
  return out;
}

void FeedbackBuffer::set_mark(std::span<const std::uint64_t> seqs, Mark from, Mark to) {
  std::lock_guard lock(mu_);
  const std::set<std::uint64_t> wanted(seqs.begin(), seqs.end());
  for (auto& s : slots_) {
    if (s.mark == from && wanted.count(s.event.seq)) s.mark = to;
  }
}

void FeedbackBuffer::commit(std::span<const std::uint64_t> seqs) { set_mark(seqs, Mark::kClaimed, Mark::kConsumed); }
void FeedbackBuffer::release(std::span<const std::uint64_t> seqs) { set_mark(seqs, Mark::kClaimed, Mark::kPending); }

std::vector<FeedbackEvent> FeedbackBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<FeedbackEvent> out;
  for (const auto& s : slots_) out.push_back(s.event);
  return out;
}

OnlineUpdateResult online_update(std::span<const FeedbackEvent> batch, const PolicyParams& params,
                                 const OnlineWeights& weights, const OnlineConfig& config) {
  OnlineUpdateResult res;
  res.params = params;
  res.weights = weights;
  if (batch.size() < config.trigger || batch.empty()) {
    res.reason = "need " + std::to_string(config.trigger) + " events, have " + std::to_string(batch.size());
    return res;
  }
  const FeatureVector& theta = params.theta;
  FeatureVector pair_grad{};
  FeatureVector q_grad{};
  double pair_loss_sum = 0.0;
  double q_objective = 0.0;
  for (const auto& e : batch) {
    if (const auto* p = std::get_if<PairwiseFeedback>(&e.payload)) {
      ++res.pairwise;
      pair_loss_sum += pair_loss(theta, p->phi_preferred, p->phi_rejected, config.beta);
      const auto g = pair_loss_gradient(theta, p->phi_preferred, p->phi_rejected, config.beta);
      for (std::size_t i = 0; i < kFeatureDim; ++i) pair_grad[i] += g[i];
    } else {
      const auto& q = std::get<QuestionnaireFeedback>(e.payload);
      if (q.candidates.size() < 2 || q.served_index >= q.candidates.size()) continue;
      ++res.questionnaire;
      const double adv = online_reward(weights, q.reward) - weights.baseline;
      q_objective += adv * log_prob(theta, q.candidates, q.served_index);
      const auto g = grad_log_prob(theta, q.candidates, q.served_index);
      for (std::size_t i = 0; i < kFeatureDim; ++i) q_grad[i] += adv * g[i];
    }
  }
  FeatureVector total{};
  if (res.pairwise > 0) {
    const double n = static_cast<double>(res.pairwise);
    res.objective += config.pairwise_weight * pair_loss_sum / n;
    for (std::size_t i = 0; i < kFeatureDim; ++i) total[i] += config.pairwise_weight * pair_grad[i] / n;
  }
  if (res.questionnaire > 0) {
    const double n = static_cast<double>(res.questionnaire);
    res.objective -= config.questionnaire_weight * q_objective / n;
    for (std::size_t i = 0; i < kFeatureDim; ++i) total[i] -= config.questionnaire_weight * q_grad[i] / n;
  }
  for (std::size_t i = 0; i < kFeatureDim; ++i) res.params.theta[i] = theta[i] - config.lr * total[i];
  for (const auto& e : batch) {
    const auto* q = std::get_if<QuestionnaireFeedback>(&e.payload);
    if (!q) continue;
    const double r = online_reward(res.weights, q->reward);
    res.weights.baseline = res.weights.baseline_decay * res.weights.baseline + (1.0 - res.weights.baseline_decay) * r;
    const double base = res.weights.baseline;
    res.weights = update_ema_weights(res.weights, q->reward.as_array());
    res.weights.baseline = base;
  }
  res.params.version = params.version + 1;
  res.updated = true;
  return res;
}

namespace {

json features_json(const FeatureVector& f) { return json(std::vector<double>(f.begin(), f.end())); }

FeatureVector features_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kFeatureDim) throw Error(ErrorCode::kParse, "feature vector must have 6 entries");
  FeatureVector f{};
  std::copy(v.begin(), v.end(), f.begin());
  return f;
}

json reward_json(const RewardVector& r) {
  return json{{"geo", r.geo}, {"items", r.items}, {"nutr", r.nutr}, {"hall", r.hall}};
}

RewardVector reward_from(const json& j) {
  return RewardVector{j.at("geo").get<double>(), j.at("items").get<double>(), j.at("nutr").get<double>(),
                      j.at("hall").get<double>()};
}

}  // namespace

void to_json(json& j, const FeedbackEvent& e) {
  j = json{{"seq", e.seq},         {"query", e.query},           {"session_id", e.session_id},
           {"pair_id", e.pair_id}, {"respondent", e.respondent}, {"received_at", e.received_at}};
  if (const auto* p = std::get_if<PairwiseFeedback>(&e.payload)) {
    j["kind"] = "pairwise";
    j["preferred"] = p->preferred;
    j["rejected"] = p->rejected;
    j["phi_preferred"] = features_json(p->phi_preferred);
    j["phi_rejected"] = features_json(p->phi_rejected);
  } else {
    const auto& q = std::get<QuestionnaireFeedback>(e.payload);
    j["kind"] = "questionnaire";
    j["answer"] = q.answer;
    j["accurate"] = q.responses.accurate;
    j["flagged"] = q.responses.flagged;
    j["reward"] = reward_json(q.reward);
    json pool = json::array();
    for (const auto& f : q.candidates) pool.push_back(features_json(f));
    j["candidates"] = pool;
    j["served_index"] = q.served_index;
  }
}

void from_json(const json& j, FeedbackEvent& e) {
  e.seq = j.value("seq", std::uint64_t{0});
  e.query = j.value("query", std::string{});
  e.session_id = j.value("session_id", std::string{});
  e.pair_id = j.value("pair_id", std::string{});
  e.respondent = j.value("respondent", std::string{});
  e.received_at = j.value("received_at", std::string{});
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "pairwise") {
    e.payload = PairwiseFeedback{j.at("preferred").get<CandidateAnswer>(), j.at("rejected").get<CandidateAnswer>(),
                                 features_from(j.at("phi_preferred")), features_from(j.at("phi_rejected"))};
  } else if (kind == "questionnaire") {
    QuestionnaireFeedback q;
    q.answer = j.at("answer").get<CandidateAnswer>();
    q.responses.accurate = j.at("accurate").get<bool>();
    q.responses.flagged = j.value("flagged", std::set<std::string>{});
    q.reward = reward_from(j.at("reward"));
    for (const auto& f : j.value("candidates", json::array())) q.candidates.push_back(features_from(f));
    q.served_index = j.value("served_index", std::size_t{0});
    e.payload = std::move(q);
  } else {
    throw Error(ErrorCode::kParse, "unknown feedback kind '" + kind + "'");
  }
}

json checkpoint_json(const PolicyParams& params, const OnlineWeights& weights) {
  return json{{"version", params.version},
              {"theta", features_json(params.theta)},
              {"online_weights",
               {{"w", weights.w}, {"alpha", weights.alpha}, {"baseline_decay", weights.baseline_decay}}},
              {"baseline", weights.baseline}};
}

std::pair<PolicyParams, OnlineWeights> parse_checkpoint(const json& j) {
  PolicyParams p;
  OnlineWeights w;
  try {
    p.version = j.at("version").get<std::int64_t>();
    p.theta = features_from(j.at("theta"));
    if (const auto ow = j.find("online_weights"); ow != j.end()) {
      w.w = ow->at("w").get<std::array<double, 4>>();
      w.alpha = ow->value("alpha", w.alpha);
      w.baseline_decay = ow->value("baseline_decay", w.baseline_decay);
    }
    w.baseline = j.value("baseline", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad checkpoint: ") + e.what());
  }
  return {p, w};
}

}  // namespace food4all
