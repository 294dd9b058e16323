#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "food4all/candidates.hpp"
#include "food4all/data_io.hpp"
#include "food4all/error.hpp"
#include "food4all/features.hpp"
#include "food4all/negatives.hpp"
#include "food4all/policy.hpp"
#include "food4all/rng.hpp"
#include "food4all/synth.hpp"
#include "food4all/training.hpp"

using namespace food4all;

namespace {

struct Fixture {
  World world = generate_world(WorldConfig{});
  std::vector<CaseRecord> cases = generate_cases(world, 40, 3);
  RewardEngine engine{world.registry, world.geocoder};
  std::vector<CorruptionOp> all_ops{CorruptionOp::kItemDrop, CorruptionOp::kZipShift, CorruptionOp::kNutrNoise,
                                    CorruptionOp::kHallucinate};
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::kInvalidArgument;
}

FeedbackEvent pairwise(const FeatureVector& p, const FeatureVector& r) {
  FeedbackEvent e;
  e.payload = PairwiseFeedback{{}, {}, p, r};
  return e;
}

FeedbackEvent questionnaire(bool yes, std::vector<FeatureVector> pool, std::size_t served) {
  FeedbackEvent e;
  QuestionnaireFeedback q;
  q.responses.accurate = yes;
  if (!yes) q.responses.flagged = {"location"};
  q.reward = map_questionnaire(q.responses);
  q.candidates = std::move(pool);
  q.served_index = served;
  e.payload = q;
  return e;
}

}  // namespace

// ---- synthetic world ----

TEST(Synth, WorldIsDeterministicAndConsistent) {
  const auto a = generate_world(WorldConfig{});
  const auto b = generate_world(WorldConfig{});
  EXPECT_EQ(a.registry.records(), b.registry.records());
  EXPECT_EQ(a.registry.size(), 72u);
  EXPECT_EQ(a.geocoder.zips().size(), 24u);
  for (const auto& r : a.registry.records()) {
    EXPECT_GE(a.inventory.at(r.registry_id).size(), 3u);
    EXPECT_LE(a.as_of.days_since(r.last_verified), 25);
  }
  const auto cases = generate_cases(a, 10, 1);
  for (const auto& c : cases) {
    EXPECT_EQ(c.gold_items, a.inventory.at(c.gold_bank.registry_id));
    EXPECT_EQ(c.y_plus, c.gold_answer());
  }
}

TEST(Synth, ReferenceValues) {
  const auto db = reference_nutrient_db();
  EXPECT_EQ(*db.lookup("Apple")->nutrients, NutrientVector::make(95, 0.5, 0.3, 25));
  EXPECT_EQ(*db.lookup("White Rice")->nutrients, NutrientVector::make(205, 4.3, 0.4, 45));
}

// ---- features ----

TEST(Features, GoldAnswerFeatures) {
  const auto& f = fx();
  const auto& c = f.cases.front();
  const FeatureContext ctx{f.world.registry, f.world.geocoder, c.zip, c.gold_item_names(), f.world.as_of, 10.0, 12};
  const auto phi = extract_features(c.gold_answer(), ctx);
  const double d = haversine_miles(*f.world.geocoder.locate(c.zip), c.gold_bank.location);
  EXPECT_NEAR(phi[kFeatDistance], -d, 1e-12);
  EXPECT_EQ(phi[kFeatCoverage], 1.0);
  EXPECT_EQ(phi[kFeatVerified], 1.0);
  EXPECT_NEAR(phi[kFeatFreshness], 1.0 - f.world.as_of.days_since(c.gold_bank.last_verified) / 30.0, 1e-12);
  EXPECT_EQ(phi[kFeatLength], 0.0);

  const auto empty = extract_features(CandidateAnswer{}, ctx);
  EXPECT_EQ(empty[kFeatDistance], -10.0);
  EXPECT_EQ(empty[kFeatCoverage], 0.0);
}

TEST(Features, LengthAndVerification) {
  const auto& f = fx();
  const auto& c = f.cases.front();
  const FeatureContext ctx{f.world.registry, f.world.geocoder, c.zip, c.gold_item_names(), f.world.as_of, 10.0, 2};
  auto a = c.gold_answer();
  a.banks.push_back(BankEntry{"Ghost Pantry", c.zip, std::nullopt, {}});
  const auto phi = extract_features(a, ctx);
  EXPECT_EQ(phi[kFeatVerified], 0.5);
  EXPECT_EQ(phi[kFeatLength], -static_cast<double>(c.gold_items.size() - 2));
}

// ---- policy ----

TEST(Policy, DistributionAndLogProb) {
  const FeatureVector theta{1, 0, 0, 0, 0, 0};
  const std::vector<FeatureVector> pool{{0, 0, 0, 0, 0, 0}, {std::log(3.0), 0, 0, 0, 0, 0}};
  const auto p = candidate_distribution(theta, pool);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  EXPECT_NEAR(log_prob(theta, pool, 1), std::log(0.75), 1e-15);
  EXPECT_EQ(code_of([&] { candidate_distribution(theta, std::span(pool).first(1)); }), ErrorCode::kInvalidArgument);
  const auto g = grad_log_prob(theta, pool, 0);
  EXPECT_NEAR(g[0], -0.75 * std::log(3.0), 1e-15);
}

TEST(Policy, PairLossIsStableForHugeGaps) {
  EXPECT_EQ(pair_loss_from_gap(0, 0.2), std::log(2.0));
  EXPECT_NEAR(pair_loss_from_gap(1e6, 1), 0.0, 1e-300);
  EXPECT_NEAR(pair_loss_from_gap(-1e6, 1), 1e6, 1e-6);
  EXPECT_TRUE(std::isfinite(pair_loss_from_gap(-1e308, 1)));
  const FeatureVector th{};
  const FeatureVector p{1, 0, 0, 0, 0, 0}, r{0, 0, 0, 0, 0, 0};
  EXPECT_NEAR(pair_loss_gradient(th, p, r, 0.2)[0], -0.1, 1e-15);
}

// ---- negatives ----

TEST(Negatives, EveryOpScoresBelowGold) {
  const auto& f = fx();
  for (auto op : f.all_ops) {
    const std::vector<CorruptionOp> ops{op};
    int made = 0;
    for (std::size_t i = 0; i < f.cases.size(); ++i) {
      const auto& c = f.cases[i];
      try {
        const auto neg = generate_negative(c, ops, f.engine, i);
        EXPECT_LT(f.engine.composite(neg, c), f.engine.composite(c.y_plus, c)) << to_string(op);
        ++made;
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kRejected);
      }
    }
    EXPECT_GT(made, 30) << to_string(op);
  }
}

TEST(Negatives, DeterministicPerSeed) {
  const auto& f = fx();
  const auto& c = f.cases[3];
  EXPECT_EQ(generate_negative(c, f.all_ops, f.engine, 42), generate_negative(c, f.all_ops, f.engine, 42));
}

TEST(Negatives, SingleSteps) {
  const auto& f = fx();
  const auto& c = f.cases[0];
  Rng rng(1);
  auto a = c.y_plus;
  corrupt_item_drop(a, rng);
  EXPECT_LT(a.item_count(), c.y_plus.item_count());

  a = c.y_plus;
  corrupt_zip_shift(a, f.world.registry, f.world.geocoder, rng);
  const auto* moved = f.world.registry.match(a.banks[0]);
  ASSERT_TRUE(moved);
  EXPECT_GE(haversine_miles(moved->location, c.gold_bank.location), kZipShiftMinMiles);

  a = c.y_plus;
  corrupt_hallucinate(a, c.zip, f.world.registry, rng);
  bool ghost = false;
  for (const auto& b : a.banks) ghost = ghost || !f.world.registry.verified(b);
  EXPECT_TRUE(ghost);

  a = c.y_plus;
  corrupt_nutr_noise(a, rng);
  EXPECT_NE(a, c.y_plus);
}

TEST(Negatives, ParseOps) {
  EXPECT_EQ(parse_corruption_ops("item-drop,hallucinate").size(), 2u);
  EXPECT_EQ(code_of([] { parse_corruption_ops("item-drop,explode"); }), ErrorCode::kInvalidArgument);
}

// ---- offline training ----

TEST(Offline, LossFallsAndRankingImproves) {
  const auto& f = fx();
  const auto ex = build_examples(f.cases, f.engine, f.world.as_of, 1, f.all_ops);
  ASSERT_EQ(ex.size(), f.cases.size());
  OfflineConfig oc;
  oc.lr = 1e-3;
  oc.epochs = 20;
  const auto res = train_offline(ex, oc);
  EXPECT_NEAR(res.initial_loss, std::log(2.0), 1e-12);
  EXPECT_LT(res.final_loss, res.initial_loss);
  EXPECT_GT(ranking_accuracy(res.params.theta, ex), 0.9);
  EXPECT_EQ(res.params.version, 1);
  EXPECT_EQ(res.pairs_used + res.pairs_filtered, ex.size());
  EXPECT_EQ(res.curve.size(), static_cast<std::size_t>(20 * ((res.pairs_used + 7) / 8)));
  EXPECT_EQ(curve_csv(res.curve).rfind("step,loss\n", 0), 0u);
  // Same seed, same run.
  EXPECT_EQ(train_offline(ex, oc).params, res.params);
}

TEST(Offline, FiltersTinyRewardGaps) {
  PreferenceExample same;
  same.preferred = {1, 0, 0, 0, 0, 0};
  OfflineConfig oc;
  const std::vector<PreferenceExample> ex{same};
  const auto r = train_offline(ex, oc);
  EXPECT_EQ(r.pairs_filtered, 1u);
  EXPECT_EQ(r.params.version, 0);
  EXPECT_EQ(code_of([] { train_offline(std::span<const PreferenceExample>{}, OfflineConfig{}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { ranking_accuracy(FeatureVector{}, std::span<const PreferenceExample>{}); }),
            ErrorCode::kUndefinedMetric);
}

TEST(Offline, RewardOrderingFlipsMislabeledPairs) {
  const auto& f = fx();
  auto ex = build_examples(f.cases, f.engine, f.world.as_of, 1, f.all_ops);
  for (auto& e : ex) {
    std::swap(e.preferred, e.rejected);
    std::swap(e.r_preferred, e.r_rejected);
  }
  OfflineConfig oc;
  oc.lr = 1e-3;
  oc.epochs = 20;
  oc.ordering = PairOrdering::kReward;
  const auto res = train_offline(ex, oc);
  // Trained on reward order, the swapped labels now rank the wrong way round.
  EXPECT_LT(ranking_accuracy(res.params.theta, ex), 0.1);
}

// ---- online pieces ----

TEST(Online, QuestionnaireMapping) {
  EXPECT_EQ(map_questionnaire({true, {}}), kRewardUpperBounds);
  const auto r = map_questionnaire({false, {"location", "hallucination"}});
  EXPECT_EQ(r.geo, -1.0);
  EXPECT_EQ(r.hall, -2.0);
  EXPECT_EQ(r.items, 1.0);
  EXPECT_EQ(r.nutr, 1.0);
  EXPECT_EQ(code_of([] { map_questionnaire({false, {}}); }), ErrorCode::kRejected);
  EXPECT_EQ(code_of([] { map_questionnaire({false, {"vibes"}}); }), ErrorCode::kInvalidArgument);
}

TEST(Online, EmaWeights) {
  OnlineWeights w;
  const auto u = update_ema_weights(w, {-1, 0, 0, -1});
  EXPECT_NEAR(u.w[0], 0.9 * 0.3 + 0.1 * 0.5, 1e-15);
  EXPECT_NEAR(u.w[2], 0.27, 1e-15);
  EXPECT_NEAR(u.w[3], 0.9 * 0.1 + 0.05, 1e-15);
  EXPECT_NEAR(std::accumulate(u.w.begin(), u.w.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(update_ema_weights(w, {0, 0, 0, 0}), w);
  EXPECT_NEAR(online_reward(w, kRewardUpperBounds), 0.6, 1e-15);
}

TEST(Online, ReinforceStep) {
  const std::vector<FeatureVector> pool{{1, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0}};
  const auto e = questionnaire(true, pool, 0);
  const auto s = reinforce_update(FeatureVector{}, 0.1, e, OnlineWeights{}, 1.0, 0.5);
  EXPECT_NEAR(s.r_online, 0.6, 1e-15);
  EXPECT_NEAR(s.theta[0], 0.5 * (0.6 - 0.1), 1e-15);
  EXPECT_NEAR(s.baseline, 0.35, 1e-15);
  EXPECT_EQ(code_of([&] { reinforce_update(FeatureVector{}, 0, pairwise({}, {}), OnlineWeights{}); }),
            ErrorCode::kPrecondition);
}

TEST(Online, BufferClaimCommitRelease) {
  FeedbackBuffer b(3);
  for (int i = 0; i < 4; ++i) b.append(pairwise({}, {}));
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.evicted(), 1u);
  auto claimed = b.claim(2);
  ASSERT_EQ(claimed.size(), 2u);
  EXPECT_EQ(claimed[0].seq, 2u);
  EXPECT_EQ(b.pending(), 1u);
  EXPECT_EQ(b.unconsumed(), 3u);
  std::vector<std::uint64_t> seqs{claimed[0].seq};
  b.commit(seqs);
  seqs = {claimed[1].seq};
  b.release(seqs);
  EXPECT_EQ(b.pending(), 2u);
  EXPECT_EQ(b.unconsumed(), 2u);
  EXPECT_EQ(b.claim(5).front().seq, 3u);
}

TEST(Online, UpdateNeedsTriggerAndMovesTowardPreferences) {
  OnlineConfig oc;
  oc.trigger = 4;
  oc.lr = 0.1;
  const PolicyParams p0{};
  std::vector<FeedbackEvent> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(pairwise({-1, 0, 0, 0, 0, 0}, {-3, 0, 0, 0, 0, 0}));
  const auto skip = online_update(batch, p0, OnlineWeights{}, oc);
  EXPECT_FALSE(skip.updated);
  EXPECT_FALSE(skip.reason.empty());
  batch.push_back(questionnaire(false, {{-1, 0, 0, 0, 0, 0}, {-3, 0, 0, 0, 0, 0}}, 1));
  const auto r = online_update(batch, p0, OnlineWeights{}, oc);
  ASSERT_TRUE(r.updated);
  EXPECT_EQ(r.params.version, 1);
  EXPECT_EQ(r.pairwise, 3u);
  EXPECT_EQ(r.questionnaire, 1u);
  EXPECT_GT(r.params.theta[kFeatDistance], 0.0);
  EXPECT_NE(r.weights.baseline, 0.0);
  EXPECT_GT(r.weights.w[0], 0.3);
}

TEST(Online, NearerStreamRaisesDistanceWeightEveryUpdate) {
  // Five trigger-sized batches at the default lr; each pair prefers the nearer answer
  // and every third event is a questionnaire accepting the nearest candidate.
  const OnlineConfig oc;
  Rng rng(21);
  auto answer = [&] {
    return FeatureVector{-rng.uniform(0, 10), rng.uniform(0, 1), rng.uniform(0, 1),
                         rng.uniform(0, 1),   rng.uniform(0, 1), 0};
  };
  PolicyParams p;
  OnlineWeights w;
  std::vector<double> seen{p.theta[kFeatDistance]};
  for (int round = 0; round < 5; ++round) {
    std::vector<FeedbackEvent> batch;
    while (batch.size() < oc.trigger) {
      if (batch.size() % 3 == 2) {
        std::vector<FeatureVector> pool{answer(), answer(), answer()};
        std::size_t nearest = 0;
        for (std::size_t k = 1; k < pool.size(); ++k) {
          if (pool[k][kFeatDistance] > pool[nearest][kFeatDistance]) nearest = k;
        }
        batch.push_back(questionnaire(true, pool, nearest));
        continue;
      }
      auto a = answer(), b = answer();
      if (a[kFeatDistance] < b[kFeatDistance]) std::swap(a, b);
      batch.push_back(pairwise(a, b));
    }
    const auto r = online_update(batch, p, w, oc);
    ASSERT_TRUE(r.updated) << r.reason;
    p = r.params;
    w = r.weights;
    seen.push_back(p.theta[kFeatDistance]);
  }
  EXPECT_EQ(p.version, 5);
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_GT(seen[i], seen[i - 1]) << "update " << i;
}

TEST(Online, EventAndCheckpointJsonRoundTrip) {
  auto q = questionnaire(false, {{1, 2, 3, 4, 5, 6}, {0, 0, 0, 0, 0, 0}}, 1);
  q.seq = 7;
  q.session_id = "s-000001";
  q.respondent = "r1";
  const json j = q;
  const auto back = j.get<FeedbackEvent>();
  EXPECT_EQ(back.seq, 7u);
  EXPECT_FALSE(back.is_pairwise());
  EXPECT_EQ(std::get<QuestionnaireFeedback>(back.payload).candidates[0][5], 6.0);
  EXPECT_EQ(j.at("kind"), "questionnaire");

  PolicyParams p{{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, 3};
  OnlineWeights w;
  w.baseline = 0.25;
  const auto [p2, w2] = parse_checkpoint(checkpoint_json(p, w));
  EXPECT_EQ(p2, p);
  EXPECT_EQ(w2, w);
}

// ---- candidates ----

TEST(Candidates, PoolShape) {
  const auto& f = fx();
  auto full = f.cases[0].gold_answer();
  full.banks.push_back(BankEntry{"Second", f.cases[0].zip, std::nullopt, {full.banks[0].items[0]}});
  const auto pool = candidate_pool(full);
  EXPECT_EQ(pool[0], full);
  EXPECT_EQ(pool.size(), 5u);  // full, bank 1, bank 2, rotation, halves
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t k = i + 1; k < pool.size(); ++k) EXPECT_NE(pool[i], pool[k]);
  }
  EXPECT_EQ(candidate_pool(CandidateAnswer{}).size(), 0u);
}

TEST(Candidates, ServedAndAlternative) {
  const std::vector<FeatureVector> feats{{0, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}};
  EXPECT_EQ(served_index(FeatureVector{1, 0, 0, 0, 0, 0}, feats), 1u);
  std::vector<CandidateAnswer> pool(3);
  pool[0].banks.push_back(BankEntry{"A", ZipCode::parse("94102"), std::nullopt, {}});
  pool[1].banks.push_back(BankEntry{"B", ZipCode::parse("94102"), std::nullopt, {}});
  pool[2] = pool[1];
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto alt = sample_alternative(FeatureVector{}, pool, feats, 1, seed);
    if (alt) EXPECT_EQ(*alt, 0u);
  }
  const std::vector<CandidateAnswer> same(2, pool[0]);
  EXPECT_FALSE(sample_alternative(FeatureVector{}, same, std::span(feats).first(2), 0, 1));
}
