#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "food4all/reward.hpp"

namespace food4all {

enum class RaterPreference { kNearer, kGold };

RaterPreference parse_rater_preference(std::string_view name);

struct SimulateOptions {
  std::size_t n = 256;  // feedback submissions
  RaterPreference prefer = RaterPreference::kNearer;
  std::string server_url = "http://127.0.0.1:8080";
  std::uint64_t seed = 1;
  int parallelism = 1;
  std::size_t questionnaire_every = 4;  // every k-th submission is a questionnaire; 0 for pairs only
  std::chrono::milliseconds settle_timeout{30000};
};

struct SimulateResult {
  std::size_t submitted = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t skipped = 0;  // queries or pairs the server could not serve
  std::size_t server_errors = 0;
  std::vector<std::int64_t> versions;  // distinct policy versions seen while polling, in order
  json initial_policy;
  json final_policy;
};

// Mean distance in miles from the user ZIP centroid to the answer's banks;
// unresolvable banks count `penalty_miles`.
double mean_bank_distance(const CandidateAnswer& answer, const ZipCode& user_zip, const Registry& registry,
                          const Geocoder& geocoder, double penalty_miles = 10.0);

// Deterministic rater. Queries come from `cases` (or one per known ZIP when
// empty); raters rotate every 10 submissions so no identity trips the
// identical-response rule, and declared completion times clear the
// 2-second floor. Waits for pending training to settle before returning.
SimulateResult simulate_feedback(const SimulateOptions& options, const RewardEngine& engine,
                                 std::span<const CaseRecord> cases);

}  // namespace food4all
