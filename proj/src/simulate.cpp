#include "food4all/simulate.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "food4all/error.hpp"
#include "food4all/http_client.hpp"
#include "food4all/metrics.hpp"
#include "food4all/rng.hpp"

namespace food4all {

RaterPreference parse_rater_preference(std::string_view name) {
  if (name == "nearer") return RaterPreference::kNearer;
  if (name == "gold") return RaterPreference::kGold;
  throw Error(ErrorCode::kInvalidArgument, "prefer must be nearer or gold, got '" + std::string(name) + "'");
}

double mean_bank_distance(const CandidateAnswer& answer, const ZipCode& user_zip, const Registry& registry,
                          const Geocoder& geocoder, double penalty_miles) {
  const auto origin = geocoder.locate(user_zip);
  if (answer.empty() || !origin) return penalty_miles;
  double total = 0.0;
  for (const auto& b : answer.banks) {
    const auto at = resolve_location(b, registry, geocoder);
    total += at ? haversine_miles(*origin, *at) : penalty_miles;
  }
  return total / static_cast<double>(answer.banks.size());
}

namespace {

struct Query {
  std::string text;
  ZipCode zip;
  const CaseRecord* gold = nullptr;
};

json parse_body(const HttpResponse& r) {
  try {
    return json::parse(r.body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kProtocol, "non-JSON reply from server", r.body, r.status);
  }
}

json poll_policy(const HttpClient& client) {
  const auto r = client.get("/v1/policy");
  if (r.status != 200) throw Error(ErrorCode::kProtocol, "GET /v1/policy failed", r.body, r.status);
  return parse_body(r);
}

}  // namespace

SimulateResult simulate_feedback(const SimulateOptions& options, const RewardEngine& engine,
                                 std::span<const CaseRecord> cases) {
  if (options.parallelism < 1) throw Error(ErrorCode::kInvalidArgument, "parallelism must be positive");
  std::vector<Query> queries;
  for (const auto& c : cases) queries.push_back(Query{c.query, c.zip, &c});
  if (queries.empty()) {
    if (options.prefer == RaterPreference::kGold) {
      throw Error(ErrorCode::kInvalidArgument, "a gold-preferring rater needs a case dataset");
    }
    for (const auto& z : engine.geocoder().zips()) {
      queries.push_back(Query{"I live in " + z.str() + ", where can I get free food nearby?", z, nullptr});
    }
  }
  if (queries.empty()) throw Error(ErrorCode::kInvalidArgument, "no queries to issue");

  const HttpClient client(options.server_url);
  SimulateResult result;
  result.initial_policy = poll_policy(client);
  const json metrics0 = parse_body(client.get("/v1/metrics"));
  const std::size_t trigger = metrics0.value("trigger", std::size_t{128});

  std::mutex mu;
  auto note_version = [&](std::int64_t v) {
    std::lock_guard lock(mu);
    if (result.versions.empty() || result.versions.back() != v) result.versions.push_back(v);
  };
  note_version(result.initial_policy.at("version").get<std::int64_t>());

  std::atomic<bool> done{false};
  std::thread poller([&] {
    const HttpClient c(options.server_url);
    while (!done) {
      try {
        note_version(poll_policy(c).at("version").get<std::int64_t>());
      } catch (const Error&) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });

  auto prefers = [&](const Query& q, const CandidateAnswer& a) {
    if (options.prefer == RaterPreference::kNearer) {
      return -mean_bank_distance(a, q.zip, engine.registry(), engine.geocoder());
    }
    return engine.composite(a, *q.gold);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    const HttpClient c(options.server_url);
    for (;;) {
      const std::size_t e = next++;
      if (e >= options.n) return;
      Rng rng(options.seed * 0x9E3779B97F4A7C15ULL + e + 1);
      const std::string respondent = "sim-" + std::to_string(options.seed) + "-" + std::to_string(e / 10);
      const bool questionnaire = options.questionnaire_every > 0 && e % options.questionnaire_every ==
                                                                        options.questionnaire_every - 1;
      const std::int64_t elapsed = 2200 + static_cast<std::int64_t>(rng.below(3000));
      // A submission needs a served session (and a pair); retry a few queries.
      for (int attempt = 0; attempt < 8; ++attempt) {
        const Query& q = queries[rng.below(queries.size())];
        const auto qr = c.post_json("/v1/query", json{{"query", q.text}, {"zip", q.zip.str()}}.dump());
        if (qr.status >= 500) {
          std::lock_guard lock(mu);
          ++result.server_errors;
        }
        if (qr.status != 200) {
          std::lock_guard lock(mu);
          ++result.skipped;
          continue;
        }
        const json served = parse_body(qr);
        const std::string session = served.at("session_id").get<std::string>();
        HttpResponse fr;
        if (questionnaire) {
          const auto answer = served.at("answer").get<CandidateAnswer>();
          json flagged = json::array();
          if (options.prefer == RaterPreference::kNearer) {
            if (mean_bank_distance(answer, q.zip, engine.registry(), engine.geocoder()) > 2.0) {
              flagged.push_back("location");
            }
          } else if (!task_success(*q.gold, answer, engine.registry(), engine.geocoder())) {
            const auto rv = engine.components(answer, *q.gold);
            if (!valid_bank(*q.gold, answer, engine.registry(), engine.geocoder())) flagged.push_back("location");
            if (rv.items < 1.0) flagged.push_back("items");
            if (rv.nutr < 1.0) flagged.push_back("nutrition");
            if (rv.hall < 0.0) flagged.push_back("hallucination");
            if (flagged.empty()) flagged.push_back("items");
          }
          fr = c.post_json("/v1/feedback/questionnaire", json{{"session_id", session},
                                                              {"accurate", flagged.empty()},
                                                              {"flagged", flagged},
                                                              {"client_elapsed_ms", elapsed},
                                                              {"respondent", respondent}}
                                                             .dump());
        } else {
          const auto cr = c.get("/v1/candidates", {{"session", session}, {"seed", std::to_string(rng.next() >> 1)}});
          if (cr.status != 200) {
            std::lock_guard lock(mu);
            ++result.skipped;
            if (cr.status >= 500) ++result.server_errors;
            continue;
          }
          const json pair = parse_body(cr);
          const double sa = prefers(q, pair.at("y_a").get<CandidateAnswer>());
          const double sb = prefers(q, pair.at("y_b").get<CandidateAnswer>());
          fr = c.post_json("/v1/feedback/preference", json{{"pair_id", pair.at("pair_id")},
                                                           {"choice", sb > sa ? "b" : "a"},
                                                           {"client_elapsed_ms", elapsed},
                                                           {"respondent", respondent}}
                                                          .dump());
        }
        std::lock_guard lock(mu);
        ++result.submitted;
        if (fr.status >= 500) ++result.server_errors;
        if (fr.status == 200 && parse_body(fr).value("accepted", false)) {
          ++result.accepted;
        } else {
          ++result.rejected;
        }
        break;
      }
    }
  };

  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (int i = 0; i < options.parallelism; ++i) {
    pool.emplace_back([&] {
      try {
        worker();
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();

  // Let the last due round finish before reading the final policy.
  const auto deadline = std::chrono::steady_clock::now() + options.settle_timeout;
  while (!failure && std::chrono::steady_clock::now() < deadline) {
    const json m = parse_body(client.get("/v1/metrics"));
    if (!m.value("training_in_progress", false) && m.value("buffer_fill", std::size_t{0}) < trigger) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  done = true;
  poller.join();
  if (failure) std::rethrow_exception(failure);
  result.final_policy = poll_policy(client);
  note_version(result.final_policy.at("version").get<std::int64_t>());
  return result;
}

}  // namespace food4all
