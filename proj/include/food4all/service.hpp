#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "food4all/config.hpp"
#include "food4all/metrics.hpp"
#include "food4all/tools.hpp"

namespace httplib {
class Server;
}

namespace food4all {

// ---- low-effort filter ----

struct ResponseRecord {
  std::string respondent;
  std::string key;       // pair id, or "q:" + session id
  std::string response;  // "a" / "b", "yes", "no:<flags>"
  bool accepted = false;
};

struct FilterVerdict {
  bool accepted = true;
  std::string reason;
};

// Rejects answers faster than min_elapsed_ms, answers that contradict an
// earlier submission for the same key, and respondents whose last
// `identical_window` accepted answers are all the same.
FilterVerdict filter_low_effort(std::span<const ResponseRecord> history, const ResponseRecord& candidate,
                                std::int64_t elapsed_ms, const FilterConfig& config = {});

// ---- service ----

struct HttpReply {
  int status = 200;
  json body;
};

struct PolicySnapshot {
  PolicyParams params;
  OnlineWeights weights;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpReply query(const json& body);
  HttpReply candidates(const std::string& session_id, std::optional<std::uint64_t> seed);
  HttpReply preference(const json& body);
  HttpReply questionnaire(const json& body);
  HttpReply metrics() const;
  HttpReply policy() const;

  void mount(httplib::Server& server);
  std::shared_ptr<const PolicySnapshot> current_policy() const;
  // True once no round is running and none is due.
  bool wait_idle(std::chrono::milliseconds timeout);
  void inject_training_failures(int rounds);
  const ServiceConfig& config() const { return config_; }

 private:
  struct ServedSession {
    std::string id;
    std::string query;
    ZipCode zip;
    std::int64_t policy_version = 0;
    std::vector<CandidateAnswer> pool;
    std::vector<FeatureVector> features;
    std::size_t served = 0;
    bool questionnaire_done = false;
  };
  struct IssuedPair {
    std::string session_id;
    std::size_t a = 0;
    std::size_t b = 0;
    bool answered = false;
  };

  Date today() const;
  std::size_t buffer_fill() const;
  void persist(const FeedbackEvent& event);
  HttpReply admit(FeedbackEvent event, const ResponseRecord& record, std::int64_t elapsed_ms);
  void train_loop();
  bool round_due() const;
  void publish(const PolicySnapshot& snapshot);
  void incident(const std::string& what);

  ServiceConfig config_;
  Registry registry_;
  Geocoder geocoder_;
  std::shared_ptr<const NutrientDb> nutrients_;
  ToolRegistry tools_;
  std::map<std::string, CaseRecord> cases_by_query_;
  std::map<std::string, CaseRecord> cases_by_zip_;

  mutable std::mutex policy_mu_;
  std::shared_ptr<const PolicySnapshot> policy_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, ServedSession> sessions_;
  std::map<std::string, IssuedPair> pairs_;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_pair_ = 1;

  std::mutex feedback_mu_;
  std::vector<ResponseRecord> history_;
  int log_fd_ = -1;
  std::uint64_t appended_ = 0;
  FeedbackBuffer buffer_;

  mutable std::mutex metrics_mu_;
  std::deque<CaseEvaluation> window_;
  std::atomic<std::uint64_t> sessions_served_{0};
  std::atomic<std::uint64_t> feedback_accepted_{0};
  std::atomic<std::uint64_t> feedback_rejected_{0};
  std::atomic<std::uint64_t> training_rounds_{0};
  std::atomic<std::uint64_t> training_failures_{0};

  mutable std::mutex train_mu_;
  std::condition_variable train_cv_;
  bool stop_ = false;
  bool training_ = false;
  bool blocked_ = false;  // set by a failed round, cleared by the next append
  int fail_rounds_ = 0;
  std::thread trainer_;
};

// Binds, prints a banner to `log`, and serves until SIGINT/SIGTERM. Throws
// Error(kIo) when the port cannot be bound.
void run_server(const ServiceConfig& config, std::ostream& log);

}  // namespace food4all
