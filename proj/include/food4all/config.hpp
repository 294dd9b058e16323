#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "food4all/agent.hpp"
#include "food4all/reward.hpp"
#include "food4all/training.hpp"

namespace food4all {

struct FilterConfig {
  std::int64_t min_elapsed_ms = 2000;
  std::size_t identical_window = 10;
};

struct TrainingConfig {
  OnlineConfig online;
  std::size_t buffer_capacity = 5000;
  int simulated_delay_ms = 0;  // stretches each round; tests use it to overlap queries with training
  int fail_rounds = 0;         // the next N rounds fail before publishing
};

struct BackendConfig {
  std::optional<std::string> chat_url;  // unset: built-in rule-based planner and executor
  std::string chat_model = "gpt-oss-20b";
  std::optional<std::string> search_url;
  std::optional<std::string> social_url;
  std::string api_key;
  int timeout_ms = 60000;
};

struct DataConfig {
  std::filesystem::path registry;
  std::filesystem::path geocode;
  std::filesystem::path nutrients;
  std::filesystem::path fixtures;
  std::optional<std::filesystem::path> cases;  // gold labels for rolling metrics
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  BudgetConfig budget;
  RewardConfig reward;
  TrainingConfig training;
  BackendConfig backends;
  DataConfig data;
  FilterConfig filter;
  std::filesystem::path state_dir = "state";
  std::optional<std::filesystem::path> checkpoint;  // initial policy
  std::optional<Date> today;                        // session date; unset uses the system clock
  std::size_t metrics_window = 100;
};

// Relative paths resolve against `base_dir`. Unknown top-level sections
// throw Error(kInvalidArgument).
ServiceConfig parse_config(const json& j, const std::filesystem::path& base_dir = {});
ServiceConfig load_config(const std::filesystem::path& path);
// FOOD4ALL_BACKEND_URL and FOOD4ALL_API_KEY override the file.
void apply_env(ServiceConfig& config);
// Data files must exist; throws Error(kIo) naming the first missing path.
void validate_config(const ServiceConfig& config);
json config_json(const ServiceConfig& config);

}  // namespace food4all
