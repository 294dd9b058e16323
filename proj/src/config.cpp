#include "food4all/config.hpp"

#include <cstdlib>
#include <set>

#include "food4all/data_io.hpp"
#include "food4all/error.hpp"

namespace food4all {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw Error(ErrorCode::kInvalidArgument, where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + where + "." + k + "'");
  }
}

}  // namespace

ServiceConfig parse_config(const json& j, const fs::path& base_dir) {
  ServiceConfig c;
  try {
    check_keys(j, "config",
               {"server", "budget", "reward", "training", "backends", "data", "filter", "state_dir", "checkpoint",
                "clock", "metrics_window"});
    if (const auto s = j.find("server"); s != j.end()) {
      check_keys(*s, "server", {"host", "port"});
      c.host = s->value("host", c.host);
      c.port = s->value("port", c.port);
    }
    if (const auto b = j.find("budget"); b != j.end()) {
      check_keys(*b, "budget", {"J_max", "T_max"});
      c.budget.j_max = b->value("J_max", c.budget.j_max);
      c.budget.t_max = b->value("T_max", c.budget.t_max);
    }
    if (const auto r = j.find("reward"); r != j.end()) {
      check_keys(*r, "reward", {"weights", "lambda", "D_max", "geo_aggregation"});
      if (r->contains("weights")) {
        const auto w = r->at("weights").get<std::vector<double>>();
        if (w.size() != 4) throw Error(ErrorCode::kInvalidArgument, "reward.weights needs 4 values");
        c.reward.weights = RewardWeights::from_array({w[0], w[1], w[2], w[3]});
      }
      c.reward.lambda = r->value("lambda", c.reward.lambda);
      c.reward.d_max_miles = r->value("D_max", c.reward.d_max_miles);
      const auto agg = r->value("geo_aggregation", std::string("mean"));
      if (agg != "mean" && agg != "min") throw Error(ErrorCode::kInvalidArgument, "geo_aggregation is mean or min");
      c.reward.geo_aggregation = agg == "min" ? GeoAggregation::kMin : GeoAggregation::kMean;
    }
    if (const auto t = j.find("training"); t != j.end()) {
      check_keys(*t, "training",
                 {"beta", "lr", "trigger", "pairwise_weight", "questionnaire_weight", "buffer_capacity",
                  "simulated_delay_ms", "fail_rounds"});
      auto& o = c.training.online;
      o.beta = t->value("beta", o.beta);
      o.lr = t->value("lr", o.lr);
      o.trigger = t->value("trigger", o.trigger);
      o.pairwise_weight = t->value("pairwise_weight", o.pairwise_weight);
      o.questionnaire_weight = t->value("questionnaire_weight", o.questionnaire_weight);
      c.training.buffer_capacity = t->value("buffer_capacity", c.training.buffer_capacity);
      c.training.simulated_delay_ms = t->value("simulated_delay_ms", 0);
      c.training.fail_rounds = t->value("fail_rounds", 0);
    }
    if (const auto b = j.find("backends"); b != j.end()) {
      check_keys(*b, "backends", {"chat_url", "chat_model", "tool_urls", "api_key", "timeout_ms"});
      if (b->contains("chat_url") && !b->at("chat_url").is_null()) c.backends.chat_url = b->at("chat_url").get<std::string>();
      c.backends.chat_model = b->value("chat_model", c.backends.chat_model);
      c.backends.api_key = b->value("api_key", c.backends.api_key);
      c.backends.timeout_ms = b->value("timeout_ms", c.backends.timeout_ms);
      if (const auto u = b->find("tool_urls"); u != b->end()) {
        check_keys(*u, "backends.tool_urls", {"search", "social"});
        if (u->contains("search")) c.backends.search_url = u->at("search").get<std::string>();
        if (u->contains("social")) c.backends.social_url = u->at("social").get<std::string>();
      }
    }
    const json data = j.value("data", json::object());
    check_keys(data, "data", {"registry", "geocode", "nutrients", "fixtures", "cases"});
    c.data.registry = resolve(base_dir, data.value("registry", std::string("data/registry.csv")));
    c.data.geocode = resolve(base_dir, data.value("geocode", std::string("data/geocode.csv")));
    c.data.nutrients = resolve(base_dir, data.value("nutrients", std::string("data/nutrients.jsonl")));
    c.data.fixtures = resolve(base_dir, data.value("fixtures", std::string("data/fixtures")));
    if (data.contains("cases")) c.data.cases = resolve(base_dir, data.at("cases").get<std::string>());
    if (const auto f = j.find("filter"); f != j.end()) {
      check_keys(*f, "filter", {"min_elapsed_ms", "identical_window"});
      c.filter.min_elapsed_ms = f->value("min_elapsed_ms", c.filter.min_elapsed_ms);
      c.filter.identical_window = f->value("identical_window", c.filter.identical_window);
    }
    c.state_dir = resolve(base_dir, j.value("state_dir", std::string("state")));
    if (j.contains("checkpoint")) c.checkpoint = resolve(base_dir, j.at("checkpoint").get<std::string>());
    if (const auto clk = j.find("clock"); clk != j.end()) {
      check_keys(*clk, "clock", {"today"});
      if (clk->contains("today")) c.today = Date::parse(clk->at("today").get<std::string>());
    }
    c.metrics_window = j.value("metrics_window", c.metrics_window);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidArgument, "server.port out of range");
  if (c.budget.j_max <= 0 || c.budget.t_max <= 0) throw Error(ErrorCode::kInvalidArgument, "budget must be positive");
  if (c.training.online.trigger == 0) throw Error(ErrorCode::kInvalidArgument, "training.trigger must be positive");
  if (!(c.training.online.beta > 0)) throw Error(ErrorCode::kInvalidArgument, "training.beta must be positive");
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

void apply_env(ServiceConfig& config) {
  if (const char* url = std::getenv("FOOD4ALL_BACKEND_URL"); url && *url) config.backends.chat_url = url;
  if (const char* key = std::getenv("FOOD4ALL_API_KEY"); key && *key) config.backends.api_key = key;
}

void validate_config(const ServiceConfig& config) {
  for (const auto& p : {config.data.registry, config.data.geocode, config.data.nutrients}) {
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing data file: " + p.string());
  }
  if (!config.backends.search_url && !fs::is_directory(config.data.fixtures / "search")) {
    throw Error(ErrorCode::kIo, "missing fixture directory: " + (config.data.fixtures / "search").string());
  }
  if (config.data.cases && !fs::is_regular_file(*config.data.cases)) {
    throw Error(ErrorCode::kIo, "missing data file: " + config.data.cases->string());
  }
  if (config.checkpoint && !fs::is_regular_file(*config.checkpoint)) {
    throw Error(ErrorCode::kIo, "missing checkpoint: " + config.checkpoint->string());
  }
}

json config_json(const ServiceConfig& c) {
  json j{{"server", {{"host", c.host}, {"port", c.port}}},
         {"budget", {{"J_max", c.budget.j_max}, {"T_max", c.budget.t_max}}},
         {"reward",
          {{"weights", c.reward.weights.as_array()},
           {"lambda", c.reward.lambda},
           {"D_max", c.reward.d_max_miles},
           {"geo_aggregation", c.reward.geo_aggregation == GeoAggregation::kMin ? "min" : "mean"}}},
         {"training",
          {{"beta", c.training.online.beta},
           {"lr", c.training.online.lr},
           {"trigger", c.training.online.trigger},
           {"pairwise_weight", c.training.online.pairwise_weight},
           {"questionnaire_weight", c.training.online.questionnaire_weight},
           {"buffer_capacity", c.training.buffer_capacity}}},
         {"data",
          {{"registry", c.data.registry.string()},
           {"geocode", c.data.geocode.string()},
           {"nutrients", c.data.nutrients.string()},
           {"fixtures", c.data.fixtures.string()}}},
         {"filter", {{"min_elapsed_ms", c.filter.min_elapsed_ms}, {"identical_window", c.filter.identical_window}}},
         {"state_dir", c.state_dir.string()},
         {"metrics_window", c.metrics_window}};
  json backends{{"chat_model", c.backends.chat_model}, {"timeout_ms", c.backends.timeout_ms}};
  if (c.backends.chat_url) backends["chat_url"] = *c.backends.chat_url;
  json urls = json::object();
  if (c.backends.search_url) urls["search"] = *c.backends.search_url;
  if (c.backends.social_url) urls["social"] = *c.backends.social_url;
  if (!urls.empty()) backends["tool_urls"] = urls;
  j["backends"] = backends;
  if (c.data.cases) j["data"]["cases"] = c.data.cases->string();
  if (c.checkpoint) j["checkpoint"] = c.checkpoint->string();
  if (c.today) j["clock"] = {{"today", c.today->iso()}};
  return j;
}

}  // namespace food4all
