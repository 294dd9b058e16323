#include "food4all/tools.hpp"

#include <mutex>
#include <regex>

#include "food4all/digest.hpp"
#include "food4all/error.hpp"
#include "food4all/http_client.hpp"
#include "food4all/json_schema.hpp"
#include "food4all/structured_output.hpp"
#include "food4all/table_eval.hpp"

namespace food4all {

namespace fs = std::filesystem;

void ToolRegistry::register_tool(ToolSpec spec, ToolFn fn) {
  if (tools_.count(spec.name)) throw Error(ErrorCode::kDuplicate, "tool '" + spec.name + "' already registered");
  std::string name = spec.name;
  tools_.emplace(std::move(name), Entry{std::move(spec), std::move(fn)});
}

const ToolSpec& ToolRegistry::lookup(std::string_view name) const {
  const auto it = tools_.find(name);
  if (it == tools_.end()) throw Error(ErrorCode::kToolNotFound, "no tool named '" + std::string(name) + "'");
  return it->second.spec;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : tools_) out.push_back(name);
  return out;
}

json ToolRegistry::call(std::string_view name, const json& args, const ToolContext& ctx) const {
  const auto it = tools_.find(name);
  if (it == tools_.end()) throw Error(ErrorCode::kToolNotFound, "no tool named '" + std::string(name) + "'");
  const auto& entry = it->second;
  if (auto err = validate_schema(entry.spec.argument_schema, args)) {
    throw Error(ErrorCode::kInvalidArgument, entry.spec.name + " arguments: " + *err, args.dump());
  }
  json result = entry.fn(args, ctx);
  if (auto err = validate_schema(entry.spec.result_schema, result)) {
    throw Error(ErrorCode::kProtocol, entry.spec.name + " result: " + *err, result.dump());
  }
  return result;
}

namespace {

const json kNutrientFields = json::parse(R"({
  "kcal": {"type": "number", "minimum": 0},
  "protein_g": {"type": "number", "minimum": 0},
  "fat_g": {"type": "number", "minimum": 0},
  "carb_g": {"type": "number", "minimum": 0}
})");

ZipCode require_zip(const json& args) {
  const auto raw = args.at("zip").get<std::string>();
  const auto zip = ZipCode::try_parse(raw);
  if (!zip) throw Error(ErrorCode::kPrecondition, "search needs a 5-digit ZIP, got '" + raw + "'");
  return *zip;
}

json nutrient_lookup(const NutrientDb* db, const json& args) {
  const auto raw = args.at("item_name").get<std::string>();
  const auto item = db ? db->lookup(raw) : std::nullopt;
  if (!item) throw Error(ErrorCode::kNotFound, "no nutrient record for '" + raw + "'");
  return json{{"item", *item}, {"source", "usda"}};
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "bad fixture " + path.string() + ": " + e.what());
  }
}

json http_get_json(const std::string& url, const std::string& api_key, const QueryParams& params) {
  HttpClient client(url, api_key);
  const auto res = client.get("", params);
  if (res.status < 200 || res.status >= 300) {
    throw Error(ErrorCode::kTransport, url + " returned HTTP " + std::to_string(res.status), res.body, res.status);
  }
  try {
    return json::parse(res.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, url + " returned malformed JSON", res.body);
  }
}

json clamp_posts(json posts, Date session_date) {
  json out = json::array();
  for (auto& p : posts) {
    json post{{"source_id", p.value("source_id", p.value("id", std::string{}))},
              {"text", p.value("text", std::string{})},
              {"observed_at", p.at("observed_at").get<std::string>()},
              {"clamped", false}};
    const Date at = Date::parse(post["observed_at"].get<std::string>());
    if (at > session_date) {
      post["observed_at"] = session_date.iso();
      post["clamped"] = true;
    }
    out.push_back(std::move(post));
  }
  return out;
}

std::optional<double> grab(const std::string& text, const std::regex& re) {
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return std::stod(m[1].str());
}

json bullet_item(const std::string& body, const json& bank) {
  static const std::regex kKcal(R"(([0-9]+(?:\.[0-9]+)?)\s*kcal)", std::regex::icase);
  static const std::regex kProtein(R"(protein\s*:?\s*([0-9]+(?:\.[0-9]+)?)\s*g|([0-9]+(?:\.[0-9]+)?)\s*g\s+protein)",
                                   std::regex::icase);
  static const std::regex kFat(R"(fat\s*:?\s*([0-9]+(?:\.[0-9]+)?)\s*g|([0-9]+(?:\.[0-9]+)?)\s*g\s+fat)",
                               std::regex::icase);
  static const std::regex kCarb(
      R"(carb(?:ohydrate)?s?\s*:?\s*([0-9]+(?:\.[0-9]+)?)\s*g|([0-9]+(?:\.[0-9]+)?)\s*g\s+carb)", std::regex::icase);

  std::size_t cut = body.size();
  for (std::string_view stop : {"(", " — ", " – ", " - ", ":"}) cut = std::min(cut, body.find(stop));
  const std::string name = normalize_item_name(body.substr(0, cut));
  if (name.empty()) return nullptr;

  std::string serving;
  if (cut < body.size() && body[cut] == '(') {
    const auto close = body.find(')', cut);
    if (close != std::string::npos) serving = body.substr(cut + 1, close - cut - 1);
  }
  const std::string rest = cut < body.size() ? body.substr(cut) : std::string{};
  json nutrients = json::object();
  auto put = [&](const char* key, const std::regex& re) {
    std::smatch m;
    if (!std::regex_search(rest, m, re)) return;
    nutrients[key] = std::stod(m[1].matched ? m[1].str() : m[2].str());
  };
  if (auto kcal = grab(rest, kKcal)) nutrients["kcal"] = *kcal;
  put("protein_g", kProtein);
  put("fat_g", kFat);
  put("carb_g", kCarb);
  return json{{"name", name}, {"serving", serving}, {"bank", bank}, {"nutrients", nutrients}};
}

json answer_items(const CandidateAnswer& answer) {
  json items = json::array();
  for (const auto& b : answer.banks) {
    const json bank{{"name", b.name}, {"zip", b.zip.str()}};
    for (const auto& item : b.items) {
      items.push_back(json{{"name", item.name},
                           {"serving", item.serving},
                           {"bank", bank},
                           {"nutrients", item.nutrients ? json(*item.nutrients) : json::object()}});
    }
  }
  return items;
}

std::mutex& dir_mutex(const fs::path& root) {
  static std::mutex guard;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard lock(guard);
  auto& slot = locks[root.lexically_normal().string()];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

}  // namespace

json bank_listing_schema() {
  return json{{"type", "object"},
              {"required", json::array({"name", "zip"})},
              {"properties",
               {{"name", {{"type", "string"}, {"minLength", 1}}},
                {"zip", {{"type", "string"}, {"minLength", 5}}},
                {"registry_id", {{"type", json::array({"string", "null"})}}},
                {"source", {{"enum", json::array({"registry", "web"})}}},
                {"observed_at", {{"type", "string"}}},
                {"document", {{"type", "string"}}},
                {"lat", {{"type", "number"}, {"minimum", -90}, {"maximum", 90}}},
                {"lon", {{"type", "number"}, {"minimum", -180}, {"maximum", 180}}}}}};
}

json nutrient_result_schema() {
  return json{{"type", "object"},
              {"required", json::array({"item", "source"})},
              {"properties",
               {{"item",
                 {{"type", "object"},
                  {"required", json::array({"name", "nutrients"})},
                  {"properties",
                   {{"name", {{"type", "string"}, {"minLength", 1}}},
                    {"nutrients",
                     {{"type", "object"},
                      {"required", json::array({"kcal", "protein_g", "fat_g", "carb_g"})},
                      {"properties", kNutrientFields}}}}}}},
                {"source", {{"type", "string"}}}}}};
}

json post_schema() {
  return json{{"type", "object"},
              {"required", json::array({"source_id", "text", "observed_at", "clamped"})},
              {"properties",
               {{"source_id", {{"type", "string"}}},
                {"text", {{"type", "string"}}},
                {"observed_at", {{"type", "string"}}},
                {"clamped", {{"type", "boolean"}}}}}};
}

json doc_item_schema() {
  return json{{"type", "object"},
              {"required", json::array({"name", "nutrients"})},
              {"properties",
               {{"name", {{"type", "string"}, {"minLength", 1}}},
                {"serving", {{"type", "string"}}},
                {"bank", {{"type", json::array({"object", "null"})}}},
                {"nutrients", {{"type", "object"}, {"properties", kNutrientFields}}}}}};
}

json receipt_schema() {
  return json{{"type", "object"},
              {"required", json::array({"path", "bytes", "sha256"})},
              {"properties",
               {{"path", {{"type", "string"}}},
                {"bytes", {{"type", "integer"}, {"minimum", 0}}},
                {"sha256", {{"type", "string"}, {"minLength", 64}}}}}};
}

ToolSpec search_spec() {
  ToolSpec s;
  s.name = "search";
  s.description = "Find food banks serving a ZIP code, or look up USDA nutrients for an item.";
  s.argument_schema = json{
      {"anyOf",
       {json{{"type", "object"},
             {"required", json::array({"zip"})},
             {"properties", {{"zip", {{"type", "string"}}}, {"query", {{"type", "string"}}}}},
             {"additionalProperties", false}},
        json{{"type", "object"},
             {"required", json::array({"item_name"})},
             {"properties", {{"item_name", {{"type", "string"}, {"minLength", 1}}}}},
             {"additionalProperties", false}}}}};
  s.result_schema = json{{"anyOf",
                          {json{{"type", "object"},
                                {"required", json::array({"banks"})},
                                {"properties", {{"banks", {{"type", "array"}, {"items", bank_listing_schema()}}}}}},
                           nutrient_result_schema()}}};
  return s;
}

ToolSpec social_spec() {
  ToolSpec s;
  s.name = "social";
  s.description = "Recent community posts mentioning a food bank, with dates.";
  s.argument_schema = json{{"type", "object"},
                           {"required", json::array({"bank_name"})},
                           {"properties", {{"bank_name", {{"type", "string"}, {"minLength", 1}}}}},
                           {"additionalProperties", false}};
  s.result_schema = json{{"type", "object"},
                         {"required", json::array({"posts"})},
                         {"properties", {{"posts", {{"type", "array"}, {"items", post_schema()}}}}}};
  return s;
}

ToolSpec doc_spec() {
  ToolSpec s;
  s.name = "doc";
  s.description = "Extract food items and nutrient facts from a flyer, list, or structured answer.";
  s.argument_schema = json{{"type", "object"},
                           {"required", json::array({"document"})},
                           {"properties", {{"document", {{"type", "string"}}}}},
                           {"additionalProperties", false}};
  s.result_schema = json{{"type", "object"},
                         {"required", json::array({"items"})},
                         {"properties", {{"items", {{"type", "array"}, {"items", doc_item_schema()}}}}}};
  return s;
}

ToolSpec table_eval_spec() {
  ToolSpec s;
  s.name = "table_eval";
  s.description = "Filter, sort, truncate or aggregate a table with a closed expression language.";
  s.argument_schema = json{{"type", "object"},
                           {"required", json::array({"table", "expression"})},
                           {"properties", {{"table", {{"type", "array"}}}, {"expression", {{"type", "string"}}}}},
                           {"additionalProperties", false}};
  s.result_schema = json{{"type", "object"}, {"required", json::array({"rows"})}, {"properties", {{"rows", {{"type", "array"}}}}}};
  return s;
}

ToolSpec write_spec() {
  ToolSpec s;
  s.name = "write";
  s.description = "Persist an audit artifact inside the session directory.";
  s.argument_schema = json{{"type", "object"},
                           {"required", json::array({"path", "payload"})},
                           {"properties", {{"path", {{"type", "string"}, {"minLength", 1}}}, {"payload", {{"type", "string"}}}}},
                           {"additionalProperties", false}};
  s.result_schema = receipt_schema();
  return s;
}

ToolFn fixture_search_tool(fs::path dir, std::shared_ptr<const NutrientDb> nutrients) {
  return [dir = std::move(dir), nutrients = std::move(nutrients)](const json& args, const ToolContext&) -> json {
    if (args.contains("item_name")) return nutrient_lookup(nutrients.get(), args);
    const ZipCode zip = require_zip(args);
    const fs::path file = dir / (zip.str() + ".json");
    if (!fs::exists(file)) return json{{"banks", json::array()}};
    json doc = read_json_file(file);
    return json{{"banks", doc.is_array() ? doc : doc.value("banks", json::array())}};
  };
}

ToolFn http_search_tool(std::string url, std::string api_key, std::shared_ptr<const NutrientDb> nutrients) {
  return [url = std::move(url), api_key = std::move(api_key), nutrients = std::move(nutrients)](
             const json& args, const ToolContext&) -> json {
    if (args.contains("item_name")) return nutrient_lookup(nutrients.get(), args);
    const ZipCode zip = require_zip(args);
    json doc = http_get_json(url, api_key, {{"zip", zip.str()}, {"query", args.value("query", std::string{})}});
    return json{{"banks", doc.is_array() ? doc : doc.value("banks", json::array())}};
  };
}

std::string social_fixture_key(std::string_view bank_name) { return sha256_hex(normalize_text(bank_name)); }

ToolFn fixture_social_tool(fs::path dir) {
  return [dir = std::move(dir)](const json& args, const ToolContext& ctx) -> json {
    const fs::path file = dir / (social_fixture_key(args.at("bank_name").get<std::string>()) + ".json");
    if (!fs::exists(file)) return json{{"posts", json::array()}};
    json doc = read_json_file(file);
    return json{{"posts", clamp_posts(doc.is_array() ? doc : doc.value("posts", json::array()), ctx.session_date)}};
  };
}

ToolFn http_social_tool(std::string url, std::string api_key) {
  return [url = std::move(url), api_key = std::move(api_key)](const json& args, const ToolContext& ctx) -> json {
    json doc = http_get_json(url, api_key, {{"bank_name", args.at("bank_name").get<std::string>()}});
    return json{{"posts", clamp_posts(doc.is_array() ? doc : doc.value("posts", json::array()), ctx.session_date)}};
  };
}

json parse_document(std::string_view document) {
  static const std::regex kHeading(R"(^\s*(.*\S)\s*\((\d{5})\)\s*:?\s*$)");
  static const std::regex kBullet(R"(^\s*(?:[-*]|•|\d+[.)])\s+(.*\S)\s*$)");

  json items = json::array();
  const auto first = document.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return json{{"items", items}};
  if (document[first] == '{') {
    try {
      return json{{"items", answer_items(json::parse(document).get<CandidateAnswer>())}};
    } catch (const json::exception&) {
      // not an answer document; fall through to line parsing
    } catch (const Error&) {
    }
  }

  json bank = nullptr;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    auto end = document.find('\n', pos);
    if (end == std::string_view::npos) end = document.size();
    std::string line(document.substr(pos, end - pos));
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    try {
      const auto parsed = parse_structured_output(line);
      if (parsed.diagnostics.empty()) {
        const auto& b = parsed.answer.banks.front();
        bank = json{{"name", b.name}, {"zip", b.zip.str()}};
        for (auto& item : answer_items(parsed.answer)) items.push_back(std::move(item));
        continue;
      }
    } catch (const Error&) {
    }
    std::smatch m;
    if (std::regex_match(line, m, kBullet)) {
      json item = bullet_item(m[1].str(), bank);
      if (!item.is_null()) items.push_back(std::move(item));
    } else if (std::regex_match(line, m, kHeading)) {
      bank = json{{"name", m[1].str()}, {"zip", m[2].str()}};
    }
  }
  return json{{"items", items}};
}

ToolFn doc_tool() {
  return [](const json& args, const ToolContext&) { return parse_document(args.at("document").get<std::string>()); };
}

ToolFn table_eval_tool() {
  return [](const json& args, const ToolContext&) {
    return json{{"rows", table_eval(args.at("table"), args.at("expression").get<std::string>())}};
  };
}

fs::path confine_path(const fs::path& root, std::string_view relative) {
  if (relative.empty()) throw Error(ErrorCode::kRejected, "empty audit path");
  if (relative.find('\0') != std::string_view::npos) throw Error(ErrorCode::kRejected, "NUL in audit path");
  const fs::path rel(relative);
  if (rel.is_absolute() || rel.has_root_name() || rel.has_root_directory()) {
    throw Error(ErrorCode::kRejected, "absolute audit path '" + std::string(relative) + "'");
  }
  for (const auto& part : rel) {
    if (part == "..") throw Error(ErrorCode::kRejected, "audit path escapes its directory: '" + std::string(relative) + "'");
  }
  const fs::path target = (root / rel).lexically_normal();
  const fs::path base = fs::weakly_canonical(root);
  const fs::path resolved = fs::weakly_canonical(target);
  const auto [r, t] = std::mismatch(base.begin(), base.end(), resolved.begin(), resolved.end());
  if (r != base.end() || resolved == base) {
    throw Error(ErrorCode::kRejected, "audit path resolves outside its directory: '" + std::string(relative) + "'");
  }
  return target;
}

ToolFn write_tool() {
  return [](const json& args, const ToolContext& ctx) -> json {
    if (ctx.audit_dir.empty()) throw Error(ErrorCode::kPrecondition, "session has no audit directory");
    const std::string rel = args.at("path").get<std::string>();
    const auto& payload = args.at("payload").get_ref<const std::string&>();
    std::lock_guard lock(dir_mutex(ctx.audit_dir));
    const fs::path target = confine_path(ctx.audit_dir, rel);
    write_file(target, payload);
    return json{{"path", fs::path(rel).lexically_normal().generic_string()},
                {"bytes", payload.size()},
                {"sha256", sha256_hex(payload)}};
  };
}

ToolRegistry make_toolkit(const ToolkitConfig& config) {
  ToolRegistry reg;
  reg.register_tool(search_spec(), config.search_url
                                       ? http_search_tool(*config.search_url, config.api_key, config.nutrients)
                                       : fixture_search_tool(config.fixtures_dir / "search", config.nutrients));
  reg.register_tool(social_spec(), config.social_url ? http_social_tool(*config.social_url, config.api_key)
                                                     : fixture_social_tool(config.fixtures_dir / "social"));
  reg.register_tool(doc_spec(), doc_tool());
  reg.register_tool(table_eval_spec(), table_eval_tool());
  reg.register_tool(write_spec(), write_tool());
  return reg;
}

}  // namespace food4all
