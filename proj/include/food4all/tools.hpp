#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/data_io.hpp"
#include "food4all/date.hpp"
#include "food4all/domain.hpp"

namespace food4all {

struct ToolSpec {
  std::string name;
  std::string description;
  json argument_schema;
  json result_schema;
};

// Per-session facts a tool may depend on.
struct ToolContext {
  Date session_date;
  std::filesystem::path audit_dir;
};

using ToolFn = std::function<json(const json& args, const ToolContext& ctx)>;

class ToolRegistry {
 public:
  // Throws Error(kDuplicate) when the name is taken.
  void register_tool(ToolSpec spec, ToolFn fn);
  // Throws Error(kToolNotFound).
  const ToolSpec& lookup(std::string_view name) const;
  bool contains(std::string_view name) const { return tools_.count(std::string(name)) != 0; }
  std::size_t size() const { return tools_.size(); }
  std::vector<std::string> names() const;

  // Validates arguments (kInvalidArgument) and result (kProtocol) against the
  // spec; tool errors propagate unchanged.
  json call(std::string_view name, const json& args, const ToolContext& ctx) const;

 private:
  struct Entry {
    ToolSpec spec;
    ToolFn fn;
  };
  std::map<std::string, Entry, std::less<>> tools_;
};

// Shapes of the individual records inside tool results.
json bank_listing_schema();
json nutrient_result_schema();
json post_schema();
json doc_item_schema();
json receipt_schema();

ToolSpec search_spec();
ToolSpec social_spec();
ToolSpec doc_spec();
ToolSpec table_eval_spec();
ToolSpec write_spec();

// search: {zip[, query]} -> {"banks": [...]} from <dir>/<zip>.json (a miss is
// an empty list); {item_name} -> {"item": {...}, "source": "usda"} from the
// nutrient table, Error(kNotFound) on a miss.
ToolFn fixture_search_tool(std::filesystem::path dir, std::shared_ptr<const NutrientDb> nutrients);
// Same shapes; the bank branch is GET <url>?zip=&query=.
ToolFn http_search_tool(std::string url, std::string api_key, std::shared_ptr<const NutrientDb> nutrients);

// social: {bank_name} -> {"posts": [...]} from <dir>/<sha256(normalized name)>.json.
// Posts dated after the session date are clamped to it and flagged.
ToolFn fixture_social_tool(std::filesystem::path dir);
ToolFn http_social_tool(std::string url, std::string api_key);
std::string social_fixture_key(std::string_view bank_name);

// doc: {document} -> {"items": [...]}; each item carries name, serving, the
// bank heading it appeared under (or null) and whichever nutrient fields the
// text stated.
ToolFn doc_tool();
json parse_document(std::string_view document);

// table_eval: {table, expression} -> {"rows": [...]}.
ToolFn table_eval_tool();

// write: {path, payload} -> {"path", "bytes", "sha256"}. The path must stay
// inside the session audit directory; escapes throw Error(kRejected).
ToolFn write_tool();
std::filesystem::path confine_path(const std::filesystem::path& root, std::string_view relative);

struct ToolkitConfig {
  std::filesystem::path fixtures_dir;
  std::shared_ptr<const NutrientDb> nutrients;
  std::optional<std::string> search_url;
  std::optional<std::string> social_url;
  std::string api_key;
};

// The five standard tools; search and social are live when a URL is set.
ToolRegistry make_toolkit(const ToolkitConfig& config);

}  // namespace food4all
