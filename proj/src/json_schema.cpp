#include "food4all/json_schema.hpp"

#include <cmath>

#include "food4all/error.hpp"

namespace food4all {

namespace {

bool type_matches(const std::string& type, const json& doc) {
  if (type == "object") return doc.is_object();
  if (type == "array") return doc.is_array();
  if (type == "string") return doc.is_string();
  if (type == "number") return doc.is_number();
  if (type == "integer") {
    return doc.is_number_integer() || (doc.is_number_float() && std::floor(doc.get<double>()) == doc.get<double>());
  }
  if (type == "boolean") return doc.is_boolean();
  if (type == "null") return doc.is_null();
  throw Error(ErrorCode::kInvalidArgument, "unsupported schema type '" + type + "'");
}

std::optional<std::string> check(const json& schema, const json& doc, const std::string& at) {
  const std::string where = at.empty() ? "/" : at;
  if (auto t = schema.find("type"); t != schema.end()) {
    bool ok = false;
    if (t->is_array()) {
      for (const auto& alt : *t) ok = ok || type_matches(alt.get<std::string>(), doc);
    } else {
      ok = type_matches(t->get<std::string>(), doc);
    }
    if (!ok) return where + ": expected type " + t->dump();
  }
  if (auto e = schema.find("enum"); e != schema.end()) {
    bool found = false;
    for (const auto& v : *e) found = found || v == doc;
    if (!found) return where + ": value not in enum";
  }
  if (doc.is_number()) {
    const double v = doc.get<double>();
    if (auto m = schema.find("minimum"); m != schema.end() && v < m->get<double>()) return where + ": below minimum";
    if (auto m = schema.find("maximum"); m != schema.end() && v > m->get<double>()) return where + ": above maximum";
  }
  if (doc.is_string()) {
    const auto m = schema.find("minLength");
    if (m != schema.end() && doc.get_ref<const std::string&>().size() < m->get<std::size_t>()) {
      return where + ": shorter than minLength";
    }
  }
  if (doc.is_array()) {
    if (auto m = schema.find("minItems"); m != schema.end() && doc.size() < m->get<std::size_t>()) {
      return where + ": fewer than minItems";
    }
    if (auto items = schema.find("items"); items != schema.end()) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        if (auto err = check(*items, doc[i], at + "/" + std::to_string(i))) return err;
      }
    }
  }
  if (doc.is_object()) {
    if (auto req = schema.find("required"); req != schema.end()) {
      for (const auto& k : *req) {
        if (!doc.contains(k.get<std::string>())) return where + ": missing required \"" + k.get<std::string>() + "\"";
      }
    }
    const auto props = schema.find("properties");
    for (const auto& [key, value] : doc.items()) {
      if (props != schema.end() && props->contains(key)) {
        if (auto err = check(props->at(key), value, at + "/" + key)) return err;
      } else if (auto extra = schema.find("additionalProperties"); extra != schema.end()) {
        if (extra->is_boolean() && !extra->get<bool>()) return where + ": unexpected property \"" + key + "\"";
        if (extra->is_object()) {
          if (auto err = check(*extra, value, at + "/" + key)) return err;
        }
      }
    }
  }
  if (auto any = schema.find("anyOf"); any != schema.end()) {
    std::optional<std::string> last;
    bool ok = false;
    for (const auto& alt : *any) {
      last = check(alt, doc, at);
      if (!last) {
        ok = true;
        break;
      }
    }
    if (!ok) return where + ": no anyOf branch matched (" + last.value_or("") + ")";
  }
  if (auto one = schema.find("oneOf"); one != schema.end()) {
    int matched = 0;
    for (const auto& alt : *one) matched += check(alt, doc, at) ? 0 : 1;
    if (matched != 1) return where + ": " + std::to_string(matched) + " oneOf branches matched";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_schema(const json& schema, const json& doc) { return check(schema, doc, ""); }

}  // namespace food4all
