#include "food4all/data_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "food4all/error.hpp"

namespace food4all {

namespace fs = std::filesystem;

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line);
    }
  }
  return rows;
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, where + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t columns) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (header) {
      header = false;
      continue;
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns) {
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) + " fields",
                  line);
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

Registry::Registry(std::vector<FoodBankRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!by_id_.emplace(r.registry_id, i).second) {
      throw Error(ErrorCode::kDuplicate, "duplicate registry_id " + r.registry_id);
    }
    by_name_zip_.emplace(std::make_pair(normalize_text(r.name), r.zip.str()), i);
  }
}

Registry Registry::load_csv(const fs::path& path) {
  std::vector<FoodBankRecord> records;
  for (auto& f : read_csv(path, 6)) {
    const std::string where = path.string() + " [" + f[0] + "]";
    records.push_back(FoodBankRecord{f[0], f[1], ZipCode::parse(f[2]),
                                     GeoPoint::make(parse_double(f[3], where), parse_double(f[4], where)),
                                     Date::parse(f[5])});
  }
  return Registry(std::move(records));
}

void Registry::save_csv(const fs::path& path) const {
  std::string out = "registry_id,name,zip,lat,lon,last_verified\n";
  for (const auto& r : records_) {
    std::ostringstream os;
    os.precision(17);
    os << csv_escape(r.registry_id) << ',' << csv_escape(r.name) << ',' << r.zip.str() << ',' << r.location.lat
       << ',' << r.location.lon << ',' << r.last_verified.iso() << '\n';
    out += os.str();
  }
  write_file(path, out);
}

const FoodBankRecord* Registry::find(std::string_view registry_id) const {
  const auto it = by_id_.find(std::string(registry_id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

const FoodBankRecord* Registry::match(const BankEntry& bank) const {
  if (bank.registry_id) return find(*bank.registry_id);
  const auto it = by_name_zip_.find({normalize_text(bank.name), bank.zip.str()});
  return it == by_name_zip_.end() ? nullptr : &records_[it->second];
}

bool Registry::contains_name(std::string_view name) const {
  const std::string key = normalize_text(name);
  for (const auto& r : records_) {
    if (normalize_text(r.name) == key) return true;
  }
  return false;
}

Geocoder Geocoder::load_csv(const fs::path& path) {
  Geocoder g;
  for (auto& f : read_csv(path, 3)) {
    const std::string where = path.string() + " [" + f[0] + "]";
    g.add(ZipCode::parse(f[0]), GeoPoint::make(parse_double(f[1], where), parse_double(f[2], where)));
  }
  return g;
}

void Geocoder::save_csv(const fs::path& path) const {
  std::ostringstream os;
  os.precision(17);
  os << "zip,lat,lon\n";
  for (const auto& [zip, p] : table_) os << zip << ',' << p.lat << ',' << p.lon << '\n';
  write_file(path, os.str());
}

std::optional<GeoPoint> Geocoder::locate(const ZipCode& zip) const {
  const auto it = table_.find(zip.str());
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::vector<ZipCode> Geocoder::zips() const {
  std::vector<ZipCode> out;
  for (const auto& [zip, p] : table_) out.push_back(ZipCode::parse(zip));
  return out;
}

std::optional<GeoPoint> resolve_location(const BankEntry& bank, const Registry& registry, const Geocoder& geocoder) {
  if (const auto* rec = registry.match(bank)) return rec->location;
  return geocoder.locate(bank.zip);
}

NutrientDb NutrientDb::load_jsonl(const fs::path& path) {
  NutrientDb db;
  for (const auto& row : read_jsonl(path)) {
    FoodItem item;
    item.name = normalize_item_name(row.at("name").get<std::string>());
    item.serving = row.value("serving", std::string{});
    item.nutrients = NutrientVector::make(row.at("kcal").get<double>(), row.at("protein_g").get<double>(),
                                          row.at("fat_g").get<double>(), row.at("carb_g").get<double>());
    db.add(std::move(item), row.value("aliases", std::vector<std::string>{}));
  }
  return db;
}

void NutrientDb::save_jsonl(const fs::path& path) const {
  std::string out;
  for (const auto& [name, item] : entries_) {
    json row{{"name", name},
             {"serving", item.serving},
             {"kcal", item.nutrients->kcal},
             {"protein_g", item.nutrients->protein_g},
             {"fat_g", item.nutrients->fat_g},
             {"carb_g", item.nutrients->carb_g}};
    const auto al = aliases_by_name_.find(name);
    row["aliases"] = al == aliases_by_name_.end() ? json::array() : json(al->second);
    out += row.dump() + "\n";
  }
  write_file(path, out);
}

void NutrientDb::add(FoodItem item, std::vector<std::string> aliases) {
  if (item.name.empty() || !item.nutrients) {
    throw Error(ErrorCode::kInvalidArgument, "nutrient DB entries need a name and a nutrient vector");
  }
  const std::string name = item.name;
  for (const auto& a : aliases) {
    aliases_[normalize_item_name(a)] = name;
    aliases_by_name_[name].push_back(a);
  }
  entries_[name] = std::move(item);
}

std::optional<FoodItem> NutrientDb::lookup(std::string_view raw_name) const {
  const std::string key = normalize_item_name(raw_name);
  if (const auto it = entries_.find(key); it != entries_.end()) return it->second;
  if (const auto al = aliases_.find(key); al != aliases_.end()) return entries_.at(al->second);
  return std::nullopt;
}

std::vector<CaseRecord> load_cases(const fs::path& path) {
  std::vector<CaseRecord> cases;
  for (const auto& row : read_jsonl(path)) {
    try {
      cases.push_back(row.get<CaseRecord>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ": bad case record: " + e.what(), row.dump());
    }
  }
  return cases;
}

void save_cases(const fs::path& path, const std::vector<CaseRecord>& cases) {
  std::string out;
  for (const auto& c : cases) out += json(c).dump() + "\n";
  write_file(path, out);
}

}  // namespace food4all
