#include "io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "netme/error.hpp"

namespace netme::cli {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << content;
    if (!out) throw ValidationError("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) { write_file(path, value.dump(2) + "\n"); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ValidationError("missing CSV column " + name);
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header)
    if (h == name) return true;
  return false;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

Point parse_point(const json& coord, const std::string& context) {
  if (!coord.is_array() || coord.size() < 2 || !coord[0].is_number() || !coord[1].is_number())
    throw ValidationError("bad coordinate in " + context);
  return {coord[0].get<double>(), coord[1].get<double>()};
}

const json& features_of(const json& doc, const fs::path& path) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array())
    throw ValidationError(path.string() + " is not a GeoJSON FeatureCollection");
  return doc["features"];
}

std::string feature_id(const json& feature, const std::vector<const char*>& keys, std::size_t index) {
  const json props = feature.value("properties", json::object());
  for (const char* key : keys) {
    if (props.is_object() && props.contains(key)) {
      const json& v = props[key];
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<long long>());
      if (v.is_number()) return format_number(v.get<double>());
    }
  }
  if (feature.contains("id")) {
    const json& v = feature["id"];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
  }
  return std::to_string(index);
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != table.header.size())
      throw ValidationError(path.string() + ": row " + std::to_string(table.rows.size() + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  if (first) throw ValidationError(path.string() + " is empty");
  return table;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto append_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(row[i]);
    }
    out += '\n';
  };
  append_row(table.header);
  for (const auto& r : table.rows) append_row(r);
  return out;
}

double parse_double(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("cannot parse number '" + text + "' in " + context);
  }
}

std::vector<Segment> read_segments_geojson(const fs::path& path) {
  const json doc = read_json(path);
  std::vector<Segment> out;
  std::size_t index = 0;
  for (const json& f : features_of(doc, path)) {
    const std::string id = feature_id(f, {"segment_id", "id"}, index);
    const std::string context = path.string() + " feature " + id;
    if (!f.contains("geometry") || !f["geometry"].is_object() ||
        f["geometry"].value("type", "") != "LineString")
      throw ValidationError(context + " is not a LineString");
    std::vector<Point> line;
    for (const json& c : f["geometry"]["coordinates"]) line.push_back(parse_point(c, context));
    std::string road_class;
    double speed = 0.0;
    std::map<std::string, double> attributes;
    const json props = f.value("properties", json::object());
    if (props.is_object()) {
      for (const auto& [key, v] : props.items()) {
        if (key == "segment_id" || key == "id") continue;
        if (key == "road_class" || key == "frc") {
          road_class = v.is_string() ? v.get<std::string>()
                                     : (v.is_number_integer() ? std::to_string(v.get<long long>()) : v.dump());
        } else if ((key == "speed_limit_kmh" || key == "speed_limit") && v.is_number()) {
          speed = v.get<double>();
        } else if (v.is_number()) {
          attributes[key] = v.get<double>();
        }
      }
    }
    Segment s = make_segment(id, std::move(line), road_class, speed);
    s.attributes = std::move(attributes);
    out.push_back(std::move(s));
    ++index;
  }
  return out;
}

std::vector<EventPoint> read_events_geojson(const fs::path& path) {
  const json doc = read_json(path);
  std::vector<EventPoint> out;
  std::size_t index = 0;
  for (const json& f : features_of(doc, path)) {
    const std::string id = feature_id(f, {"id", "event_id"}, index);
    if (!f.contains("geometry") || !f["geometry"].is_object() || f["geometry"].value("type", "") != "Point")
      throw ValidationError(path.string() + " feature " + id + " is not a Point");
    out.push_back({id, parse_point(f["geometry"]["coordinates"], path.string() + " feature " + id)});
    ++index;
  }
  return out;
}

PolygonCovariateLayer read_polygons_geojson(const fs::path& path) {
  const json doc = read_json(path);
  PolygonCovariateLayer layer;
  std::size_t index = 0;
  for (const json& f : features_of(doc, path)) {
    const std::string context = path.string() + " feature " + std::to_string(index);
    if (!f.contains("geometry") || !f["geometry"].is_object() || f["geometry"].value("type", "") != "Polygon")
      throw ValidationError(context + " is not a Polygon");
    CovariatePolygon poly;
    for (const json& ring : f["geometry"]["coordinates"]) {
      std::vector<Point> pts;
      for (const json& c : ring) pts.push_back(parse_point(c, context));
      poly.rings.push_back(std::move(pts));
    }
    const json props = f.value("properties", json::object());
    if (props.is_object())
      for (const auto& [key, v] : props.items())
        if (v.is_number()) poly.attributes[key] = v.get<double>();
    layer.polygons.push_back(std::move(poly));
    ++index;
  }
  layer.validate();
  return layer;
}

bool looks_geographic(const std::vector<Point>& points) {
  if (points.empty()) return false;
  for (const Point& p : points)
    if (std::abs(p.x) > 180.0 || std::abs(p.y) > 90.0) return false;
  return true;
}

}  // namespace netme::cli
