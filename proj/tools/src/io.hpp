#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "netme/lattice.hpp"

namespace netme::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path);
// Writes through a temporary file and renames it into place.
void write_file(const fs::path& path, const std::string& content);

json read_json(const fs::path& path);
// Two-space indented dump with a trailing newline.
void write_json(const fs::path& path, const json& value);

// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

// Shortest "%.*g" rendering that round-trips the double.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws ValidationError when the column is missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

// Comma-separated values with optional double-quoted fields.
CsvTable read_csv(const fs::path& path);
std::string to_csv(const CsvTable& table);
std::string csv_escape(const std::string& field);
double parse_double(const std::string& text, const std::string& context);

// LineString features; the id comes from "segment_id", "id" or the feature
// id. "road_class" / "frc" and "speed_limit_kmh" / "speed_limit" fill the
// named fields, every other numeric property goes to attributes.
std::vector<Segment> read_segments_geojson(const fs::path& path);
// Point features with "id" (or the feature index).
std::vector<EventPoint> read_events_geojson(const fs::path& path);
// Polygon features; numeric properties become attributes.
PolygonCovariateLayer read_polygons_geojson(const fs::path& path);

// True when every coordinate satisfies |x| <= 180 and |y| <= 90.
bool looks_geographic(const std::vector<Point>& points);

}  // namespace netme::cli
