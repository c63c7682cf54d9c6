#pragma once

#include <span>
#include <vector>

namespace netme {

// Planar point in a projected coordinate system (meters).
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

double polyline_length(std::span<const Point> polyline);

struct Projection {
  Point point;          // closest point on the geometry
  double distance = 0;  // Euclidean distance to it
};

Projection project_onto_segment(Point p, Point a, Point b);

Projection project_onto_polyline(Point p, std::span<const Point> polyline);

struct BoundingBox {
  double min_x, min_y, max_x, max_y;

  bool intersects(const BoundingBox& other) const {
    return min_x <= other.max_x && other.min_x <= max_x && min_y <= other.max_y &&
           other.min_y <= max_y;
  }
};

BoundingBox bounding_box(std::span<const Point> points);

// Even-odd rule over all rings; holes are rings nested in the outer ring.
bool point_in_rings(Point p, std::span<const std::vector<Point>> rings);

// Length of the part of `polyline` lying inside the region bounded by `rings`.
// Each polyline edge is split at its crossings with every ring edge and the
// pieces are classified by their midpoints, so the result is exact up to
// floating point.
double clipped_length(std::span<const Point> polyline, std::span<const std::vector<Point>> rings);

}  // namespace netme
