#include "netme/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace netme {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double polyline_length(std::span<const Point> polyline) {
  double total = 0.0;
  for (std::size_t k = 1; k < polyline.size(); ++k) total += distance(polyline[k - 1], polyline[k]);
  return total;
}

Projection project_onto_segment(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const Point q{a.x + t * dx, a.y + t * dy};
  return {q, distance(p, q)};
}

Projection project_onto_polyline(Point p, std::span<const Point> polyline) {
  Projection best{polyline.front(), distance(p, polyline.front())};
  for (std::size_t k = 1; k < polyline.size(); ++k) {
    const Projection candidate = project_onto_segment(p, polyline[k - 1], polyline[k]);
    if (candidate.distance < best.distance) best = candidate;
  }
  return best;
}

BoundingBox bounding_box(std::span<const Point> points) {
  BoundingBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity()};
  for (const Point& p : points) {
    box.min_x = std::min(box.min_x, p.x);
    box.min_y = std::min(box.min_y, p.y);
    box.max_x = std::max(box.max_x, p.x);
    box.max_y = std::max(box.max_y, p.y);
  }
  return box;
}

bool point_in_rings(Point p, std::span<const std::vector<Point>> rings) {
  bool inside = false;
  for (const auto& ring : rings) {
    const std::size_t m = ring.size();
    for (std::size_t i = 0, j = m - 1; i < m; j = i++) {
      const Point a = ring[i];
      const Point b = ring[j];
      if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
        inside = !inside;
    }
  }
  return inside;
}

namespace {

// Parameter t in (0, 1) along p0->p1 where it crosses segment q0->q1, if any.
void collect_crossings(Point p0, Point p1, Point q0, Point q1, std::vector<double>& out) {
  const double rx = p1.x - p0.x, ry = p1.y - p0.y;
  const double sx = q1.x - q0.x, sy = q1.y - q0.y;
  const double denom = rx * sy - ry * sx;
  if (denom == 0.0) return;  // parallel or collinear; midpoints decide
  const double qpx = q0.x - p0.x, qpy = q0.y - p0.y;
  const double t = (qpx * sy - qpy * sx) / denom;
  const double u = (qpx * ry - qpy * rx) / denom;
  if (t > 0.0 && t < 1.0 && u >= 0.0 && u <= 1.0) out.push_back(t);
}

}  // namespace

double clipped_length(std::span<const Point> polyline, std::span<const std::vector<Point>> rings) {
  double inside_length = 0.0;
  std::vector<double> cuts;
  for (std::size_t k = 1; k < polyline.size(); ++k) {
    const Point a = polyline[k - 1];
    const Point b = polyline[k];
    cuts.assign({0.0, 1.0});
    for (const auto& ring : rings)
      for (std::size_t r = 1; r < ring.size(); ++r) collect_crossings(a, b, ring[r - 1], ring[r], cuts);
    std::sort(cuts.begin(), cuts.end());
    const double edge = distance(a, b);
    for (std::size_t c = 1; c < cuts.size(); ++c) {
      const double t0 = cuts[c - 1], t1 = cuts[c];
      if (t1 <= t0) continue;
      const double tm = 0.5 * (t0 + t1);
      const Point mid{a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y)};
      if (point_in_rings(mid, rings)) inside_length += (t1 - t0) * edge;
    }
  }
  return inside_length;
}

}  // namespace netme
