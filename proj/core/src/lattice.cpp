#include "netme/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>

#include "netme/error.hpp"

namespace netme {

Segment make_segment(std::string id, std::vector<Point> polyline, std::string road_class,
                     double speed_limit_kmh) {
  if (polyline.size() < 2) throw ValidationError("segment " + id + ": polyline needs >= 2 points");
  for (const Point& p : polyline)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("segment " + id + ": non-finite coordinate");
  Segment s;
  s.length_m = polyline_length(polyline);
  if (!(s.length_m > 0.0)) throw ValidationError("segment " + id + ": zero length");
  s.id = std::move(id);
  s.polyline = std::move(polyline);
  s.road_class = std::move(road_class);
  s.speed_limit_kmh = speed_limit_kmh;
  return s;
}

int label_components(const std::vector<std::vector<std::size_t>>& adjacency,
                     std::vector<int>& labels) {
  labels.assign(adjacency.size(), -1);
  int next = 0;
  std::queue<std::size_t> frontier;
  for (std::size_t start = 0; start < adjacency.size(); ++start) {
    if (labels[start] >= 0) continue;
    labels[start] = next;
    frontier.push(start);
    while (!frontier.empty()) {
      const std::size_t i = frontier.front();
      frontier.pop();
      for (std::size_t j : adjacency[i]) {
        if (labels[j] < 0) {
          labels[j] = next;
          frontier.push(j);
        }
      }
    }
    ++next;
  }
  return next;
}

SegmentNetwork::SegmentNetwork(std::vector<Segment> segments,
                               std::vector<std::vector<std::size_t>> adjacency)
    : segments_(std::move(segments)), adjacency_(std::move(adjacency)) {
  if (adjacency_.size() != segments_.size())
    throw ValidationError("adjacency size does not match segment count");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!id_index_.emplace(segments_[i].id, i).second)
      throw ValidationError("duplicate segment id: " + segments_[i].id);
    auto& nb = adjacency_[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    for (std::size_t j : nb) {
      if (j >= segments_.size()) throw ValidationError("adjacency index out of range");
      if (j == i) throw ValidationError("self-adjacency at segment " + segments_[i].id);
    }
  }
  for (std::size_t i = 0; i < adjacency_.size(); ++i)
    for (std::size_t j : adjacency_[i])
      if (!std::binary_search(adjacency_[j].begin(), adjacency_[j].end(), i))
        throw ValidationError("adjacency is not symmetric at " + segments_[i].id);
  n_components_ = label_components(adjacency_, component_label_);
}

bool SegmentNetwork::adjacent(std::size_t i, std::size_t j) const {
  return std::binary_search(adjacency_[i].begin(), adjacency_[i].end(), j);
}

std::size_t SegmentNetwork::n_edges() const {
  std::size_t total = 0;
  for (const auto& nb : adjacency_) total += nb.size();
  return total / 2;
}

std::vector<std::pair<std::size_t, std::size_t>> SegmentNetwork::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n_edges());
  for (std::size_t i = 0; i < adjacency_.size(); ++i)
    for (std::size_t j : adjacency_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

std::vector<std::size_t> SegmentNetwork::component_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_components_), 0);
  for (int c : component_label_) ++sizes[static_cast<std::size_t>(c)];
  return sizes;
}

std::optional<std::size_t> SegmentNetwork::index_of(const std::string& id) const {
  auto it = id_index_.find(id);
  if (it == id_index_.end()) return std::nullopt;
  return it->second;
}

namespace {

struct EndpointRef {
  Point p;
  std::size_t segment;
};

struct PointHash {
  std::size_t operator()(const Point& p) const {
    // + 0.0 folds -0.0 onto 0.0 so equal points hash equally.
    const std::size_t hx = std::hash<double>{}(p.x + 0.0);
    const std::size_t hy = std::hash<double>{}(p.y + 0.0);
    return hx ^ (hy + 0x9e3779b97f4a7c15ULL + (hx << 6) + (hx >> 2));
  }
};

}  // namespace

SegmentNetwork build_adjacency(std::vector<Segment> segments, const AdjacencyOptions& options) {
  {
    std::set<std::string> seen;
    for (const Segment& s : segments) {
      if (s.polyline.empty()) throw ValidationError("segment " + s.id + ": empty polyline");
      if (!seen.insert(s.id).second) throw ValidationError("duplicate segment id: " + s.id);
    }
  }
  std::vector<EndpointRef> endpoints;
  endpoints.reserve(2 * segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    endpoints.push_back({segments[i].polyline.front(), i});
    endpoints.push_back({segments[i].polyline.back(), i});
  }

  std::vector<std::vector<std::size_t>> adjacency(segments.size());
  auto link = [&](std::size_t a, std::size_t b) {
    if (a == b) return;
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  };

  const double tol = options.snap_tolerance_m;
  if (tol <= 0.0) {
    std::unordered_map<Point, std::vector<std::size_t>, PointHash> at;
    for (const EndpointRef& e : endpoints) at[e.p].push_back(e.segment);
    for (const auto& [p, segs] : at)
      for (std::size_t a = 0; a < segs.size(); ++a)
        for (std::size_t b = a + 1; b < segs.size(); ++b) link(segs[a], segs[b]);
  } else {
    // Uniform grid with cell = tolerance; coincident endpoints sit in the same
    // or a neighbouring cell.
    std::unordered_map<long long, std::vector<std::size_t>> grid;
    auto cell = [tol](double v) { return static_cast<long long>(std::floor(v / tol)); };
    auto key = [](long long cx, long long cy) { return cx * 73856093LL ^ cy * 19349663LL; };
    for (std::size_t k = 0; k < endpoints.size(); ++k)
      grid[key(cell(endpoints[k].p.x), cell(endpoints[k].p.y))].push_back(k);
    for (std::size_t k = 0; k < endpoints.size(); ++k) {
      const long long cx = cell(endpoints[k].p.x), cy = cell(endpoints[k].p.y);
      for (long long dx = -1; dx <= 1; ++dx)
        for (long long dy = -1; dy <= 1; ++dy) {
          auto it = grid.find(key(cx + dx, cy + dy));
          if (it == grid.end()) continue;
          for (std::size_t other : it->second)
            if (other > k && distance(endpoints[k].p, endpoints[other].p) <= tol)
              link(endpoints[k].segment, endpoints[other].segment);
        }
    }
  }
  return SegmentNetwork(std::move(segments), std::move(adjacency));
}

PruneResult prune_components(const SegmentNetwork& network, const PrunePolicy& policy) {
  const auto sizes = network.component_sizes();
  std::vector<bool> keep_component(sizes.size(), false);
  if (policy.kind == PrunePolicy::Kind::keep_largest) {
    if (!sizes.empty()) {
      const auto largest = std::max_element(sizes.begin(), sizes.end()) - sizes.begin();
      keep_component[static_cast<std::size_t>(largest)] = true;
    }
  } else {
    for (std::size_t c = 0; c < sizes.size(); ++c) keep_component[c] = sizes[c] >= policy.min_size;
  }

  PruneResult result;
  std::vector<std::size_t> new_index(network.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < network.size(); ++i) {
    if (keep_component[static_cast<std::size_t>(network.component_label()[i])]) {
      new_index[i] = result.retained.size();
      result.retained.push_back(i);
    }
  }
  if (result.retained.empty()) throw ValidationError("pruning removed every segment");

  std::vector<Segment> segments;
  std::vector<std::vector<std::size_t>> adjacency;
  segments.reserve(result.retained.size());
  adjacency.reserve(result.retained.size());
  for (std::size_t old : result.retained) {
    segments.push_back(network.segment(old));
    std::vector<std::size_t> nb;
    for (std::size_t j : network.neighbors(old)) nb.push_back(new_index[j]);
    adjacency.push_back(std::move(nb));
  }
  result.n_removed = network.size() - result.retained.size();
  result.components_removed = static_cast<int>(
      std::count(keep_component.begin(), keep_component.end(), false));
  result.network = SegmentNetwork(std::move(segments), std::move(adjacency));
  return result;
}

namespace {

// Buckets polyline edges by the grid cells their bounding boxes touch.
class EdgeGrid {
 public:
  EdgeGrid(const SegmentNetwork& network, double cell) : cell_(cell) {
    for (std::size_t s = 0; s < network.size(); ++s) {
      const auto& line = network.segment(s).polyline;
      const BoundingBox box = bounding_box(line);
      for (long long cx = index(box.min_x); cx <= index(box.max_x); ++cx)
        for (long long cy = index(box.min_y); cy <= index(box.max_y); ++cy) buckets_[key(cx, cy)].push_back(s);
    }
    for (auto& [k, v] : buckets_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  // Segments whose bounding box may lie within `radius` of p.
  std::vector<std::size_t> candidates(Point p, double radius) const {
    std::vector<std::size_t> out;
    for (long long cx = index(p.x - radius); cx <= index(p.x + radius); ++cx)
      for (long long cy = index(p.y - radius); cy <= index(p.y + radius); ++cy) {
        auto it = buckets_.find(key(cx, cy));
        if (it != buckets_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  long long index(double v) const { return static_cast<long long>(std::floor(v / cell_)); }
  static long long key(long long cx, long long cy) { return cx * 73856093LL ^ cy * 19349663LL; }

  double cell_;
  std::unordered_map<long long, std::vector<std::size_t>> buckets_;
};

}  // namespace

std::vector<EventAssignment> snap_events(std::span<const EventPoint> points,
                                         const SegmentNetwork& network, double tolerance_m) {
  if (!(tolerance_m > 0.0)) throw ValidationError("snap tolerance must be positive");
  std::vector<EventAssignment> out;
  out.reserve(points.size());
  if (points.empty()) return out;

  double extent = 0.0;
  for (const Segment& seg : network.segments()) {
    const BoundingBox b = bounding_box(seg.polyline);
    extent += std::max(b.max_x - b.min_x, b.max_y - b.min_y);
  }
  extent /= static_cast<double>(std::max<std::size_t>(network.size(), 1));
  const EdgeGrid grid(network, std::max(tolerance_m, extent));
  auto nearest_among = [&](Point p, const auto& indices) {
    EventAssignment best;
    best.snap_distance_m = std::numeric_limits<double>::infinity();
    for (std::size_t s : indices) {
      const Projection pr = project_onto_polyline(p, network.segment(s).polyline);
      // Strict comparison over increasing indices keeps the lowest index on ties.
      if (pr.distance < best.snap_distance_m) {
        best.snap_distance_m = pr.distance;
        best.segment_index = s;
        best.snapped = pr.point;
      }
    }
    return best;
  };

  std::vector<std::size_t> all(network.size());
  std::iota(all.begin(), all.end(), 0);
  for (const EventPoint& ev : points) {
    EventAssignment a = nearest_among(ev.location, grid.candidates(ev.location, tolerance_m));
    if (!a.segment_index || a.snap_distance_m > tolerance_m) {
      // Nothing within tolerance; a full scan reports the true distance.
      a = nearest_among(ev.location, all);
    }
    a.event_id = ev.id;
    if (a.snap_distance_m > tolerance_m) a.segment_index.reset();
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<int> count_events(std::span<const EventAssignment> assignments,
                              const SegmentNetwork& network) {
  std::vector<int> counts(network.size(), 0);
  for (const EventAssignment& a : assignments) {
    if (!a.segment_index) continue;
    if (*a.segment_index >= network.size())
      throw ValidationError("event " + a.event_id + " references segment index out of range");
    ++counts[*a.segment_index];
  }
  return counts;
}

void PolygonCovariateLayer::validate() const {
  for (std::size_t k = 0; k < polygons.size(); ++k) {
    const auto& poly = polygons[k];
    if (poly.rings.empty()) throw ValidationError("polygon " + std::to_string(k) + " has no rings");
    for (const auto& ring : poly.rings) {
      if (ring.size() < 4 || !(ring.front() == ring.back()))
        throw ValidationError("polygon " + std::to_string(k) + " ring is not closed");
    }
    for (const auto& [name, value] : poly.attributes)
      if (!std::isfinite(value))
        throw ValidationError("polygon " + std::to_string(k) + " attribute " + name + " is not finite");
  }
}

std::vector<std::string> PolygonCovariateLayer::attribute_names() const {
  std::set<std::string> names;
  for (const auto& poly : polygons)
    for (const auto& [name, value] : poly.attributes) names.insert(name);
  return {names.begin(), names.end()};
}

std::vector<std::size_t> OverlayResult::missing() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < polygon_index.size(); ++i)
    if (!polygon_index[i]) out.push_back(i);
  return out;
}

OverlayResult overlay_covariates(const SegmentNetwork& network, const PolygonCovariateLayer& layer) {
  layer.validate();
  std::vector<BoundingBox> poly_boxes;
  poly_boxes.reserve(layer.polygons.size());
  for (const auto& poly : layer.polygons) poly_boxes.push_back(bounding_box(poly.rings.front()));

  OverlayResult result;
  result.polygon_index.resize(network.size());
  result.fraction.assign(network.size(), 0.0);
  for (std::size_t s = 0; s < network.size(); ++s) {
    const Segment& seg = network.segment(s);
    const BoundingBox box = bounding_box(seg.polyline);
    double best = 0.0;
    for (std::size_t k = 0; k < layer.polygons.size(); ++k) {
      if (!box.intersects(poly_boxes[k])) continue;
      const double inside = clipped_length(seg.polyline, layer.polygons[k].rings);
      if (inside > best) {
        best = inside;
        result.polygon_index[s] = k;
      }
    }
    result.fraction[s] = best / seg.length_m;
  }
  return result;
}

NetworkSummary summarize_network(const SegmentNetwork& network) {
  NetworkSummary s;
  s.n_segments = network.size();
  s.n_edges = network.n_edges();
  s.n_components = network.n_components();
  if (network.size() == 0) return s;
  s.min_length_m = std::numeric_limits<double>::infinity();
  for (const Segment& seg : network.segments()) {
    s.total_length_m += seg.length_m;
    s.min_length_m = std::min(s.min_length_m, seg.length_m);
    s.max_length_m = std::max(s.max_length_m, seg.length_m);
  }
  s.mean_length_m = s.total_length_m / static_cast<double>(network.size());
  double ss = 0.0;
  for (const Segment& seg : network.segments()) ss += (seg.length_m - s.mean_length_m) * (seg.length_m - s.mean_length_m);
  s.sd_length_m = network.size() > 1 ? std::sqrt(ss / static_cast<double>(network.size() - 1)) : 0.0;
  return s;
}

}  // namespace netme
