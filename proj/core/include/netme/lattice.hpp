#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "netme/geometry.hpp"

namespace netme {

struct Segment {
  std::string id;
  std::vector<Point> polyline;
  double length_m = 0.0;
  std::string road_class;
  double speed_limit_kmh = 0.0;
  // Extra numeric attributes carried through ingestion (e.g. a traffic proxy).
  std::map<std::string, double> attributes;
};

// Builds a segment and derives length_m from the geometry. Throws
// ValidationError on fewer than two points, non-finite coordinates or zero
// length.
Segment make_segment(std::string id, std::vector<Point> polyline, std::string road_class = "",
                     double speed_limit_kmh = 0.0);

// Road segments as lattice sites. Adjacency lists are sorted, symmetric and
// irreflexive; component labels are numbered in order of the lowest segment
// index they contain.
class SegmentNetwork {
 public:
  SegmentNetwork() = default;
  SegmentNetwork(std::vector<Segment> segments, std::vector<std::vector<std::size_t>> adjacency);

  std::size_t size() const { return segments_.size(); }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_[i]; }

  const std::vector<std::vector<std::size_t>>& adjacency() const { return adjacency_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_[i]; }
  bool adjacent(std::size_t i, std::size_t j) const;
  std::size_t n_edges() const;
  // Edges (i, j) with i < j in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  const std::vector<int>& component_label() const { return component_label_; }
  int n_components() const { return n_components_; }
  std::vector<std::size_t> component_sizes() const;

  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  std::vector<Segment> segments_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<int> component_label_;
  int n_components_ = 0;
  std::map<std::string, std::size_t> id_index_;
};

// Connected-component labels by breadth-first traversal; returns the count.
int label_components(const std::vector<std::vector<std::size_t>>& adjacency,
                     std::vector<int>& labels);

struct AdjacencyOptions {
  // Endpoints closer than this (meters) are treated as coincident. Zero means
  // bit-exact coordinate equality.
  double snap_tolerance_m = 0.0;
};

// Segments are adjacent iff an endpoint of one coincides with an endpoint of
// the other. Throws ValidationError naming the first duplicate id.
SegmentNetwork build_adjacency(std::vector<Segment> segments, const AdjacencyOptions& options = {});

struct PrunePolicy {
  enum class Kind { keep_largest, min_size };
  Kind kind = Kind::keep_largest;
  std::size_t min_size = 1;

  static PrunePolicy keep_largest() { return {}; }
  static PrunePolicy at_least(std::size_t k) { return {Kind::min_size, k}; }
};

struct PruneResult {
  SegmentNetwork network;
  std::vector<std::size_t> retained;  // original indices, increasing
  std::size_t n_removed = 0;
  int components_removed = 0;
};

// Keep-largest breaks size ties by the lowest component label. Throws
// ValidationError when nothing survives.
PruneResult prune_components(const SegmentNetwork& network, const PrunePolicy& policy);

struct EventPoint {
  std::string id;
  Point location;
};

struct EventAssignment {
  std::string event_id;
  std::optional<std::size_t> segment_index;
  double snap_distance_m = 0.0;
  Point snapped;  // closest point on the nearest segment
};

// Assigns each point to the segment at the smallest point-to-polyline
// distance, or leaves it unassigned when that distance exceeds the tolerance.
// Equidistant segments resolve to the lowest index.
std::vector<EventAssignment> snap_events(std::span<const EventPoint> points,
                                         const SegmentNetwork& network,
                                         double tolerance_m = 10.0);

std::vector<int> count_events(std::span<const EventAssignment> assignments,
                              const SegmentNetwork& network);

struct CovariatePolygon {
  std::vector<std::vector<Point>> rings;  // first ring outer, others holes
  std::map<std::string, double> attributes;
};

struct PolygonCovariateLayer {
  std::vector<CovariatePolygon> polygons;

  // Throws ValidationError on open rings or non-finite attributes.
  void validate() const;
  std::vector<std::string> attribute_names() const;
};

struct OverlayResult {
  // Winning polygon per segment; nullopt when the segment meets no polygon.
  std::vector<std::optional<std::size_t>> polygon_index;
  // Fraction of the segment length inside the winning polygon.
  std::vector<double> fraction;

  std::vector<std::size_t> missing() const;
};

// Each segment takes the polygon holding the largest share of its length
// (lowest polygon index on ties).
OverlayResult overlay_covariates(const SegmentNetwork& network, const PolygonCovariateLayer& layer);

struct NetworkSummary {
  std::size_t n_segments = 0;
  std::size_t n_edges = 0;
  int n_components = 0;
  double total_length_m = 0.0;
  double min_length_m = 0.0;
  double mean_length_m = 0.0;
  double sd_length_m = 0.0;
  double max_length_m = 0.0;
};

NetworkSummary summarize_network(const SegmentNetwork& network);

}  // namespace netme
