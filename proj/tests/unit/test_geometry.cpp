#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "netme/geometry.hpp"

using namespace netme;

TEST(Geometry, DistanceAndLength) {
  EXPECT_DOUBLE_EQ(distance({0, 0}, {3, 4}), 5.0);
  const std::vector<Point> line{{0, 0}, {3, 4}, {3, 10}};
  EXPECT_DOUBLE_EQ(polyline_length(line), 11.0);
}

TEST(Geometry, ProjectionClampsToEndpoints) {
  auto p = project_onto_segment({-2, 1}, {0, 0}, {10, 0});
  EXPECT_EQ(p.point, (Point{0, 0}));
  EXPECT_DOUBLE_EQ(p.distance, std::sqrt(5.0));
  p = project_onto_segment({4, -3}, {0, 0}, {10, 0});
  EXPECT_EQ(p.point, (Point{4, 0}));
  EXPECT_DOUBLE_EQ(p.distance, 3.0);
  p = project_onto_segment({1, 1}, {2, 2}, {2, 2});
  EXPECT_DOUBLE_EQ(p.distance, std::sqrt(2.0));
}

TEST(Geometry, PolylineProjectionMatchesDenseSampling) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Point> line;
    for (int k = 0; k < 5; ++k) line.push_back({u(rng), u(rng)});
    const Point p{u(rng), u(rng)};
    double best = 1e300;
    for (std::size_t s = 0; s + 1 < line.size(); ++s)
      for (int t = 0; t <= 20000; ++t) {
        const double f = t / 20000.0;
        const Point q{line[s].x + f * (line[s + 1].x - line[s].x), line[s].y + f * (line[s + 1].y - line[s].y)};
        best = std::min(best, distance(p, q));
      }
    EXPECT_NEAR(project_onto_polyline(p, line).distance, best, 1e-2);
    EXPECT_LE(project_onto_polyline(p, line).distance, best + 1e-12);
  }
}

TEST(Geometry, PointInRingsWithHole) {
  const std::vector<std::vector<Point>> rings{{{0, 0}, {10, 0}, {10, 10}, {0, 10}, {0, 0}},
                                              {{4, 4}, {6, 4}, {6, 6}, {4, 6}, {4, 4}}};
  EXPECT_TRUE(point_in_rings({1, 1}, rings));
  EXPECT_FALSE(point_in_rings({5, 5}, rings));
  EXPECT_FALSE(point_in_rings({11, 5}, rings));
}

TEST(Geometry, ClippedLengthMatchesMidpointSampling) {
  const std::vector<std::vector<Point>> rings{{{0, 0}, {10, 0}, {10, 10}, {0, 10}, {0, 0}},
                                              {{4, 4}, {6, 4}, {6, 6}, {4, 6}, {4, 4}}};
  const std::vector<Point> line{{-5, 5}, {15, 5}};
  // Inside the outer square for x in [0, 10], minus the hole for x in [4, 6].
  EXPECT_NEAR(clipped_length(line, rings), 8.0, 1e-12);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 13);
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<Point> pl{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    double sampled = 0.0;
    const int m = 100000;
    for (std::size_t s = 0; s + 1 < pl.size(); ++s) {
      const double len = distance(pl[s], pl[s + 1]);
      for (int t = 0; t < m; ++t) {
        const double f = (t + 0.5) / m;
        const Point q{pl[s].x + f * (pl[s + 1].x - pl[s].x), pl[s].y + f * (pl[s + 1].y - pl[s].y)};
        if (point_in_rings(q, rings)) sampled += len / m;
      }
    }
    EXPECT_NEAR(clipped_length(pl, rings), sampled, 1e-3);
  }
}

TEST(Geometry, BoundingBox) {
  const std::vector<Point> pts{{1, 5}, {-2, 3}, {4, -1}};
  const BoundingBox b = bounding_box(pts);
  EXPECT_EQ(b.min_x, -2);
  EXPECT_EQ(b.max_x, 4);
  EXPECT_EQ(b.min_y, -1);
  EXPECT_EQ(b.max_y, 5);
  EXPECT_TRUE(b.intersects({4, 5, 6, 7}));
  EXPECT_FALSE(b.intersects({4.1, 5, 6, 7}));
}
