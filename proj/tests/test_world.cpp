#include <doctest.h>

#include <deque>

#include "afc/rng.hpp"
#include "afc/world.hpp"

using namespace afc;

namespace {

WorldSpec small_spec(uint64_t seed, double density) {
  WorldSpec s;
  s.seed = seed;
  s.extent = Vec3(40.0, 20.0, 3.0);
  s.resolution = 0.1;
  RegionSpec r;
  r.x_begin = 0.0;
  r.x_end = s.extent.x();
  r.density = density;
  r.kinds = {ObstacleKind::kPillar};
  s.regions = {r};
  return s;
}

// Independent flood fill (6-connected, no inflation) start -> goal.
bool flood_fill_connected(const GroundTruth& gt) {
  const auto& g = gt.grid;
  VoxelGrid<uint8_t> seen(g.dims(), g.resolution(), g.origin(), 0);
  const Vec3i s = g.cell_of(gt.start), t = g.cell_of(gt.goal);
  std::deque<Vec3i> q{s};
  seen.at(s) = 1;
  const Vec3i n6[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                       {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!q.empty()) {
    Vec3i c = q.front();
    q.pop_front();
    if (c == t) return true;
    for (const auto& d : n6) {
      Vec3i n = c + d;
      if (!g.in_bounds(n) || seen.at(n) || g.at(n)) continue;
      seen.at(n) = 1;
      q.push_back(n);
    }
  }
  return false;
}

}  // namespace

TEST_CASE("empty world is entirely free with unobstructed start-goal line") {
  GroundTruth gt = generate(small_spec(3, 0.0));
  for (size_t i = 0; i < gt.grid.size(); ++i) REQUIRE(gt.grid[i] == 0);
  const Vec3 d = (gt.goal - gt.start).normalized();
  for (double t = 0.0; t < (gt.goal - gt.start).norm(); t += 0.05)
    CHECK_FALSE(gt.is_occupied(gt.start + d * t));
}

TEST_CASE("same seed gives bit-identical grids") {
  GroundTruth a = generate(small_spec(42, 0.08));
  GroundTruth b = generate(small_spec(42, 0.08));
  REQUIRE(a.grid.size() == b.grid.size());
  CHECK(a.grid.data() == b.grid.data());
  CHECK(a.start == b.start);
  CHECK(a.goal == b.goal);
}

TEST_CASE("seed 7 pillar world is start-goal connected per flood-fill oracle") {
  GroundTruth gt = generate(small_spec(7, 0.05));
  CHECK(flood_fill_connected(gt));
  CHECK_FALSE(gt.is_occupied(gt.start));
  CHECK_FALSE(gt.is_occupied(gt.goal));
}

TEST_CASE("pillar center is occupied") {
  GroundTruth gt = generate(small_spec(11, 0.05));
  REQUIRE_FALSE(gt.primitives.empty());
  const auto& box = gt.primitives.front().box;
  const Vec3 center = 0.5 * (box.min + box.max);
  CHECK(gt.is_occupied(center));
}

TEST_CASE("voxelization matches the analytic point-in-primitive oracle") {
  GroundTruth gt = generate(small_spec(13, 0.10));
  Rng rng(99);
  const double res = gt.spec.resolution;
  int checked = 0;
  for (int i = 0; i < 3000 && checked < 1000; ++i) {
    const Vec3 p(rng.uniform(0.0, gt.spec.extent.x()),
                 rng.uniform(0.0, gt.spec.extent.y()),
                 rng.uniform(0.0, gt.spec.extent.z()));
    // Skip points within one resolution of any primitive surface, where the
    // center-sampling rasterization is allowed to differ.
    bool near_surface = false;
    bool inside = false;
    for (const auto& pr : gt.primitives) {
      Aabb grown = pr.box;
      grown.min -= Vec3(res, res, res);
      grown.max += Vec3(res, res, res);
      Aabb shrunk = pr.box;
      shrunk.min += Vec3(res, res, res);
      shrunk.max -= Vec3(res, res, res);
      if (pr.box.contains(p)) inside = true;
      if (grown.contains(p) && !(!shrunk.empty() && shrunk.contains(p)))
        near_surface = true;
    }
    if (near_surface) continue;
    ++checked;
    CHECK(gt.is_occupied(p) == inside);
  }
  CHECK(checked > 400);
}

TEST_CASE("out-of-bounds occupancy query throws") {
  GroundTruth gt = generate(small_spec(5, 0.0));
  CHECK_THROWS_AS(gt.is_occupied(Vec3(-1.0, 0.0, 0.0)), OutOfBounds);
  CHECK_THROWS_AS(gt.is_occupied(Vec3(0.0, 0.0, 99.0)), OutOfBounds);
}

TEST_CASE("world file round trip") {
  GroundTruth gt = generate(small_spec(21, 0.06));
  const std::string path = "test_world_roundtrip.json";
  save_world(gt, path);
  GroundTruth back = load_world(path);
  CHECK(back.grid.data() == gt.grid.data());
  CHECK(back.start == gt.start);
  CHECK(back.goal == gt.goal);
  CHECK(back.primitives.size() == gt.primitives.size());
  std::remove(path.c_str());
}

TEST_CASE("invalid region partitions are rejected") {
  WorldSpec s = small_spec(1, 0.05);
  s.regions[0].x_end = s.extent.x() * 0.5;  // does not cover the extent
  CHECK_THROWS_AS(generate(s), std::invalid_argument);
  s = small_spec(1, 0.05);
  s.regions[0].density = -1.0;
  CHECK_THROWS_AS(generate(s), std::invalid_argument);
}

TEST_CASE("default regions tile the extent") {
  auto regions = default_regions(40.0, 1.0);
  double x = 0.0;
  for (const auto& r : regions) {
    CHECK(r.x_begin == doctest::Approx(x));
    x = r.x_end;
  }
  CHECK(x == doctest::Approx(40.0));
}
