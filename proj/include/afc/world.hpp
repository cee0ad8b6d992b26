// Procedural cluttered worlds with ground-truth occupancy queries.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "afc/grid.hpp"

namespace afc {

struct ConnectivityFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ObstacleKind { kPillar, kBox, kWallWithGap };

// One axis-aligned slab of world geometry. A wall-with-gap obstacle is
// emitted as several primitives sharing one obstacle_id.
struct Primitive {
  Aabb box;
  int obstacle_id = 0;
  ObstacleKind kind = ObstacleKind::kPillar;
};

// Sub-region of the world footprint with its own clutter statistics.
// x_begin/x_end are meters along the world x axis; regions must tile
// [0, extent.x) without overlap.
struct RegionSpec {
  double x_begin = 0.0;
  double x_end = 0.0;
  double density = 0.0;  // obstacles per m^2 of region footprint
  std::vector<ObstacleKind> kinds = {ObstacleKind::kPillar};
};

struct WorldSpec {
  uint64_t seed = 0;
  Vec3 extent = Vec3(40.0, 20.0, 3.0);
  double resolution = 0.1;
  std::vector<RegionSpec> regions;

  // Obstacle size ranges (meters).
  double pillar_half_min = 0.10, pillar_half_max = 0.30;
  double box_size_min = 0.40, box_size_max = 1.50;
  double wall_span_min = 2.5, wall_span_max = 7.0;
  double wall_thickness_min = 0.10, wall_thickness_max = 0.30;
  double gap_width_min = 1.25, gap_width_max = 1.80;

  // Start/goal placement and validation.
  double start_margin = 1.5;        // distance from the x faces
  double keepout_radius = 2.0;      // obstacle-free disc around start/goal
  double goal_y_jitter = 0.2;       // fraction of extent.y, goal y offset range
  double connectivity_clearance = 0.2;  // inflation radius for the path check
  int max_retries = 10;

  void validate() const;
};

struct GroundTruth {
  WorldSpec spec;                 // spec actually used (seed may be perturbed)
  VoxelGrid<uint8_t> grid;        // 1 = occupied
  std::vector<Primitive> primitives;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();

  bool is_occupied(const Vec3& p) const;  // throws OutOfBounds outside extent
  bool occupied_within(const Vec3& p, double radius) const;
  double clearance(const Vec3& p, double cap) const;  // to occupied centers
};

// Deterministic in spec (including the bounded connectivity retries).
GroundTruth generate(const WorldSpec& spec);

// Default region layout: alternating open/cluttered bands, mixed kinds.
std::vector<RegionSpec> default_regions(double extent_x, double density_scale);

void save_world(const GroundTruth& gt, const std::string& path);
GroundTruth load_world(const std::string& path);

}  // namespace afc
