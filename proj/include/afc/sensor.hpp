// Forward-facing depth camera model: limited FOV, bounded range, occlusion
// by voxel traversal, fixed refresh rate and a delivery latency.
#pragma once

#include <limits>
#include <vector>

#include "afc/world.hpp"

namespace afc {

struct SensorSpec {
  double h_fov_deg = 87.0;
  double v_fov_deg = 58.0;
  double min_range = 0.28;
  double max_range = 5.0;
  double rate_hz = 15.0;
  double latency = 0.05;
  int rays_h = 64;
  int rays_v = 40;

  void validate() const {
    if (!(0.0 < min_range && min_range < max_range))
      throw std::invalid_argument("need 0 < min_range < max_range");
    if (rate_hz <= 0.0) throw std::invalid_argument("rate must be > 0");
    if (latency < 0.0) throw std::invalid_argument("latency must be >= 0");
    if (rays_h < 1 || rays_v < 1) throw std::invalid_argument("ray counts >= 1");
  }
};

constexpr double kNoReturn = std::numeric_limits<double>::infinity();

struct DepthFrame {
  double capture_time = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  int rays_h = 0, rays_v = 0;
  std::vector<float> depths;  // rays_h * rays_v, row = elevation index

  double depth(int ih, int iv) const { return depths[iv * rays_h + ih]; }
};

// Ray direction for grid indices (ih, iv); yaw-only camera orientation.
Vec3 ray_direction(const SensorSpec& spec, double yaw, int ih, int iv);

// Distance to the first occupied voxel along each ray. Hits beyond
// max_range and closer than min_range report kNoReturn.
DepthFrame capture(const GroundTruth& gt, const Vec3& position, double yaw,
                   const SensorSpec& spec, double time);

// Capture instants of the 1/rate grid inside (last_emit_time, now]. Tracks
// the absolute grid, so splitting an interval across calls never skips or
// duplicates an instant.
std::vector<double> due_frames(double last_emit_time, double now,
                               const SensorSpec& spec);

}  // namespace afc
