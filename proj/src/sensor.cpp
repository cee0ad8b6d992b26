#include "afc/sensor.hpp"

namespace afc {

Vec3 ray_direction(const SensorSpec& spec, double yaw, int ih, int iv) {
  const double h_fov = deg2rad(spec.h_fov_deg);
  const double v_fov = deg2rad(spec.v_fov_deg);
  const double az = -0.5 * h_fov + (ih + 0.5) * h_fov / spec.rays_h;
  const double el = -0.5 * v_fov + (iv + 0.5) * v_fov / spec.rays_v;
  const double ca = std::cos(yaw + az), sa = std::sin(yaw + az);
  const double ce = std::cos(el), se = std::sin(el);
  return Vec3(ce * ca, ce * sa, se);
}

DepthFrame capture(const GroundTruth& gt, const Vec3& position, double yaw,
                   const SensorSpec& spec, double time) {
  DepthFrame f;
  f.capture_time = time;
  f.position = position;
  f.yaw = yaw;
  f.rays_h = spec.rays_h;
  f.rays_v = spec.rays_v;
  f.depths.assign(static_cast<size_t>(spec.rays_h) * spec.rays_v,
                  static_cast<float>(kNoReturn));

  const Aabb world = gt.grid.bounds();
  for (int iv = 0; iv < spec.rays_v; ++iv) {
    for (int ih = 0; ih < spec.rays_h; ++ih) {
      const Vec3 dir = ray_direction(spec, yaw, ih, iv);
      double t0 = 0.0, t1 = spec.max_range;
      if (!world.clip_ray(position, dir, t0, t1)) continue;
      double hit = kNoReturn;
      walk_ray(gt.grid, position, dir, t0, t1, [&](const Vec3i& c, double t) {
        if (gt.grid.at(c)) {
          hit = std::max(t, 0.0);
          return false;
        }
        return true;
      });
      if (hit <= spec.max_range && hit >= spec.min_range)
        f.depths[iv * spec.rays_h + ih] = static_cast<float>(hit);
    }
  }
  return f;
}

std::vector<double> due_frames(double last_emit_time, double now,
                               const SensorSpec& spec) {
  std::vector<double> out;
  if (now < last_emit_time) return out;
  const double rate = spec.rate_hz;
  // First grid index k with k/rate > last_emit_time.
  int64_t k = static_cast<int64_t>(std::floor(last_emit_time * rate)) ;
  while (static_cast<double>(k) / rate <= last_emit_time) ++k;
  for (; static_cast<double>(k) / rate <= now; ++k)
    out.push_back(static_cast<double>(k) / rate);
  return out;
}

}  // namespace afc
