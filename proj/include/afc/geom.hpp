// Small geometric helpers shared across modules.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace afc {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

// Wrap angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

// Axis-aligned box, inclusive min / exclusive max semantics left to callers.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
           p.y() <= max.y() && p.z() >= min.z() && p.z() <= max.z();
  }

  Aabb clamped_to(const Aabb& outer) const {
    Aabb r;
    r.min = min.cwiseMax(outer.min);
    r.max = max.cwiseMin(outer.max);
    return r;
  }

  bool empty() const {
    return max.x() <= min.x() || max.y() <= min.y() || max.z() <= min.z();
  }

  // Ray/segment slab intersection. Returns [t0, t1] clipped to [tmin, tmax];
  // false if no overlap. Direction need not be normalized.
  bool clip_ray(const Vec3& origin, const Vec3& dir, double& t0, double& t1) const {
    for (int a = 0; a < 3; ++a) {
      const double d = dir[a];
      if (std::abs(d) < 1e-300) {
        if (origin[a] < min[a] || origin[a] > max[a]) return false;
        continue;
      }
      double lo = (min[a] - origin[a]) / d;
      double hi = (max[a] - origin[a]) / d;
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    return true;
  }
};

}  // namespace afc
