// Dense 3D voxel grid with world <-> cell index conversions.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "afc/geom.hpp"

namespace afc {

struct OutOfBounds : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(const Vec3i& dims, double resolution, const Vec3& origin, T fill = T{})
      : dims_(dims),
        res_(resolution),
        origin_(origin),
        data_(static_cast<size_t>(dims.x()) * dims.y() * dims.z(), fill) {}

  int nx() const { return dims_.x(); }
  int ny() const { return dims_.y(); }
  int nz() const { return dims_.z(); }
  const Vec3i& dims() const { return dims_; }
  double resolution() const { return res_; }
  const Vec3& origin() const { return origin_; }
  void set_origin(const Vec3& o) { origin_ = o; }
  size_t size() const { return data_.size(); }

  size_t index(int ix, int iy, int iz) const {
    return (static_cast<size_t>(iz) * dims_.y() + iy) * dims_.x() + ix;
  }
  size_t index(const Vec3i& c) const { return index(c.x(), c.y(), c.z()); }

  bool in_bounds(const Vec3i& c) const {
    return c.x() >= 0 && c.x() < dims_.x() && c.y() >= 0 && c.y() < dims_.y() &&
           c.z() >= 0 && c.z() < dims_.z();
  }
  bool in_bounds(const Vec3& p) const { return in_bounds(cell_of(p)); }

  Vec3i cell_of(const Vec3& p) const {
    return Vec3i(static_cast<int>(std::floor((p.x() - origin_.x()) / res_)),
                 static_cast<int>(std::floor((p.y() - origin_.y()) / res_)),
                 static_cast<int>(std::floor((p.z() - origin_.z()) / res_)));
  }

  Vec3 center_of(const Vec3i& c) const {
    return origin_ + Vec3((c.x() + 0.5) * res_, (c.y() + 0.5) * res_,
                          (c.z() + 0.5) * res_);
  }

  Aabb bounds() const {
    Aabb b;
    b.min = origin_;
    b.max = origin_ + Vec3(dims_.x() * res_, dims_.y() * res_, dims_.z() * res_);
    return b;
  }

  T& at(int ix, int iy, int iz) { return data_[index(ix, iy, iz)]; }
  const T& at(int ix, int iy, int iz) const { return data_[index(ix, iy, iz)]; }
  T& at(const Vec3i& c) { return data_[index(c)]; }
  const T& at(const Vec3i& c) const { return data_[index(c)]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Vec3i dims_ = Vec3i::Zero();
  double res_ = 0.1;
  Vec3 origin_ = Vec3::Zero();
  std::vector<T> data_;
};

// Visit voxels pierced by the segment origin + t*dir, t in [t_enter, t_exit]
// (Amanatides & Woo). dir must be normalized. The visitor receives the cell
// and the distance at which the ray enters it; return false to stop.
template <typename T, typename Visitor>
void walk_ray(const VoxelGrid<T>& g, const Vec3& origin, const Vec3& dir,
              double t_enter, double t_exit, Visitor&& visit) {
  const double res = g.resolution();
  const double eps = 1e-9 * std::max(1.0, t_exit);
  Vec3 p = origin + dir * (t_enter + eps);
  Vec3i c = g.cell_of(p);
  if (!g.in_bounds(c)) return;

  Vec3i step;
  Vec3 t_next, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 1e-300) {
      step[a] = 1;
      const double edge = g.origin()[a] + (c[a] + 1) * res;
      t_next[a] = (edge - origin[a]) / dir[a];
      t_delta[a] = res / dir[a];
    } else if (dir[a] < -1e-300) {
      step[a] = -1;
      const double edge = g.origin()[a] + c[a] * res;
      t_next[a] = (edge - origin[a]) / dir[a];
      t_delta[a] = res / -dir[a];
    } else {
      step[a] = 0;
      t_next[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t = t_enter;
  while (t <= t_exit) {
    if (!visit(c, t)) return;
    int axis = 0;
    if (t_next[1] < t_next[0]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    t = t_next[axis];
    t_next[axis] += t_delta[axis];
    c[axis] += step[axis];
    if (c[axis] < 0 || c[axis] >= g.dims()[axis]) return;
  }
}

}  // namespace afc
