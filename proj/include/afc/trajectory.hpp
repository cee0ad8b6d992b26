// Piecewise-quintic flat-output trajectories: C2 across junctions by
// construction (segments share position/velocity/acceleration at knots),
// yaw derived from the velocity direction.
#pragma once

#include <string>
#include <vector>

#include "afc/geom.hpp"

namespace afc {

struct TrajSegment {
  double duration = 0.0;
  // Rows x,y,z; column k is the coefficient of t^k (local segment time).
  Eigen::Matrix<double, 3, 6> coef = Eigen::Matrix<double, 3, 6>::Zero();

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
};

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajSegment> segments);

  bool empty() const { return segments_.empty(); }
  double duration() const { return total_; }
  const std::vector<TrajSegment>& segments() const { return segments_; }

  // Evaluation clamps t into [0, duration]; beyond the end the trajectory
  // holds the final position at rest.
  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;

  // atan2 of the horizontal velocity; fallback when the speed is ~0.
  double yaw(double t, double fallback) const;

  double max_speed(double sample_dt) const;
  double max_accel(double sample_dt) const;

  // Uniform time dilation by eta >= 1: same path, speeds scaled by 1/eta.
  void dilate(double eta);

  // Sampled (t, p, v, a, yaw) rows.
  void export_csv(const std::string& path, double sample_dt) const;

  // Quintic interpolating (p,v,a) at both ends over duration tau.
  static TrajSegment hermite_segment(const Vec3& p0, const Vec3& v0, const Vec3& a0,
                                     const Vec3& p1, const Vec3& v1, const Vec3& a1,
                                     double tau);

  static Trajectory hover(const Vec3& p, double duration = 1.0);
  // Maximal-deceleration straight-line stop from (p, v).
  static Trajectory stop(const Vec3& p, const Vec3& v, double decel);

 private:
  std::pair<const TrajSegment*, double> locate(double t) const;

  std::vector<TrajSegment> segments_;
  double total_ = 0.0;
};

}  // namespace afc
