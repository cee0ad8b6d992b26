#include "afc/trajectory.hpp"

#include <fstream>

#include "afc/io.hpp"

namespace afc {

Vec3 TrajSegment::position(double t) const {
  double tk = 1.0;
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 6; ++k) {
    p += coef.col(k) * tk;
    tk *= t;
  }
  return p;
}

Vec3 TrajSegment::velocity(double t) const {
  double tk = 1.0;
  Vec3 v = Vec3::Zero();
  for (int k = 1; k < 6; ++k) {
    v += coef.col(k) * (k * tk);
    tk *= t;
  }
  return v;
}

Vec3 TrajSegment::acceleration(double t) const {
  double tk = 1.0;
  Vec3 a = Vec3::Zero();
  for (int k = 2; k < 6; ++k) {
    a += coef.col(k) * (k * (k - 1) * tk);
    tk *= t;
  }
  return a;
}

Trajectory::Trajectory(std::vector<TrajSegment> segments)
    : segments_(std::move(segments)) {
  total_ = 0.0;
  for (const auto& s : segments_) total_ += s.duration;
}

std::pair<const TrajSegment*, double> Trajectory::locate(double t) const {
  double acc = 0.0;
  for (const auto& s : segments_) {
    if (t <= acc + s.duration || &s == &segments_.back())
      return {&s, std::clamp(t - acc, 0.0, s.duration)};
    acc += s.duration;
  }
  return {nullptr, 0.0};
}

Vec3 Trajectory::position(double t) const {
  if (segments_.empty()) return Vec3::Zero();
  if (t >= total_) {
    const auto& s = segments_.back();
    return s.position(s.duration);
  }
  auto [seg, tau] = locate(std::max(t, 0.0));
  return seg->position(tau);
}

Vec3 Trajectory::velocity(double t) const {
  if (segments_.empty() || t >= total_ || t < 0.0) return Vec3::Zero();
  auto [seg, tau] = locate(t);
  return seg->velocity(tau);
}

Vec3 Trajectory::acceleration(double t) const {
  if (segments_.empty() || t >= total_ || t < 0.0) return Vec3::Zero();
  auto [seg, tau] = locate(t);
  return seg->acceleration(tau);
}

double Trajectory::yaw(double t, double fallback) const {
  const Vec3 v = velocity(t);
  if (v.head<2>().norm() < 1e-3) return fallback;
  return std::atan2(v.y(), v.x());
}

double Trajectory::max_speed(double sample_dt) const {
  double m = 0.0;
  for (double t = 0.0; t <= total_ + 1e-12; t += sample_dt)
    m = std::max(m, velocity(std::min(t, total_ - 1e-9)).norm());
  return m;
}

double Trajectory::max_accel(double sample_dt) const {
  double m = 0.0;
  for (double t = 0.0; t <= total_ + 1e-12; t += sample_dt)
    m = std::max(m, acceleration(std::min(t, total_ - 1e-9)).norm());
  return m;
}

void Trajectory::dilate(double eta) {
  if (eta <= 1.0 + 1e-12) return;
  for (auto& s : segments_) {
    double scale = 1.0;
    for (int k = 0; k < 6; ++k) {
      s.coef.col(k) *= scale;
      scale /= eta;
    }
    s.duration *= eta;
  }
  total_ *= eta;
}

void Trajectory::export_csv(const std::string& path, double sample_dt) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open trajectory csv: " + path);
  f << "t,px,py,pz,vx,vy,vz,ax,ay,az,yaw\n";
  double yaw_prev = 0.0;
  for (double t = 0.0; t <= total_ + 1e-12; t += sample_dt) {
    const double tc = std::min(t, total_);
    const Vec3 p = position(tc), v = velocity(tc), a = acceleration(tc);
    yaw_prev = yaw(tc, yaw_prev);
    f << tc << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << v.x()
      << ',' << v.y() << ',' << v.z() << ',' << a.x() << ',' << a.y() << ','
      << a.z() << ',' << yaw_prev << '\n';
  }
}

TrajSegment Trajectory::hermite_segment(const Vec3& p0, const Vec3& v0,
                                        const Vec3& a0, const Vec3& p1,
                                        const Vec3& v1, const Vec3& a1,
                                        double tau) {
  TrajSegment s;
  s.duration = tau;
  const double T = tau, T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  for (int ax = 0; ax < 3; ++ax) {
    const double c0 = p0[ax], c1 = v0[ax], c2 = 0.5 * a0[ax];
    // Solve the remaining three coefficients from end constraints.
    const double dp = p1[ax] - c0 - c1 * T - c2 * T2;
    const double dv = v1[ax] - c1 - 2.0 * c2 * T;
    const double da = a1[ax] - 2.0 * c2;
    const double c3 = (10.0 * dp - 4.0 * dv * T + 0.5 * da * T2) / T3;
    const double c4 = (-15.0 * dp + 7.0 * dv * T - da * T2) / T4;
    const double c5 = (6.0 * dp - 3.0 * dv * T + 0.5 * da * T2) / T5;
    s.coef(ax, 0) = c0;
    s.coef(ax, 1) = c1;
    s.coef(ax, 2) = c2;
    s.coef(ax, 3) = c3;
    s.coef(ax, 4) = c4;
    s.coef(ax, 5) = c5;
  }
  return s;
}

Trajectory Trajectory::hover(const Vec3& p, double duration) {
  TrajSegment s;
  s.duration = duration;
  s.coef.col(0) = p;
  return Trajectory({s});
}

Trajectory Trajectory::stop(const Vec3& p, const Vec3& v, double decel) {
  const double speed = v.norm();
  if (speed < 1e-6 || decel <= 0.0) return hover(p);
  const double tau = speed / decel;
  const Vec3 dir = v / speed;
  TrajSegment s;
  s.duration = tau;
  s.coef.col(0) = p;
  s.coef.col(1) = v;
  s.coef.col(2) = -0.5 * decel * dir;
  return Trajectory({s});
}

}  // namespace afc
