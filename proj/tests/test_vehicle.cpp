#include <doctest.h>

#include "afc/rng.hpp"
#include "afc/vehicle.hpp"

using namespace afc;

TEST_CASE("feed-forward only follows a constant-velocity trajectory exactly") {
  const Vec3 v(1.0, -0.5, 0.25);
  const Vec3 p0(0, 0, 1);
  Trajectory traj({Trajectory::hermite_segment(p0, v, Vec3::Zero(), p0 + 2.0 * v,
                                               v, Vec3::Zero(), 2.0)});
  VehicleState s;
  s.p = p0;
  s.v = v;
  PidState pid;
  ControllerGains g;
  g.kp = g.ki = g.kd = Vec3::Zero();
  const double dt = 0.02;
  for (int k = 0; k < 100; ++k) track_step(s, pid, traj, k * dt, g, dt);
  CHECK((s.p - (p0 + 2.0 * v)).norm() < 1e-9);
  CHECK(s.tracking_error().norm() < 1e-9);
}

TEST_CASE("hover from rest stays at rest with zero error") {
  Trajectory traj = Trajectory::hover(Vec3(1, 1, 1), 10.0);
  VehicleState s;
  s.p = Vec3(1, 1, 1);
  s.p_des = s.p;
  PidState pid;
  ControllerGains g;
  const double dt = 0.02;
  for (int k = 0; k < 250; ++k) track_step(s, pid, traj, k * dt, g, dt);
  CHECK((s.p - Vec3(1, 1, 1)).norm() < 1e-9);
  CHECK(s.v.norm() < 1e-9);
  CHECK(s.tracking_error().norm() < 1e-9);
}

TEST_CASE("1m step settles within 2 percent in under 2s, overshoot < 20%") {
  // Closed-loop simulation oracle for the documented acceptance envelope.
  Trajectory traj = Trajectory::hover(Vec3(1, 0, 0), 10.0);
  VehicleState s;  // starts at origin; setpoint 1m away
  PidState pid;
  ControllerGains g;
  const double dt = 1.0 / g.rate_hz;
  double overshoot = 0.0;
  double settle_time = -1.0;
  for (int k = 0; k < 500; ++k) {
    track_step(s, pid, traj, k * dt, g, dt);
    overshoot = std::max(overshoot, s.p.x() - 1.0);
    const bool settled = std::abs(s.p.x() - 1.0) <= 0.02;
    if (settled && settle_time < 0) settle_time = (k + 1) * dt;
    if (!settled) settle_time = -1.0;
  }
  CAPTURE(overshoot);
  CAPTURE(settle_time);
  CHECK(overshoot < 0.2);
  REQUIRE(settle_time > 0.0);
  CHECK(settle_time < 2.0);
}

TEST_CASE("tracking error equals componentwise subtraction") {
  Rng rng(4);
  VehicleState s;
  SUBCASE("zero") {
    s.p = s.p_des = Vec3(3, 2, 1);
    CHECK(s.tracking_error().norm() == doctest::Approx(0.0));
  }
  SUBCASE("unit") {
    s.p = Vec3(1, 0, 0);
    s.p_des = Vec3::Zero();
    CHECK((s.tracking_error() - Vec3(1, 0, 0)).norm() == doctest::Approx(0.0));
  }
  SUBCASE("random pairs") {
    for (int i = 0; i < 100; ++i) {
      s.p = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      s.p_des = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      const Vec3 expect(s.p.x() - s.p_des.x(), s.p.y() - s.p_des.y(),
                        s.p.z() - s.p_des.z());
      CHECK((s.tracking_error() - expect).norm() == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("command clamp bounds the acceleration inf-norm") {
  Trajectory traj = Trajectory::hover(Vec3(50, 0, 0), 10.0);  // huge step
  VehicleState s;
  PidState pid;
  ControllerGains g;
  const double dt = 0.02;
  for (int k = 0; k < 100; ++k) {
    track_step(s, pid, traj, k * dt, g, dt);
    CHECK(s.a.lpNorm<Eigen::Infinity>() <= g.a_cmd_max + 1e-12);
  }
}

TEST_CASE("integrator windup is bounded by the clamp") {
  Trajectory traj = Trajectory::hover(Vec3(50, 0, 0), 10.0);
  VehicleState s;
  PidState pid;
  ControllerGains g;
  const double dt = 0.02;
  for (int k = 0; k < 500; ++k) track_step(s, pid, traj, k * dt, g, dt);
  CHECK(std::abs(pid.integral.x()) <= g.integrator_clamp + 1e-12);
}

TEST_CASE("acceleration discontinuity at junctions leaves a tracking residual") {
  // Two segments meeting with a velocity kink: the tracker cannot follow
  // exactly, which is the designed imperfection.
  const Vec3 p0(0, 0, 1), p1(2, 0, 1), p2(2, 2, 1);
  Trajectory traj({Trajectory::hermite_segment(p0, Vec3(2, 0, 0), Vec3::Zero(),
                                               p1, Vec3(2, 0, 0), Vec3::Zero(),
                                               1.0),
                   Trajectory::hermite_segment(p1, Vec3(0, 2, 0), Vec3::Zero(),
                                               p2, Vec3(0, 2, 0), Vec3::Zero(),
                                               1.0)});
  VehicleState s;
  s.p = p0;
  s.v = Vec3(2, 0, 0);
  PidState pid;
  ControllerGains g;
  const double dt = 0.02;
  double peak_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    track_step(s, pid, traj, k * dt, g, dt);
    peak_err = std::max(peak_err, s.tracking_error().norm());
  }
  CHECK(peak_err > 0.05);
}

TEST_CASE("yaw slews toward the velocity heading under the rate limit") {
  const Vec3 p0(0, 0, 1);
  const Vec3 v(0, 1.5, 0);  // heading pi/2
  Trajectory traj({Trajectory::hermite_segment(p0, v, Vec3::Zero(), p0 + v, v,
                                               Vec3::Zero(), 1.0)});
  VehicleState s;
  s.p = p0;
  s.v = v;
  s.yaw = 0.0;
  PidState pid;
  ControllerGains g;
  const double dt = 0.02;
  double prev_yaw = s.yaw;
  for (int k = 0; k < 40; ++k) {
    track_step(s, pid, traj, k * dt, g, dt);
    CHECK(std::abs(wrap_angle(s.yaw - prev_yaw)) <= g.yaw_rate_max * dt + 1e-12);
    prev_yaw = s.yaw;
  }
  CHECK(s.yaw == doctest::Approx(kPi / 2).epsilon(0.05));
}
