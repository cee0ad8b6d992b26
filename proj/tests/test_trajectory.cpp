#include <doctest.h>

#include <fstream>

#include "afc/trajectory.hpp"

using namespace afc;

TEST_CASE("hermite segment interpolates endpoint states") {
  const Vec3 p0(0, 0, 0), v0(1, 0, 0), a0(0, 2, 0);
  const Vec3 p1(2, 1, 0.5), v1(0.5, -0.2, 0), a1(0, 0, 0);
  TrajSegment s = Trajectory::hermite_segment(p0, v0, a0, p1, v1, a1, 1.7);
  CHECK((s.position(0.0) - p0).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((s.velocity(0.0) - v0).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((s.acceleration(0.0) - a0).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((s.position(1.7) - p1).norm() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK((s.velocity(1.7) - v1).norm() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK((s.acceleration(1.7) - a1).norm() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("multi-segment trajectory is C2 at junctions") {
  const Vec3 p0(0, 0, 1), p1(1, 0.5, 1), p2(2, 0, 1);
  const Vec3 vmid(1.2, 0, 0), amid(0, -1, 0);
  Trajectory traj({Trajectory::hermite_segment(p0, Vec3(1, 0, 0), Vec3::Zero(),
                                               p1, vmid, amid, 1.0),
                   Trajectory::hermite_segment(p1, vmid, amid, p2,
                                               Vec3(1, 0, 0), Vec3::Zero(), 1.0)});
  const double t = 1.0;
  const double eps = 1e-6;
  CHECK((traj.position(t - eps) - traj.position(t + eps)).norm() < 1e-4);
  CHECK((traj.velocity(t - eps) - traj.velocity(t + eps)).norm() < 1e-4);
  CHECK((traj.acceleration(t - eps) - traj.acceleration(t + eps)).norm() < 1e-3);
}

TEST_CASE("evaluation clamps beyond the end to rest") {
  Trajectory traj = Trajectory::hover(Vec3(1, 2, 3), 0.5);
  CHECK((traj.position(99.0) - Vec3(1, 2, 3)).norm() == doctest::Approx(0.0));
  CHECK(traj.velocity(99.0).norm() == doctest::Approx(0.0));
}

TEST_CASE("yaw follows the horizontal velocity direction") {
  const Vec3 p0(0, 0, 1);
  const Vec3 v(1, 1, 0);
  Trajectory traj({Trajectory::hermite_segment(p0, v, Vec3::Zero(), p0 + v, v,
                                               Vec3::Zero(), 1.0)});
  CHECK(traj.yaw(0.5, 0.0) == doctest::Approx(std::atan2(1.0, 1.0)));
  Trajectory hover = Trajectory::hover(Vec3::Zero());
  CHECK(hover.yaw(0.1, 0.77) == doctest::Approx(0.77));  // fallback
}

TEST_CASE("time dilation slows speeds without moving the path") {
  const Vec3 p0(0, 0, 0), p1(3, 0, 0), v(2, 0, 0);
  Trajectory traj({Trajectory::hermite_segment(p0, v, Vec3::Zero(), p1, v,
                                               Vec3::Zero(), 1.5)});
  const double vmax_before = traj.max_speed(0.01);
  Trajectory dilated = traj;
  dilated.dilate(2.0);
  CHECK(dilated.duration() == doctest::Approx(3.0));
  CHECK(dilated.max_speed(0.01) == doctest::Approx(vmax_before / 2.0).epsilon(1e-6));
  CHECK((dilated.position(3.0) - p1).norm() < 1e-9);
}

TEST_CASE("stop trajectory brakes to rest at the expected distance") {
  const Vec3 p(0, 0, 1), v(3, 0, 0);
  Trajectory stop = Trajectory::stop(p, v, 6.0);
  CHECK(stop.duration() == doctest::Approx(0.5));
  CHECK(stop.velocity(stop.duration() - 1e-9).norm() ==
        doctest::Approx(0.0).epsilon(1e-6));
  // Braking distance v^2 / (2a) = 0.75.
  CHECK((stop.position(stop.duration()) - p).norm() == doctest::Approx(0.75));
}

TEST_CASE("csv export writes sampled rows") {
  Trajectory traj = Trajectory::hover(Vec3(0, 0, 1), 0.3);
  const std::string path = "traj_export_test.csv";
  traj.export_csv(path, 0.1);
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string header;
  std::getline(f, header);
  CHECK(header == "t,px,py,pz,vx,vy,vz,ax,ay,az,yaw");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows >= 4);
  std::remove(path.c_str());
}
