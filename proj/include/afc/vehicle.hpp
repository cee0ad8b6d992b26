// Point-mass vehicle with a PID position tracker. Tracking is imperfect by
// construction; the residual error feeds the policy observation.
#pragma once

#include "afc/trajectory.hpp"

namespace afc {

struct VehicleState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
  Vec3 p_des = Vec3::Zero();
  Vec3 v_des = Vec3::Zero();

  Vec3 tracking_error() const { return p - p_des; }
};

struct ControllerGains {
  Vec3 kp = Vec3(6.0, 6.0, 6.0);
  Vec3 ki = Vec3(0.5, 0.5, 0.5);
  Vec3 kd = Vec3(4.0, 4.0, 4.0);
  double integrator_clamp = 1.0;  // |integral| per axis, m*s
  double a_cmd_max = 12.0;        // inf-norm clamp on the command
  double rate_hz = 50.0;
  double yaw_rate_max = 3.0;      // rad/s slew toward the velocity heading
};

struct PidState {
  Vec3 integral = Vec3::Zero();
};

// One controller/dynamics substep of length dt: sample the reference at
// traj time t, apply PID + acceleration feed-forward (clamped), integrate
// with semi-implicit Euler, slew yaw toward the trajectory heading.
void track_step(VehicleState& state, PidState& pid, const Trajectory& traj,
                double t, const ControllerGains& gains, double dt);

}  // namespace afc
