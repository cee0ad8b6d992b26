#include "afc/vehicle.hpp"

namespace afc {

void track_step(VehicleState& state, PidState& pid, const Trajectory& traj,
                double t, const ControllerGains& gains, double dt) {
  const Vec3 p_ref = traj.position(t);
  const Vec3 v_ref = traj.velocity(t);
  const Vec3 a_ref = traj.acceleration(t);

  const Vec3 err = p_ref - state.p;
  pid.integral += err * dt;
  for (int ax = 0; ax < 3; ++ax)
    pid.integral[ax] = std::clamp(pid.integral[ax], -gains.integrator_clamp,
                                  gains.integrator_clamp);

  Vec3 cmd = gains.kp.cwiseProduct(err) + gains.ki.cwiseProduct(pid.integral) +
             gains.kd.cwiseProduct(v_ref - state.v) + a_ref;
  for (int ax = 0; ax < 3; ++ax)
    cmd[ax] = std::clamp(cmd[ax], -gains.a_cmd_max, gains.a_cmd_max);

  // Semi-implicit Euler.
  state.a = cmd;
  state.v += cmd * dt;
  state.p += state.v * dt;

  // References at the end of the substep, for the reported tracking error.
  const double t_end = t + dt;
  state.p_des = traj.position(t_end);
  state.v_des = traj.velocity(t_end);

  const double yaw_des = traj.yaw(t_end, state.yaw);
  const double d = wrap_angle(yaw_des - state.yaw);
  const double max_step = gains.yaw_rate_max * dt;
  state.yaw = wrap_angle(state.yaw + std::clamp(d, -max_step, max_step));
}

}  // namespace afc
