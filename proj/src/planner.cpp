#include "afc/planner.hpp"

#include <functional>
#include <queue>

namespace afc {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

// Pad between the interpolated ESDF and the true point-to-center distance:
// the distance field is 1-Lipschitz and sampled on the cell-center lattice.
double audit_pad(double res) { return res * kSqrt3; }

struct AStarResult {
  bool reached = false;
  std::vector<Vec3> path;  // cell centers, start first
};

// Best-effort A* on the inflated believed grid: if the target is not
// reachable within the expansion cap, returns the path to the explored cell
// closest to it.
AStarResult astar(const Esdf& esdf, const Vec3i& start, const Vec3i& target,
                  double inflate, int expansion_cap,
                  const std::function<bool(const Vec3i&)>& start_exempt) {
  const auto& g = esdf.dist;
  AStarResult res;
  auto blocked = [&](const Vec3i& c) {
    if (g.at(c) > inflate) return false;
    return !start_exempt(c);
  };

  struct Node {
    double f;
    double gcost;
    int32_t idx;
    bool operator<(const Node& o) const {
      if (f != o.f) return f > o.f;  // min-heap
      if (gcost != o.gcost) return gcost > o.gcost;
      return idx > o.idx;  // deterministic ties
    }
  };

  const int nx = g.nx(), ny = g.ny();
  auto to_idx = [&](const Vec3i& c) {
    return static_cast<int32_t>((c.z() * ny + c.y()) * nx + c.x());
  };
  auto to_cell = [&](int32_t i) {
    return Vec3i(i % nx, (i / nx) % ny, i / (nx * ny));
  };
  auto heur = [&](const Vec3i& c) {
    return (g.center_of(c) - g.center_of(target)).norm() * 1.0001;
  };

  std::vector<float> gcost(g.size(), std::numeric_limits<float>::infinity());
  std::vector<int32_t> parent(g.size(), -1);
  std::priority_queue<Node> open;

  if (!g.in_bounds(start)) return res;
  const int32_t si = to_idx(start);
  gcost[si] = 0.f;
  open.push({heur(start), 0.0, si});

  int32_t best_idx = si;
  double best_h = heur(start);
  int expanded = 0;
  const double res_m = g.resolution();

  while (!open.empty() && expanded < expansion_cap) {
    const Node top = open.top();
    open.pop();
    if (top.gcost > gcost[top.idx] + 1e-9) continue;
    ++expanded;
    const Vec3i c = to_cell(top.idx);
    const double h = heur(c);
    if (h < best_h) {
      best_h = h;
      best_idx = top.idx;
    }
    if (c == target) {
      res.reached = true;
      best_idx = top.idx;
      break;
    }
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const Vec3i n = c + Vec3i(dx, dy, dz);
          if (!g.in_bounds(n) || blocked(n)) continue;
          const double step =
              res_m * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          const double ng = top.gcost + step;
          const int32_t ni = to_idx(n);
          if (ng < gcost[ni] - 1e-12) {
            gcost[ni] = static_cast<float>(ng);
            parent[ni] = top.idx;
            open.push({ng + heur(n), ng, ni});
          }
        }
  }

  for (int32_t i = best_idx; i >= 0; i = parent[i])
    res.path.push_back(g.center_of(to_cell(i)));
  std::reverse(res.path.begin(), res.path.end());
  return res;
}

std::vector<Vec3> resample_polyline(const std::vector<Vec3>& pts, double spacing) {
  std::vector<Vec3> out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  double carry = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) {
    const Vec3 a = pts[i - 1], b = pts[i];
    const double seg = (b - a).norm();
    if (seg < 1e-12) continue;
    const Vec3 dir = (b - a) / seg;
    double s = spacing - carry;
    while (s <= seg) {
      out.push_back(a + dir * s);
      s += spacing;
    }
    carry = seg - (s - spacing);
  }
  if ((out.back() - pts.back()).norm() > 1e-9) out.push_back(pts.back());
  return out;
}

struct RefineResult {
  bool clear = false;
  int iterations = 0;
};

// Gradient descent with backtracking line search on
//   J = w_s * sum |second difference|^2 + w_c * sum hinge(req_i - esdf)^2.
// Endpoints stay fixed. Once the collision term reaches zero, further
// smoothing steps are only accepted if they keep it at zero, so J decreases
// monotonically and feasibility is never lost.
RefineResult refine(std::vector<Vec3>& wp, const Esdf& esdf, double d_req,
                    double start_clearance, const PlannerConfig& cfg,
                    int iter_budget) {
  RefineResult rr;
  const int n = static_cast<int>(wp.size());
  if (n <= 2) {
    rr.clear = true;
    return rr;
  }

  // Escape prefix: a vehicle already inside the clearance band keeps a
  // relaxed bound near the start, tightening back to d_req.
  std::vector<double> req(n, d_req);
  if (start_clearance < d_req) {
    const double relax0 = std::max(0.0, start_clearance - 1e-6);
    const int prefix = std::min(n - 1, 6);
    for (int i = 0; i < prefix; ++i)
      req[i] = relax0 + (d_req - relax0) * (double(i) / prefix);
  }

  auto cost = [&](const std::vector<Vec3>& w, double& coll_out) {
    double smooth = 0.0, coll = 0.0;
    for (int i = 1; i + 1 < n; ++i)
      smooth += (w[i - 1] - 2.0 * w[i] + w[i + 1]).squaredNorm();
    for (int i = 1; i + 1 < n; ++i) {
      const double gap = req[i] - esdf.at(w[i]);
      if (gap > 0) coll += gap * gap;
    }
    coll_out = coll;
    return cfg.smoothness_weight * smooth + cfg.collision_weight * coll;
  };

  double coll = 0.0;
  double J = cost(wp, coll);
  double step = cfg.gradient_step;
  std::vector<Vec3> grad(n, Vec3::Zero()), trial(wp);
  int smooth_iters = 0;

  while (rr.iterations < iter_budget) {
    ++rr.iterations;
    const bool feasible = coll <= 0.0;
    if (feasible && ++smooth_iters > 25) break;

    for (int i = 1; i + 1 < n; ++i) {
      Vec3 gsm = -4.0 * (wp[i - 1] - 2.0 * wp[i] + wp[i + 1]);
      if (i - 2 >= 0) gsm += 2.0 * (wp[i - 2] - 2.0 * wp[i - 1] + wp[i]);
      if (i + 2 < n) gsm += 2.0 * (wp[i] - 2.0 * wp[i + 1] + wp[i + 2]);
      Vec3 gc = Vec3::Zero();
      const double gap = req[i] - esdf.at(wp[i]);
      if (gap > 0) gc = -2.0 * gap * esdf.gradient(wp[i]);
      grad[i] = cfg.smoothness_weight * gsm + cfg.collision_weight * gc;
    }

    double gnorm = 0.0;
    for (const auto& gv : grad) gnorm = std::max(gnorm, gv.norm());
    if (gnorm < 1e-9) break;

    bool improved = false;
    double trial_step = step;
    for (int ls = 0; ls < 6; ++ls) {
      for (int i = 1; i + 1 < n; ++i)
        trial[i] = wp[i] - grad[i] * (trial_step / std::max(gnorm, 1.0));
      double tc = 0.0;
      const double tj = cost(trial, tc);
      const bool acceptable = tj < J - 1e-12 && (!feasible || tc <= 0.0);
      if (acceptable) {
        wp = trial;
        J = tj;
        coll = tc;
        improved = true;
        step = std::min(trial_step * 1.5, cfg.gradient_step * 4.0);
        break;
      }
      trial_step *= 0.5;
    }
    if (!improved) break;
  }
  rr.clear = coll <= 0.0;
  return rr;
}

// Trapezoidal speed profile along arc length; handles the case where even
// full braking cannot stop within the path (the trajectory then ends still
// moving and the next replan or the tracker absorbs it).
struct Profile {
  double v0 = 0, vp = 0, v_end = 0, a = 1, L = 0;
  double t_acc = 0, t_cruise = 0, t_dec = 0, s_acc = 0, s_cruise = 0;

  void build(double length, double v_start, double v_cruise, double accel) {
    L = std::max(length, 1e-9);
    a = std::max(accel, 1e-6);
    v0 = std::min(v_start, v_cruise);
    if (v0 * v0 / (2 * a) >= L) {
      // Braking overrun: decelerate the whole way.
      vp = v0;
      v_end = std::sqrt(std::max(v0 * v0 - 2 * a * L, 0.0));
      t_dec = (v0 - v_end) / a;
      return;
    }
    const double s_up = (v_cruise * v_cruise - v0 * v0) / (2 * a);
    const double s_down = v_cruise * v_cruise / (2 * a);
    if (s_up + s_down <= L) {
      vp = v_cruise;
      s_acc = s_up;
      s_cruise = L - s_up - s_down;
      t_acc = (vp - v0) / a;
      t_cruise = s_cruise / vp;
      t_dec = vp / a;
    } else {
      vp = std::sqrt((2 * a * L + v0 * v0) / 2.0);
      vp = std::clamp(vp, v0, v_cruise);
      s_acc = (vp * vp - v0 * v0) / (2 * a);
      t_acc = (vp - v0) / a;
      t_dec = vp / a;
    }
  }

  double speed_at_s(double s) const {
    s = std::clamp(s, 0.0, L);
    if (s <= s_acc) return std::sqrt(std::max(v0 * v0 + 2 * a * s, 0.0));
    if (s <= s_acc + s_cruise) return vp;
    const double rem = std::max(L - s, 0.0);
    return std::sqrt(std::max(v_end * v_end + 2 * a * rem, 0.0));
  }

  double time_at_s(double s) const {
    s = std::clamp(s, 0.0, L);
    if (s <= s_acc) return (speed_at_s(s) - v0) / a;
    if (s <= s_acc + s_cruise) return t_acc + (s - s_acc) / vp;
    return t_acc + t_cruise + (vp - speed_at_s(s)) / a;
  }
};

Trajectory fit_trajectory(const std::vector<Vec3>& wp, const VehicleState& state,
                          double v_cap, const PlannerConfig& cfg) {
  const int n = static_cast<int>(wp.size());
  std::vector<double> s(n, 0.0);
  for (int i = 1; i < n; ++i) s[i] = s[i - 1] + (wp[i] - wp[i - 1]).norm();

  Profile prof;
  const double v_start = std::min(state.v.norm(), v_cap);
  prof.build(s.back(), v_start, v_cap, cfg.a_max / std::sqrt(2.0));

  std::vector<double> t(n, 0.0);
  for (int i = 1; i < n; ++i) {
    t[i] = prof.time_at_s(s[i]);
    if (t[i] <= t[i - 1] + 1e-6) t[i] = t[i - 1] + 1e-3;
  }

  std::vector<Vec3> vel(n), acc(n);
  for (int i = 0; i < n; ++i) {
    Vec3 tangent;
    if (i == 0)
      tangent = wp[1] - wp[0];
    else if (i == n - 1)
      tangent = wp[n - 1] - wp[n - 2];
    else
      tangent = wp[i + 1] - wp[i - 1];
    const double tn = tangent.norm();
    tangent = (tn > 1e-9) ? Vec3(tangent / tn) : Vec3::UnitX();
    vel[i] = tangent * prof.speed_at_s(s[i]);
  }
  if (state.v.norm() > 1e-6)
    vel[0] = state.v * (v_start / state.v.norm());

  for (int i = 1; i + 1 < n; ++i) {
    acc[i] = (vel[i + 1] - vel[i - 1]) / std::max(t[i + 1] - t[i - 1], 1e-6);
    const double an = acc[i].norm();
    if (an > cfg.a_max) acc[i] *= cfg.a_max / an;
  }
  acc[0] = state.a;
  if (acc[0].norm() > cfg.a_max) acc[0] *= cfg.a_max / acc[0].norm();
  acc[n - 1] = Vec3::Zero();

  std::vector<TrajSegment> segs;
  segs.reserve(n - 1);
  for (int i = 0; i + 1 < n; ++i)
    segs.push_back(Trajectory::hermite_segment(wp[i], vel[i], acc[i], wp[i + 1],
                                               vel[i + 1], acc[i + 1],
                                               t[i + 1] - t[i]));
  Trajectory traj(std::move(segs));

  // Enforce the agility cap (and soften accel overshoot) by time dilation.
  const double dt = std::min(0.01, traj.duration() / 8.0 + 1e-6);
  const double vmax = traj.max_speed(dt);
  const double amax = traj.max_accel(dt);
  double eta = 1.0;
  if (vmax > v_cap) eta = std::max(eta, vmax / v_cap);
  if (amax > 1.25 * cfg.a_max) eta = std::max(eta, std::sqrt(amax / cfg.a_max));
  if (eta > 1.0) traj.dilate(eta * 1.002);
  return traj;
}

}  // namespace

PlanOutcome plan(const BeliefMap& map, const Esdf& esdf,
                 const VehicleState& state, const Vec3& goal, double v_cap,
                 const PlannerConfig& cfg) {
  PlanOutcome out;
  if (!(v_cap > 0.0) || !state.p.allFinite())
    throw std::invalid_argument("plan: need v_cap > 0 and finite state");

  const auto& g = esdf.dist;
  const double res = g.resolution();
  const double d_audit = cfg.safety_clearance + audit_pad(res);
  const double d_req = d_audit + cfg.refine_margin;
  out.audited_clearance = d_audit;

  // (i) Local goal: project the global goal onto the local horizon / map
  // boundary along the straight line, then snap to a believed-free cell.
  const Vec3 to_goal = goal - state.p;
  const double dist_goal = to_goal.norm();
  Vec3 local_goal = goal;
  Aabb inner = g.bounds();
  inner.min += Vec3(2 * res, 2 * res, 2 * res);
  inner.max -= Vec3(2 * res, 2 * res, 2 * res);
  if (dist_goal > 1e-9) {
    const Vec3 dir = to_goal / dist_goal;
    double tmax = std::min(dist_goal, cfg.local_horizon);
    double t0 = 0.0, t1 = tmax;
    if (inner.clip_ray(state.p, dir, t0, t1)) tmax = std::min(tmax, t1);
    local_goal = state.p + dir * tmax;
  }
  local_goal = local_goal.cwiseMax(inner.min).cwiseMin(inner.max);

  const Vec3i start_cell = g.cell_of(state.p);
  if (!g.in_bounds(start_cell)) {
    out.status = PlanStatus::kInfeasible;
    return out;
  }
  const double start_clear = esdf.at(state.p);

  Vec3i goal_cell = g.cell_of(local_goal);
  if (g.at(goal_cell) <= d_req) {
    const int r = static_cast<int>(std::ceil(cfg.goal_snap_radius / res));
    double best = std::numeric_limits<double>::infinity();
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const Vec3i c = g.cell_of(local_goal) + Vec3i(dx, dy, dz);
          if (!g.in_bounds(c) || g.at(c) <= d_req) continue;
          const double d2 = (g.center_of(c) - local_goal).squaredNorm();
          if (d2 < best) {
            best = d2;
            goal_cell = c;
          }
        }
  }

  // (ii) Initial path on the inflated grid. Cells around the current
  // position are exempt: the vehicle being there proves passability.
  const double exempt_r = std::max(cfg.vehicle_radius * 2.0, 2.0 * res);
  auto start_exempt = [&](const Vec3i& c) {
    return (g.center_of(c) - state.p).norm() <= exempt_r;
  };
  AStarResult ar = astar(esdf, start_cell, goal_cell, d_req,
                         cfg.astar_expansion_cap, start_exempt);
  if (ar.path.size() < 2) {
    out.status = PlanStatus::kInfeasible;
    return out;
  }

  // (iii) Refinement, time parameterization, fitting, post-fit audit.
  // Audit failures densify the waypoints and retry against the budget.
  std::vector<Vec3> wp = resample_polyline(ar.path, cfg.waypoint_spacing);
  wp.front() = state.p;
  if ((wp.back() - ar.path.back()).norm() > 1e-9) wp.push_back(ar.path.back());

  int iters_left = cfg.max_iters;
  for (int round = 0; round < 3; ++round) {
    RefineResult rr = refine(wp, esdf, d_req, start_clear, cfg, iters_left);
    out.iterations_used += std::max(rr.iterations, 1);
    iters_left -= std::max(rr.iterations, 1);
    if (!rr.clear) {
      if (iters_left <= 0) {
        out.status = PlanStatus::kTimeout;
        return out;
      }
      // Stuck in a local minimum: densify and retry.
      std::vector<Vec3> dense;
      dense.push_back(wp.front());
      for (size_t i = 1; i < wp.size(); ++i) {
        dense.push_back(0.5 * (wp[i - 1] + wp[i]));
        dense.push_back(wp[i]);
      }
      wp = std::move(dense);
      continue;
    }

    Trajectory traj = fit_trajectory(wp, state, v_cap, cfg);

    // Believed-map audit on dense samples; the escape prefix near the start
    // inherits the relaxed bound.
    bool ok = true;
    const double dt = 0.02;
    const double prefix_len =
        (start_clear < d_audit) ? 4.0 * cfg.waypoint_spacing : 0.0;
    Vec3 prev = traj.position(0.0);
    double arc = 0.0;
    for (double t = 0.0; t <= traj.duration() + 1e-9 && ok; t += dt) {
      const Vec3 p = traj.position(std::min(t, traj.duration()));
      arc += (p - prev).norm();
      prev = p;
      const double need =
          (arc <= prefix_len) ? std::min(start_clear, d_audit) : d_audit;
      if (esdf.at(p) < need - 1e-9) ok = false;
    }
    if (ok) {
      out.status = PlanStatus::kSuccess;
      out.trajectory = std::move(traj);
      return out;
    }
    std::vector<Vec3> dense;
    dense.push_back(wp.front());
    for (size_t i = 1; i < wp.size(); ++i) {
      dense.push_back(0.5 * (wp[i - 1] + wp[i]));
      dense.push_back(wp[i]);
    }
    wp = std::move(dense);
    out.iterations_used += 1;
    iters_left -= 1;
    if (iters_left <= 0) break;
  }
  out.status = PlanStatus::kTimeout;
  return out;
}

bool should_replan(double v_now, double v_prev, const ReplanTriggers& triggers) {
  if (!(v_now > 0.0) || !(v_prev > 0.0))
    throw std::invalid_argument("agility values must be positive");
  const double dv = v_now - v_prev;
  const bool outside_band = dv < -0.3 || dv > 0.5;
  return outside_band || triggers.new_obstacle_on_trajectory ||
         triggers.trajectory_nearly_consumed;
}

SafetyState safety_state(const SafetyInputs& in) {
  if (in.gt_collision || in.hard_tracking_divergence)
    return SafetyState::kCollided;
  if (in.last_plan_status != PlanStatus::kSuccess) {
    const double braking = in.speed * in.speed / (2.0 * in.a_max);
    if (in.believed_obstacle_distance < braking)
      return SafetyState::kEmergencyStop;
  }
  return SafetyState::kNominal;
}

}  // namespace afc
