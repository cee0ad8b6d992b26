#include "afc/mapping.hpp"

#include <deque>
#include <nlohmann/json.hpp>

#include "afc/io.hpp"

namespace afc {

double Esdf::at(const Vec3& p) const {
  const double res = dist.resolution();
  // Interpolate on the cell-center lattice, clamped to the grid interior.
  const Vec3 q = (p - dist.origin()) / res - Vec3(0.5, 0.5, 0.5);
  int ix = static_cast<int>(std::floor(q.x()));
  int iy = static_cast<int>(std::floor(q.y()));
  int iz = static_cast<int>(std::floor(q.z()));
  ix = std::clamp(ix, 0, dist.nx() - 2);
  iy = std::clamp(iy, 0, dist.ny() - 2);
  iz = std::clamp(iz, 0, dist.nz() - 2);
  const double fx = std::clamp(q.x() - ix, 0.0, 1.0);
  const double fy = std::clamp(q.y() - iy, 0.0, 1.0);
  const double fz = std::clamp(q.z() - iz, 0.0, 1.0);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) *
                         (dz ? fz : 1.0 - fz);
        acc += w * dist.at(ix + dx, iy + dy, iz + dz);
      }
  return acc;
}

Vec3 Esdf::gradient(const Vec3& p) const {
  const double h = 0.5 * dist.resolution();
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= h;
    hi[a] += h;
    g[a] = (at(hi) - at(lo)) / (2.0 * h);
  }
  return g;
}

BeliefMap::BeliefMap(const MapConfig& cfg, const Vec3& center) : cfg_(cfg) {
  cfg_.validate();
  const Vec3i dims(
      static_cast<int>(std::round(cfg.local_extent.x() / cfg.resolution)),
      static_cast<int>(std::round(cfg.local_extent.y() / cfg.resolution)),
      static_cast<int>(std::round(cfg.local_extent.z() / cfg.resolution)));
  Vec3 origin = center - 0.5 * cfg.local_extent;
  for (int a = 0; a < 3; ++a)
    origin[a] = std::round(origin[a] / cfg.resolution) * cfg.resolution;
  lo_ = VoxelGrid<float>(dims, cfg.resolution, origin, 0.0f);
  state_ = VoxelGrid<uint8_t>(dims, cfg.resolution, origin,
                              static_cast<uint8_t>(CellState::kUnknown));
}

void BeliefMap::classify(size_t i) {
  const float v = lo_[i];
  if (v >= cfg_.occ_cutoff)
    state_[i] = static_cast<uint8_t>(CellState::kOccupied);
  else if (v <= cfg_.free_cutoff)
    state_[i] = static_cast<uint8_t>(CellState::kFree);
  else
    state_[i] = static_cast<uint8_t>(CellState::kUnknown);
}

void BeliefMap::apply_update(const Vec3i& c, double delta) {
  const size_t i = lo_.index(c);
  lo_[i] = static_cast<float>(
      std::clamp(static_cast<double>(lo_[i]) + delta, cfg_.l_min, cfg_.l_max));
  classify(i);
}

void BeliefMap::recenter(const Vec3& center) {
  Vec3 new_origin = center - 0.5 * cfg_.local_extent;
  for (int a = 0; a < 3; ++a)
    new_origin[a] = std::round(new_origin[a] / cfg_.resolution) * cfg_.resolution;
  const Vec3 delta = new_origin - lo_.origin();
  const Vec3i shift(static_cast<int>(std::round(delta.x() / cfg_.resolution)),
                    static_cast<int>(std::round(delta.y() / cfg_.resolution)),
                    static_cast<int>(std::round(delta.z() / cfg_.resolution)));
  if (shift == Vec3i::Zero()) return;

  VoxelGrid<float> nlo(lo_.dims(), cfg_.resolution, new_origin, 0.0f);
  VoxelGrid<uint8_t> nstate(lo_.dims(), cfg_.resolution, new_origin,
                            static_cast<uint8_t>(CellState::kUnknown));
  const Vec3i d = lo_.dims();
  const int x0 = std::max(0, -shift.x());
  const int x1 = std::min(d.x(), d.x() - shift.x());
  for (int z = 0; z < d.z(); ++z) {
    const int sz = z + shift.z();
    if (sz < 0 || sz >= d.z()) continue;
    for (int y = 0; y < d.y(); ++y) {
      const int sy = y + shift.y();
      if (sy < 0 || sy >= d.y()) continue;
      for (int x = x0; x < x1; ++x) {
        nlo.at(x, y, z) = lo_.at(x + shift.x(), sy, sz);
        nstate.at(x, y, z) = state_.at(x + shift.x(), sy, sz);
      }
    }
  }
  lo_ = std::move(nlo);
  state_ = std::move(nstate);
}

void BeliefMap::integrate(const DepthFrame& frame, const SensorSpec& spec) {
  const Aabb box = lo_.bounds();
  for (int iv = 0; iv < frame.rays_v; ++iv) {
    for (int ih = 0; ih < frame.rays_h; ++ih) {
      const double depth = frame.depth(ih, iv);
      const bool has_hit = std::isfinite(depth);
      const double t_far = has_hit ? depth : spec.max_range;
      const Vec3 dir = ray_direction(spec, frame.yaw, ih, iv);

      double t0 = 0.0, t1 = t_far;
      if (!box.clip_ray(frame.position, dir, t0, t1)) continue;
      // The sensor is blind below min_range: no free-space evidence there.
      t0 = std::max(t0, spec.min_range);
      if (t1 < t0) continue;

      // Hit cell convention: the voxel containing the point a hair past the
      // reported depth. Free evidence stops there.
      Vec3i hit_cell(-1, -1, -1);
      if (has_hit)
        hit_cell = lo_.cell_of(frame.position +
                               dir * (depth + 0.01 * cfg_.resolution));
      walk_ray(lo_, frame.position, dir, t0, t1, [&](const Vec3i& c, double) {
        if (has_hit && c == hit_cell) return false;
        apply_update(c, cfg_.l_free);
        return true;
      });
      if (has_hit && lo_.in_bounds(hit_cell)) apply_update(hit_cell, cfg_.l_occ);
    }
  }
}

void BeliefMap::force_known(const GroundTruth& gt) {
  for (int z = 0; z < lo_.nz(); ++z)
    for (int y = 0; y < lo_.ny(); ++y)
      for (int x = 0; x < lo_.nx(); ++x) {
        const Vec3i c(x, y, z);
        const Vec3 p = lo_.center_of(c);
        const size_t i = lo_.index(c);
        if (!gt.grid.in_bounds(p)) {
          lo_[i] = 0.0f;
        } else {
          lo_[i] = static_cast<float>(gt.grid.at(gt.grid.cell_of(p))
                                          ? cfg_.l_max
                                          : cfg_.l_min);
        }
        classify(i);
      }
}

void BeliefMap::carve_free_ball(const Vec3& center, double radius) {
  const int r = static_cast<int>(std::ceil(radius / cfg_.resolution));
  const Vec3i c0 = lo_.cell_of(center);
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const Vec3i c = c0 + Vec3i(dx, dy, dz);
        if (!lo_.in_bounds(c)) continue;
        if ((lo_.center_of(c) - center).norm() > radius) continue;
        apply_update(c, cfg_.l_free);
      }
}

Esdf BeliefMap::esdf() const { return esdf(cfg_.unknown_as_occupied); }

Esdf BeliefMap::esdf(bool unknown_as_occupied) const {
  const uint8_t occ = static_cast<uint8_t>(CellState::kOccupied);
  const uint8_t unk = static_cast<uint8_t>(CellState::kUnknown);
  auto src = [&](size_t i) {
    return state_[i] == occ || (unknown_as_occupied && state_[i] == unk);
  };
  VoxelGrid<uint16_t> sq = squared_edt(state_, src);
  Esdf out;
  out.dist = VoxelGrid<float>(lo_.dims(), cfg_.resolution, lo_.origin(), 0.0f);
  const double res = cfg_.resolution;
  for (size_t i = 0; i < sq.size(); ++i)
    out.dist[i] = static_cast<float>(
        std::min(std::sqrt(static_cast<double>(sq[i])) * res, cfg_.esdf_max));
  return out;
}

std::vector<Vec3i> trajectory_cells(const BeliefMap& map, const Trajectory& traj) {
  std::vector<Vec3i> cells;
  const auto& g = map.log_odds();
  auto push_cell = [&](const Vec3i& c) {
    if (cells.empty() || cells.back() != c) cells.push_back(c);
  };
  const double T = traj.duration();
  Vec3 prev = traj.position(0.0);
  if (g.in_bounds(prev)) push_cell(g.cell_of(prev));
  if (T <= 0.0) return cells;
  // Walk cell-to-cell between samples spaced so motion per step << cell.
  const int steps = std::max(2, static_cast<int>(std::ceil(T / 0.02)));
  for (int k = 1; k <= steps; ++k) {
    const Vec3 p = traj.position(T * k / steps);
    const Vec3 d = p - prev;
    const double len = d.norm();
    if (len > 1e-9) {
      const Vec3 dir = d / len;
      double t0 = 0.0, t1 = len;
      if (g.bounds().clip_ray(prev, dir, t0, t1))
        walk_ray(g, prev, dir, t0, t1, [&](const Vec3i& c, double) {
          push_cell(c);
          return true;
        });
    }
    prev = p;
  }
  return cells;
}

std::vector<std::vector<double>> paint_and_slice(const BeliefMap& map,
                                                 const Trajectory& traj,
                                                 const ObservationConfig& cfg,
                                                 const Vec3& vehicle_pos) {
  const auto& g = map.states();
  // Painting overlay on a copy: per-cell flag, never touching the map.
  std::vector<uint8_t> on_traj(g.size(), 0);
  for (const Vec3i& c : trajectory_cells(map, traj))
    if (g.in_bounds(c)) on_traj[g.index(c)] = 1;

  const int S = cfg.slice_size;
  const int per_cell = std::max(1, static_cast<int>(std::round(
                                       cfg.slice_cell / g.resolution())));
  std::vector<std::vector<double>> slices;
  slices.reserve(cfg.slice_count);

  const double unknown_code =
      cfg.cell_encoding[static_cast<size_t>(CellState::kUnknown)];

  for (int k = 1; k <= cfg.slice_count; ++k) {
    const double t = std::min(k * cfg.slice_dt, std::max(traj.duration(), 0.0));
    const Vec3 sample = traj.position(t);
    int iz = g.cell_of(Vec3(vehicle_pos.x(), vehicle_pos.y(), sample.z())).z();
    iz = std::clamp(iz, 0, g.nz() - 1);
    const Vec3i vc = g.cell_of(vehicle_pos);

    std::vector<double> img(static_cast<size_t>(S) * S, unknown_code);
    for (int sy = 0; sy < S; ++sy) {
      for (int sx = 0; sx < S; ++sx) {
        // Aggregate the per_cell x per_cell map-cell block; precedence:
        // occupied > on_trajectory > unknown > free.
        const int x0 = vc.x() + (sx - S / 2) * per_cell;
        const int y0 = vc.y() + (sy - S / 2) * per_cell;
        int best = -1;  // -1 none, ranking below
        for (int dy = 0; dy < per_cell; ++dy) {
          for (int dx = 0; dx < per_cell; ++dx) {
            const Vec3i c(x0 + dx, y0 + dy, iz);
            if (!g.in_bounds(c)) continue;
            const auto st = static_cast<CellState>(g.at(c));
            int rank;
            if (st == CellState::kOccupied)
              rank = 3;
            else if (on_traj[g.index(c)])
              rank = 2;
            else if (st == CellState::kUnknown)
              rank = 1;
            else
              rank = 0;
            best = std::max(best, rank);
          }
        }
        CellState out = CellState::kUnknown;
        if (best == 3) out = CellState::kOccupied;
        else if (best == 2) out = CellState::kOnTrajectory;
        else if (best == 1) out = CellState::kUnknown;
        else if (best == 0) out = CellState::kFree;
        img[static_cast<size_t>(sy) * S + sx] =
            cfg.cell_encoding[static_cast<size_t>(out)];
      }
    }
    slices.push_back(std::move(img));
  }
  return slices;
}

DangerFeatures danger_features(const BeliefMap& map, const Vec3& vehicle_pos,
                               const DangerConfig& cfg) {
  DangerFeatures f;
  const auto& g = map.states();
  const double res = g.resolution();
  const uint8_t occ = static_cast<uint8_t>(CellState::kOccupied);

  // Nearest occupied cell + occupied volume within r_phi, by direct scan of
  // the occupied set (cheap: clutter is sparse).
  double best_sq = std::numeric_limits<double>::infinity();
  int vol_cells = 0;
  std::vector<int32_t> occ_cells;
  occ_cells.reserve(1024);
  for (size_t i = 0; i < g.size(); ++i)
    if (g[i] == occ) occ_cells.push_back(static_cast<int32_t>(i));

  const int nx = g.nx(), ny = g.ny();
  const double r2 = cfg.r_phi * cfg.r_phi;
  for (int32_t idx : occ_cells) {
    const int z = idx / (nx * ny);
    const int y = (idx / nx) % ny;
    const int x = idx % nx;
    const double d2 = (g.center_of(Vec3i(x, y, z)) - vehicle_pos).squaredNorm();
    best_sq = std::min(best_sq, d2);
    if (d2 <= r2) ++vol_cells;
  }
  f.d_near = std::isfinite(best_sq) ? std::sqrt(best_sq) : map.config().esdf_max;
  f.vol_near = vol_cells * res * res * res;

  // Connected occupied components (26-connectivity) in the whole local map.
  std::vector<uint8_t> seen(g.size(), 0);
  int components = 0;
  std::deque<int32_t> q;
  for (int32_t s : occ_cells) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    q.push_back(s);
    while (!q.empty()) {
      const int32_t cur = q.front();
      q.pop_front();
      const int z = cur / (nx * ny);
      const int y = (cur / nx) % ny;
      const int x = cur % nx;
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy && !dz) continue;
            const Vec3i n(x + dx, y + dy, z + dz);
            if (!g.in_bounds(n)) continue;
            const size_t ni = g.index(n);
            if (seen[ni] || g[ni] != occ) continue;
            seen[ni] = 1;
            q.push_back(static_cast<int32_t>(ni));
          }
    }
  }
  f.n_obstacles = components;

  const double raw = cfg.w_d * (1.0 - f.d_near / cfg.d_ref) +
                     cfg.w_n * (components / cfg.n_ref) +
                     cfg.w_v * (f.vol_near / cfg.vol_ref);
  f.phi2 = std::clamp(raw, 0.0, 3.0);
  f.phi1 = cfg.v_hi - (cfg.v_hi - cfg.v_lo) * f.phi2 / 3.0;
  return f;
}

void BeliefMap::save_snapshot(const std::string& path) const {
  using nlohmann::json;
  std::vector<uint8_t> codes(state_.size());
  for (size_t i = 0; i < state_.size(); ++i) codes[i] = state_[i];
  json j{{"format", "afc-map-snapshot"},
         {"version", 1},
         {"origin", {lo_.origin().x(), lo_.origin().y(), lo_.origin().z()}},
         {"dims", {lo_.nx(), lo_.ny(), lo_.nz()}},
         {"resolution", cfg_.resolution},
         {"states_b64", base64_encode(codes)}};
  write_text_file(path, j.dump());
}

}  // namespace afc
