#include <doctest.h>

#include "afc/mapping.hpp"
#include "afc/rng.hpp"

using namespace afc;

namespace {

MapConfig small_map_cfg() {
  MapConfig m;
  m.local_extent = Vec3(4.0, 4.0, 2.0);
  return m;
}

GroundTruth empty_world() {
  WorldSpec s;
  s.extent = Vec3(10, 10, 3);
  s.resolution = 0.1;
  RegionSpec r;
  r.x_end = s.extent.x();
  s.regions = {r};
  return generate(s);
}

// Independent per-cell tally: enumerate (cell -> free/occupied updates) for
// every ray with exact segment/AABB clipping, then apply the same clamped
// accumulation. Shares only the hit-cell convention with the implementation.
struct TallyOracle {
  VoxelGrid<float> lo;
  MapConfig cfg;

  explicit TallyOracle(const BeliefMap& map)
      : lo(map.log_odds().dims(), map.log_odds().resolution(),
           map.log_odds().origin(), 0.0f),
        cfg(map.config()) {}

  void apply(const Vec3i& c, double delta) {
    float& v = lo.at(c);
    v = static_cast<float>(
        std::clamp(static_cast<double>(v) + delta, cfg.l_min, cfg.l_max));
  }

  void integrate(const DepthFrame& f, const SensorSpec& spec) {
    const double res = lo.resolution();
    for (int iv = 0; iv < f.rays_v; ++iv)
      for (int ih = 0; ih < f.rays_h; ++ih) {
        const double depth = f.depth(ih, iv);
        const bool hit = std::isfinite(depth);
        const double t_far = hit ? depth : spec.max_range;
        const Vec3 dir = ray_direction(spec, f.yaw, ih, iv);
        Vec3i hit_cell(-1, -1, -1);
        if (hit) hit_cell = lo.cell_of(f.position + dir * (depth + 0.01 * res));
        // Exact enumeration: test every cell's AABB against the segment.
        const Vec3 a = f.position + dir * spec.min_range;
        const Vec3 b = f.position + dir * t_far;
        Aabb seg_box;
        seg_box.min = a.cwiseMin(b) - Vec3(res, res, res);
        seg_box.max = a.cwiseMax(b) + Vec3(res, res, res);
        struct Upd {
          double t;
          Vec3i c;
          bool occ;
        };
        std::vector<Upd> upds;
        for (int z = 0; z < lo.nz(); ++z)
          for (int y = 0; y < lo.ny(); ++y)
            for (int x = 0; x < lo.nx(); ++x) {
              const Vec3i c(x, y, z);
              Aabb cell;
              cell.min = lo.origin() + Vec3(x, y, z) * res;
              cell.max = cell.min + Vec3(res, res, res);
              if (seg_box.clamped_to(cell).empty()) continue;
              double t0 = spec.min_range, t1 = t_far;
              if (!cell.clip_ray(f.position, dir, t0, t1)) continue;
              if (t1 - t0 < 1e-9) continue;  // grazing contact
              if (hit && c == hit_cell)
                upds.push_back({t0, c, true});
              else
                upds.push_back({t0, c, false});
            }
        std::sort(upds.begin(), upds.end(),
                  [](const Upd& u, const Upd& v) { return u.t < v.t; });
        for (const auto& u : upds) {
          if (u.occ) {
            apply(u.c, cfg.l_occ);
            break;  // nothing beyond the hit
          }
          if (hit && u.t >= depth - 1e-9) break;
          apply(u.c, cfg.l_free);
        }
      }
  }

  CellState classify(const Vec3i& c) const {
    const float v = lo.at(c);
    if (v >= cfg.occ_cutoff) return CellState::kOccupied;
    if (v <= cfg.free_cutoff) return CellState::kFree;
    return CellState::kUnknown;
  }
};

}  // namespace

TEST_CASE("no-return frame moves traversed cells toward free, none occupied") {
  GroundTruth gt = empty_world();
  BeliefMap map(small_map_cfg(), Vec3(5, 5, 1.5));
  SensorSpec spec;
  spec.rays_h = 16;
  spec.rays_v = 8;
  DepthFrame f = capture(gt, Vec3(5, 5, 1.5), 0.0, spec, 0.0);
  map.integrate(f, spec);
  int freed = 0;
  for (size_t i = 0; i < map.log_odds().size(); ++i) {
    CHECK(map.log_odds()[i] <= 0.0f);
    if (map.log_odds()[i] < 0.0f) ++freed;
    CHECK(map.states()[i] != static_cast<uint8_t>(CellState::kOccupied));
  }
  CHECK(freed > 100);
}

TEST_CASE("repeated hits saturate at the upper clamp") {
  GroundTruth gt = empty_world();
  const Vec3 pos(5, 5, 1.55);
  gt.grid.at(gt.grid.cell_of(pos + Vec3(1.0, 0, 0))) = 1;
  MapConfig cfg = small_map_cfg();
  BeliefMap map(cfg, pos);
  SensorSpec spec;
  spec.rays_h = 9;
  spec.rays_v = 5;
  for (int k = 0; k < 20; ++k)
    map.integrate(capture(gt, pos, 0.0, spec, 0.1 * k), spec);
  const Vec3i hit_cell = map.log_odds().cell_of(pos + Vec3(1.0, 0, 0));
  CHECK(map.log_odds().at(hit_cell) == doctest::Approx(cfg.l_max));
  CHECK(map.state_at(hit_cell) == CellState::kOccupied);
}

TEST_CASE("random frame sequence matches the per-cell tally oracle") {
  Rng rng(77);
  GroundTruth gt = empty_world();
  for (int k = 0; k < 40; ++k)
    gt.grid.at(Vec3i(rng.uniform_int(30, 70), rng.uniform_int(30, 70),
                     rng.uniform_int(5, 25))) = 1;
  MapConfig cfg = small_map_cfg();
  const Vec3 center(5, 5, 1.5);
  BeliefMap map(cfg, center);
  TallyOracle oracle(map);
  SensorSpec spec;
  spec.rays_h = 6;
  spec.rays_v = 4;
  for (int k = 0; k < 12; ++k) {
    const Vec3 pos = center + Vec3(rng.uniform(-0.8, 0.8),
                                   rng.uniform(-0.8, 0.8),
                                   rng.uniform(-0.3, 0.3));
    if (gt.grid.at(gt.grid.cell_of(pos))) continue;
    const double yaw = rng.uniform(-kPi, kPi);
    DepthFrame f = capture(gt, pos, yaw, spec, 0.1 * k);
    map.integrate(f, spec);
    oracle.integrate(f, spec);
  }
  int mismatches = 0, informative = 0;
  for (int z = 0; z < map.states().nz(); ++z)
    for (int y = 0; y < map.states().ny(); ++y)
      for (int x = 0; x < map.states().nx(); ++x) {
        const Vec3i c(x, y, z);
        if (oracle.classify(c) != CellState::kUnknown) ++informative;
        if (map.state_at(c) != oracle.classify(c)) ++mismatches;
      }
  CHECK(mismatches == 0);
  CHECK(informative > 50);
}

TEST_CASE("esdf of a single occupied cell and trilinear interpolation") {
  MapConfig cfg = small_map_cfg();
  GroundTruth gt = empty_world();
  const Vec3 pos(5, 5, 1.55);
  BeliefMap map(cfg, pos);
  // One observed hit straight ahead, everything else carved free.
  gt.grid.at(gt.grid.cell_of(pos + Vec3(1.0, 0, 0))) = 1;
  SensorSpec spec;
  for (int k = 0; k < 6; ++k)
    map.integrate(capture(gt, pos, k * 1.0 - 2.5, spec, 0.1 * k), spec);

  Esdf esdf = map.esdf(false);  // occupied sources only
  const Vec3i occ = map.log_odds().cell_of(pos + Vec3(1.0, 0, 0));
  CHECK(esdf.at_cell(occ) == doctest::Approx(0.0));
  for (const Vec3i d : {Vec3i(1, 0, 0), Vec3i(0, 1, 0), Vec3i(0, 0, 1)})
    CHECK(esdf.at_cell(occ + d) == doctest::Approx(cfg.resolution));
  // Interpolated value midway between the occupied center and a neighbor.
  const Vec3 mid = map.log_odds().center_of(occ) + Vec3(0.05, 0, 0);
  CHECK(esdf.at(mid) == doctest::Approx(0.05).epsilon(0.01));
}

TEST_CASE("esdf with no sources saturates at esdf_max") {
  MapConfig cfg = small_map_cfg();
  cfg.unknown_as_occupied = false;
  BeliefMap map(cfg, Vec3(5, 5, 1.5));
  Esdf esdf = map.esdf(false);
  for (size_t i = 0; i < esdf.dist.size(); ++i)
    CHECK(esdf.dist[i] == doctest::Approx(cfg.esdf_max));
}

TEST_CASE("hover painting marks only the vehicle cell across identical slices") {
  MapConfig cfg = small_map_cfg();
  const Vec3 pos(5, 5, 1.5);
  BeliefMap map(cfg, pos);
  ObservationConfig oc;
  oc.slice_size = 16;
  oc.slice_cell = cfg.resolution;  // 1:1 cells for exactness
  Trajectory hover = Trajectory::hover(pos, 2.0);
  auto slices = paint_and_slice(map, hover, oc, pos);
  REQUIRE(static_cast<int>(slices.size()) == oc.slice_count);
  const double on_traj = oc.cell_encoding[3];
  for (int k = 1; k < oc.slice_count; ++k) CHECK(slices[k] == slices[0]);
  int painted = 0;
  for (double v : slices[0])
    if (v == on_traj) ++painted;
  CHECK(painted == 1);
}

TEST_CASE("straight trajectory paints a connected voxel line") {
  MapConfig cfg = small_map_cfg();
  const Vec3 pos(5, 5, 1.5);
  BeliefMap map(cfg, pos);
  Trajectory traj({Trajectory::hermite_segment(pos, Vec3(1.4, 0.7, 0), Vec3::Zero(),
                                               pos + Vec3(1.4, 0.7, 0),
                                               Vec3(1.4, 0.7, 0), Vec3::Zero(),
                                               1.0)});
  auto cells = trajectory_cells(map, traj);
  REQUIRE(cells.size() > 5);
  // Supercover property: consecutive painted cells are face/edge adjacent.
  for (size_t i = 1; i < cells.size(); ++i) {
    const Vec3i d = (cells[i] - cells[i - 1]).cwiseAbs();
    CHECK(d.maxCoeff() <= 1);
  }
}

TEST_CASE("cell encoding round trip") {
  ObservationConfig oc;
  // Codes are distinct, so state -> code -> state is a bijection.
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (a != b) CHECK(oc.cell_encoding[a] != oc.cell_encoding[b]);
}

TEST_CASE("paint_and_slice leaves the map untouched") {
  MapConfig cfg = small_map_cfg();
  const Vec3 pos(5, 5, 1.5);
  BeliefMap map(cfg, pos);
  const auto before = map.states().data();
  ObservationConfig oc;
  paint_and_slice(map, Trajectory::hover(pos), oc, pos);
  CHECK(map.states().data() == before);
}

TEST_CASE("danger features: empty map is maximally safe") {
  MapConfig cfg = small_map_cfg();
  BeliefMap map(cfg, Vec3(5, 5, 1.5));
  DangerConfig dc;
  DangerFeatures f = danger_features(map, Vec3(5, 5, 1.5), dc);
  CHECK(f.phi2 == doctest::Approx(0.0));
  CHECK(f.phi1 == doctest::Approx(dc.v_hi));
}

TEST_CASE("danger features: adjacent clutter is dangerous") {
  MapConfig cfg = small_map_cfg();
  GroundTruth gt = empty_world();
  const Vec3 pos(5, 5, 1.55);
  // A large block right next to the vehicle.
  for (int dx = 3; dx < 13; ++dx)
    for (int dy = -8; dy < 8; ++dy)
      for (int dz = -4; dz < 5; ++dz)
        gt.grid.at(gt.grid.cell_of(pos) + Vec3i(dx, dy, dz)) = 1;
  BeliefMap map(cfg, pos);
  SensorSpec spec;
  map.integrate(capture(gt, pos, 0.0, spec, 0.0), spec);
  DangerConfig dc;
  DangerFeatures f = danger_features(map, pos, dc);
  CHECK(f.phi2 > 2.0);
  CHECK(f.phi1 < 1.7);
}

TEST_CASE("phi2 single-term evaluation with unit weight") {
  // w = (1,0,0), d_near = d_ref/2 -> phi2 = 0.5 exactly.
  MapConfig cfg = small_map_cfg();
  const Vec3 pos(5, 5, 1.55);
  BeliefMap map(cfg, pos);
  GroundTruth gt = empty_world();
  DangerConfig dc;
  dc.w_d = 1.0;
  dc.w_n = 0.0;
  dc.w_v = 0.0;
  dc.d_ref = 3.0;
  // Plant one observed occupied cell at exactly d_ref/2 along +x.
  gt.grid.at(gt.grid.cell_of(pos + Vec3(1.5, 0, 0))) = 1;
  SensorSpec spec;
  map.integrate(capture(gt, pos, 0.0, spec, 0.0), spec);
  const Vec3i cell = map.log_odds().cell_of(pos + Vec3(1.5, 0, 0));
  REQUIRE(map.state_at(cell) == CellState::kOccupied);
  DangerFeatures f = danger_features(map, map.log_odds().center_of(cell) -
                                              Vec3(1.5, 0, 0), dc);
  CHECK(f.phi2 == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("phi2 monotonicity in d_near") {
  MapConfig cfg = small_map_cfg();
  const Vec3 pos(5, 5, 1.55);
  GroundTruth gt = empty_world();
  SensorSpec spec;
  DangerConfig dc;
  double prev = 4.0;
  for (double d : {0.6, 1.2, 1.8, 2.4}) {
    BeliefMap map(cfg, pos);
    GroundTruth g2 = gt;
    g2.grid.at(g2.grid.cell_of(pos + Vec3(d, 0, 0))) = 1;
    map.integrate(capture(g2, pos, 0.0, spec, 0.0), spec);
    DangerFeatures f = danger_features(map, pos, dc);
    CHECK(f.phi2 <= prev + 1e-9);
    prev = f.phi2;
  }
}

TEST_CASE("recenter preserves world-anchored content") {
  MapConfig cfg = small_map_cfg();
  GroundTruth gt = empty_world();
  const Vec3 pos(5, 5, 1.55);
  gt.grid.at(gt.grid.cell_of(pos + Vec3(1.0, 0.2, 0))) = 1;
  BeliefMap map(cfg, pos);
  SensorSpec spec;
  map.integrate(capture(gt, pos, 0.0, spec, 0.0), spec);
  const Vec3 probe = pos + Vec3(1.0, 0.2, 0);
  REQUIRE(map.state_at(probe) == CellState::kOccupied);
  map.recenter(pos + Vec3(0.5, -0.3, 0.1));
  CHECK(map.state_at(probe) == CellState::kOccupied);
  // Cells scrolled in are unknown.
  CHECK(map.state_at(map.bounds().min + Vec3(0.01, 0.01, 0.01)) ==
        CellState::kUnknown);
}
