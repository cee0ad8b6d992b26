#include "afc/world.hpp"

#include <deque>
#include <nlohmann/json.hpp>

#include "afc/edt.hpp"
#include "afc/io.hpp"
#include "afc/rng.hpp"

namespace afc {

using nlohmann::json;

void WorldSpec::validate() const {
  if (resolution <= 0.0) throw std::invalid_argument("resolution must be > 0");
  if (extent.x() <= 0 || extent.y() <= 0 || extent.z() <= 0)
    throw std::invalid_argument("extent components must be > 0");
  if (regions.empty()) throw std::invalid_argument("regions must not be empty");
  double x = 0.0;
  for (const auto& r : regions) {
    if (r.density < 0) throw std::invalid_argument("region density must be >= 0");
    if (std::abs(r.x_begin - x) > 1e-9 || r.x_end <= r.x_begin)
      throw std::invalid_argument("regions must tile the extent without overlap");
    x = r.x_end;
  }
  if (std::abs(x - extent.x()) > 1e-9)
    throw std::invalid_argument("regions must cover the full x extent");
}

namespace {

Vec3i grid_dims(const WorldSpec& s) {
  return Vec3i(static_cast<int>(std::round(s.extent.x() / s.resolution)),
               static_cast<int>(std::round(s.extent.y() / s.resolution)),
               static_cast<int>(std::round(s.extent.z() / s.resolution)));
}

void rasterize(const std::vector<Primitive>& prims, VoxelGrid<uint8_t>& g) {
  const double res = g.resolution();
  for (const auto& pr : prims) {
    const Aabb b = pr.box.clamped_to(g.bounds());
    if (b.empty()) continue;
    // A voxel is occupied iff its center lies inside the primitive.
    Vec3i lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::ceil(b.min[a] / res - 0.5)));
      hi[a] = std::min(g.dims()[a] - 1,
                       static_cast<int>(std::floor(b.max[a] / res - 0.5)));
    }
    for (int z = lo.z(); z <= hi.z(); ++z)
      for (int y = lo.y(); y <= hi.y(); ++y)
        for (int x = lo.x(); x <= hi.x(); ++x) g.at(x, y, z) = 1;
  }
}

bool near_keepout(const Vec3& c, const Vec3& start, const Vec3& goal, double r) {
  const double dx2s = (c.x() - start.x()) * (c.x() - start.x()) +
                      (c.y() - start.y()) * (c.y() - start.y());
  const double dx2g = (c.x() - goal.x()) * (c.x() - goal.x()) +
                      (c.y() - goal.y()) * (c.y() - goal.y());
  return dx2s < r * r || dx2g < r * r;
}

void emit_pillar(Rng& rng, const WorldSpec& s, const RegionSpec& reg,
                 const Vec3& start, const Vec3& goal, int id,
                 std::vector<Primitive>& out) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    const double hx = rng.uniform(s.pillar_half_min, s.pillar_half_max);
    const double hy = rng.uniform(s.pillar_half_min, s.pillar_half_max);
    const Vec3 c(rng.uniform(reg.x_begin, reg.x_end),
                 rng.uniform(0.0, s.extent.y()), 0.0);
    if (near_keepout(c, start, goal, s.keepout_radius + std::max(hx, hy))) continue;
    Primitive p;
    p.kind = ObstacleKind::kPillar;
    p.obstacle_id = id;
    p.box.min = Vec3(c.x() - hx, c.y() - hy, 0.0);
    p.box.max = Vec3(c.x() + hx, c.y() + hy, s.extent.z());
    out.push_back(p);
    return;
  }
}

void emit_box(Rng& rng, const WorldSpec& s, const RegionSpec& reg,
              const Vec3& start, const Vec3& goal, int id,
              std::vector<Primitive>& out) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    const Vec3 size(rng.uniform(s.box_size_min, s.box_size_max),
                    rng.uniform(s.box_size_min, s.box_size_max),
                    rng.uniform(s.box_size_min, s.box_size_max));
    const Vec3 c(rng.uniform(reg.x_begin, reg.x_end),
                 rng.uniform(0.0, s.extent.y()), 0.0);
    if (near_keepout(c, start, goal,
                     s.keepout_radius + 0.5 * std::max(size.x(), size.y())))
      continue;
    // Half the boxes sit on the ground, half float at a random height.
    double z0 = 0.0;
    if (rng.uniform() < 0.5)
      z0 = rng.uniform(0.0, std::max(0.0, s.extent.z() - size.z()));
    Primitive p;
    p.kind = ObstacleKind::kBox;
    p.obstacle_id = id;
    p.box.min = Vec3(c.x() - 0.5 * size.x(), c.y() - 0.5 * size.y(), z0);
    p.box.max = Vec3(c.x() + 0.5 * size.x(), c.y() + 0.5 * size.y(),
                     std::min(s.extent.z(), z0 + size.z()));
    out.push_back(p);
    return;
  }
}

void emit_wall(Rng& rng, const WorldSpec& s, const RegionSpec& reg,
               const Vec3& start, const Vec3& goal, int id,
               std::vector<Primitive>& out) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    const double thick = rng.uniform(s.wall_thickness_min, s.wall_thickness_max);
    const double span = rng.uniform(s.wall_span_min, s.wall_span_max);
    const double xc = rng.uniform(reg.x_begin, reg.x_end);
    const double yc = rng.uniform(0.0, s.extent.y());
    const double y0 = std::max(0.0, yc - 0.5 * span);
    const double y1 = std::min(s.extent.y(), yc + 0.5 * span);
    if (y1 - y0 < s.gap_width_min * 1.5) continue;
    const double gap_w = rng.uniform(s.gap_width_min, s.gap_width_max);
    const double gap_c = rng.uniform(y0 + 0.5 * gap_w, y1 - 0.5 * gap_w);
    if (near_keepout(Vec3(xc, yc, 0), start, goal, s.keepout_radius + 0.5 * span))
      continue;
    Primitive left, right;
    left.kind = right.kind = ObstacleKind::kWallWithGap;
    left.obstacle_id = right.obstacle_id = id;
    left.box.min = Vec3(xc - 0.5 * thick, y0, 0.0);
    left.box.max = Vec3(xc + 0.5 * thick, gap_c - 0.5 * gap_w, s.extent.z());
    right.box.min = Vec3(xc - 0.5 * thick, gap_c + 0.5 * gap_w, 0.0);
    right.box.max = Vec3(xc + 0.5 * thick, y1, s.extent.z());
    if (left.box.max.y() > left.box.min.y() + 1e-9) out.push_back(left);
    if (right.box.max.y() > right.box.min.y() + 1e-9) out.push_back(right);
    return;
  }
}

// Flood fill from start on the inflated grid; true if the goal is reached.
bool connected(const VoxelGrid<uint8_t>& grid, const Vec3& start,
               const Vec3& goal, double inflation) {
  const Vec3i s = grid.cell_of(start);
  const Vec3i g = grid.cell_of(goal);
  if (!grid.in_bounds(s) || !grid.in_bounds(g)) return false;

  VoxelGrid<uint16_t> sq = squared_edt(grid, [&](size_t i) { return grid[i] != 0; });
  const double res = grid.resolution();
  const double infl_sq_vox = (inflation / res) * (inflation / res);
  auto blocked = [&](const Vec3i& c) {
    return static_cast<double>(sq.at(c)) <= infl_sq_vox + 1e-9;
  };
  if (blocked(s) || blocked(g)) return false;

  VoxelGrid<uint8_t> seen(grid.dims(), res, grid.origin(), 0);
  std::deque<Vec3i> q{s};
  seen.at(s) = 1;
  static const Vec3i kN6[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                               {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!q.empty()) {
    const Vec3i c = q.front();
    q.pop_front();
    if (c == g) return true;
    for (const auto& d : kN6) {
      const Vec3i n = c + d;
      if (!grid.in_bounds(n) || seen.at(n) || blocked(n)) continue;
      seen.at(n) = 1;
      q.push_back(n);
    }
  }
  return false;
}

GroundTruth generate_once(const WorldSpec& spec) {
  GroundTruth gt;
  gt.spec = spec;
  Rng rng(derive_seed(spec.seed, 0x11D0u));

  gt.start = Vec3(spec.start_margin, 0.5 * spec.extent.y(), 0.5 * spec.extent.z());
  const double jitter = spec.goal_y_jitter * spec.extent.y();
  gt.goal = Vec3(spec.extent.x() - spec.start_margin,
                 0.5 * spec.extent.y() + rng.uniform(-jitter, jitter),
                 0.5 * spec.extent.z());

  int id = 0;
  for (const auto& reg : spec.regions) {
    const double area = (reg.x_end - reg.x_begin) * spec.extent.y();
    const int count = static_cast<int>(std::round(reg.density * area));
    for (int k = 0; k < count; ++k) {
      const auto kind = reg.kinds[rng.uniform_index(reg.kinds.size())];
      switch (kind) {
        case ObstacleKind::kPillar:
          emit_pillar(rng, spec, reg, gt.start, gt.goal, id++, gt.primitives);
          break;
        case ObstacleKind::kBox:
          emit_box(rng, spec, reg, gt.start, gt.goal, id++, gt.primitives);
          break;
        case ObstacleKind::kWallWithGap:
          emit_wall(rng, spec, reg, gt.start, gt.goal, id++, gt.primitives);
          break;
      }
    }
  }

  gt.grid = VoxelGrid<uint8_t>(grid_dims(spec), spec.resolution, Vec3::Zero(), 0);
  rasterize(gt.primitives, gt.grid);
  return gt;
}

}  // namespace

GroundTruth generate(const WorldSpec& spec) {
  spec.validate();
  WorldSpec attempt_spec = spec;
  for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
    attempt_spec.seed = (attempt == 0)
                            ? spec.seed
                            : derive_seed(spec.seed, 0xA11Bu + attempt);
    GroundTruth gt = generate_once(attempt_spec);
    if (gt.is_occupied(gt.start) || gt.is_occupied(gt.goal)) continue;
    if (connected(gt.grid, gt.start, gt.goal, spec.connectivity_clearance))
      return gt;
  }
  throw ConnectivityFailure("no start-goal connected world after retries (seed " +
                            std::to_string(spec.seed) + ")");
}

bool GroundTruth::is_occupied(const Vec3& p) const {
  const Vec3i c = grid.cell_of(p);
  if (!grid.in_bounds(c)) throw OutOfBounds("point outside world extent");
  return grid.at(c) != 0;
}

bool GroundTruth::occupied_within(const Vec3& p, double radius) const {
  return clearance(p, radius + grid.resolution()) < radius;
}

double GroundTruth::clearance(const Vec3& p, double cap) const {
  const double res = grid.resolution();
  const Vec3i c = grid.cell_of(p);
  const int r = static_cast<int>(std::ceil(cap / res)) + 1;
  double best_sq = cap * cap;
  bool found = false;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const Vec3i n = c + Vec3i(dx, dy, dz);
        if (!grid.in_bounds(n) || grid.at(n) == 0) continue;
        const double d2 = (grid.center_of(n) - p).squaredNorm();
        if (d2 <= best_sq) {
          best_sq = d2;
          found = true;
        }
      }
  return found ? std::sqrt(best_sq) : cap;
}

std::vector<RegionSpec> default_regions(double extent_x, double density_scale) {
  // Alternating open corridor / clutter bands. Pillar fields dominate;
  // boxes and gapped walls appear in the denser bands.
  std::vector<RegionSpec> rs;
  auto add = [&](double x0, double x1, double d, std::vector<ObstacleKind> k) {
    RegionSpec r;
    r.x_begin = x0;
    r.x_end = x1;
    r.density = d * density_scale;
    r.kinds = std::move(k);
    rs.push_back(r);
  };
  const double L = extent_x;
  add(0.00 * L, 0.12 * L, 0.010, {ObstacleKind::kPillar});
  add(0.12 * L, 0.30 * L, 0.110, {ObstacleKind::kPillar, ObstacleKind::kBox});
  add(0.30 * L, 0.45 * L, 0.018, {ObstacleKind::kPillar});
  add(0.45 * L, 0.52 * L, 0.030,
      {ObstacleKind::kWallWithGap, ObstacleKind::kPillar});
  add(0.52 * L, 0.72 * L, 0.130,
      {ObstacleKind::kPillar, ObstacleKind::kBox});
  add(0.72 * L, 0.88 * L, 0.020, {ObstacleKind::kPillar});
  add(0.88 * L, 1.00 * L, 0.060, {ObstacleKind::kPillar, ObstacleKind::kBox});
  return rs;
}

namespace {

json spec_to_json(const WorldSpec& s) {
  json regions = json::array();
  for (const auto& r : s.regions) {
    json kinds = json::array();
    for (auto k : r.kinds) kinds.push_back(static_cast<int>(k));
    regions.push_back({{"x_begin", r.x_begin},
                       {"x_end", r.x_end},
                       {"density", r.density},
                       {"kinds", kinds}});
  }
  return json{{"seed", s.seed},
              {"extent", {s.extent.x(), s.extent.y(), s.extent.z()}},
              {"resolution", s.resolution},
              {"regions", regions},
              {"pillar_half_min", s.pillar_half_min},
              {"pillar_half_max", s.pillar_half_max},
              {"box_size_min", s.box_size_min},
              {"box_size_max", s.box_size_max},
              {"wall_span_min", s.wall_span_min},
              {"wall_span_max", s.wall_span_max},
              {"wall_thickness_min", s.wall_thickness_min},
              {"wall_thickness_max", s.wall_thickness_max},
              {"gap_width_min", s.gap_width_min},
              {"gap_width_max", s.gap_width_max},
              {"start_margin", s.start_margin},
              {"keepout_radius", s.keepout_radius},
              {"goal_y_jitter", s.goal_y_jitter},
              {"connectivity_clearance", s.connectivity_clearance},
              {"max_retries", s.max_retries}};
}

WorldSpec spec_from_json(const json& j) {
  WorldSpec s;
  s.seed = j.at("seed").get<uint64_t>();
  auto e = j.at("extent");
  s.extent = Vec3(e[0], e[1], e[2]);
  s.resolution = j.at("resolution");
  for (const auto& rj : j.at("regions")) {
    RegionSpec r;
    r.x_begin = rj.at("x_begin");
    r.x_end = rj.at("x_end");
    r.density = rj.at("density");
    r.kinds.clear();
    for (const auto& k : rj.at("kinds"))
      r.kinds.push_back(static_cast<ObstacleKind>(k.get<int>()));
    s.regions.push_back(r);
  }
  s.pillar_half_min = j.at("pillar_half_min");
  s.pillar_half_max = j.at("pillar_half_max");
  s.box_size_min = j.at("box_size_min");
  s.box_size_max = j.at("box_size_max");
  s.wall_span_min = j.at("wall_span_min");
  s.wall_span_max = j.at("wall_span_max");
  s.wall_thickness_min = j.at("wall_thickness_min");
  s.wall_thickness_max = j.at("wall_thickness_max");
  s.gap_width_min = j.at("gap_width_min");
  s.gap_width_max = j.at("gap_width_max");
  s.start_margin = j.at("start_margin");
  s.keepout_radius = j.at("keepout_radius");
  s.goal_y_jitter = j.at("goal_y_jitter");
  s.connectivity_clearance = j.at("connectivity_clearance");
  s.max_retries = j.at("max_retries");
  return s;
}

}  // namespace

void save_world(const GroundTruth& gt, const std::string& path) {
  // Bit-pack the voxel grid; primitives are kept for the analytic tests
  // and for re-deriving anything from the file alone.
  std::vector<uint8_t> bits((gt.grid.size() + 7) / 8, 0);
  for (size_t i = 0; i < gt.grid.size(); ++i)
    if (gt.grid[i]) bits[i >> 3] |= static_cast<uint8_t>(1u << (i & 7));

  json prims = json::array();
  for (const auto& p : gt.primitives) {
    prims.push_back({{"min", {p.box.min.x(), p.box.min.y(), p.box.min.z()}},
                     {"max", {p.box.max.x(), p.box.max.y(), p.box.max.z()}},
                     {"id", p.obstacle_id},
                     {"kind", static_cast<int>(p.kind)}});
  }
  json j{{"format", "afc-world"},
         {"version", 1},
         {"spec", spec_to_json(gt.spec)},
         {"start", {gt.start.x(), gt.start.y(), gt.start.z()}},
         {"goal", {gt.goal.x(), gt.goal.y(), gt.goal.z()}},
         {"dims", {gt.grid.nx(), gt.grid.ny(), gt.grid.nz()}},
         {"primitives", prims},
         {"occupancy_b64", base64_encode(bits)}};
  write_text_file(path, j.dump());
}

GroundTruth load_world(const std::string& path) {
  json j = json::parse(read_text_file(path));
  if (j.value("format", "") != "afc-world")
    throw CorruptFile("not an afc world file: " + path);
  if (j.at("version").get<int>() != 1)
    throw VersionMismatch("unsupported world file version");
  GroundTruth gt;
  gt.spec = spec_from_json(j.at("spec"));
  auto s = j.at("start");
  auto g = j.at("goal");
  gt.start = Vec3(s[0], s[1], s[2]);
  gt.goal = Vec3(g[0], g[1], g[2]);
  auto d = j.at("dims");
  gt.grid = VoxelGrid<uint8_t>(Vec3i(d[0], d[1], d[2]), gt.spec.resolution,
                               Vec3::Zero(), 0);
  const auto bits = base64_decode(j.at("occupancy_b64").get<std::string>());
  if (bits.size() != (gt.grid.size() + 7) / 8)
    throw CorruptFile("occupancy bitmap size mismatch");
  for (size_t i = 0; i < gt.grid.size(); ++i)
    gt.grid[i] = (bits[i >> 3] >> (i & 7)) & 1u;
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    auto mn = pj.at("min");
    auto mx = pj.at("max");
    p.box.min = Vec3(mn[0], mn[1], mn[2]);
    p.box.max = Vec3(mx[0], mx[1], mx[2]);
    p.obstacle_id = pj.at("id");
    p.kind = static_cast<ObstacleKind>(pj.at("kind").get<int>());
    gt.primitives.push_back(p);
  }
  return gt;
}

}  // namespace afc
