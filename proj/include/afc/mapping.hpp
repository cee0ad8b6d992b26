// Believed local occupancy map: log-odds integration of depth frames,
// ESDF derivation, observation rendering (cell states, trajectory painting,
// x-y slices) and the handcrafted danger features.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "afc/edt.hpp"
#include "afc/sensor.hpp"
#include "afc/trajectory.hpp"

namespace afc {

enum class CellState : uint8_t { kFree = 0, kOccupied = 1, kUnknown = 2, kOnTrajectory = 3 };

struct MapConfig {
  double resolution = 0.1;
  Vec3 local_extent = Vec3(10.0, 10.0, 3.0);
  double l_occ = 0.85;    // log-odds increment for a hit
  double l_free = -0.4;   // log-odds increment for a pass-through
  double l_min = -2.0;    // clamp bounds
  double l_max = 3.5;
  double occ_cutoff = 0.8;    // classified occupied at or above
  double free_cutoff = -0.35; // classified free at or below
  bool unknown_as_occupied = true;  // for the planning ESDF
  double esdf_max = 5.0;

  void validate() const {
    if (!(free_cutoff < 0.0 && 0.0 < occ_cutoff))
      throw std::invalid_argument("cutoffs must straddle the prior (0)");
    if (resolution <= 0) throw std::invalid_argument("resolution must be > 0");
  }
};

struct ObservationConfig {
  int slice_count = 5;       // K
  double slice_dt = 0.3;     // seconds between trajectory samples
  int slice_size = 32;       // cells per side
  double slice_cell = 0.2;   // meters per slice cell (aggregates map cells)
  // CellState -> network input code, indexed by CellState.
  std::array<double, 4> cell_encoding = {0.0, 1.0, 0.5, -1.0};

  void validate() const {
    if (slice_count < 1) throw std::invalid_argument("slice_count >= 1");
    if (slice_dt <= 0) throw std::invalid_argument("slice_dt > 0");
    if (slice_size < 1 || slice_cell <= 0)
      throw std::invalid_argument("bad slice geometry");
  }
};

struct DangerConfig {
  double w_d = 1.5, w_n = 0.75, w_v = 0.75;
  double d_ref = 3.0;    // meters
  double n_ref = 8.0;    // component count scale
  double vol_ref = 2.0;  // m^3
  double r_phi = 3.0;    // neighbourhood radius
  double v_lo = 1.0, v_hi = 3.0;  // reference speed range for phi1
};

struct DangerFeatures {
  double phi1 = 0.0;  // reference speed, decreasing in danger
  double phi2 = 0.0;  // danger level in [0, 3]
  double d_near = 0.0;
  int n_obstacles = 0;
  double vol_near = 0.0;
};

struct Esdf {
  VoxelGrid<float> dist;  // meters, distance between cell centers

  double at_cell(const Vec3i& c) const { return dist.at(c); }
  // Trilinear interpolation at a world point (clamped into the grid).
  double at(const Vec3& p) const;
  Vec3 gradient(const Vec3& p) const;  // finite-difference of interpolant
};

class BeliefMap {
 public:
  BeliefMap() = default;
  explicit BeliefMap(const MapConfig& cfg, const Vec3& center = Vec3::Zero());

  const MapConfig& config() const { return cfg_; }
  const VoxelGrid<float>& log_odds() const { return lo_; }
  const VoxelGrid<uint8_t>& states() const { return state_; }
  Aabb bounds() const { return lo_.bounds(); }

  CellState state_at(const Vec3i& c) const {
    return static_cast<CellState>(state_.at(c));
  }
  CellState state_at(const Vec3& p) const {
    const Vec3i c = lo_.cell_of(p);
    return lo_.in_bounds(c) ? state_at(c) : CellState::kUnknown;
  }

  // Shift the window so it is centered on `center` (snapped to the voxel
  // lattice). Cells scrolled in start unknown at the prior log-odds.
  void recenter(const Vec3& center);

  // Log-odds update along every ray of the frame (free before the hit,
  // occupied at the hit, clamped). Cells outside all rays are untouched.
  void integrate(const DepthFrame& frame, const SensorSpec& spec);

  // Mark a ball of cells as directly observed free (used once at episode
  // start for the launch position the camera can never see).
  void carve_free_ball(const Vec3& center, double radius);

  // Replace belief with complete knowledge of the ground truth inside the
  // local window (cells outside the world stay unknown).
  void force_known(const GroundTruth& gt);

  Esdf esdf() const;                       // honors cfg.unknown_as_occupied
  Esdf esdf(bool unknown_as_occupied) const;

  void save_snapshot(const std::string& path) const;

 private:
  void apply_update(const Vec3i& c, double delta);
  void classify(size_t i);

  MapConfig cfg_;
  VoxelGrid<float> lo_;
  VoxelGrid<uint8_t> state_;
};

// K x-y slices of the classified map with the trajectory painted on a copy;
// row-major slice_size x slice_size, encoded per cfg.cell_encoding, centered
// on `vehicle_pos`. Never mutates `map`.
std::vector<std::vector<double>> paint_and_slice(const BeliefMap& map,
                                                 const Trajectory& traj,
                                                 const ObservationConfig& cfg,
                                                 const Vec3& vehicle_pos);

// Cells the trajectory passes through (for tests/visualization).
std::vector<Vec3i> trajectory_cells(const BeliefMap& map, const Trajectory& traj);

DangerFeatures danger_features(const BeliefMap& map, const Vec3& vehicle_pos,
                               const DangerConfig& cfg);

}  // namespace afc
