#pragma once

#include "lsd/image.hpp"
#include "lsd/terrain_map.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsd {

struct ApproachParams {
  double v_land = 13.0;                               // m/s
  double gamma_land = 4.0 * std::numbers::pi / 180;   // flight path angle
  double delta_beta_w = 30.0 * std::numbers::pi / 180;
  double h_app = 12.0;                                // m
  double phi_land = 11.0 * std::numbers::pi / 180;    // bank angle
  double delta_td = 10.0;                             // touch-down uncertainty (m)
  double g = 9.81;
  double safety_margin = 2.0;                         // m
  /// Ground within this height above the touch-down elevation is tolerated where
  /// the nominal glide path is lower than the safety margin.
  double flare_tolerance = 0.5;
  int max_candidates = 500;

  void validate() const;
};

class InfeasibleWind : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ApproachGeometry {
  double x_app = 0.0;   // horizontal approach distance (m)
  double r_loit = 0.0;  // loiter radius (m)
};

/// x_app = (v cos(gamma) - w cos(dbeta)) / (v sin(gamma)) * h_app,
/// R_loit = (v cos(gamma) + w)^2 / (g tan(phi)). Throws InfeasibleWind when the
/// numerator of x_app is not positive.
ApproachGeometry approach_geometry(const ApproachParams& params, double wind_speed);

/// EWMA over wind measurements (air velocity, m/s) taken near a ROI.
struct WindEstimate {
  double beta = 0.2;
  double association_radius = 150.0;
  Eigen::Vector2d state = Eigen::Vector2d::Zero();
  int n_measurements = 0;

  double magnitude() const { return state.norm(); }
  /// Unit wind direction; +x for a calm estimate.
  Eigen::Vector2d direction() const;
};

WindEstimate update_wind(WindEstimate est, const Eigen::Vector2d& measurement, const Eigen::Vector2d& roi_center,
                         const Eigen::Vector2d& measurement_pos);

/// Cells (row, col) touched by the segment a-b in the grid's xy frame (every cell
/// the segment passes through, including corner-touching neighbors). Cells may lie
/// outside the grid.
std::vector<Eigen::Vector2i> supercover_cells(const GridGeometry& g, const Eigen::Vector2d& a, const Eigen::Vector2d& b);

enum class Gate { touchdown, linear_path, loiter, wind };

std::string gate_name(Gate gate);

struct CandidateFailure {
  Eigen::Vector2i candidate;  // (row, col)
  Gate gate = Gate::touchdown;
  Eigen::Vector2i cell;       // offending cell
  double clearance = 0.0;     // altitude above the cell minus the required margin (negative)
};

struct ClearanceSample {
  double distance_to_touchdown = 0.0;  // horizontal, m
  double clearance = 0.0;              // path altitude minus cell elevation (m)
  Eigen::Vector2i cell;
};

struct ApproachPlan {
  bool feasible = false;
  std::string status;  // "feasible", "no_candidate", "infeasible_wind", "all_candidates_rejected"
  Eigen::Vector3d touchdown = Eigen::Vector3d::Zero();
  Eigen::Vector2i touchdown_cell = Eigen::Vector2i::Zero();
  Eigen::Vector3d approach_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d loiter_center = Eigen::Vector3d::Zero();
  Eigen::Vector2d wind_direction = Eigen::Vector2d::UnitX();
  double wind_speed = 0.0;
  double x_app = 0.0;
  double r_loit = 0.0;
  double score = 0.0;  // hazard distance at the touch-down cell
  std::vector<Eigen::Vector2i> touchdown_cells;
  std::vector<Eigen::Vector2i> path_cells;
  std::vector<Eigen::Vector2i> loiter_cells;
  std::vector<ClearanceSample> clearance_profile;  // linear path, ordered from the approach point
  double min_loiter_clearance = 0.0;
  int unverified_cells = 0;  // outside the grid or without valid elevation
  int candidates_tried = 0;
  std::vector<CandidateFailure> failures;
};

/// Required clearance above a path cell whose nominal height above the touch-down
/// elevation is `nominal`: min(margin, nominal - flare_tolerance).
double required_clearance(const ApproachParams& params, double nominal);

/// Tries grass, hazard-free cells in order of decreasing hazard distance (ties:
/// nearer the grid center, then row-major) and returns the first that passes the
/// touch-down, linear-path and loiter-circle gates. Candidates are restricted to
/// `roi_polygon` (xy, boundary inclusive) when given.
ApproachPlan plan_approach(const GridStack& stack, const ApproachParams& params, const WindEstimate& wind,
                           std::span<const Eigen::Vector2d> roi_polygon = {});

std::string plan_to_json(const ApproachPlan& plan);

/// Hazard distance in gray (capped at `cap` m, north up) with touch-down cells in
/// green, the linear path in red and the loiter circle in blue.
RgbImage plan_overlay(const GridStack& stack, const ApproachPlan& plan, double cap = 50.0);

}  // namespace lsd
