#include "lsd/approach_planner.hpp"

#include "lsd/geom3d.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace lsd {

using json = nlohmann::json;

void ApproachParams::validate() const {
  const double half_pi = std::numbers::pi / 2;
  if (!(gamma_land > 0 && gamma_land < half_pi)) throw std::invalid_argument("gamma_land must be in (0, pi/2)");
  if (!(phi_land > 0 && phi_land < half_pi)) throw std::invalid_argument("phi_land must be in (0, pi/2)");
  if (!(v_land > 0)) throw std::invalid_argument("v_land must be positive");
  if (!(h_app > 0)) throw std::invalid_argument("h_app must be positive");
  if (!(g > 0)) throw std::invalid_argument("g must be positive");
  if (!(delta_td >= 0 && safety_margin >= 0 && flare_tolerance >= 0))
    throw std::invalid_argument("touch-down interval, margin and tolerance must be non-negative");
  if (max_candidates < 1) throw std::invalid_argument("max_candidates must be >= 1");
}

ApproachGeometry approach_geometry(const ApproachParams& p, double w) {
  p.validate();
  if (!(w >= 0)) throw std::invalid_argument("wind speed must be non-negative");
  const double num = p.v_land * std::cos(p.gamma_land) - w * std::cos(p.delta_beta_w);
  if (!(num > 0)) throw InfeasibleWind("wind too strong for the approach: no positive approach distance");
  const double ground = p.v_land * std::cos(p.gamma_land) + w;
  return {num / (p.v_land * std::sin(p.gamma_land)) * p.h_app, ground * ground / (p.g * std::tan(p.phi_land))};
}

Eigen::Vector2d WindEstimate::direction() const {
  const double n = state.norm();
  return n > 0 ? Eigen::Vector2d(state / n) : Eigen::Vector2d::UnitX();
}

WindEstimate update_wind(WindEstimate est, const Eigen::Vector2d& m, const Eigen::Vector2d& roi_center,
                         const Eigen::Vector2d& pos) {
  if ((pos - roi_center).norm() > est.association_radius) return est;
  est.state = est.n_measurements == 0 ? m : Eigen::Vector2d(est.beta * m + (1.0 - est.beta) * est.state);
  ++est.n_measurements;
  return est;
}

std::vector<Eigen::Vector2i> supercover_cells(const GridGeometry& g, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  // Continuous cell coordinates: cell c spans [c, c + 1).
  const Eigen::Vector2d p0 = (a - g.origin) / g.resolution + Eigen::Vector2d::Constant(0.5);
  const Eigen::Vector2d p1 = (b - g.origin) / g.resolution + Eigen::Vector2d::Constant(0.5);
  int c = static_cast<int>(std::floor(p0.x()));
  int r = static_cast<int>(std::floor(p0.y()));
  const int c_end = static_cast<int>(std::floor(p1.x()));
  const int r_end = static_cast<int>(std::floor(p1.y()));
  const Eigen::Vector2d d = p1 - p0;
  const int sx = d.x() > 0 ? 1 : -1;
  const int sy = d.y() > 0 ? 1 : -1;
  const double inf = std::numeric_limits<double>::infinity();
  const double tdx = d.x() != 0 ? 1.0 / std::abs(d.x()) : inf;
  const double tdy = d.y() != 0 ? 1.0 / std::abs(d.y()) : inf;
  double tx = d.x() != 0 ? (sx > 0 ? (c + 1 - p0.x()) : (p0.x() - c)) * tdx : inf;
  double ty = d.y() != 0 ? (sy > 0 ? (r + 1 - p0.y()) : (p0.y() - r)) * tdy : inf;
  std::vector<Eigen::Vector2i> out{{r, c}};
  const int steps = std::abs(c_end - c) + std::abs(r_end - r);
  for (int i = 0; i < steps && (c != c_end || r != r_end); ++i) {
    if (std::abs(tx - ty) < 1e-12) {
      out.emplace_back(r, c + sx);
      out.emplace_back(r + sy, c);
      c += sx;
      r += sy;
      tx += tdx;
      ty += tdy;
      ++i;
    } else if (tx < ty) {
      c += sx;
      tx += tdx;
    } else {
      r += sy;
      ty += tdy;
    }
    out.emplace_back(r, c);
  }
  return out;
}

std::string gate_name(Gate gate) {
  switch (gate) {
    case Gate::touchdown: return "touchdown";
    case Gate::linear_path: return "linear_path";
    case Gate::loiter: return "loiter";
    case Gate::wind: return "wind";
  }
  return "unknown";
}

double required_clearance(const ApproachParams& p, double nominal) {
  return std::min(p.safety_margin, nominal - p.flare_tolerance);
}

namespace {

bool in_grid(const GridGeometry& g, const Eigen::Vector2i& rc) { return g.inside(rc.x(), rc.y()); }

bool hazard_free(const GridStack& s, const Eigen::Vector2i& rc) {
  return in_grid(s.geometry, rc) && s.fused_hazard.values(rc.x(), rc.y()) == 0.0;
}

bool elevation_known(const GridStack& s, const Eigen::Vector2i& rc) {
  return in_grid(s.geometry, rc) && s.elevation.ok(rc.x(), rc.y());
}

// Smallest segment parameter t in [0, 1] at which a + t (b - a) lies in cell rc.
double entry_parameter(const GridGeometry& g, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                       const Eigen::Vector2i& rc) {
  const Eigen::Vector2d center = g.cell_center(rc.x(), rc.y());
  const Eigen::Vector2d lo = center - Eigen::Vector2d::Constant(0.5 * g.resolution);
  const Eigen::Vector2d hi = center + Eigen::Vector2d::Constant(0.5 * g.resolution);
  double t0 = 0.0;
  double t1 = 1.0;
  const Eigen::Vector2d d = b - a;
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) continue;
    double ta = (lo[k] - a[k]) / d[k];
    double tb = (hi[k] - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1 + 1e-12 ? t0 : 0.0;
}

std::vector<Eigen::Vector2i> circle_cells(const GridGeometry& g, const Eigen::Vector2d& center, double radius) {
  const int n = std::max(16, static_cast<int>(std::ceil(2 * std::numbers::pi * radius / (0.5 * g.resolution))));
  std::set<std::pair<int, int>> seen;
  std::vector<Eigen::Vector2i> out;
  Eigen::Vector2d prev = center + Eigen::Vector2d(radius, 0);
  for (int i = 1; i <= n; ++i) {
    const double a = 2 * std::numbers::pi * i / n;
    const Eigen::Vector2d cur = center + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
    for (const auto& rc : supercover_cells(g, prev, cur))
      if (seen.emplace(rc.x(), rc.y()).second) out.push_back(rc);
    prev = cur;
  }
  return out;
}

double mean_distance(const GridStack& s, std::span<const Eigen::Vector2i> cells) {
  const double cap = std::max(s.geometry.rows, s.geometry.cols) * s.geometry.resolution;
  double sum = 0.0;
  int n = 0;
  for (const auto& rc : cells) {
    if (!in_grid(s.geometry, rc)) continue;
    sum += std::min(cap, s.hazard_distance.values(rc.x(), rc.y()));
    ++n;
  }
  return n > 0 ? sum / n : -1.0;
}

}  // namespace

ApproachPlan plan_approach(const GridStack& s, const ApproachParams& params, const WindEstimate& wind,
                           std::span<const Eigen::Vector2d> roi_polygon) {
  params.validate();
  if (wind.n_measurements < 1) throw std::invalid_argument("plan_approach needs at least one wind measurement");
  const GridGeometry& g = s.geometry;
  ApproachPlan plan;
  plan.wind_direction = wind.direction();
  plan.wind_speed = wind.magnitude();
  try {
    const auto geo = approach_geometry(params, plan.wind_speed);
    plan.x_app = geo.x_app;
    plan.r_loit = geo.r_loit;
  } catch (const InfeasibleWind&) {
    plan.status = "infeasible_wind";
    plan.failures.push_back({Eigen::Vector2i::Zero(), Gate::wind, Eigen::Vector2i::Zero(), 0.0});
    return plan;
  }

  struct Cand {
    double distance;
    double center_d2;
    int index;
  };
  std::vector<Cand> cands;
  const Eigen::Vector2d grid_center = g.center();
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      if (s.grass.values(r, c) == 0.0 || s.fused_hazard.values(r, c) != 0.0 || !s.elevation.ok(r, c)) continue;
      const Eigen::Vector2d xy = g.cell_center(r, c);
      if (!roi_polygon.empty() && !winding_inside<double>(xy, roi_polygon)) continue;
      cands.push_back({s.hazard_distance.values(r, c), (xy - grid_center).squaredNorm(), r * g.cols + c});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.distance != b.distance) return a.distance > b.distance;
    if (a.center_d2 != b.center_d2) return a.center_d2 < b.center_d2;
    return a.index < b.index;
  });
  if (cands.empty()) {
    plan.status = "no_candidate";
    return plan;
  }

  const Eigen::Vector2d w = plan.wind_direction;
  const Eigen::Vector2d perp(-w.y(), w.x());
  const int limit = std::min<int>(params.max_candidates, static_cast<int>(cands.size()));
  for (int k = 0; k < limit; ++k) {
    ++plan.candidates_tried;
    const Eigen::Vector2i td(cands[k].index / g.cols, cands[k].index % g.cols);
    const Eigen::Vector2d td_xy = g.cell_center(td.x(), td.y());
    const double td_z = s.elevation.values(td.x(), td.y());

    // (1) touch-down interval along the approach axis
    const auto td_cells = supercover_cells(g, td_xy - params.delta_td * w, td_xy + params.delta_td * w);
    const auto blocked = std::find_if(td_cells.begin(), td_cells.end(),
                                      [&](const Eigen::Vector2i& rc) { return !hazard_free(s, rc); });
    if (blocked != td_cells.end()) {
      plan.failures.push_back({td, Gate::touchdown, *blocked, -params.safety_margin});
      continue;
    }

    // (2) linear path from the approach point down to the touch-down point
    const Eigen::Vector2d ap_xy = td_xy + plan.x_app * w;
    auto path = supercover_cells(g, ap_xy, td_xy);
    std::vector<ClearanceSample> profile;
    int unverified = 0;
    std::optional<CandidateFailure> fail;
    for (const auto& rc : path) {
      if (!elevation_known(s, rc)) {
        ++unverified;
        continue;
      }
      // Lowest nominal altitude inside the cell: the point nearest the touch-down.
      const double t = entry_parameter(g, td_xy, ap_xy, rc);
      const double dist = t * plan.x_app;
      const double nominal = params.h_app * dist / plan.x_app;
      const double clearance = td_z + nominal - s.elevation.values(rc.x(), rc.y());
      profile.push_back({dist, clearance, rc});
      const double need = required_clearance(params, nominal);
      if (clearance < need && !fail) fail = CandidateFailure{td, Gate::linear_path, rc, clearance - need};
    }
    if (fail) {
      plan.failures.push_back(*fail);
      continue;
    }

    // (3) loiter-down circle tangent to the approach axis at the approach point
    const auto left = circle_cells(g, ap_xy + plan.r_loit * perp, plan.r_loit);
    const auto right = circle_cells(g, ap_xy - plan.r_loit * perp, plan.r_loit);
    const bool use_left = mean_distance(s, left) >= mean_distance(s, right);
    const auto& circle = use_left ? left : right;
    const Eigen::Vector2d loiter_xy = ap_xy + (use_left ? 1.0 : -1.0) * plan.r_loit * perp;
    double min_loiter = std::numeric_limits<double>::infinity();
    for (const auto& rc : circle) {
      if (!elevation_known(s, rc)) {
        ++unverified;
        continue;
      }
      const double clearance = td_z + params.h_app - s.elevation.values(rc.x(), rc.y());
      min_loiter = std::min(min_loiter, clearance);
      if (clearance < params.safety_margin && !fail)
        fail = CandidateFailure{td, Gate::loiter, rc, clearance - params.safety_margin};
    }
    if (fail) {
      plan.failures.push_back(*fail);
      continue;
    }

    plan.feasible = true;
    plan.status = "feasible";
    plan.touchdown = Eigen::Vector3d(td_xy.x(), td_xy.y(), td_z);
    plan.touchdown_cell = td;
    plan.approach_point = Eigen::Vector3d(ap_xy.x(), ap_xy.y(), td_z + params.h_app);
    plan.loiter_center = Eigen::Vector3d(loiter_xy.x(), loiter_xy.y(), td_z + params.h_app);
    plan.score = cands[k].distance;
    plan.touchdown_cells = td_cells;
    plan.path_cells = std::move(path);
    plan.loiter_cells = circle;
    plan.clearance_profile = std::move(profile);
    plan.min_loiter_clearance = min_loiter;
    plan.unverified_cells = unverified;
    return plan;
  }
  plan.status = "all_candidates_rejected";
  return plan;
}

namespace {

json vec(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
json cell(const Eigen::Vector2i& v) { return {v.x(), v.y()}; }

}  // namespace

std::string plan_to_json(const ApproachPlan& p) {
  json profile = json::array();
  for (const auto& c : p.clearance_profile) profile.push_back({{"distance_to_touchdown", c.distance_to_touchdown},
                                                               {"clearance", c.clearance},
                                                               {"cell", cell(c.cell)}});
  json failures = json::array();
  for (const auto& f : p.failures)
    failures.push_back(
        {{"candidate", cell(f.candidate)}, {"gate", gate_name(f.gate)}, {"cell", cell(f.cell)}, {"deficit", f.clearance}});
  const double score = std::isfinite(p.score) ? p.score : -1.0;
  json j = {{"feasible", p.feasible},
            {"status", p.status},
            {"touchdown", vec(p.touchdown)},
            {"touchdown_cell", cell(p.touchdown_cell)},
            {"approach_point", vec(p.approach_point)},
            {"loiter_center", vec(p.loiter_center)},
            {"loiter_radius", p.r_loit},
            {"x_app", p.x_app},
            {"wind_speed", p.wind_speed},
            {"wind_direction", {p.wind_direction.x(), p.wind_direction.y()}},
            {"score", score},
            {"score_is_infinite", !std::isfinite(p.score)},
            {"min_loiter_clearance", std::isfinite(p.min_loiter_clearance) ? p.min_loiter_clearance : -1.0},
            {"unverified_cells", p.unverified_cells},
            {"candidates_tried", p.candidates_tried},
            {"clearance_profile", profile},
            {"failures", failures}};
  return j.dump(2);
}

RgbImage plan_overlay(const GridStack& s, const ApproachPlan& p, double cap) {
  const auto& g = s.geometry;
  RgbImage img(g.rows, g.cols);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const double d = std::min(cap, s.hazard_distance.values(r, c));
      const auto v = static_cast<std::uint8_t>(std::lround(255.0 * d / cap));
      img.set(g.rows - 1 - r, c, {v, v, v});
    }
  }
  auto paint = [&](const std::vector<Eigen::Vector2i>& cells, Rgb color) {
    for (const auto& rc : cells)
      if (g.inside(rc.x(), rc.y())) img.set(g.rows - 1 - rc.x(), rc.y(), color);
  };
  paint(p.loiter_cells, {40, 80, 255});
  paint(p.path_cells, {230, 30, 30});
  paint(p.touchdown_cells, {30, 220, 30});
  return img;
}

}  // namespace lsd
