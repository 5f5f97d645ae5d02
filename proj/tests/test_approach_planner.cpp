#include "lsd/approach_planner.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <functional>
#include <set>

using namespace lsd;

namespace {

// Stack with hand-set elevation and grass; everything that is not grass is a hazard.
GridStack synthetic_stack(const GridGeometry& g, const std::function<double(double, double)>& elev,
                          const std::function<bool(double, double)>& grass) {
  GridStack s;
  s.geometry = g;
  s.elevation = Layer::make(g, 0.0, true);
  s.grass = Layer::make(g, 0.0, true);
  s.fused_hazard = Layer::make(g, 1.0, true);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const Eigen::Vector2d p = g.cell_center(r, c);
      s.elevation.values(r, c) = elev(p.x(), p.y());
      const bool gr = grass(p.x(), p.y());
      s.grass.values(r, c) = gr ? 1.0 : 0.0;
      s.fused_hazard.values(r, c) = gr ? 0.0 : 1.0;
    }
  for (auto* l : {&s.normal_z, &s.slope, &s.roughness, &s.binary_slope, &s.binary_rough}) *l = Layer::make(g, 0.0, true);
  s.hazard_distance = hazard_distance(s.fused_hazard, g.resolution);
  return s;
}

WindEstimate wind_of(const Eigen::Vector2d& v) {
  WindEstimate w;
  w.state = v;
  w.n_measurements = 1;
  return w;
}

// Segment vs closed axis-aligned box, expanded by eps (Liang-Barsky).
bool segment_hits_box(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& lo,
                      const Eigen::Vector2d& hi, double eps) {
  double t0 = 0, t1 = 1;
  const Eigen::Vector2d d = b - a;
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (a[k] < lo[k] - eps || a[k] > hi[k] + eps) return false;
      continue;
    }
    double ta = (lo[k] - eps - a[k]) / d[k], tb = (hi[k] + eps - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

}  // namespace

TEST_CASE("approach distance and loiter radius") {
  const ApproachParams p;
  const double v = 13.0, gam = 4.0 * std::numbers::pi / 180, db = 30.0 * std::numbers::pi / 180;
  const double phi = 11.0 * std::numbers::pi / 180;
  for (const double w : {0.0, 3.0, 7.5}) {
    const auto geo = approach_geometry(p, w);
    CHECK(geo.x_app == doctest::Approx((v * std::cos(gam) - w * std::cos(db)) / (v * std::sin(gam)) * 12.0));
    CHECK(geo.r_loit == doctest::Approx(std::pow(v * std::cos(gam) + w, 2) / (9.81 * std::tan(phi))));
  }
  CHECK(approach_geometry(p, 0.0).x_app == doctest::Approx(12.0 / std::tan(gam)));
  const double w_max = v * std::cos(gam) / std::cos(db);
  CHECK_NOTHROW(approach_geometry(p, w_max * 0.999));
  CHECK_THROWS_AS(approach_geometry(p, w_max), InfeasibleWind);
  CHECK_THROWS_AS(approach_geometry(p, -1.0), std::invalid_argument);
  ApproachParams bad = p;
  bad.gamma_land = 0.0;
  CHECK_THROWS_AS(approach_geometry(bad, 1.0), std::invalid_argument);
}

TEST_CASE("wind estimate is an ewma over associated measurements") {
  WindEstimate est;
  est.beta = 0.25;
  est.association_radius = 100.0;
  const Eigen::Vector2d roi(0, 0);
  const std::vector<Eigen::Vector2d> ms{{4, 0}, {0, 4}, {2, 2}, {-1, 3}};
  Eigen::Vector2d oracle = ms[0];
  est = update_wind(est, ms[0], roi, Eigen::Vector2d(10, 0));
  for (std::size_t i = 1; i < ms.size(); ++i) {
    oracle = 0.25 * ms[i] + 0.75 * oracle;
    est = update_wind(est, ms[i], roi, Eigen::Vector2d(0, 50));
  }
  CHECK(est.state.isApprox(oracle));
  CHECK(est.n_measurements == 4);
  const auto far = update_wind(est, Eigen::Vector2d(100, 100), roi, Eigen::Vector2d(150, 0));
  CHECK(far.state == est.state);
  CHECK(far.n_measurements == 4);
  CHECK(est.direction().isApprox(oracle.normalized()));
  CHECK(est.magnitude() == doctest::Approx(oracle.norm()));
  CHECK(WindEstimate{}.direction() == Eigen::Vector2d::UnitX());
}

TEST_CASE("supercover traversal covers exactly the cells the segment touches") {
  GridGeometry g;
  g.origin = Eigen::Vector2d(-3.2, 1.1);
  g.resolution = 0.8;
  Rng rng(6);
  auto check_segment = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const auto cells = supercover_cells(g, a, b);
    std::set<std::pair<int, int>> got;
    for (const auto& rc : cells) got.emplace(rc.x(), rc.y());
    CHECK(*g.cell_of(a) == cells.front());
    CHECK(*g.cell_of(b) == cells.back());
    for (std::size_t i = 1; i < cells.size(); ++i) CHECK((cells[i] - cells[i - 1]).cwiseAbs().maxCoeff() <= 1);
    for (int r = -5; r < 45; ++r)
      for (int c = -5; c < 45; ++c) {
        const Eigen::Vector2d ctr = g.cell_center(r, c);
        const Eigen::Vector2d lo = ctr - Eigen::Vector2d::Constant(0.5 * g.resolution);
        const Eigen::Vector2d hi = ctr + Eigen::Vector2d::Constant(0.5 * g.resolution);
        if (segment_hits_box(a, b, lo, hi, -1e-9)) CHECK_MESSAGE(got.count({r, c}), "interior cell missing");
        if (got.count({r, c})) CHECK_MESSAGE(segment_hits_box(a, b, lo, hi, 1e-9), "cell not touched");
      }
  };
  g.rows = g.cols = 40;
  for (int k = 0; k < 60; ++k) {
    const Eigen::Vector2d a = g.origin + Eigen::Vector2d(rng.uniform(0, 30), rng.uniform(0, 30));
    const Eigen::Vector2d b = g.origin + Eigen::Vector2d(rng.uniform(0, 30), rng.uniform(0, 30));
    check_segment(a, b);
  }
  // exact diagonal through cell corners adds both corner-touching neighbors
  check_segment(g.cell_center(5, 5), g.cell_center(9, 9));
  const auto diag = supercover_cells(g, g.cell_center(5, 5), g.cell_center(8, 8));
  CHECK(diag.size() == 10);
  CHECK(supercover_cells(g, g.cell_center(2, 3), g.cell_center(2, 3)).size() == 1);
}

TEST_CASE("required clearance relaxes only where the glide path is low") {
  const ApproachParams p;
  CHECK(required_clearance(p, 10.0) == 2.0);
  CHECK(required_clearance(p, 2.5) == 2.0);
  CHECK(required_clearance(p, 1.0) == doctest::Approx(0.5));
  CHECK(required_clearance(p, 0.0) == doctest::Approx(-0.5));
}

TEST_CASE("flat field: the touchdown is the most hazard-free cell") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 301, 301);
  const auto s = synthetic_stack(
      g, [](double, double) { return 3.0; }, [](double x, double y) { return std::abs(x) < 40 && std::abs(y) < 60; });
  const ApproachParams p;
  const Eigen::Vector2d wv(0.0, -4.0);
  const ApproachPlan plan = plan_approach(s, p, wind_of(wv));
  REQUIRE(plan.feasible);
  CHECK(plan.status == "feasible");
  CHECK(plan.candidates_tried == 1);
  // grass spans x in [-39.5, 39.5]: the best cells lie on x = 0 with distance 40
  CHECK(plan.touchdown.x() == doctest::Approx(0.0));
  CHECK(plan.touchdown.y() == doctest::Approx(0.0));
  CHECK(plan.score == doctest::Approx(40.0));
  const auto geo = approach_geometry(p, 4.0);
  CHECK(plan.x_app == doctest::Approx(geo.x_app));
  CHECK(plan.r_loit == doctest::Approx(geo.r_loit));
  CHECK(plan.approach_point.head<2>().isApprox(Eigen::Vector2d(0, -geo.x_app)));
  CHECK(plan.approach_point.z() == doctest::Approx(3.0 + 12.0));
  CHECK((plan.loiter_center.head<2>() - plan.approach_point.head<2>()).norm() == doctest::Approx(geo.r_loit));
  CHECK(plan.loiter_center.head<2>().dot(Eigen::Vector2d(0, 1)) == doctest::Approx(-geo.x_app));
  CHECK(plan.wind_direction.isApprox(Eigen::Vector2d(0, -1)));
  for (const auto& c : plan.clearance_profile) CHECK(c.clearance == doctest::Approx(12.0 * c.distance_to_touchdown / geo.x_app));
  CHECK(plan.min_loiter_clearance == doctest::Approx(12.0));
  CHECK(plan.unverified_cells > 0);  // the loiter circle leaves the grid
  for (const auto& rc : plan.touchdown_cells) CHECK(s.fused_hazard.values(rc.x(), rc.y()) == 0.0);
}

TEST_CASE("an obstacle under the glide path moves the touchdown") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 301, 301);
  // grass field 100 m along the wind (y) by 160 m across; the wind blows toward -y
  auto grass = [](double x, double y) { return std::abs(x) < 80 && std::abs(y) < 50; };
  ApproachParams p;
  const Eigen::Vector2d wv(0.0, -4.0);
  const auto flat = synthetic_stack(g, [](double, double) { return 0.0; }, grass);
  const ApproachPlan first = plan_approach(flat, p, wind_of(wv));
  REQUIRE(first.feasible);
  const Eigen::Vector2d best = first.touchdown.head<2>();
  // 8 m building across the approach ray, 60 m downwind of the best touchdown
  auto elev = [&](double x, double y) {
    const double along = best.y() - y;
    return along > 58 && along < 66 && std::abs(x - best.x()) < 6 ? 8.0 : 0.0;
  };
  const auto s = synthetic_stack(g, elev, grass);
  const ApproachPlan plan = plan_approach(s, p, wind_of(wv));
  REQUIRE_FALSE(plan.failures.empty());
  CHECK(plan.failures.front().gate == Gate::linear_path);
  CHECK(plan.failures.front().clearance < 0);
  REQUIRE(plan.feasible);
  CHECK((plan.touchdown.head<2>() - best).norm() > 1.0);
  // independent clearance check: sample the segment densely
  const Eigen::Vector2d td = plan.touchdown.head<2>();
  const Eigen::Vector2d ap = plan.approach_point.head<2>();
  for (double t = 0.0; t <= 1.0; t += 1e-4) {
    const Eigen::Vector2d q = td + t * (ap - td);
    const auto cell = g.cell_of(q);
    if (!cell) continue;
    const double nominal = p.h_app * t;
    const double clearance = plan.touchdown.z() + nominal - s.elevation.values(cell->x(), cell->y());
    CHECK(clearance >= std::min(p.safety_margin, nominal - p.flare_tolerance) - 1e-9);
  }
}

TEST_CASE("loiter circles over high ground reject every candidate") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 201, 201);
  ApproachParams p;
  p.phi_land = 60.0 * std::numbers::pi / 180;
  p.gamma_land = 10.0 * std::numbers::pi / 180;
  // 8 m wide corridor along the wind axis; 30 m ridges on both sides
  const auto s = synthetic_stack(
      g, [](double x, double) { return std::abs(x) > 4 ? 30.0 : 0.0; },
      [](double x, double y) { return std::abs(x) < 3 && std::abs(y) < 20; });
  const ApproachPlan plan = plan_approach(s, p, wind_of(Eigen::Vector2d(0, -3)));
  CHECK_FALSE(plan.feasible);
  CHECK(plan.status == "all_candidates_rejected");
  REQUIRE_FALSE(plan.failures.empty());
  bool saw_loiter = false;
  for (const auto& f : plan.failures) saw_loiter = saw_loiter || f.gate == Gate::loiter;
  CHECK(saw_loiter);
}

TEST_CASE("touchdown interval must be hazard free along the wind") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 101, 101);
  // grass strip only 12 m long along the wind axis: no 20 m interval fits
  const auto s = synthetic_stack(
      g, [](double, double) { return 0.0; }, [](double x, double y) { return std::abs(x) < 30 && std::abs(y) < 6; });
  const ApproachPlan plan = plan_approach(s, ApproachParams{}, wind_of(Eigen::Vector2d(0, 2)));
  CHECK_FALSE(plan.feasible);
  for (const auto& f : plan.failures) CHECK(f.gate == Gate::touchdown);
  const ApproachPlan across = plan_approach(s, ApproachParams{}, wind_of(Eigen::Vector2d(2, 0)));
  CHECK(across.feasible);
}

TEST_CASE("status codes for wind, empty grass and roi restriction") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 151, 151);
  const auto s = synthetic_stack(
      g, [](double, double) { return 0.0; }, [](double x, double y) { return std::abs(x) < 60 && std::abs(y) < 60; });
  const ApproachPlan storm = plan_approach(s, ApproachParams{}, wind_of(Eigen::Vector2d(20, 0)));
  CHECK(storm.status == "infeasible_wind");
  REQUIRE(storm.failures.size() == 1);
  CHECK(storm.failures[0].gate == Gate::wind);

  const auto bare = synthetic_stack(g, [](double, double) { return 0.0; }, [](double, double) { return false; });
  CHECK(plan_approach(bare, ApproachParams{}, wind_of(Eigen::Vector2d(1, 0))).status == "no_candidate");
  CHECK_THROWS(plan_approach(s, ApproachParams{}, WindEstimate{}));

  const std::vector<Eigen::Vector2d> roi{{20, 20}, {50, 20}, {50, 50}, {20, 50}};
  const ApproachPlan restricted = plan_approach(s, ApproachParams{}, wind_of(Eigen::Vector2d(0, 1)), roi);
  REQUIRE(restricted.candidates_tried >= 1);
  if (restricted.feasible) {
    CHECK(restricted.touchdown.x() >= 20);
    CHECK(restricted.touchdown.x() <= 50);
    CHECK(restricted.touchdown.y() >= 20);
    CHECK(restricted.touchdown.y() <= 50);
  }
  for (const auto& f : restricted.failures) {
    const Eigen::Vector2d xy = g.cell_center(f.candidate.x(), f.candidate.y());
    CHECK(xy.x() >= 20);
    CHECK(xy.x() <= 50);
  }
}

TEST_CASE("plan json and overlay") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 301, 301);
  const auto s = synthetic_stack(
      g, [](double, double) { return 0.0; }, [](double x, double y) { return std::abs(x) < 60 && std::abs(y) < 60; });
  const ApproachPlan plan = plan_approach(s, ApproachParams{}, wind_of(Eigen::Vector2d(3, 0)));
  REQUIRE(plan.feasible);
  const auto j = nlohmann::json::parse(plan_to_json(plan));
  CHECK(j.at("feasible") == true);
  CHECK(j.at("status") == "feasible");
  CHECK(j.at("touchdown")[0].get<double>() == doctest::Approx(plan.touchdown.x()));
  CHECK(j.at("clearance_profile").size() == plan.clearance_profile.size());
  const RgbImage img = plan_overlay(s, plan);
  CHECK(img.rows() == g.rows);
  const auto td = plan.touchdown_cell;
  CHECK(img.at(g.rows - 1 - td.x(), td.y()) == Rgb{30, 220, 30});
  const auto far = g.cell_of(Eigen::Vector2d(-140, -140));
  CHECK(img.at(g.rows - 1 - far->x(), far->y()) == Rgb{0, 0, 0});
}
