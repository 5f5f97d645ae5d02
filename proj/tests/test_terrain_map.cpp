#include "lsd/geom3d.hpp"
#include "lsd/terrain_map.hpp"
#include "test_util.hpp"

#include <Eigen/SVD>
#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <numbers>

using namespace lsd;

namespace {

GridGeometry small_grid(int rows, int cols, double res = 1.0) {
  GridGeometry g;
  g.origin = Eigen::Vector2d(10.0, -5.0);
  g.resolution = res;
  g.rows = rows;
  g.cols = cols;
  return g;
}

Layer layer_from(const GridGeometry& g, const std::function<double(double, double)>& f) {
  Layer l = Layer::make(g, 0.0, true);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const Eigen::Vector2d p = g.cell_center(r, c);
      l.values(r, c) = f(p.x(), p.y());
    }
  return l;
}

}  // namespace

TEST_CASE("grid geometry centering and cell lookup") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(100, 200), 0.5, 4, 6);
  CHECK(g.center().isApprox(Eigen::Vector2d(100, 200)));
  CHECK(g.cell_center(0, 0).isApprox(Eigen::Vector2d(98.75, 199.25)));
  CHECK(*g.cell_of(g.cell_center(2, 3)) == Eigen::Vector2i(2, 3));
  CHECK(*g.cell_of(g.cell_center(2, 3) + Eigen::Vector2d(0.24, -0.24)) == Eigen::Vector2i(2, 3));
  CHECK(*g.cell_of(g.cell_center(2, 3) + Eigen::Vector2d(0.26, 0.0)) == Eigen::Vector2i(2, 4));
  CHECK_FALSE(g.cell_of(g.cell_center(0, 0) - Eigen::Vector2d(0.26, 0)).has_value());
  CHECK_FALSE(g.cell_of(g.cell_center(3, 5) + Eigen::Vector2d(0, 0.26)).has_value());
  CHECK_THROWS(GridGeometry::centered(Eigen::Vector2d::Zero(), 0.0, 4, 4));
  CHECK_THROWS(GridGeometry::centered(Eigen::Vector2d::Zero(), 1.0, 0, 4));
}

TEST_CASE("elevation raster matches brute-force inverse-distance weighting") {
  const auto g = small_grid(12, 15, 0.7);
  Rng rng(2);
  PointCloud cloud(3, 400);
  for (int i = 0; i < 400; ++i) cloud.col(i) << rng.uniform(8, 22), rng.uniform(-7, 4), rng.uniform(-1, 3);
  cloud.col(7) << g.cell_center(3, 4).x(), g.cell_center(3, 4).y(), 9.0;
  cloud.col(8) << g.cell_center(3, 4).x(), g.cell_center(3, 4).y(), 11.0;
  for (const double power : {1.0, 2.0, 3.0}) {
    const double radius = 1.3;
    const Layer l = rasterize_elevation(cloud, g, radius, power);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) {
        const Eigen::Vector2d ctr = g.cell_center(r, c);
        double ws = 0, zs = 0, exact = 0;
        int n_exact = 0;
        for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
          const double d = (cloud.col(i).head<2>() - ctr).norm();
          if (d > radius) continue;
          if (d == 0.0) {
            exact += cloud(2, i);
            ++n_exact;
            continue;
          }
          ws += 1.0 / std::pow(d, power);
          zs += cloud(2, i) / std::pow(d, power);
        }
        if (n_exact) {
          REQUIRE(l.ok(r, c));
          CHECK(l.values(r, c) == doctest::Approx(exact / n_exact));
        } else if (ws > 0) {
          REQUIRE(l.ok(r, c));
          CHECK(l.values(r, c) == doctest::Approx(zs / ws).epsilon(1e-12));
        } else {
          CHECK_FALSE(l.ok(r, c));
        }
      }
    CHECK(l.values(3, 4) == doctest::Approx(10.0));
  }
  CHECK((rasterize_elevation(PointCloud(3, 0), g, 1.0, 2.0).valid == 0).all());
  CHECK_THROWS(rasterize_elevation(cloud, g, 0.0, 2.0));
}

TEST_CASE("normals and slope of tilted planes") {
  const auto g = small_grid(8, 9, 0.5);
  for (const auto& [a, b] : {std::pair{0.0, 0.0}, std::pair{0.1, 0.0}, std::pair{-0.3, 0.2}, std::pair{1.0, 1.0}}) {
    const Layer e = layer_from(g, [a = a, b = b](double x, double y) { return a * x + b * y + 4.0; });
    const auto ns = normals_and_slope(e, g.resolution);
    const double nz = 1.0 / std::sqrt(1 + a * a + b * b);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) {
        const bool interior = r > 0 && c > 0 && r < g.rows - 1 && c < g.cols - 1;
        CHECK(ns.normal_z.ok(r, c) == interior);
        if (!interior) continue;
        CHECK(ns.normal_z.values(r, c) == doctest::Approx(nz).epsilon(1e-9));
        CHECK(ns.slope.values(r, c) == doctest::Approx(std::atan(std::hypot(a, b))).epsilon(1e-7).scale(1e-7));
      }
  }
  Layer e = layer_from(g, [](double, double) { return 0.0; });
  e.valid(4, 4) = 0;
  const auto ns = normals_and_slope(e, g.resolution);
  for (int r = 3; r <= 5; ++r)
    for (int c = 3; c <= 5; ++c) CHECK_FALSE(ns.slope.ok(r, c));
  CHECK(ns.slope.ok(2, 2));
}

TEST_CASE("pca normal matches the smallest singular vector of the neighborhood") {
  const auto g = small_grid(10, 10, 1.0);
  Rng rng(7);
  Layer e = layer_from(g, [&](double, double) { return rng.normal(); });
  const auto ns = normals_and_slope(e, g.resolution);
  for (int r = 1; r < 9; ++r)
    for (int c = 1; c < 9; ++c) {
      Eigen::Matrix<double, 9, 3> pts;
      for (int k = 0; k < 9; ++k)
        pts.row(k) << g.cell_center(r + k / 3 - 1, c + k % 3 - 1).transpose(), e.values(r + k / 3 - 1, c + k % 3 - 1);
      const Eigen::Matrix<double, 9, 3> centered = pts.rowwise() - pts.colwise().mean();
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
      const double nz = std::abs(svd.matrixV()(2, 2));
      CHECK(ns.normal_z.values(r, c) == doctest::Approx(nz).epsilon(1e-9));
      CHECK(ns.slope.values(r, c) == doctest::Approx(std::acos(nz)).epsilon(1e-7));
    }
}

TEST_CASE("ruggedness of a spike and a ramp") {
  const auto g = small_grid(7, 7);
  Layer spike = layer_from(g, [](double, double) { return 1.0; });
  spike.values(3, 3) = 3.0;
  const Layer rss = tri(spike, TriMode::root_sum_square);
  const Layer mad = tri(spike, TriMode::mean_abs_diff);
  CHECK(rss.values(3, 3) == doctest::Approx(std::sqrt(8.0) * 2.0));
  CHECK(mad.values(3, 3) == doctest::Approx(2.0));
  CHECK(rss.values(2, 3) == doctest::Approx(2.0));
  CHECK(mad.values(2, 3) == doctest::Approx(0.25));
  CHECK(rss.values(1, 1) == doctest::Approx(0.0));
  CHECK_FALSE(rss.ok(0, 3));
  const Layer ramp = layer_from(g, [](double x, double) { return 0.2 * x; });
  CHECK(tri(ramp).values(3, 3) == doctest::Approx(0.2 * std::sqrt(6.0)));
  CHECK(tri(ramp, TriMode::mean_abs_diff).values(3, 3) == doctest::Approx(0.2 * 6.0 / 8.0));
}

TEST_CASE("grass fusion marks cells whose centers project into a mask") {
  CameraModel cam;
  cam = cam.scaled(0.2);
  Pose pose;
  pose.position = Eigen::Vector3d(50, 50, 80);
  pose.orientation = nadir_orientation(0.0);
  const auto g = GridGeometry::centered(Eigen::Vector2d(50, 50), 0.9, 80, 80);
  Mask m = Mask::Zero(cam.height, cam.width);
  const int u0 = 30, u1 = 80, v0 = 20, v1 = 60;
  m.block(v0, u0, v1 - v0 + 1, u1 - u0 + 1).setOnes();
  for (const double ground : {0.0, 10.0}) {
    const Layer invalid = Layer::make(g);
    const std::vector<PosedMask> masks{{m, pose}};
    const Layer grass = fuse_grass_mask(masks, cam, g, invalid, ground);
    // footprint of the pixel block on the plane z = ground
    std::vector<Point2<double>> quad;
    for (const auto& px : {Eigen::Vector2d(u0 - 0.5, v0 - 0.5), Eigen::Vector2d(u1 + 0.5, v0 - 0.5),
                           Eigen::Vector2d(u1 + 0.5, v1 + 0.5), Eigen::Vector2d(u0 - 0.5, v1 + 0.5)})
      quad.push_back(project_to_ground(px, pose, cam, ground)->head<2>());
    if (polygon_area<double>(quad) < 0) std::reverse(quad.begin(), quad.end());
    int inside = 0;
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) {
        const Eigen::Vector2d p = g.cell_center(r, c);
        std::vector<Point2<double>> shrunk, grown;
        // skip cells within a hair of the footprint edge
        const Eigen::Vector2d mid = (quad[0] + quad[2]) / 2;
        for (const auto& q : quad) {
          shrunk.push_back(mid + (q - mid) * 0.999);
          grown.push_back(mid + (q - mid) * 1.001);
        }
        CHECK(grass.ok(r, c));
        if (winding_inside<double>(p, shrunk)) {
          CHECK(grass.values(r, c) == 1.0);
          ++inside;
        } else if (!winding_inside<double>(p, grown)) {
          CHECK(grass.values(r, c) == 0.0);
        }
      }
    CHECK(inside > 100);
  }
  // a second mask adds its footprint (logical or)
  Mask m2 = Mask::Zero(cam.height, cam.width);
  m2.block(70, 100, 6, 6).setOnes();
  const std::vector<PosedMask> both{{m, pose}, {m2, pose}};
  const Layer one = fuse_grass_mask(std::vector<PosedMask>{{m, pose}}, cam, g, Layer::make(g), 0.0);
  const Layer two = fuse_grass_mask(both, cam, g, Layer::make(g), 0.0);
  CHECK(two.values.sum() > one.values.sum());
  CHECK(((two.values - one.values) >= 0).all());
  CHECK_THROWS(fuse_grass_mask(std::vector<PosedMask>{}, cam, g, Layer::make(g), 0.0));
  CHECK_THROWS(fuse_grass_mask(std::vector<PosedMask>{{Mask::Zero(3, 3), pose}}, cam, g, Layer::make(g), 0.0));
}

TEST_CASE("grass fusion projects valid cells at their own elevation") {
  CameraModel cam = CameraModel().scaled(0.2);
  Pose pose;
  pose.position = Eigen::Vector3d(0, 0, 50);
  pose.orientation = nadir_orientation(0.0);
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 61, 61);
  Mask m = Mask::Zero(cam.height, cam.width);
  m.block(0, 0, cam.height, static_cast<Eigen::Index>(cam.cx)).setOnes();  // image left half
  Layer elev = Layer::make(g, 40.0, true);
  const Layer high = fuse_grass_mask(std::vector<PosedMask>{{m, pose}}, cam, g, elev, 0.0);
  const Layer low = fuse_grass_mask(std::vector<PosedMask>{{m, pose}}, cam, g, Layer::make(g), 0.0);
  // closer ground covers less area per pixel block: fewer cells at 10 m range than at 50 m
  CHECK(high.values.sum() < low.values.sum());
  CHECK(high.values.sum() > 0);
}

TEST_CASE("hazard fusion truth table") {
  const auto g = small_grid(1, 6);
  Layer slope = Layer::make(g, 0.0, true), rough = Layer::make(g, 0.0, true), grass = Layer::make(g, 1.0, true);
  const HazardThresholds th;
  slope.values(0, 1) = 0.2;   // steep grass
  rough.values(0, 2) = 0.5;   // rough grass
  grass.values(0, 3) = 0.0;   // smooth non-grass
  slope.valid(0, 4) = 0;      // unevaluable
  grass.valid(0, 5) = 0;      // unknown grass
  const auto hz = fuse_hazards(slope, rough, grass, th);
  CHECK(hz.fused.values(0, 0) == 0.0);
  CHECK(hz.fused.values(0, 1) == 1.0);
  CHECK(hz.binary_slope.values(0, 1) == 1.0);
  CHECK(hz.binary_rough.values(0, 1) == 0.0);
  CHECK(hz.fused.values(0, 2) == 1.0);
  CHECK(hz.binary_rough.values(0, 2) == 1.0);
  CHECK(hz.fused.values(0, 3) == 1.0);
  CHECK(hz.binary_slope.values(0, 3) == 0.0);
  CHECK(hz.fused.values(0, 4) == 1.0);
  CHECK_FALSE(hz.binary_slope.ok(0, 4));
  CHECK(hz.fused.values(0, 5) == 1.0);
  CHECK((hz.fused.valid == 1).all());
  slope.values(0, 0) = th.max_slope;
  rough.values(0, 0) = th.max_tri;
  CHECK(fuse_hazards(slope, rough, grass, th).fused.values(0, 0) == 0.0);
  CHECK_THROWS(fuse_hazards(slope, rough, grass, HazardThresholds{0.0, 0.3}));
}

TEST_CASE("hazard distance against brute force") {
  const auto g = small_grid(20, 25, 0.5);
  Rng rng(4);
  Layer fused = Layer::make(g, 0.0, true);
  std::vector<Eigen::Vector2i> hazards;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      if (rng.uniform() < 0.03) {
        fused.values(r, c) = 1.0;
        hazards.emplace_back(r, c);
      }
  REQUIRE_FALSE(hazards.empty());
  const Layer d = hazard_distance(fused, g.resolution);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& h : hazards) best = std::min(best, std::hypot(h.x() - r, h.y() - c) * g.resolution);
      CHECK(d.values(r, c) == doctest::Approx(best));
    }
  const Layer none = hazard_distance(Layer::make(g, 0.0, true), g.resolution);
  CHECK(std::isinf(none.values(3, 3)));
}

TEST_CASE("layer export and import round trip") {
  const auto g = small_grid(30, 40, 0.5);
  Rng rng(9);
  GridStack s;
  s.geometry = g;
  for (const auto& name : layer_names()) {
    Layer l = Layer::make(g, 0.0, true);
    for (Eigen::Index i = 0; i < l.values.size(); ++i) {
      l.values(i) = rng.uniform(-20, 300);
      if (rng.uniform() < 0.1) l.valid(i) = 0;
    }
    layer_by_name(s, name) = l;
  }
  s.hazard_distance.valid.setOnes();
  s.hazard_distance.values(4, 4) = std::numeric_limits<double>::infinity();
  test::TempDir dir("layers");
  export_layers(s, dir.path());
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) CHECK(e.path().extension() != ".tmp");
  const GridStack back = import_layers(dir.path());
  CHECK(back.geometry.origin.isApprox(g.origin));
  CHECK(back.geometry.resolution == g.resolution);
  CHECK(back.geometry.rows == g.rows);
  for (const auto& name : layer_names()) {
    const Layer& a = layer_by_name(s, name);
    const Layer& b = layer_by_name(back, name);
    std::ifstream in(dir / (name + ".json"));
    const auto side = nlohmann::json::parse(in);
    const double scale = side.at("scale");
    for (Eigen::Index i = 0; i < a.values.size(); ++i) {
      const bool finite = a.valid(i) && std::isfinite(a.values(i));
      if (finite) {
        REQUIRE(b.valid(i));
        CHECK(std::abs(b.values(i) - a.values(i)) <= 0.5 * scale + 1e-9);
      } else if (name == "hazard_distance") {
        CHECK(std::isinf(b.values(i)));
      } else {
        CHECK_FALSE(b.valid(i));
      }
    }
  }
  CHECK_THROWS(layer_by_name(s, "nonsense"));
  std::filesystem::remove(dir / "slope.json");
  CHECK_THROWS(import_layers(dir.path()));
}

TEST_CASE("stack of a flat field with a road strip") {
  const auto g = GridGeometry::centered(Eigen::Vector2d(0, 0), 1.0, 41, 41);
  PointCloud cloud(3, 41 * 41 * 4);
  Rng rng(1);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) cloud.col(i) << rng.uniform(-21, 21), rng.uniform(-21, 21), 0.0;
  CameraModel cam = CameraModel().scaled(0.25);
  Pose pose;
  pose.position = Eigen::Vector3d(0, 0, 60);
  pose.orientation = nadir_orientation(0.0);
  Mask m = Mask::Ones(cam.height, cam.width);
  const std::vector<PosedMask> masks{{m, pose}};
  const GridStack s = build_stack(cloud, g, masks, cam, 0.0, TerrainConfig{});
  for (int r = 1; r < 40; ++r)
    for (int c = 1; c < 40; ++c) {
      REQUIRE(s.slope.ok(r, c));
      CHECK(s.slope.values(r, c) == doctest::Approx(0.0).scale(1));
      CHECK(s.roughness.values(r, c) == doctest::Approx(0.0).scale(1));
      if (s.grass.values(r, c) == 1.0) CHECK(s.fused_hazard.values(r, c) == 0.0);
    }
  // borders lack slope and are hazards; the center is 19 cells from the nearest border cell
  CHECK(s.fused_hazard.values(0, 20) == 1.0);
  CHECK(s.hazard_distance.values(20, 20) == doctest::Approx(20.0));
}
