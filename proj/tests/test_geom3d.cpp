#include "lsd/geom3d.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <numbers>

using namespace lsd;

namespace {

std::vector<Pose> strip_poses(int n, double spacing, double z) {
  std::vector<Pose> poses(n);
  for (int i = 0; i < n; ++i) {
    poses[i].position = Eigen::Vector3d(spacing * i, 0.0, z);
    poses[i].orientation = nadir_orientation(0.0);
  }
  return poses;
}

FeatureTrack observe(const Eigen::Vector3d& p, std::span<const Pose> poses, const CameraModel& cam, Rng* noise,
                     double sigma) {
  FeatureTrack t;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto px = project(cam, poses[i], p);
    if (!px) continue;
    if (noise) *px += Eigen::Vector2d(noise->normal(), noise->normal()) * sigma;
    t.observations.push_back({static_cast<int>(i), *px});
  }
  return t;
}

double ray_distance_sq(const Eigen::Vector3d& p, const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
  const Eigen::Vector3d r = p - c;
  return (r - d * d.dot(r)).squaredNorm();
}

template <typename T>
bool even_odd_inside(const Point2<T>& p, std::span<const Point2<T>> poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
      in = !in;
  }
  return in;
}

}  // namespace

TEST_CASE("noise-free triangulation recovers the point") {
  const CameraModel cam;
  const auto poses = strip_poses(5, 12.0, 100.0);
  const Eigen::Vector3d p(20.0, 7.0, 3.5);
  const FeatureTrack t = observe(p, poses, cam, nullptr, 0.0);
  REQUIRE(t.observations.size() == 5);
  const Triangulation tri = triangulate(t, poses, cam);
  CHECK_FALSE(tri.degenerate);
  CHECK((tri.point - p).norm() < 1e-9);
  CHECK(tri.residual < 1e-9);
}

TEST_CASE("noisy triangulation minimizes the summed squared ray distance") {
  const CameraModel cam;
  const auto poses = strip_poses(6, 10.0, 90.0);
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector3d p(rng.uniform(10, 40), rng.uniform(-20, 20), rng.uniform(-5, 10));
    const FeatureTrack t = observe(p, poses, cam, &rng, 1.0);
    const Triangulation tri = triangulate(t, poses, cam);
    REQUIRE_FALSE(tri.degenerate);
    std::vector<Eigen::Vector3d> c, d;
    for (const auto& o : t.observations) {
      c.push_back(poses[o.frame_id].position);
      d.push_back(ray_direction(cam, poses[o.frame_id], o.pixel));
    }
    auto cost = [&](const Eigen::Vector3d& x) {
      double s = 0;
      for (std::size_t i = 0; i < c.size(); ++i) s += ray_distance_sq(x, c[i], d[i]);
      return s;
    };
    const double best = cost(tri.point);
    for (int j = 0; j < 50; ++j) {
      const Eigen::Vector3d step = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 0.05;
      CHECK(cost(tri.point + step) >= best - 1e-12);
    }
    CHECK(tri.residual == doctest::Approx(std::sqrt(best / static_cast<double>(c.size()))));
  }
}

TEST_CASE("triangulation flags short baselines and parallel rays") {
  const CameraModel cam;
  auto poses = strip_poses(3, 0.2, 100.0);
  const FeatureTrack t = observe(Eigen::Vector3d(0.2, 0.0, 0.0), poses, cam, nullptr, 0.0);
  CHECK(triangulate(t, poses, cam, 0.01).degenerate);
  CHECK_FALSE(triangulate(t, poses, cam, 0.001).degenerate);

  // identical rays from a single center: singular normal equations
  for (auto& p : poses) p.position = Eigen::Vector3d(0, 0, 100);
  const FeatureTrack same = observe(Eigen::Vector3d(3, 4, 0), poses, cam, nullptr, 0.0);
  CHECK(triangulate(same, poses, cam).degenerate);

  FeatureTrack single;
  single.observations.push_back({0, Eigen::Vector2d(10, 10)});
  CHECK(triangulate(single, poses, cam).degenerate);
  FeatureTrack bad;
  bad.observations = {{0, Eigen::Vector2d(1, 1)}, {7, Eigen::Vector2d(1, 1)}};
  CHECK_THROWS_AS(triangulate(bad, poses, cam), std::out_of_range);
}

TEST_CASE("coarse depth is the inverse-distance weighted height of the nearest tracks") {
  Rng rng(6);
  std::vector<FeatureTrack> tracks;
  for (int i = 0; i < 30; ++i) {
    FeatureTrack t;
    t.track_id = i;
    const int len = 2 + static_cast<int>(rng.index(4));
    for (int f = 0; f < len; ++f) t.observations.push_back({f, Eigen::Vector2d(rng.uniform(0, 700), rng.uniform(0, 450))});
    t.triangulated_point = Eigen::Vector3d(0, 0, rng.uniform(-3, 12));
    tracks.push_back(t);
  }
  const CameraModel cam;
  for (const double power : {1.0, 2.0}) {
    DepthQueryConfig cfg;
    cfg.idw_power = power;
    for (int q = 0; q < 20; ++q) {
      const Eigen::Vector2d px(rng.uniform(0, 700), rng.uniform(0, 450));
      std::vector<std::pair<double, double>> dz;
      for (const auto& t : tracks)
        if (static_cast<int>(t.observations.size()) >= cfg.min_track_length)
          dz.push_back({(t.observations[1].pixel - px).norm(), t.triangulated_point->z()});
      std::sort(dz.begin(), dz.end());
      double ws = 0, zs = 0;
      for (int i = 0; i < cfg.n; ++i) {
        const double w = 1.0 / (std::pow(dz[i].first, power) + cfg.epsilon);
        ws += w;
        zs += w * dz[i].second;
      }
      const auto h = coarse_depth(px, 1, tracks, {}, cam, cfg);
      REQUIRE(h.has_value());
      CHECK(*h == doctest::Approx(zs / ws).epsilon(1e-12));
      CHECK_FALSE(coarse_depth(px, 1, TrackStore(), cfg).has_value());
    }
  }
  DepthQueryConfig cfg;
  CHECK_FALSE(coarse_depth(Eigen::Vector2d(1, 1), 99, tracks, {}, cam, cfg).has_value());
  const Eigen::Vector2d on = tracks[0].observations[0].pixel;
  if (tracks[0].observations.size() >= 3) CHECK(*coarse_depth(on, 0, tracks, {}, cam, cfg) == tracks[0].triangulated_point->z());
  cfg.n = 0;
  CHECK_THROWS(coarse_depth(on, 0, tracks, {}, cam, cfg));
}

TEST_CASE("track store triangulates incrementally and matches the span query") {
  const CameraModel cam;
  const auto poses = strip_poses(6, 10.0, 80.0);
  Rng rng(2);
  std::vector<FeatureTrack> tracks;
  for (int i = 0; i < 40; ++i) {
    FeatureTrack t = observe(Eigen::Vector3d(rng.uniform(0, 50), rng.uniform(-30, 30), 2.0), poses, cam, nullptr, 0.0);
    t.track_id = 100 + i;
    tracks.push_back(t);
  }
  DepthQueryConfig cfg;
  TrackStore store;
  for (int f = 0; f < 6; ++f) {
    for (const auto& t : tracks)
      if (const auto* o = t.in_frame(f)) store.add_observation(t.track_id, f, o->pixel);
    store.refresh(poses, cam, cfg);
    for (std::size_t i : store.in_frame(f)) {
      const auto& t = store.tracks()[i];
      CHECK(t.in_frame(f) != nullptr);
      if (static_cast<int>(t.observations.size()) >= cfg.min_track_length) {
        REQUIRE(t.triangulated_point.has_value());
        CHECK(t.triangulated_point->z() == doctest::Approx(2.0));
      } else {
        CHECK_FALSE(t.triangulated_point.has_value());
      }
    }
  }
  const Eigen::Vector2d px(300, 200);
  const auto a = coarse_depth(px, 4, store, cfg);
  const auto b = coarse_depth(px, 4, tracks, poses, cam, cfg);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(*a == doctest::Approx(*b));
  CHECK(*a == doctest::Approx(2.0));
  CHECK_THROWS(store.add_observation(100, 2, px));
  CHECK(store.in_frame(77).empty());
}

TEST_CASE("ground projection of pixel rays") {
  const CameraModel cam;
  Pose pose;
  pose.position = Eigen::Vector3d(40, 60, 100);
  pose.orientation = nadir_orientation(0.7);
  const auto c = project_to_ground(Eigen::Vector2d(cam.cx, cam.cy), pose, cam, 10.0);
  REQUIRE(c.has_value());
  CHECK((*c - Eigen::Vector3d(40, 60, 10)).norm() < 1e-9);
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d px(rng.uniform(0, cam.width - 1), rng.uniform(0, cam.height - 1));
    const auto g = project_to_ground(px, pose, cam, -4.0);
    REQUIRE(g.has_value());
    CHECK(g->z() == -4.0);
    CHECK((*project(cam, pose, *g) - px).norm() < 1e-8);
  }
  CHECK_FALSE(project_to_ground(Eigen::Vector2d(cam.cx, cam.cy), pose, cam, 150.0).has_value());
  Pose level = pose;
  level.orientation = nadir_orientation(0.0, std::numbers::pi / 2);
  CHECK_FALSE(project_to_ground(Eigen::Vector2d(cam.cx, cam.cy), level, cam, 0.0).has_value());
}

TEST_CASE("polygon area sign and convex hull supporting lines") {
  using P = Point2<double>;
  const std::vector<P> sq{P(0, 0), P(2, 0), P(2, 3), P(0, 3)};
  CHECK(polygon_area<double>(sq) == doctest::Approx(6.0));
  const std::vector<P> cw(sq.rbegin(), sq.rend());
  CHECK(polygon_area<double>(cw) == doctest::Approx(-6.0));

  Rng rng(8);
  for (int k = 0; k < 30; ++k) {
    std::vector<P> pts;
    for (int i = 0; i < 40; ++i) pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5));
    pts.push_back(pts[3]);
    const auto hull = convex_hull<double>(pts);
    REQUIRE(hull.size() >= 3);
    CHECK(polygon_area<double>(hull) > 0);
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const P& a = hull[i];
      const P& b = hull[(i + 1) % hull.size()];
      CHECK(std::find(pts.begin(), pts.end(), a) != pts.end());
      for (const auto& p : pts) CHECK(cross2<double>(b - a, p - a) >= -1e-12);
      CHECK(cross2<double>(b - a, hull[(i + 2) % hull.size()] - b) > 0);
    }
  }
  const std::vector<P> line{P(0, 0), P(1, 1), P(2, 2), P(3, 3)};
  CHECK(convex_hull<double>(line).size() == 2);
}

TEST_CASE("minimum-area rectangle against an angle sweep") {
  using P = Point2<double>;
  Rng rng(10);
  for (int k = 0; k < 15; ++k) {
    std::vector<P> pts;
    const double rot = rng.uniform(0, std::numbers::pi);
    const Eigen::Rotation2Dd R(rot);
    for (int i = 0; i < 50; ++i) pts.push_back(R * P(rng.uniform(-8, 8), rng.uniform(-2, 2)) + P(30, -4));
    const auto rect = min_area_rect<double>(pts);
    const double area = polygon_area<double>(rect);
    CHECK(area > 0);
    for (int i = 0; i < 4; ++i) {
      const P e1 = rect[(i + 1) % 4] - rect[i];
      const P e2 = rect[(i + 2) % 4] - rect[(i + 1) % 4];
      CHECK(std::abs(e1.dot(e2)) < 1e-9 * e1.norm() * e2.norm() + 1e-12);
    }
    for (const auto& p : pts) CHECK(winding_inside<double>(p, rect));
    double sweep = std::numeric_limits<double>::infinity();
    for (double a = 0; a < std::numbers::pi / 2; a += 1e-4) {
      const P u(std::cos(a), std::sin(a));
      const P v(-u.y(), u.x());
      double lu = 1e18, hu = -1e18, lv = 1e18, hv = -1e18;
      for (const auto& p : pts) {
        lu = std::min(lu, p.dot(u));
        hu = std::max(hu, p.dot(u));
        lv = std::min(lv, p.dot(v));
        hv = std::max(hv, p.dot(v));
      }
      sweep = std::min(sweep, (hu - lu) * (hv - lv));
    }
    CHECK(area <= sweep + 1e-9);
    CHECK(area == doctest::Approx(sweep).epsilon(1e-3));
  }
  const std::vector<P> collinear{P(0, 0), P(1, 0), P(2, 0)};
  CHECK_THROWS(min_area_rect<double>(collinear));
}

TEST_CASE("winding number agrees with ray casting on simple polygons") {
  using P = Point2<float>;
  Rng rng(12);
  for (int k = 0; k < 10; ++k) {
    std::vector<P> star;
    const int n = 7 + static_cast<int>(rng.index(8));
    for (int i = 0; i < n; ++i) {
      const double a = 2 * std::numbers::pi * i / n;
      const double r = rng.uniform(1, 4);
      star.emplace_back(static_cast<float>(r * std::cos(a)), static_cast<float>(r * std::sin(a)));
    }
    if (k % 2) std::reverse(star.begin(), star.end());
    for (int q = 0; q < 300; ++q) {
      const P p(static_cast<float>(rng.uniform(-4.5, 4.5)), static_cast<float>(rng.uniform(-4.5, 4.5)));
      CHECK(winding_inside<float>(p, star) == even_odd_inside<float>(p, star));
    }
    for (std::size_t i = 0; i < star.size(); ++i) {
      CHECK(winding_inside<float>(star[i], star));
      CHECK(winding_inside<float>(P(0.5f * (star[i] + star[(i + 1) % star.size()])), star));
    }
  }
  // pentagram: the center has winding number 2, which ray casting calls outside
  std::vector<Point2<double>> pent;
  for (int i = 0; i < 5; ++i) {
    const double a = std::numbers::pi / 2 + 4 * std::numbers::pi * i / 5;
    pent.emplace_back(std::cos(a), std::sin(a));
  }
  CHECK(winding_inside<double>(Point2<double>(0, 0), pent));
  CHECK_FALSE(even_odd_inside<double>(Point2<double>(0, 0), pent));
  const std::vector<Point2<double>> two{Point2<double>(0, 0), Point2<double>(1, 0)};
  CHECK_THROWS(winding_inside<double>(Point2<double>(0, 0), two));
}

TEST_CASE("keyframes advance to the last well-connected frame") {
  // 10 tracks start at every frame s = -3..9 and span frames [s, s + 3], so frames
  // k < j share 10 * (k - j + 4) tracks.
  std::vector<FeatureTrack> tracks;
  std::int64_t id = 0;
  for (int s = -3; s <= 9; ++s)
    for (int m = 0; m < 10; ++m) {
      FeatureTrack t;
      t.track_id = id++;
      for (int f = std::max(s, 0); f <= std::min(s + 3, 9); ++f) t.observations.push_back({f, Eigen::Vector2d(m, s)});
      tracks.push_back(t);
    }
  const auto poses = strip_poses(10, 1.0, 50.0);
  CHECK(select_keyframes(tracks, poses, 0.5, 15) == std::vector<int>{0, 2, 4, 6, 8});
  CHECK(select_keyframes(tracks, poses, 0.5, 25) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(select_keyframes(tracks, poses, 0.5, 5) == std::vector<int>{0, 3, 6});
  CHECK(select_keyframes(tracks, poses, 2.5, 15) == std::vector<int>{0});
  const std::vector<int> subset{1, 2, 3, 5, 7};
  CHECK(select_keyframes(tracks, subset, poses, 0.5, 15) == std::vector<int>{1, 3, 5});
  CHECK_THROWS(select_keyframes(tracks, std::span<const int>(), poses, 0.5, 15));
}
