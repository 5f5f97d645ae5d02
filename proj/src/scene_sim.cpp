#include "lsd/scene_sim.hpp"

#include "lsd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace lsd {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct LabelStyle {
  Eigen::Vector3f base;
  float amplitude;  // low-frequency value noise, per channel scale of base
  float frequency;  // cycles per metre
  float jitter;     // per-cell Gaussian
  float stripe_amplitude;
  float stripe_period;  // metres, along y
  double elevation_noise;
  double default_height;
};

const LabelStyle& style(Label label) {
  static const LabelStyle styles[] = {
      {{72, 128, 48}, 8, 0.04f, 2.5f, 0, 0, 0.0, 0.0},        // grass
      {{168, 150, 84}, 10, 0.05f, 6, 28, 4.0f, 0.12, 0.0},     // crop
      {{38, 74, 34}, 34, 0.6f, 14, 0, 0, 2.5, 10.0},           // forest
      {{152, 80, 68}, 4, 0.02f, 2, 0, 0, 0.0, 8.0},            // building
      {{118, 118, 114}, 4, 0.03f, 2, 0, 0, 0.0, 0.0},          // road
  };
  return styles[static_cast<int>(label)];
}

double hash_gauss(std::uint64_t seed, std::int64_t a, std::int64_t b) {
  const auto h1 = hash_combine(seed, a, b);
  const auto h2 = hash64(h1 ^ 0xA5A5A5A5A5A5A5A5ull);
  const double u1 = std::max(hash_unit(h1), 1e-300);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * hash_unit(h2));
}

// Smooth lattice noise in [-1, 1].
double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  auto s = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = s(x - fx);
  const double ty = s(y - fy);
  auto v = [&](std::int64_t a, std::int64_t b) { return 2.0 * hash_unit(hash_combine(seed, a, b)) - 1.0; };
  const double a = v(ix, iy) * (1 - tx) + v(ix + 1, iy) * tx;
  const double b = v(ix, iy + 1) * (1 - tx) + v(ix + 1, iy + 1) * tx;
  return a * (1 - ty) + b * ty;
}

constexpr std::uint64_t kElevationStream = 0x656C6576ull;
constexpr std::uint64_t kTextureStream = 0x74657874ull;
constexpr std::uint64_t kJitterStream = 0x6A697474ull;
constexpr std::uint64_t kWindStream = 0x77696E64ull;
constexpr std::uint64_t kTrackStream = 0x7472616Bull;
constexpr std::uint64_t kOracleStream = 0x6F72636Cull;

}  // namespace

std::string_view label_name(Label label) {
  switch (label) {
    case Label::grass: return "grass";
    case Label::crop: return "crop";
    case Label::forest: return "forest";
    case Label::building: return "building";
    case Label::road: return "road";
  }
  return "unknown";
}

Label label_from_name(std::string_view name) {
  for (int i = 0; i <= 4; ++i)
    if (label_name(static_cast<Label>(i)) == name) return static_cast<Label>(i);
  throw std::invalid_argument("unknown label: " + std::string(name));
}

void SceneSpec::validate() const {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("scene grid size must be positive");
  if (!(resolution > 0)) throw std::invalid_argument("scene resolution must be positive");
  camera.validate();
  if (!(flight.frame_spacing > 0) || !(flight.line_spacing > 0) || !(flight.speed > 0))
    throw std::invalid_argument("flight spacing and speed must be positive");
}

bool Terrain::contains(const Eigen::Vector2d& xy) const {
  const Eigen::Vector2d rel = (xy - origin) / resolution;
  return rel.x() >= -0.5 && rel.y() >= -0.5 && rel.x() < cols() - 0.5 && rel.y() < rows() - 0.5;
}

Label Terrain::label_at(const Eigen::Vector2d& xy) const {
  const Eigen::Vector2d rel = (xy - origin) / resolution;
  const auto c = std::clamp<Eigen::Index>(std::lround(rel.x()), 0, cols() - 1);
  const auto r = std::clamp<Eigen::Index>(std::lround(rel.y()), 0, rows() - 1);
  return static_cast<Label>(semantic(r, c));
}

Eigen::Vector3f Terrain::color_at(const Eigen::Vector2d& xy) const {
  const double fx = std::clamp((xy.x() - origin.x()) / resolution, 0.0, static_cast<double>(cols() - 1));
  const double fy = std::clamp((xy.y() - origin.y()) / resolution, 0.0, static_cast<double>(rows() - 1));
  const auto c0 = std::min(static_cast<Eigen::Index>(fx), std::max<Eigen::Index>(cols() - 2, 0));
  const auto r0 = std::min(static_cast<Eigen::Index>(fy), std::max<Eigen::Index>(rows() - 2, 0));
  const auto c1 = std::min(c0 + 1, cols() - 1);
  const auto r1 = std::min(r0 + 1, rows() - 1);
  const auto tx = static_cast<float>(fx - c0);
  const auto ty = static_cast<float>(fy - r0);
  Eigen::Vector3f out;
  for (int k = 0; k < 3; ++k) {
    const auto& t = texture[k];
    out[k] = (1 - ty) * ((1 - tx) * t(r0, c0) + tx * t(r0, c1)) + ty * ((1 - tx) * t(r1, c0) + tx * t(r1, c1));
  }
  return out;
}

void Terrain::refresh_bounds() {
  min_elev_ = elevation.minCoeff();
  max_elev_ = elevation.maxCoeff();
  const Eigen::Index br = (rows() + kBlock - 1) / kBlock;
  const Eigen::Index bc = (cols() + kBlock - 1) / kBlock;
  block_max_.resize(br, bc);
  for (Eigen::Index i = 0; i < br; ++i)
    for (Eigen::Index j = 0; j < bc; ++j) {
      const Eigen::Index r0 = i * kBlock, c0 = j * kBlock;
      const Eigen::Index nr = std::min(r0 + kBlock + 2, rows()) - r0;
      const Eigen::Index nc = std::min(c0 + kBlock + 2, cols()) - c0;
      block_max_(i, j) = elevation.block(r0, c0, nr, nc).maxCoeff();
    }
}

std::optional<Eigen::Vector3d> Terrain::intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
  const double top = max_elev_ + 1e-6;
  const double bottom = min_elev_ - 1e-6;
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  if (d.z() >= 0.0 && o.z() > top) return std::nullopt;
  if (o.z() > top) t0 = (o.z() - top) / -d.z();
  if (d.z() < 0.0) t1 = (o.z() - bottom) / -d.z();

  // Clip against the horizontal extent of the grid.
  const Eigen::Vector2d lo = origin - Eigen::Vector2d::Constant(0.5 * resolution);
  const Eigen::Vector2d hi = origin + Eigen::Vector2d(cols() - 0.5, rows() - 0.5) * resolution;
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
      continue;
    }
    double a = (lo[k] - o[k]) / d[k];
    double b = (hi[k] - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (!(t0 <= t1)) return std::nullopt;

  const double inf = std::numeric_limits<double>::infinity();
  const double nmax[2] = {static_cast<double>(cols() - 1), static_cast<double>(rows() - 1)};
  auto grid_coord = [&](double t, int k) { return (o[k] + t * d[k] - origin[k]) / resolution; };
  auto block_exit = [&](double t, Eigen::Index* bi, Eigen::Index* bj) {
    const double f[2] = {std::clamp(grid_coord(t, 0), 0.0, nmax[0]), std::clamp(grid_coord(t, 1), 0.0, nmax[1])};
    const Eigen::Index idx[2] = {std::min(static_cast<Eigen::Index>(f[0]) / kBlock, block_max_.cols() - 1),
                                 std::min(static_cast<Eigen::Index>(f[1]) / kBlock, block_max_.rows() - 1)};
    const Eigen::Index nblocks[2] = {block_max_.cols(), block_max_.rows()};
    double exit = inf;
    for (int k = 0; k < 2; ++k) {
      if (std::abs(d[k]) < 1e-15) continue;
      const bool fwd = d[k] > 0.0;
      if (fwd ? idx[k] == nblocks[k] - 1 : idx[k] == 0) continue;
      const double edge = origin[k] + static_cast<double>((idx[k] + (fwd ? 1 : 0)) * kBlock) * resolution;
      exit = std::min(exit, (edge - o[k]) / d[k]);
    }
    *bj = idx[0];
    *bi = idx[1];
    return exit;
  };
  // Smallest s in [0, len] with c0 + c1 s + c2 s^2 <= 0, given c0 > 0.
  auto first_root = [](double c0, double c1, double c2, double len) -> std::optional<double> {
    if (std::abs(c2) < 1e-12) {
      if (c1 >= 0.0 || -c0 / c1 > len) return std::nullopt;
      return -c0 / c1;
    }
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
    double r1 = qq / c2;
    double r2 = qq != 0.0 ? c0 / qq : r1;
    if (r1 > r2) std::swap(r1, r2);
    if (r1 >= 0.0 && r1 <= len) return r1;
    if (r2 >= 0.0 && r2 <= len) return r2;
    return std::nullopt;
  };

  double ta = t0;
  if (o.z() + ta * d.z() <= height_at((o + ta * d).head<2>())) return Eigen::Vector3d(o + ta * d);
  while (ta < t1) {
    Eigen::Index bi = 0, bj = 0;
    const double exit = block_exit(ta, &bi, &bj);
    const double bmax = block_max_(bi, bj);
    if (o.z() + ta * d.z() > bmax) {
      const double ts = std::min(d.z() < 0.0 ? (o.z() - bmax) / -d.z() : inf, exit);
      if (ts > ta + 1e-12) {
        ta = ts;
        continue;
      }
    }
    // Piece up to the next integer grid line on either axis.
    double tb = t1;
    for (int k = 0; k < 2; ++k) {
      if (std::abs(d[k]) < 1e-15) continue;
      const double f = grid_coord(ta, k);
      const double next = d[k] > 0.0 ? std::floor(f + 1e-9) + 1.0 : std::ceil(f - 1e-9) - 1.0;
      tb = std::min(tb, ta + (next - f) * resolution / d[k]);
    }
    tb = std::max(tb, ta + 1e-9 * resolution);
    const double tm = 0.5 * (ta + tb);
    double tx0[2], slope[2];
    Eigen::Index base[2];
    for (int k = 0; k < 2; ++k) {
      const double fm = grid_coord(tm, k);
      const double cm = std::clamp(fm, 0.0, nmax[k]);
      base[k] = std::min(static_cast<Eigen::Index>(cm), std::max<Eigen::Index>(static_cast<Eigen::Index>(nmax[k]) - 1, 0));
      const bool clamped = fm != cm;
      slope[k] = clamped ? 0.0 : d[k] / resolution;
      tx0[k] = clamped ? cm - static_cast<double>(base[k]) : grid_coord(ta, k) - static_cast<double>(base[k]);
    }
    const Eigen::Index c0 = base[0], r0 = base[1];
    const Eigen::Index c1 = std::min(c0 + 1, cols() - 1), r1 = std::min(r0 + 1, rows() - 1);
    const double A = elevation(r0, c0);
    const double B = elevation(r0, c1) - A;
    const double C = elevation(r1, c0) - A;
    const double D = A - elevation(r0, c1) - elevation(r1, c0) + elevation(r1, c1);
    const double p = tx0[0], q = tx0[1], pu = slope[0], qv = slope[1];
    const double h0 = A + B * p + C * q + D * p * q;
    const double h1 = B * pu + C * qv + D * (p * qv + q * pu);
    const double h2 = D * pu * qv;
    const double g0 = o.z() + ta * d.z() - h0;
    if (g0 <= 0.0) return Eigen::Vector3d(o + ta * d);
    if (const auto s_hit = first_root(g0, d.z() - h1, -h2, tb - ta)) return Eigen::Vector3d(o + (ta + *s_hit) * d);
    ta = tb;
  }
  return std::nullopt;
}

bool Terrain::visible_from(const Eigen::Vector3d& eye, const Eigen::Vector3d& point) const {
  const Eigen::Vector3d v = eye - point;
  const double len = v.norm();
  if (len < 1e-9) return true;
  const Eigen::Vector3d dir = v / len;
  const double step = 0.25 * resolution;
  for (double t = 0.75 * resolution; t < len; t += step) {
    const Eigen::Vector3d p = point + t * dir;
    if (p.z() > max_elev_) return true;
    if (height_at(p.head<2>()) > p.z() + 0.05) return false;
  }
  return true;
}

void validate_log(const FlightLog& log) {
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (i > 0 && !(log[i].time > log[i - 1].time)) throw std::invalid_argument("log times must strictly increase");
    if (std::abs(log[i].pose.orientation.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("log orientation is not a unit quaternion");
  }
}

RgbImage SceneBundle::frame(std::size_t index) const {
  if (index >= log.size()) throw std::out_of_range("frame index beyond log");
  if (!frame_dir.empty()) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << index << ".png";
    const auto path = frame_dir / name.str();
    if (fs::exists(path)) return read_png(path);
  }
  return render_frame(terrain, log[index].pose, camera);
}

std::vector<Pose> SceneBundle::poses() const {
  std::vector<Pose> out;
  out.reserve(log.size());
  for (const auto& e : log) out.push_back(e.pose);
  return out;
}

Terrain generate_terrain(const SceneSpec& spec) {
  spec.validate();
  Terrain t;
  t.resolution = spec.resolution;
  t.origin = Eigen::Vector2d::Zero();
  t.elevation = Grid::Constant(spec.rows, spec.cols, spec.base_elevation);
  t.semantic = Plane<std::uint8_t>::Constant(spec.rows, spec.cols, static_cast<std::uint8_t>(spec.background));
  for (auto& ch : t.texture) ch.resize(spec.rows, spec.cols);

  const auto elev_seed = hash64(spec.seed ^ kElevationStream);
  const auto tex_seed = hash64(spec.seed ^ kTextureStream);
  const auto jit_seed = hash64(spec.seed ^ kJitterStream);

  for (Eigen::Index r = 0; r < spec.rows; ++r) {
    for (Eigen::Index c = 0; c < spec.cols; ++c) {
      const Eigen::Vector2d p = t.cell_center(r, c);
      Label label = spec.background;
      double ground = spec.base_elevation;
      double raise = style(label).default_height;
      for (const auto& patch : spec.patches) {
        if (!patch.area.contains(p)) continue;
        label = patch.label;
        ground = spec.base_elevation;
        if (patch.slope != 0.0) {
          const Eigen::Vector2d dir = patch.slope_dir.normalized();
          double lowest = std::numeric_limits<double>::infinity();
          for (int k = 0; k < 4; ++k)
            lowest = std::min(lowest, dir.dot(patch.area.corner(static_cast<Eigen::AlignedBox2d::CornerType>(k))));
          ground += std::tan(patch.slope) * (dir.dot(p) - lowest);
        }
        raise = patch.height > 0.0 ? patch.height : style(label).default_height;
      }
      const auto& st = style(label);
      double z = ground + raise;
      if (st.elevation_noise > 0.0) z += st.elevation_noise * hash_gauss(elev_seed, r, c);
      if (label == Label::forest) z = std::max(z, ground);
      t.elevation(r, c) = z;
      t.semantic(r, c) = static_cast<std::uint8_t>(label);

      const double amp = st.amplitude * spec.texture_noise;
      const double jit = st.jitter * spec.texture_noise;
      const auto label_seed = hash64(tex_seed + static_cast<std::uint64_t>(label));
      const double n = value_noise(label_seed, p.x() * st.frequency, p.y() * st.frequency);
      const double stripe = st.stripe_period > 0
                                ? st.stripe_amplitude * spec.texture_noise *
                                      std::sin(2.0 * std::numbers::pi * p.y() / st.stripe_period)
                                : 0.0;
      for (int k = 0; k < 3; ++k) {
        const double j = jit > 0 ? jit * hash_gauss(jit_seed + static_cast<std::uint64_t>(k), r, c) : 0.0;
        const double v = spec.ambient * (st.base[k] * (1.0 + amp / 100.0 * n) + stripe + j);
        t.texture[k](r, c) = static_cast<float>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  t.refresh_bounds();
  return t;
}

FlightLog lawnmower_log(const SceneSpec& spec, const Terrain& terrain) {
  Eigen::AlignedBox2d cov = spec.flight.coverage;
  if (cov.isEmpty() || cov.volume() <= 0.0) {
    const Eigen::Vector2d ext = spec.extent();
    cov = Eigen::AlignedBox2d(0.15 * ext, 0.85 * ext);
  }
  const double z = spec.base_elevation + spec.flight.altitude_agl;
  Rng rng(hash64(spec.seed ^ kWindStream));
  FlightLog log;
  double s = 0.0;
  bool forward = true;
  Eigen::Vector2d last = cov.min();
  for (double y = cov.min().y(); y <= cov.max().y() + 1e-9; y += spec.flight.line_spacing) {
    const double x0 = forward ? cov.min().x() : cov.max().x();
    const double x1 = forward ? cov.max().x() : cov.min().x();
    const double len = std::abs(x1 - x0);
    const int n = std::max(1, static_cast<int>(std::floor(len / spec.flight.frame_spacing + 1e-9)));
    const double yaw = forward ? 0.0 : std::numbers::pi;
    for (int i = 0; i <= n; ++i) {
      const double x = x0 + (x1 - x0) * i / n;
      const Eigen::Vector2d xy(x, y);
      s += log.empty() ? 0.0 : (xy - last).norm();
      last = xy;
      LogEntry e;
      e.time = s / spec.flight.speed;
      e.pose.position = Eigen::Vector3d(x, y, z);
      e.pose.orientation = nadir_orientation(yaw, spec.flight.pitch);
      const double angle = spec.wind.rotation_rate * e.time;
      const Eigen::Vector2d truth = Eigen::Rotation2Dd(angle) * spec.wind.mean;
      e.wind = truth + Eigen::Vector2d(rng.normal(), rng.normal()) * spec.wind.noise_sigma;
      log.push_back(e);
    }
    forward = !forward;
  }
  for (const auto& e : log)
    if (e.pose.position.z() <= terrain.height_at(e.pose.position.head<2>()))
      throw std::invalid_argument("flight altitude below terrain");
  return log;
}

SceneBundle generate_scene(const SceneSpec& spec) {
  SceneBundle b;
  b.spec = spec;
  b.terrain = generate_terrain(spec);
  b.log = lawnmower_log(spec, b.terrain);
  b.camera = spec.camera;
  return b;
}

RgbImage render_frame(const Terrain& terrain, const Pose& pose, const CameraModel& camera,
                      Plane<std::uint8_t>* labels) {
  camera.validate();
  if (terrain.contains(pose.position.head<2>()) && pose.position.z() <= terrain.height_at(pose.position.head<2>()))
    throw std::invalid_argument("camera pose below terrain surface");
  RgbImage img(camera.height, camera.width);
  if (labels) labels->resize(camera.height, camera.width);
  const Eigen::Matrix3d rot = pose.orientation.toRotationMatrix();
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Eigen::Vector3d dc((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      const Eigen::Vector3d dir = (rot * dc).normalized();
      const auto hit = terrain.intersect(pose.position, dir);
      if (!hit) {
        img.set(v, u, kSkyColor);
        if (labels) (*labels)(v, u) = kSkyLabel;
        continue;
      }
      if (labels) (*labels)(v, u) = static_cast<std::uint8_t>(terrain.label_at(hit->head<2>()));
      const Eigen::Vector3f c = terrain.color_at(hit->head<2>());
      img.set(v, u,
              {static_cast<std::uint8_t>(std::lround(c[0])), static_cast<std::uint8_t>(std::lround(c[1])),
               static_cast<std::uint8_t>(std::lround(c[2]))});
    }
  }
  return img;
}

std::vector<FeatureTrack> simulate_tracks(const SceneBundle& scene, const FlightLog& log, const CameraModel& camera,
                                          int density, double pixel_noise_sigma) {
  if (density <= 0) throw std::invalid_argument("track density must be positive");
  Rng rng(hash64(scene.spec.seed ^ kTrackStream));
  std::vector<FeatureTrack> tracks;
  std::int64_t next_id = 0;
  for (std::size_t f = 0; f < log.size(); ++f) {
    const Pose& pose = log[f].pose;
    for (int k = 0; k < density; ++k) {
      const Eigen::Vector2d px(rng.uniform(-0.5, camera.width - 0.5), rng.uniform(-0.5, camera.height - 0.5));
      const auto hit = scene.terrain.intersect(pose.position, ray_direction(camera, pose, px));
      if (!hit) continue;
      const Eigen::Vector3d point(hit->x(), hit->y(), scene.terrain.height_at(hit->head<2>()));
      FeatureTrack track;
      track.track_id = next_id++;
      for (std::size_t g = 0; g < log.size(); ++g) {
        const auto proj = project(camera, log[g].pose, point);
        if (!proj || !camera.contains(*proj)) continue;
        if (g != f && !scene.terrain.visible_from(log[g].pose.position, point)) continue;
        TrackObservation obs;
        obs.frame_id = static_cast<int>(g);
        obs.pixel = *proj;
        if (pixel_noise_sigma > 0) obs.pixel += Eigen::Vector2d(rng.normal(), rng.normal()) * pixel_noise_sigma;
        track.observations.push_back(obs);
      }
      if (!track.observations.empty()) tracks.push_back(std::move(track));
    }
  }
  return tracks;
}

PointCloud sample_depth_oracle(const SceneBundle& scene, std::span<const Pose> keyframes, const CameraModel& camera,
                               double elev_noise_sigma, int samples_per_frame, std::uint64_t stream) {
  if (keyframes.empty()) throw std::invalid_argument("depth oracle needs at least one keyframe");
  Rng rng(hash64(scene.spec.seed ^ kOracleStream ^ hash64(stream)));
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(keyframes.size() * static_cast<std::size_t>(std::max(samples_per_frame, 0)));
  for (const auto& pose : keyframes) {
    const Eigen::Matrix3d rot = pose.orientation.toRotationMatrix();
    for (int k = 0; k < samples_per_frame; ++k) {
      const double u = rng.uniform(-0.5, camera.width - 0.5);
      const double v = rng.uniform(-0.5, camera.height - 0.5);
      const double noise = elev_noise_sigma > 0 ? elev_noise_sigma * rng.normal() : 0.0;
      const Eigen::Vector3d dc((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      const auto hit = scene.terrain.intersect(pose.position, (rot * dc).normalized());
      if (!hit) continue;
      pts.emplace_back(hit->x(), hit->y(), scene.terrain.height_at(hit->head<2>()) + noise);
    }
  }
  PointCloud cloud(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) cloud.col(static_cast<Eigen::Index>(i)) = pts[i];
  return cloud;
}

namespace {

Patch make_patch(Label label, double x0, double y0, double x1, double y1, double height = 0.0, double slope = 0.0,
                 Eigen::Vector2d dir = Eigen::Vector2d::UnitX()) {
  Patch p;
  p.label = label;
  p.area = Eigen::AlignedBox2d(Eigen::Vector2d(x0, y0), Eigen::Vector2d(x1, y1));
  p.height = height;
  p.slope = slope;
  p.slope_dir = dir;
  return p;
}

}  // namespace

SceneSpec preset_scene(std::string_view name, std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  if (name == "flat") {
    s.rows = s.cols = 300;
    s.background = Label::grass;
    s.flight.coverage = Eigen::AlignedBox2d(Eigen::Vector2d(90, 90), Eigen::Vector2d(210, 210));
    s.wind.mean = Eigen::Vector2d(0, -3.0);
    return s;
  }
  if (name == "ramp") {
    s.rows = s.cols = 300;
    s.background = Label::grass;
    s.patches.push_back(make_patch(Label::grass, -1, -1, 301, 301, 0.0, 15.0 * std::numbers::pi / 180.0));
    s.flight.coverage = Eigen::AlignedBox2d(Eigen::Vector2d(90, 90), Eigen::Vector2d(210, 210));
    s.flight.altitude_agl = 160.0;
    return s;
  }
  if (name == "fields" || name == "fields-house") {
    s.rows = s.cols = 480;
    s.background = Label::crop;
    // Grass field (flat), sloped crop field to the north-west, forest block to the east.
    s.patches.push_back(make_patch(Label::grass, 160, 180, 290, 290));
    s.patches.push_back(make_patch(Label::crop, 40, 330, 150, 450, 0.0, 10.0 * std::numbers::pi / 180.0,
                                   Eigen::Vector2d(0, 1)));
    s.patches.push_back(make_patch(Label::forest, 340, 60, 450, 420));
    s.patches.push_back(make_patch(Label::road, 20, 140, 460, 152));
    if (name == "fields-house") s.patches.push_back(make_patch(Label::building, 220, 115, 232, 127, 8.0));
    s.flight.coverage = Eigen::AlignedBox2d(Eigen::Vector2d(110, 140), Eigen::Vector2d(350, 340));
    s.flight.line_spacing = 50.0;
    s.flight.frame_spacing = 15.0;
    s.wind.mean = Eigen::Vector2d(0, -5.5);
    return s;
  }
  throw std::invalid_argument("unknown scene preset: " + std::string(name));
}

SceneSpec random_layout_scene(std::uint64_t seed) {
  Rng rng(hash64(seed ^ 0x6C61796Full));
  SceneSpec s;
  s.seed = seed;
  s.rows = s.cols = 260;
  const Label backgrounds[] = {Label::grass, Label::crop, Label::crop, Label::forest};
  s.background = backgrounds[rng.index(4)];
  s.ambient = rng.uniform(0.65, 1.3);
  s.texture_noise = rng.uniform(0.7, 1.4);
  const int n = 8 + static_cast<int>(rng.index(9));
  for (int i = 0; i < n; ++i) {
    const Label labels[] = {Label::grass, Label::grass, Label::crop, Label::forest,
                            Label::building, Label::building, Label::road, Label::crop};
    const Label label = labels[rng.index(8)];
    const double w = label == Label::building ? rng.uniform(25, 60) : rng.uniform(30, 80);
    const double h = label == Label::road ? rng.uniform(20, 40) : (label == Label::building ? rng.uniform(25, 60) : rng.uniform(30, 80));
    const double x = rng.uniform(0, 260 - w);
    const double y = rng.uniform(0, 260 - h);
    s.patches.push_back(make_patch(label, x, y, x + w, y + h));
  }
  s.flight.coverage = Eigen::AlignedBox2d(Eigen::Vector2d(70, 80), Eigen::Vector2d(190, 180));
  s.flight.line_spacing = 50.0;
  s.flight.frame_spacing = 40.0;
  s.flight.altitude_agl = rng.uniform(85, 125);
  return s;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json box_json(const Eigen::AlignedBox2d& b) {
  return json::array({b.min().x(), b.min().y(), b.max().x(), b.max().y()});
}

Eigen::AlignedBox2d box_from(const json& j) {
  return Eigen::AlignedBox2d(Eigen::Vector2d(j.at(0).get<double>(), j.at(1).get<double>()),
                             Eigen::Vector2d(j.at(2).get<double>(), j.at(3).get<double>()));
}

json camera_json(const CameraModel& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

CameraModel camera_from(const json& j) {
  CameraModel c;
  c.fx = j.at("fx");
  c.fy = j.at("fy");
  c.cx = j.at("cx");
  c.cy = j.at("cy");
  c.width = j.at("width");
  c.height = j.at("height");
  return c;
}

json spec_json(const SceneSpec& s) {
  json patches = json::array();
  for (const auto& p : s.patches)
    patches.push_back({{"label", label_name(p.label)},
                       {"area", box_json(p.area)},
                       {"height", p.height},
                       {"slope", p.slope},
                       {"slope_dir", {p.slope_dir.x(), p.slope_dir.y()}}});
  return {{"rows", s.rows},
          {"cols", s.cols},
          {"resolution", s.resolution},
          {"seed", s.seed},
          {"background", label_name(s.background)},
          {"base_elevation", s.base_elevation},
          {"patches", patches},
          {"texture_noise", s.texture_noise},
          {"ambient", s.ambient},
          {"flight",
           {{"altitude_agl", s.flight.altitude_agl},
            {"coverage", box_json(s.flight.coverage)},
            {"line_spacing", s.flight.line_spacing},
            {"frame_spacing", s.flight.frame_spacing},
            {"speed", s.flight.speed},
            {"pitch", s.flight.pitch}}},
          {"wind",
           {{"mean", {s.wind.mean.x(), s.wind.mean.y()}},
            {"rotation_rate", s.wind.rotation_rate},
            {"noise_sigma", s.wind.noise_sigma}}},
          {"camera", camera_json(s.camera)}};
}

SceneSpec spec_from(const json& j) {
  SceneSpec s;
  s.rows = j.at("rows");
  s.cols = j.at("cols");
  s.resolution = j.at("resolution");
  s.seed = j.at("seed");
  s.background = label_from_name(j.at("background").get<std::string>());
  s.base_elevation = j.value("base_elevation", 0.0);
  for (const auto& p : j.at("patches")) {
    Patch patch;
    patch.label = label_from_name(p.at("label").get<std::string>());
    patch.area = box_from(p.at("area"));
    patch.height = p.value("height", 0.0);
    patch.slope = p.value("slope", 0.0);
    if (p.contains("slope_dir")) patch.slope_dir = Eigen::Vector2d(p["slope_dir"][0].get<double>(), p["slope_dir"][1].get<double>());
    s.patches.push_back(patch);
  }
  s.texture_noise = j.value("texture_noise", 1.0);
  s.ambient = j.value("ambient", 1.0);
  const auto& f = j.at("flight");
  s.flight.altitude_agl = f.at("altitude_agl");
  s.flight.coverage = box_from(f.at("coverage"));
  s.flight.line_spacing = f.at("line_spacing");
  s.flight.frame_spacing = f.at("frame_spacing");
  s.flight.speed = f.at("speed");
  s.flight.pitch = f.value("pitch", 0.0);
  const auto& w = j.at("wind");
  s.wind.mean = Eigen::Vector2d(w.at("mean")[0].get<double>(), w.at("mean")[1].get<double>());
  s.wind.rotation_rate = w.at("rotation_rate");
  s.wind.noise_sigma = w.at("noise_sigma");
  s.camera = camera_from(j.at("camera"));
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string scene_spec_to_json(const SceneSpec& spec) { return spec_json(spec).dump(2); }
SceneSpec scene_spec_from_json(const std::string& text) { return spec_from(json::parse(text)); }

void write_tracks_csv(const fs::path& path, const std::vector<FeatureTrack>& tracks) {
  std::ostringstream out;
  out << "track_id,frame_id,u,v\n" << std::setprecision(17);
  for (const auto& t : tracks)
    for (const auto& o : t.observations)
      out << t.track_id << ',' << o.frame_id << ',' << o.pixel.x() << ',' << o.pixel.y() << '\n';
  write_text_atomic(path, out.str());
}

std::vector<FeatureTrack> read_tracks_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<FeatureTrack> tracks;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t id = 0;
    TrackObservation obs;
    char comma = 0;
    ls >> id >> comma >> obs.frame_id >> comma >> obs.pixel.x() >> comma >> obs.pixel.y();
    if (!ls) throw std::runtime_error("malformed tracks.csv line: " + line);
    if (tracks.empty() || tracks.back().track_id != id) {
      tracks.emplace_back();
      tracks.back().track_id = id;
    }
    tracks.back().observations.push_back(obs);
  }
  return tracks;
}

void save_bundle(const SceneBundle& b, const fs::path& dir, bool write_frames) {
  fs::create_directories(dir);
  const double lo = b.terrain.min_elevation();
  const double hi = b.terrain.max_elevation();
  const double scale = std::max(1e-3, (hi - lo) / 65535.0);
  Plane<std::uint16_t> elev(b.terrain.rows(), b.terrain.cols());
  for (Eigen::Index i = 0; i < elev.size(); ++i)
    elev.data()[i] = static_cast<std::uint16_t>(
        std::clamp<long>(std::lround((b.terrain.elevation.data()[i] - lo) / scale), 0, 65535));
  write_pgm16(dir / "elevation.pgm", elev);
  write_pgm(dir / "semantic.pgm", b.terrain.semantic);
  RgbImage tex(b.terrain.rows(), b.terrain.cols());
  for (Eigen::Index r = 0; r < tex.rows(); ++r)
    for (Eigen::Index c = 0; c < tex.cols(); ++c)
      tex.set(r, c,
              {static_cast<std::uint8_t>(std::lround(b.terrain.texture[0](r, c))),
               static_cast<std::uint8_t>(std::lround(b.terrain.texture[1](r, c))),
               static_cast<std::uint8_t>(std::lround(b.terrain.texture[2](r, c)))});
  write_png(dir / "texture.png", tex);

  json codes = json::object();
  for (int i = 0; i <= 4; ++i) codes[std::to_string(i)] = label_name(static_cast<Label>(i));
  json meta = {{"format", "lsd-scene/1"},
               {"rows", b.terrain.rows()},
               {"cols", b.terrain.cols()},
               {"resolution", b.terrain.resolution},
               {"origin", {b.terrain.origin.x(), b.terrain.origin.y()}},
               {"seed", b.spec.seed},
               {"elevation",
                {{"file", "elevation.pgm"},
                 {"encoding", "16-bit big-endian PGM; z_m = offset + scale * sample"},
                 {"scale", scale},
                 {"offset", lo}}},
               {"semantic", {{"file", "semantic.pgm"}, {"encoding", "8-bit PGM label codes"}, {"codes", codes}}},
               {"texture", {{"file", "texture.png"}, {"encoding", "8-bit RGB per cell"}}},
               {"spec", spec_json(b.spec)}};
  write_text_atomic(dir / "terrain.json", meta.dump(2));
  write_text_atomic(dir / "camera.json", camera_json(b.camera).dump(2));

  std::ostringstream log;
  log << "time,px,py,pz,qw,qx,qy,qz,wx,wy\n" << std::setprecision(17);
  for (const auto& e : b.log) {
    const auto& p = e.pose.position;
    const auto& q = e.pose.orientation;
    log << e.time << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << q.w() << ',' << q.x() << ',' << q.y()
        << ',' << q.z() << ',' << e.wind.x() << ',' << e.wind.y() << '\n';
  }
  write_text_atomic(dir / "log.csv", log.str());
  write_tracks_csv(dir / "tracks.csv", b.tracks);

  if (write_frames) {
    fs::create_directories(dir / "frames");
    for (std::size_t i = 0; i < b.log.size(); ++i) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << i << ".png";
      write_png(dir / "frames" / name.str(), render_frame(b.terrain, b.log[i].pose, b.camera));
    }
  }
}

SceneBundle load_bundle(const fs::path& dir) {
  const json meta = json::parse(read_file(dir / "terrain.json"));
  SceneBundle b;
  b.spec = spec_from(meta.at("spec"));
  Terrain& t = b.terrain;
  t.resolution = meta.at("resolution");
  t.origin = Eigen::Vector2d(meta.at("origin")[0].get<double>(), meta.at("origin")[1].get<double>());
  const auto elev = read_pgm16(dir / meta["elevation"].value("file", "elevation.pgm"));
  const double scale = meta["elevation"].at("scale");
  const double offset = meta["elevation"].at("offset");
  t.elevation = elev.cast<double>() * scale + offset;
  t.semantic = read_pgm(dir / meta["semantic"].value("file", "semantic.pgm"));
  const auto tex = read_png(dir / meta["texture"].value("file", "texture.png"));
  t.texture[0] = tex.r.cast<float>();
  t.texture[1] = tex.g.cast<float>();
  t.texture[2] = tex.b.cast<float>();
  if (t.semantic.rows() != t.elevation.rows() || t.semantic.cols() != t.elevation.cols())
    throw std::runtime_error("semantic and elevation grids differ in size");
  t.refresh_bounds();

  b.camera = camera_from(json::parse(read_file(dir / "camera.json")));
  std::ifstream log(dir / "log.csv");
  if (!log) throw std::runtime_error("cannot open log.csv in " + dir.string());
  std::string line;
  std::getline(log, line);
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    LogEntry e;
    double qw, qx, qy, qz;
    ls >> e.time >> e.pose.position.x() >> e.pose.position.y() >> e.pose.position.z() >> qw >> qx >> qy >> qz >>
        e.wind.x() >> e.wind.y();
    if (!ls) throw std::runtime_error("malformed log.csv line");
    e.pose.orientation = Eigen::Quaterniond(qw, qx, qy, qz);
    b.log.push_back(e);
  }
  validate_log(b.log);
  if (fs::exists(dir / "tracks.csv")) b.tracks = read_tracks_csv(dir / "tracks.csv");
  if (fs::exists(dir / "frames")) b.frame_dir = dir / "frames";
  return b;
}

const TrackObservation* FeatureTrack::in_frame(int frame_id) const {
  auto it = std::lower_bound(observations.begin(), observations.end(), frame_id,
                             [](const TrackObservation& o, int f) { return o.frame_id < f; });
  return it != observations.end() && it->frame_id == frame_id ? &*it : nullptr;
}

}  // namespace lsd
