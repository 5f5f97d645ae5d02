#include "lsd/terrain_map.hpp"

#include "lsd/imgproc.hpp"
#include "lsd/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lsd {

namespace fs = std::filesystem;
using json = nlohmann::json;

GridGeometry GridGeometry::centered(const Eigen::Vector2d& center, double resolution, int rows, int cols) {
  GridGeometry g;
  g.resolution = resolution;
  g.rows = rows;
  g.cols = cols;
  g.origin = center - 0.5 * Eigen::Vector2d(cols - 1, rows - 1) * resolution;
  g.validate();
  return g;
}

void GridGeometry::validate() const {
  if (!(resolution > 0)) throw std::invalid_argument("grid resolution must be positive");
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid dimensions must be positive");
}

std::optional<Eigen::Vector2i> GridGeometry::cell_of(const Eigen::Vector2d& xy) const {
  const double fc = std::floor((xy.x() - origin.x()) / resolution + 0.5);
  const double fr = std::floor((xy.y() - origin.y()) / resolution + 0.5);
  if (fr < 0 || fc < 0 || fr >= rows || fc >= cols) return std::nullopt;
  return Eigen::Vector2i(static_cast<int>(fr), static_cast<int>(fc));
}

Layer Layer::make(const GridGeometry& g, double fill, bool valid) {
  return {Grid::Constant(g.rows, g.cols, fill), Mask::Constant(g.rows, g.cols, valid ? 1 : 0)};
}

void HazardThresholds::validate() const {
  if (!(max_slope > 0 && max_tri > 0)) throw std::invalid_argument("hazard thresholds must be positive");
}

Layer rasterize_elevation(const PointCloud& cloud, const GridGeometry& g, double radius, double power) {
  g.validate();
  if (!(radius > 0)) throw std::invalid_argument("IDW radius must be positive");
  Layer out = Layer::make(g, std::numeric_limits<double>::quiet_NaN(), false);
  if (cloud.cols() == 0) return out;

  // Buckets aligned with cells, extended by the search reach on every side.
  const int reach = static_cast<int>(std::ceil(radius / g.resolution));
  const int brows = g.rows + 2 * reach;
  const int bcols = g.cols + 2 * reach;
  auto bucket_of = [&](double x, double y) -> long {
    const double c = std::floor((x - g.origin.x()) / g.resolution + 0.5) + reach;
    const double r = std::floor((y - g.origin.y()) / g.resolution + 0.5) + reach;
    if (r < 0 || c < 0 || r >= brows || c >= bcols) return -1;
    return static_cast<long>(r) * bcols + static_cast<long>(c);
  };
  std::vector<std::uint32_t> start(static_cast<std::size_t>(brows) * bcols + 1, 0);
  std::vector<long> which(static_cast<std::size_t>(cloud.cols()));
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    which[i] = bucket_of(cloud(0, i), cloud(1, i));
    if (which[i] >= 0) ++start[which[i] + 1];
  }
  for (std::size_t b = 1; b < start.size(); ++b) start[b] += start[b - 1];
  std::vector<Eigen::Vector3d> sorted(start.back());
  {
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    for (Eigen::Index i = 0; i < cloud.cols(); ++i)
      if (which[i] >= 0) sorted[fill[which[i]]++] = cloud.col(i);
  }

  const double r2 = radius * radius;
  const bool square = power == 2.0;
  parallel_for(static_cast<std::size_t>(g.rows), [&](std::size_t row) {
    const auto r = static_cast<int>(row);
    for (int c = 0; c < g.cols; ++c) {
      const Eigen::Vector2d center = g.cell_center(r, c);
      double wsum = 0.0;
      double zsum = 0.0;
      double hit_sum = 0.0;
      int hits = 0;
      for (int br = r; br <= r + 2 * reach; ++br) {
        for (int bc = c; bc <= c + 2 * reach; ++bc) {
          const auto b = static_cast<std::size_t>(br) * bcols + bc;
          for (auto k = start[b]; k < start[b + 1]; ++k) {
            const Eigen::Vector3d& p = sorted[k];
            const double dx = p.x() - center.x();
            const double dy = p.y() - center.y();
            const double d2 = dx * dx + dy * dy;
            if (d2 > r2) continue;
            if (d2 == 0.0) {
              hit_sum += p.z();
              ++hits;
              continue;
            }
            const double w = square ? 1.0 / d2 : 1.0 / std::pow(std::sqrt(d2), power);
            wsum += w;
            zsum += w * p.z();
          }
        }
      }
      if (hits > 0) {
        out.values(r, c) = hit_sum / hits;
        out.valid(r, c) = 1;
      } else if (wsum > 0) {
        out.values(r, c) = zsum / wsum;
        out.valid(r, c) = 1;
      }
    }
  });
  return out;
}

namespace {

bool neighborhood_valid(const Layer& e, Eigen::Index r, Eigen::Index c) {
  if (r < 1 || c < 1 || r + 1 >= e.values.rows() || c + 1 >= e.values.cols()) return false;
  return (e.valid.block(r - 1, c - 1, 3, 3) != 0).all();
}

GridGeometry geometry_of(const Layer& l) {
  GridGeometry g;
  g.rows = static_cast<int>(l.values.rows());
  g.cols = static_cast<int>(l.values.cols());
  return g;
}

}  // namespace

NormalsAndSlope normals_and_slope(const Layer& e, double resolution) {
  const auto g = geometry_of(e);
  NormalsAndSlope out{Layer::make(g, std::numeric_limits<double>::quiet_NaN()),
                      Layer::make(g, std::numeric_limits<double>::quiet_NaN())};
  parallel_for(static_cast<std::size_t>(g.rows), [&](std::size_t row) {
    const auto r = static_cast<Eigen::Index>(row);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    for (Eigen::Index c = 0; c < g.cols; ++c) {
      if (!neighborhood_valid(e, r, c)) continue;
      Eigen::Matrix<double, 3, 9> pts;
      const double z0 = e.values(r, c);
      for (int k = 0; k < 9; ++k) {
        const int dr = k / 3 - 1;
        const int dc = k % 3 - 1;
        pts.col(k) << dc * resolution, dr * resolution, e.values(r + dr, c + dc) - z0;
      }
      const Eigen::Matrix<double, 3, 9> centered = pts.colwise() - pts.rowwise().mean();
      solver.compute(centered * centered.transpose());
      const double nz = std::min(1.0, std::abs(solver.eigenvectors()(2, 0)));
      out.normal_z.values(r, c) = nz;
      out.normal_z.valid(r, c) = 1;
      out.slope.values(r, c) = std::acos(nz);
      out.slope.valid(r, c) = 1;
    }
  });
  return out;
}

Layer tri(const Layer& e, TriMode mode) {
  const auto g = geometry_of(e);
  Layer out = Layer::make(g, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index r = 0; r < g.rows; ++r) {
    for (Eigen::Index c = 0; c < g.cols; ++c) {
      if (!neighborhood_valid(e, r, c)) continue;
      const double z0 = e.values(r, c);
      double acc = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const double d = e.values(r + dr, c + dc) - z0;
          acc += mode == TriMode::root_sum_square ? d * d : std::abs(d);
        }
      }
      out.values(r, c) = mode == TriMode::root_sum_square ? std::sqrt(acc) : acc / 8.0;
      out.valid(r, c) = 1;
    }
  }
  return out;
}

Layer fuse_grass_mask(std::span<const PosedMask> masks, const CameraModel& camera, const GridGeometry& g,
                      const Layer& elevation, double fallback_z) {
  if (masks.empty()) throw std::invalid_argument("grass fusion needs at least one grass mask");
  Layer out = Layer::make(g, 0.0, true);
  for (const auto& m : masks) {
    if (m.mask.rows() != camera.height || m.mask.cols() != camera.width)
      throw std::invalid_argument("grass mask size differs from the camera");
    const Eigen::Matrix3d rt = m.pose.orientation.conjugate().toRotationMatrix();
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        if (out.values(r, c) != 0.0) continue;
        const double z = elevation.ok(r, c) ? elevation.values(r, c) : fallback_z;
        const Eigen::Vector3d pc = rt * (Eigen::Vector3d(g.cell_center(r, c).x(), g.cell_center(r, c).y(), z) -
                                         m.pose.position);
        if (pc.z() <= 1e-9) continue;
        const double u = std::round(camera.fx * pc.x() / pc.z() + camera.cx);
        const double v = std::round(camera.fy * pc.y() / pc.z() + camera.cy);
        if (u < 0 || v < 0 || u >= camera.width || v >= camera.height) continue;
        if (m.mask(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u))) out.values(r, c) = 1.0;
      }
    }
  }
  return out;
}

HazardLayers fuse_hazards(const Layer& slope, const Layer& rough, const Layer& grass, const HazardThresholds& th) {
  th.validate();
  const auto g = geometry_of(slope);
  HazardLayers out{Layer::make(g), Layer::make(g), Layer::make(g, 1.0, true)};
  for (Eigen::Index r = 0; r < g.rows; ++r) {
    for (Eigen::Index c = 0; c < g.cols; ++c) {
      const bool is_grass = grass.ok(r, c) && grass.values(r, c) != 0.0;
      if (slope.ok(r, c)) {
        out.binary_slope.valid(r, c) = 1;
        out.binary_slope.values(r, c) = is_grass && slope.values(r, c) > th.max_slope ? 1.0 : 0.0;
      }
      if (rough.ok(r, c)) {
        out.binary_rough.valid(r, c) = 1;
        out.binary_rough.values(r, c) = is_grass && rough.values(r, c) > th.max_tri ? 1.0 : 0.0;
      }
      const bool evaluable = is_grass && slope.ok(r, c) && rough.ok(r, c);
      const bool hazard =
          !evaluable || out.binary_slope.values(r, c) != 0.0 || out.binary_rough.values(r, c) != 0.0;
      out.fused.values(r, c) = hazard ? 1.0 : 0.0;
    }
  }
  return out;
}

Layer hazard_distance(const Layer& fused, double resolution) {
  const Mask m = ((fused.values != 0.0) && (fused.valid != 0)).cast<std::uint8_t>();
  const Grid sq = edt_squared(m);
  Layer out{sq.sqrt() * resolution, Mask::Constant(m.rows(), m.cols(), 1)};
  return out;
}

GridStack build_stack(const PointCloud& cloud, const GridGeometry& geometry, std::span<const PosedMask> grass_masks,
                      const CameraModel& camera, double fallback_z, const TerrainConfig& cfg) {
  GridStack s;
  s.geometry = geometry;
  s.elevation = rasterize_elevation(cloud, geometry, cfg.idw_radius_cells * geometry.resolution, cfg.idw_power);
  auto ns = normals_and_slope(s.elevation, geometry.resolution);
  s.normal_z = std::move(ns.normal_z);
  s.slope = std::move(ns.slope);
  s.roughness = tri(s.elevation, cfg.tri_mode);
  s.grass = fuse_grass_mask(grass_masks, camera, geometry, s.elevation, fallback_z);
  auto hz = fuse_hazards(s.slope, s.roughness, s.grass, cfg.thresholds);
  s.binary_slope = std::move(hz.binary_slope);
  s.binary_rough = std::move(hz.binary_rough);
  s.fused_hazard = std::move(hz.fused);
  s.hazard_distance = hazard_distance(s.fused_hazard, geometry.resolution);
  return s;
}

std::vector<std::string> layer_names() {
  return {"elevation", "normal_z",     "slope",        "roughness",      "grass",
          "binary_slope", "binary_rough", "fused_hazard", "hazard_distance"};
}

Layer& layer_by_name(GridStack& s, const std::string& name) {
  if (name == "elevation") return s.elevation;
  if (name == "normal_z") return s.normal_z;
  if (name == "slope") return s.slope;
  if (name == "roughness") return s.roughness;
  if (name == "grass") return s.grass;
  if (name == "binary_slope") return s.binary_slope;
  if (name == "binary_rough") return s.binary_rough;
  if (name == "fused_hazard") return s.fused_hazard;
  if (name == "hazard_distance") return s.hazard_distance;
  throw std::invalid_argument("unknown layer: " + name);
}

const Layer& layer_by_name(const GridStack& s, const std::string& name) {
  return layer_by_name(const_cast<GridStack&>(s), name);
}

namespace {

constexpr std::uint16_t kNoData = 65535;

}  // namespace

void export_layers(const GridStack& s, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& name : layer_names()) {
    const Layer& l = layer_by_name(s, name);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index i = 0; i < l.values.size(); ++i) {
      const double v = l.values.data()[i];
      if (!l.valid.data()[i] || !std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    const double scale = hi > lo ? (hi - lo) / 65534.0 : 1.0;
    Plane<std::uint16_t> codes(l.values.rows(), l.values.cols());
    std::size_t valid_cells = 0;
    for (Eigen::Index i = 0; i < l.values.size(); ++i) {
      const double v = l.values.data()[i];
      if (!l.valid.data()[i] || !std::isfinite(v)) {
        codes.data()[i] = kNoData;
        continue;
      }
      ++valid_cells;
      codes.data()[i] = static_cast<std::uint16_t>(std::lround(std::clamp((v - lo) / scale, 0.0, 65534.0)));
    }
    const fs::path pgm = dir / (name + ".pgm");
    fs::path tmp = pgm;
    tmp += ".tmp";
    write_pgm16(tmp, codes);
    fs::rename(tmp, pgm);
    const json side = {{"layer", name},
                       {"file", name + ".pgm"},
                       {"encoding", "16-bit big-endian PGM; value = code * scale + offset"},
                       {"scale", scale},
                       {"offset", lo},
                       {"nodata", kNoData},
                       {"nodata_meaning", name == "hazard_distance" ? "no hazard in grid (+inf)" : "invalid cell"},
                       {"origin", {s.geometry.origin.x(), s.geometry.origin.y()}},
                       {"resolution", s.geometry.resolution},
                       {"rows", s.geometry.rows},
                       {"cols", s.geometry.cols},
                       {"row_axis", "+y (north)"},
                       {"col_axis", "+x (east)"},
                       {"valid_cells", valid_cells}};
    write_text_atomic(dir / (name + ".json"), side.dump(2));
  }
}

GridStack import_layers(const fs::path& dir) {
  GridStack s;
  bool have_geometry = false;
  for (const auto& name : layer_names()) {
    std::ifstream in(dir / (name + ".json"));
    if (!in) throw std::runtime_error("missing layer sidecar: " + name);
    std::stringstream ss;
    ss << in.rdbuf();
    const json side = json::parse(ss.str());
    if (!have_geometry) {
      s.geometry.origin = Eigen::Vector2d(side.at("origin")[0].get<double>(), side.at("origin")[1].get<double>());
      s.geometry.resolution = side.at("resolution");
      s.geometry.rows = side.at("rows");
      s.geometry.cols = side.at("cols");
      have_geometry = true;
    }
    const auto codes = read_pgm16(dir / side.value("file", name + ".pgm"));
    if (codes.rows() != s.geometry.rows || codes.cols() != s.geometry.cols)
      throw std::runtime_error("layer size mismatch: " + name);
    const double scale = side.at("scale");
    const double offset = side.at("offset");
    Layer l = Layer::make(s.geometry, std::numeric_limits<double>::quiet_NaN());
    const bool inf_nodata = name == "hazard_distance";
    for (Eigen::Index i = 0; i < codes.size(); ++i) {
      if (codes.data()[i] == kNoData) {
        if (inf_nodata) {
          l.values.data()[i] = std::numeric_limits<double>::infinity();
          l.valid.data()[i] = 1;
        }
        continue;
      }
      l.values.data()[i] = codes.data()[i] * scale + offset;
      l.valid.data()[i] = 1;
    }
    layer_by_name(s, name) = std::move(l);
  }
  return s;
}

}  // namespace lsd
