#include "splatroom/rasterizer.hpp"

#include "splatroom/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace splatroom {

void RasterConfig::validate() const {
  if (!(near > 0) || !(far > near)) throw std::invalid_argument("raster config: need 0 < near < far");
  if (tile_size < 1) throw std::invalid_argument("raster config: tile_size must be >= 1");
  if (!(lowpass_sigma > 0)) throw std::invalid_argument("raster config: lowpass_sigma must be positive");
}

SplatGeometry build_splat_geometry(const Splat& splat, const Camera& camera, const RasterConfig& config) {
  SplatGeometry g;
  const Mat3 rot = quaternion_to_matrix<double>(splat.rotation);
  const Vec2 scale = splat.log_scale.array().exp();

  g.H.col(0).head<3>() = scale(0) * rot.col(0);
  g.H.col(1).head<3>() = scale(1) * rot.col(1);
  g.H.col(3).head<3>() = splat.center;
  g.H(3, 3) = 1.0;
  g.M = camera.world_to_screen() * g.H;

  g.center_cam = camera.to_camera(splat.center);
  const Vec3 n = camera.R_wc * rot.col(2);
  g.flip = n.dot(g.center_cam) > 0 ? -1.0 : 1.0;
  g.normal_cam = g.flip * n;
  g.opacity = sigmoid(splat.raw_opacity);
  g.color = splat.raw_color.unaryExpr([](double v) { return sigmoid(v); });

  const double depth = g.center_cam.z();
  if (!(depth > config.near) || !(depth < config.far) || !g.H.allFinite()) return g;
  g.screen_center = Vec2(g.M(0, 3) / g.M(3, 3), g.M(1, 3) / g.M(3, 3));

  if (config.alpha_cutoff <= 0.0) {
    g.x1 = camera.width;
    g.y1 = camera.height;
    g.culled = false;
    return g;
  }
  if (g.opacity <= config.alpha_cutoff) return g;

  // Contributions need G >= cutoff / opacity, i.e. u^2 + v^2 <= r^2 in the
  // tangent plane, or a screen distance <= sigma * r for the low-pass term.
  const double radius = std::sqrt(2.0 * std::log(g.opacity / config.alpha_cutoff));
  const Vec3 tu = camera.R_wc * g.H.col(0).head<3>();
  const Vec3 tv = camera.R_wc * g.H.col(1).head<3>();
  double xmin = g.screen_center.x() - config.lowpass_sigma * radius;
  double xmax = g.screen_center.x() + config.lowpass_sigma * radius;
  double ymin = g.screen_center.y() - config.lowpass_sigma * radius;
  double ymax = g.screen_center.y() + config.lowpass_sigma * radius;
  bool full = false;
  for (int su = -1; su <= 1 && !full; su += 2) {
    for (int sv = -1; sv <= 1; sv += 2) {
      const Vec3 corner = g.center_cam + radius * (su * tu + sv * tv);
      if (corner.z() <= config.near) {
        full = true;
        break;
      }
      const Vec2 p = camera.project_camera(corner);
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  }
  if (full) {
    g.x0 = g.y0 = 0;
    g.x1 = camera.width;
    g.y1 = camera.height;
  } else {
    // Pixel centers sit at half-integers.
    auto lo = [](double v, int n) { return int(std::clamp(std::ceil(v - 0.5), 0.0, double(n))); };
    auto hi = [](double v, int n) { return int(std::clamp(std::floor(v - 0.5) + 1.0, 0.0, double(n))); };
    g.x0 = lo(xmin, camera.width);
    g.x1 = hi(xmax, camera.width);
    g.y0 = lo(ymin, camera.height);
    g.y1 = hi(ymax, camera.height);
  }
  g.culled = g.x0 >= g.x1 || g.y0 >= g.y1;
  return g;
}

namespace {

struct RawHit {
  double u, v, z;
};

// Plane-intersection form of the ray/splat hit: the pixel ray is the meet of
// the planes (-1, 0, 0, x) and (0, -1, 0, y), carried into uv-space by M^T.
std::optional<RawHit> intersect_planes(const Mat4& M, double x, double y) {
  const double hu1 = x * M(3, 0) - M(0, 0), hu2 = x * M(3, 1) - M(0, 1), hu4 = x * M(3, 3) - M(0, 3);
  const double hv1 = y * M(3, 0) - M(1, 0), hv2 = y * M(3, 1) - M(1, 1), hv4 = y * M(3, 3) - M(1, 3);
  const double den = hu1 * hv2 - hu2 * hv1;
  if (std::abs(den) < 1e-12) return std::nullopt;
  const double u = (hu2 * hv4 - hu4 * hv2) / den;
  const double v = (hu4 * hv1 - hu1 * hv4) / den;
  const double z = M(2, 0) * u + M(2, 1) * v + M(2, 3);
  return RawHit{u, v, z};
}

}  // namespace

std::optional<Intersection> ray_splat_intersect(const SplatGeometry& geometry, double x, double y,
                                                const RasterConfig& config) {
  const auto hit = intersect_planes(geometry.M, x, y);
  if (!hit || hit->z < config.near || hit->z > config.far) return std::nullopt;
  return Intersection{hit->u, hit->v, hit->z};
}

double gaussian_weight(double u, double v, double screen_dist_sq, double lowpass_sigma) {
  return std::max(std::exp(-0.5 * (u * u + v * v)),
                  std::exp(-0.5 * screen_dist_sq / (lowpass_sigma * lowpass_sigma)));
}

std::optional<SplatSample> evaluate_splat(const SplatGeometry& g, double x, double y, const RasterConfig& config) {
  const auto hit = intersect_planes(g.M, x, y);
  const double rho3 = hit ? hit->u * hit->u + hit->v * hit->v : std::numeric_limits<double>::infinity();
  const double dx = x - g.screen_center.x(), dy = y - g.screen_center.y();
  const double rho2 = (dx * dx + dy * dy) / (config.lowpass_sigma * config.lowpass_sigma);
  SplatSample s;
  if (rho3 <= rho2) {
    if (hit->z < config.near || hit->z > config.far) return std::nullopt;
    s.G = std::exp(-0.5 * rho3);
    s.z = hit->z;
    s.u = hit->u;
    s.v = hit->v;
    s.object_space = true;
  } else {
    s.G = std::exp(-0.5 * rho2);
    s.z = g.center_cam.z();
    s.object_space = false;
  }
  return s;
}

RenderOutput render(std::span<const Splat> splats, const Camera& camera, const RasterConfig& config,
                    RenderCache* cache) {
  config.validate();
  const int width = camera.width, height = camera.height;
  RenderOutput out{Image3(width, height), Image1(width, height), Image3(width, height), Image1(width, height)};

  RenderCache local;
  RenderCache& rc = cache ? *cache : local;
  rc.camera = camera;
  rc.config = config;
  rc.geometry.assign(splats.size(), SplatGeometry{});
  rc.normal_norm = Image1(width, height);
  parallel_for(splats.size(), [&](std::size_t i) { rc.geometry[i] = build_splat_geometry(splats[i], camera, config); });

  std::vector<std::uint32_t> order;
  order.reserve(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i)
    if (!rc.geometry[i].culled) order.push_back(std::uint32_t(i));
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double za = rc.geometry[a].center_cam.z(), zb = rc.geometry[b].center_cam.z();
    if (za != zb) return za < zb;
    return splats[a].id < splats[b].id;
  });

  const int ts = config.tile_size;
  const int tiles_x = (width + ts - 1) / ts, tiles_y = (height + ts - 1) / ts;
  rc.tiles.assign(std::size_t(tiles_x) * tiles_y, RenderCache::Tile{});
  for (int ty = 0; ty < tiles_y; ++ty)
    for (int tx = 0; tx < tiles_x; ++tx) {
      auto& tile = rc.tiles[std::size_t(ty) * tiles_x + tx];
      tile.x0 = tx * ts;
      tile.y0 = ty * ts;
      tile.x1 = std::min(width, tile.x0 + ts);
      tile.y1 = std::min(height, tile.y0 + ts);
    }
  for (std::uint32_t idx : order) {
    const SplatGeometry& g = rc.geometry[idx];
    for (int ty = g.y0 / ts; ty <= (g.y1 - 1) / ts; ++ty)
      for (int tx = g.x0 / ts; tx <= (g.x1 - 1) / ts; ++tx)
        rc.tiles[std::size_t(ty) * tiles_x + tx].splats.push_back(idx);
  }

  parallel_for(rc.tiles.size(), [&](std::size_t t) {
    RenderCache::Tile& tile = rc.tiles[t];
    const int tile_w = tile.x1 - tile.x0;
    tile.pixel_begin.assign(std::size_t(tile_w) * (tile.y1 - tile.y0) + 1, 0);
    tile.contributions.clear();
    for (int py = tile.y0; py < tile.y1; ++py) {
      for (int px = tile.x0; px < tile.x1; ++px) {
        const double x = px + 0.5, y = py + 0.5;
        double T = 1.0;
        Vec3 color = Vec3::Zero(), normal = Vec3::Zero();
        double depth = 0.0, coverage = 0.0;
        for (std::uint32_t slot = 0; slot < tile.splats.size(); ++slot) {
          const SplatGeometry& g = rc.geometry[tile.splats[slot]];
          if (px < g.x0 || px >= g.x1 || py < g.y0 || py >= g.y1) continue;
          const auto s = evaluate_splat(g, x, y, config);
          if (!s) continue;
          const double w = g.opacity * s->G;
          if (w < config.alpha_cutoff) continue;
          tile.contributions.push_back({slot, T});
          const double wT = w * T;
          coverage += wT;
          color += wT * g.color;
          depth += wT * s->z;
          normal += wT * g.normal_cam;
          T *= 1.0 - w;
          if (T < config.transmittance_floor) break;
        }
        const std::size_t local_idx = std::size_t(py - tile.y0) * tile_w + (px - tile.x0);
        tile.pixel_begin[local_idx + 1] = std::uint32_t(tile.contributions.size());

        // Equal to 1 - T, without the cancellation when coverage is tiny.
        const double alpha = coverage;
        const auto idx = out.alpha.index(px, py);
        out.alpha.data(idx) = alpha;
        out.color.data.row(idx) = color.transpose();
        out.depth.data(idx) = alpha > 0.0 ? depth / alpha : 0.0;
        const double nn = normal.norm();
        rc.normal_norm.data(idx) = nn;
        if (nn > 1e-12) out.normal.data.row(idx) = (normal / nn).transpose();
      }
    }
  });
  return out;
}

}  // namespace splatroom
