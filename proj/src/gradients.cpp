#include "splatroom/gradients.hpp"

#include "splatroom/parallel.hpp"

#include <stdexcept>

namespace splatroom {

ParamRow pack_params(const Splat& s) {
  ParamRow row;
  row.segment<3>(param::kCenter) = s.center.transpose();
  row.segment<4>(param::kRotation) = s.rotation.transpose();
  row.segment<2>(param::kScale) = s.log_scale.transpose();
  row(param::kOpacity) = s.raw_opacity;
  row.segment<3>(param::kColor) = s.raw_color.transpose();
  return row;
}

void unpack_params(const ParamRow& row, Splat& s) {
  s.center = row.segment<3>(param::kCenter).transpose();
  s.rotation = row.segment<4>(param::kRotation).transpose();
  s.log_scale = row.segment<2>(param::kScale).transpose();
  s.raw_opacity = row(param::kOpacity);
  s.raw_color = row.segment<3>(param::kColor).transpose();
}

ParamGrads ParamGrads::zeros(std::size_t n) {
  return {ParamMatrix::Zero(Eigen::Index(n), param::kCount), Eigen::VectorXd::Zero(Eigen::Index(n))};
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& o) {
  params += o.params;
  screen_grad += o.screen_grad;
  return *this;
}

MapGrads MapGrads::zeros(int width, int height) {
  return {Image3(width, height), Image1(width, height), Image3(width, height), Image1(width, height)};
}

MapGrads& MapGrads::operator+=(const MapGrads& o) {
  color.data += o.color.data;
  depth.data += o.depth.data;
  normal.data += o.normal.data;
  alpha.data += o.alpha.data;
  return *this;
}

Vec4 quaternion_backward(const Vec4& q_raw, const Mat3& G) {
  const double norm = q_raw.norm();
  const Vec4 q = q_raw / norm;
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Vec4 dq;
  dq(0) = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) + x * G(2, 1));
  dq(1) = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) + z * G(2, 0) +
               w * G(2, 1) - 2 * x * G(2, 2));
  dq(2) = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) - w * G(2, 0) +
               z * G(2, 1) - 2 * y * G(2, 2));
  dq(3) = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) + y * G(1, 2) +
               x * G(2, 0) + y * G(2, 1));
  return (dq - q * q.dot(dq)) / norm;
}

namespace {

// Gradient of one splat w.r.t. its screen-space quantities. Columns of dM
// correspond to the used columns (0, 1, 3) of M.
struct SplatPartial {
  Eigen::Matrix<double, 4, 3> dM = Eigen::Matrix<double, 4, 3>::Zero();
  Vec3 dcolor = Vec3::Zero();
  Vec3 dnormal = Vec3::Zero();
  double dopacity = 0.0;

  SplatPartial& operator+=(const SplatPartial& o) {
    dM += o.dM;
    dcolor += o.dcolor;
    dnormal += o.dnormal;
    dopacity += o.dopacity;
    return *this;
  }
};

void check_finite(const MapGrads& grads) {
  if (!grads.color.data.allFinite()) throw std::invalid_argument("backward: non-finite gradient in color map");
  if (!grads.depth.data.allFinite()) throw std::invalid_argument("backward: non-finite gradient in depth map");
  if (!grads.normal.data.allFinite()) throw std::invalid_argument("backward: non-finite gradient in normal map");
  if (!grads.alpha.data.allFinite()) throw std::invalid_argument("backward: non-finite gradient in alpha map");
}

// Backward through u, v of the plane-intersection hit, given du, dv.
void intersect_backward(const Mat4& M, double x, double y, double u, double v, double du, double dv,
                        Eigen::Matrix<double, 4, 3>& dM) {
  const double hu1 = x * M(3, 0) - M(0, 0), hu2 = x * M(3, 1) - M(0, 1), hu4 = x * M(3, 3) - M(0, 3);
  const double hv1 = y * M(3, 0) - M(1, 0), hv2 = y * M(3, 1) - M(1, 1), hv4 = y * M(3, 3) - M(1, 3);
  const double den = hu1 * hv2 - hu2 * hv1;
  const double dnu = du / den, dnv = dv / den;
  const double dden = -(du * u + dv * v) / den;
  double dhu1 = 0, dhu2 = 0, dhu4 = 0, dhv1 = 0, dhv2 = 0, dhv4 = 0;
  // u numerator: hu2 hv4 - hu4 hv2
  dhu2 += dnu * hv4;
  dhv4 += dnu * hu2;
  dhu4 -= dnu * hv2;
  dhv2 -= dnu * hu4;
  // v numerator: hu4 hv1 - hu1 hv4
  dhu4 += dnv * hv1;
  dhv1 += dnv * hu4;
  dhu1 -= dnv * hv4;
  dhv4 -= dnv * hu1;
  // denominator: hu1 hv2 - hu2 hv1
  dhu1 += dden * hv2;
  dhv2 += dden * hu1;
  dhu2 -= dden * hv1;
  dhv1 -= dden * hu2;
  const double dhu[3] = {dhu1, dhu2, dhu4};
  const double dhv[3] = {dhv1, dhv2, dhv4};
  for (int c = 0; c < 3; ++c) {
    dM(0, c) -= dhu[c];
    dM(1, c) -= dhv[c];
    dM(3, c) += x * dhu[c] + y * dhv[c];
  }
}

}  // namespace

ParamGrads backward(std::span<const Splat> splats, const RenderCache& cache, const RenderOutput& output,
                    const MapGrads& grads) {
  if (!grads.color.same_shape(output.alpha) || !grads.depth.same_shape(output.alpha) ||
      !grads.normal.same_shape(output.alpha) || !grads.alpha.same_shape(output.alpha))
    throw std::invalid_argument("backward: gradient maps do not match the render size");
  if (cache.geometry.size() != splats.size())
    throw std::invalid_argument("backward: cache does not belong to these splats");
  check_finite(grads);

  const RasterConfig& config = cache.config;
  const double inv_sigma2 = 1.0 / (config.lowpass_sigma * config.lowpass_sigma);

  std::vector<std::vector<SplatPartial>> tile_partials(cache.tiles.size());
  parallel_for(cache.tiles.size(), [&](std::size_t t) {
    const RenderCache::Tile& tile = cache.tiles[t];
    auto& partials = tile_partials[t];
    partials.assign(tile.splats.size(), SplatPartial{});
    const int tile_w = tile.x1 - tile.x0;
    for (int py = tile.y0; py < tile.y1; ++py) {
      for (int px = tile.x0; px < tile.x1; ++px) {
        const std::size_t local_idx = std::size_t(py - tile.y0) * tile_w + (px - tile.x0);
        const std::uint32_t begin = tile.pixel_begin[local_idx], end = tile.pixel_begin[local_idx + 1];
        if (begin == end) continue;
        const auto idx = output.alpha.index(px, py);
        const double x = px + 0.5, y = py + 0.5;

        const Vec3 g_color = grads.color.data.row(idx).transpose();
        const double alpha = output.alpha.data(idx);
        double g_depth_num = 0.0, g_alpha = grads.alpha.data(idx);
        if (alpha > 0.0) {
          g_depth_num = grads.depth.data(idx) / alpha;
          g_alpha -= grads.depth.data(idx) * output.depth.data(idx) / alpha;
        }
        Vec3 g_normal_sum = Vec3::Zero();
        const double nn = cache.normal_norm.data(idx);
        if (nn > 1e-12) {
          const Vec3 n = output.normal.data.row(idx).transpose();
          const Vec3 gn = grads.normal.data.row(idx).transpose();
          g_normal_sum = (gn - n * n.dot(gn)) / nn;
        }

        double behind = 0.0;  // gradient carried by everything behind the current splat, relative to its T
        for (std::uint32_t c = end; c-- > begin;) {
          const auto& contrib = tile.contributions[c];
          const SplatGeometry& g = cache.geometry[tile.splats[contrib.slot]];
          const SplatSample s = *evaluate_splat(g, x, y, config);
          const double w = g.opacity * s.G;
          const double T = contrib.transmittance;
          const double gf = g_color.dot(g.color) + g_depth_num * s.z + g_normal_sum.dot(g.normal_cam) + g_alpha;
          const double dw = T * (gf - behind);
          behind = gf * w + (1.0 - w) * behind;

          SplatPartial& p = partials[contrib.slot];
          const double wT = w * T;
          p.dcolor += wT * g_color;
          p.dnormal += wT * g_normal_sum;
          p.dopacity += s.G * dw;
          const double dz = wT * g_depth_num;
          const double dG = g.opacity * dw;
          if (s.object_space) {
            const double du = -s.u * s.G * dG + dz * g.M(2, 0);
            const double dv = -s.v * s.G * dG + dz * g.M(2, 1);
            p.dM(2, 0) += dz * s.u;
            p.dM(2, 1) += dz * s.v;
            p.dM(2, 2) += dz;
            intersect_backward(g.M, x, y, s.u, s.v, du, dv, p.dM);
          } else {
            const double dx = x - g.screen_center.x(), dy = y - g.screen_center.y();
            const double dmx = dG * s.G * dx * inv_sigma2, dmy = dG * s.G * dy * inv_sigma2;
            const double m33 = g.M(3, 3);
            p.dM(0, 2) += dmx / m33;
            p.dM(1, 2) += dmy / m33;
            p.dM(3, 2) -= (dmx * g.screen_center.x() + dmy * g.screen_center.y()) / m33;
            p.dM(2, 2) += dz;
          }
        }
      }
    }
  });

  // Fixed-order reduction keeps the result independent of the worker count.
  std::vector<SplatPartial> totals(splats.size());
  for (std::size_t t = 0; t < cache.tiles.size(); ++t) {
    const auto& tile = cache.tiles[t];
    for (std::size_t j = 0; j < tile.splats.size(); ++j) totals[tile.splats[j]] += tile_partials[t][j];
  }

  const Camera& cam = cache.camera;
  const double fx = cam.fx(), fy = cam.fy(), cx = cam.cx(), cy = cam.cy();
  ParamGrads out = ParamGrads::zeros(splats.size());
  parallel_for(splats.size(), [&](std::size_t i) {
    const SplatGeometry& g = cache.geometry[i];
    if (g.culled) return;
    const SplatPartial& p = totals[i];
    const Splat& s = splats[i];
    Vec3 dV[3];
    for (int c = 0; c < 3; ++c) {
      dV[c] = Vec3(fx * p.dM(0, c), fy * p.dM(1, c), cx * p.dM(0, c) + cy * p.dM(1, c) + p.dM(2, c) + p.dM(3, c));
    }
    const Mat3& Rc = cam.R_wc;
    const Mat3 rot = quaternion_to_matrix<double>(s.rotation);
    const Vec2 scale = s.log_scale.array().exp();
    const Vec3 Tu = scale(0) * (Rc * rot.col(0));
    const Vec3 Tv = scale(1) * (Rc * rot.col(1));

    auto row = out.params.row(Eigen::Index(i));
    row.segment<3>(param::kCenter) = (Rc.transpose() * dV[2]).transpose();
    row(param::kScale) = dV[0].dot(Tu);
    row(param::kScale + 1) = dV[1].dot(Tv);
    Mat3 dR;
    dR.col(0) = scale(0) * (Rc.transpose() * dV[0]);
    dR.col(1) = scale(1) * (Rc.transpose() * dV[1]);
    dR.col(2) = g.flip * (Rc.transpose() * p.dnormal);
    row.segment<4>(param::kRotation) = quaternion_backward(s.rotation, dR).transpose();
    row(param::kOpacity) = p.dopacity * g.opacity * (1.0 - g.opacity);
    row.segment<3>(param::kColor) = (p.dcolor.array() * g.color.array() * (1.0 - g.color.array())).matrix().transpose();

    const double z = g.center_cam.z();
    const double gx = dV[2].x() * z / fx * 0.5 * cam.width;
    const double gy = dV[2].y() * z / fy * 0.5 * cam.height;
    out.screen_grad(Eigen::Index(i)) = std::hypot(gx, gy);
  });
  return out;
}

void accumulate_seed_stats(const ParamGrads& grads, Scene& scene) {
  const auto& surfels = scene.surfels();
  if (grads.screen_grad.size() != Eigen::Index(surfels.size()))
    throw std::invalid_argument("accumulate_seed_stats: gradient rows do not match the scene");
  std::vector<double> grad_sum(scene.seeds().size(), 0.0), opacity_sum(scene.seeds().size(), 0.0);
  std::vector<int> members(scene.seeds().size(), 0);
  for (std::size_t i = 0; i < surfels.size(); ++i) {
    const std::size_t s = scene.seed_index(surfels[i].seed_id);
    grad_sum[s] += grads.screen_grad(Eigen::Index(i));
    opacity_sum[s] += surfels[i].opacity();
    ++members[s];
  }
  auto& seeds = scene.seeds();
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!seeds[s].active || members[s] == 0) continue;
    seeds[s].grad_accum += grad_sum[s] / members[s];
    seeds[s].grad_count += 1;
    seeds[s].opacity_accum += opacity_sum[s];
    seeds[s].opacity_count += 1;
  }
}

}  // namespace splatroom
