#include "splatroom/meshing.hpp"

#include "mc_tables.hpp"
#include "splatroom/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace splatroom {

void TsdfConfig::validate() const {
  if (!(voxel_size > 0)) throw std::invalid_argument("tsdf config: voxel_size must be positive");
  if (!(truncation > 0)) throw std::invalid_argument("tsdf config: truncation must be positive");
  if (!(padding >= 0)) throw std::invalid_argument("tsdf config: padding must be >= 0");
  if (!(near > 0 && near < far)) throw std::invalid_argument("tsdf config: need 0 < near < far");
}

TsdfVolume::TsdfVolume(const Vec3& origin, const Eigen::Vector3i& dims, double voxel_size, double truncation)
    : origin_(origin), dims_(dims), voxel_size_(voxel_size), truncation_(truncation) {
  if ((dims.array() < 1).any()) throw std::invalid_argument("tsdf volume: dims must be >= 1");
  const std::size_t n = std::size_t(dims.x()) * std::size_t(dims.y()) * std::size_t(dims.z());
  if (n > (std::size_t(1) << 28)) throw std::invalid_argument("tsdf volume: grid too large");
  tsdf_.assign(n, 1.0);
  weight_.assign(n, 0.0);
}

TsdfVolume make_volume(const Vec3& lo, const Vec3& hi, const TsdfConfig& config) {
  config.validate();
  const Vec3 origin = lo - Vec3::Constant(config.padding);
  const Vec3 extent = hi - lo + Vec3::Constant(2.0 * config.padding);
  Eigen::Vector3i dims;
  for (int a = 0; a < 3; ++a) dims[a] = int(std::ceil(extent[a] / config.voxel_size)) + 1;
  return TsdfVolume(origin, dims, config.voxel_size, config.truncation);
}

void integrate_depth(TsdfVolume& volume, const Image1& depth, const Image3* color, const Image1& alpha,
                     const Camera& camera, const TsdfConfig& config) {
  if (!depth.same_shape(alpha) || (color && !color->same_shape(depth)) ||
      !depth.same_shape(camera.width, camera.height))
    throw std::invalid_argument("integrate_depth: map dimensions differ");
  const Eigen::Vector3i dims = volume.dims();
  const double trunc = volume.truncation();
  if (color && volume.color().empty()) volume.color().assign(volume.tsdf().size(), Eigen::Vector3f::Zero());
  auto& tsdf = volume.tsdf();
  auto& weight = volume.weight();
  auto& rgb = volume.color();
  parallel_for(std::size_t(dims.z()), [&](std::size_t kz) {
    const int k = int(kz);
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i) {
        const Vec3 pc = camera.to_camera(volume.position(i, j, k));
        if (!(pc.z() > config.near)) continue;
        const Vec2 px = camera.project_camera(pc);
        const int x = int(std::floor(px.x())), y = int(std::floor(px.y()));
        if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) continue;
        if (alpha.at(x, y) < config.alpha_threshold) continue;
        const double d = depth.at(x, y);
        if (!(d >= config.near && d <= config.far)) continue;
        const double sdf = d - pc.z();
        if (sdf < -trunc) continue;
        const double obs = std::min(1.0, sdf / trunc);
        const std::size_t id = volume.index(i, j, k);
        const double w = weight[id];
        tsdf[id] = (tsdf[id] * w + obs) / (w + 1.0);
        if (color) {
          const Eigen::Vector3f c = color->pixel(x, y).matrix().transpose().cast<float>();
          rgb[id] = (rgb[id] * float(w) + c) / float(w + 1.0);
        }
        weight[id] = w + 1.0;
      }
  });
}

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh extract_mesh(const TsdfVolume& volume) {
  TriangleMesh mesh;
  const Eigen::Vector3i dims = volume.dims();
  const auto& tsdf = volume.tsdf();
  const auto& weight = volume.weight();
  const bool has_color = !volume.color().empty();
  std::unordered_map<std::uint64_t, int> edge_vertex;

  // Global edge id: the lower grid corner plus the axis the edge runs along.
  auto edge_key = [&](int i, int j, int k, int e) {
    const int* a = kCorner[kEdgeCorners[e][0]];
    const int* b = kCorner[kEdgeCorners[e][1]];
    const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    const int lx = i + std::min(a[0], b[0]), ly = j + std::min(a[1], b[1]), lz = k + std::min(a[2], b[2]);
    return std::uint64_t(volume.index(lx, ly, lz)) * 3 + std::uint64_t(axis);
  };

  for (int k = 0; k + 1 < dims.z(); ++k)
    for (int j = 0; j + 1 < dims.y(); ++j)
      for (int i = 0; i + 1 < dims.x(); ++i) {
        std::size_t ids[8];
        double val[8];
        int cube = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          ids[c] = volume.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (!(weight[ids[c]] > 0.0)) {
            observed = false;
            break;
          }
          val[c] = tsdf[ids[c]];
          if (val[c] < 0.0) cube |= 1 << c;
        }
        if (!observed || detail::kEdgeTable[std::size_t(cube)] == 0) continue;

        int vert[12];
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kEdgeTable[std::size_t(cube)] & (1 << e))) continue;
          const std::uint64_t key = edge_key(i, j, k, e);
          auto [it, inserted] = edge_vertex.try_emplace(key, int(mesh.vertices.size()));
          vert[e] = it->second;
          if (!inserted) continue;
          const int c0 = kEdgeCorners[e][0], c1 = kEdgeCorners[e][1];
          const double t = val[c0] / (val[c0] - val[c1]);
          const Vec3 p0 = volume.position(i + kCorner[c0][0], j + kCorner[c0][1], k + kCorner[c0][2]);
          const Vec3 p1 = volume.position(i + kCorner[c1][0], j + kCorner[c1][1], k + kCorner[c1][2]);
          mesh.vertices.push_back(p0 + t * (p1 - p0));
          if (has_color) {
            const Eigen::Vector3f col = volume.color()[ids[c0]] * float(1.0 - t) + volume.color()[ids[c1]] * float(t);
            mesh.colors.push_back(col.cast<double>());
          }
        }
        const auto& tri = detail::kTriTable[std::size_t(cube)];
        for (int t = 0; t + 2 < 16 && tri[std::size_t(t)] >= 0; t += 3) {
          const Eigen::Vector3i f(vert[tri[std::size_t(t)]], vert[tri[std::size_t(t + 1)]],
                                  vert[tri[std::size_t(t + 2)]]);
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          const Vec3& a = mesh.vertices[std::size_t(f[0])];
          const Vec3& b = mesh.vertices[std::size_t(f[1])];
          const Vec3& c = mesh.vertices[std::size_t(f[2])];
          if ((b - a).cross(c - a).norm() <= 1e-14 * volume.voxel_size() * volume.voxel_size()) continue;
          mesh.triangles.push_back(f);
        }
      }
  return mesh;
}

TriangleMesh reconstruct_mesh(const Scene& scene, const std::vector<Camera>& cameras, const TsdfConfig& config,
                              const RasterConfig& raster) {
  config.validate();
  if (scene.surfels().empty() || cameras.empty()) return {};
  const std::vector<Splat> splats = scene.splats();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const Splat& s : splats) {
    lo = lo.cwiseMin(s.center);
    hi = hi.cwiseMax(s.center);
  }
  TsdfVolume volume = make_volume(lo, hi, config);
  for (const Camera& cam : cameras) {
    const RenderOutput out = render(splats, cam, raster);
    integrate_depth(volume, out.depth, &out.color, out.alpha, cam, config);
  }
  return extract_mesh(volume);
}

}  // namespace splatroom
