#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/dataset.hpp"
#include "splatroom/rasterizer.hpp"
#include "splatroom/scene.hpp"

#include <algorithm>
#include <vector>

namespace splatroom {

struct TsdfConfig {
  double voxel_size = 0.02;
  double truncation = 0.1;  // 5 voxels
  double padding = 0.1;     // margin around the surfel-center bounding box
  double alpha_threshold = 0.5;
  double near = 0.01;
  double far = 100.0;

  void validate() const;
};

// Dense TSDF grid. Voxel (i, j, k) is centered at origin + (i, j, k) * voxel_size.
class TsdfVolume {
 public:
  TsdfVolume() = default;
  TsdfVolume(const Vec3& origin, const Eigen::Vector3i& dims, double voxel_size, double truncation);

  const Vec3& origin() const { return origin_; }
  const Eigen::Vector3i& dims() const { return dims_; }
  double voxel_size() const { return voxel_size_; }
  double truncation() const { return truncation_; }

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * std::size_t(dims_.y()) + std::size_t(j)) * std::size_t(dims_.x()) + std::size_t(i);
  }
  Vec3 position(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3(i, j, k); }

  double tsdf(int i, int j, int k) const { return tsdf_[index(i, j, k)]; }
  double weight(int i, int j, int k) const { return weight_[index(i, j, k)]; }
  std::vector<double>& tsdf() { return tsdf_; }
  std::vector<double>& weight() { return weight_; }
  const std::vector<double>& tsdf() const { return tsdf_; }
  const std::vector<double>& weight() const { return weight_; }
  std::vector<Eigen::Vector3f>& color() { return color_; }
  const std::vector<Eigen::Vector3f>& color() const { return color_; }

  // Fills the grid from a signed distance function (weight 1 everywhere).
  template <class F>
  void fill(F&& sdf) {
    for (int k = 0; k < dims_.z(); ++k)
      for (int j = 0; j < dims_.y(); ++j)
        for (int i = 0; i < dims_.x(); ++i) {
          const std::size_t id = index(i, j, k);
          tsdf_[id] = std::clamp(sdf(position(i, j, k)) / truncation_, -1.0, 1.0);
          weight_[id] = 1.0;
        }
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
  double voxel_size_ = 0.02;
  double truncation_ = 0.1;
  std::vector<double> tsdf_;
  std::vector<double> weight_;
  std::vector<Eigen::Vector3f> color_;
};

// Volume covering [lo - padding, hi + padding].
TsdfVolume make_volume(const Vec3& lo, const Vec3& hi, const TsdfConfig& config);

// Projective TSDF update with unit weight per observation. Pixels with alpha
// below the threshold or depth outside [near, far] are skipped.
void integrate_depth(TsdfVolume& volume, const Image1& depth, const Image3* color, const Image1& alpha,
                     const Camera& camera, const TsdfConfig& config);

// Marching cubes over cells whose 8 corners are all observed. Shared edge
// vertices are welded; triangles are emitted in cell order.
TriangleMesh extract_mesh(const TsdfVolume& volume);

// Renders every camera's depth, fuses it and extracts the surface.
TriangleMesh reconstruct_mesh(const Scene& scene, const std::vector<Camera>& cameras, const TsdfConfig& config,
                              const RasterConfig& raster = {});

}  // namespace splatroom
