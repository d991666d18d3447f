#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/scene.hpp"
#include "splatroom/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace splatroom {

struct RasterConfig {
  double near = 0.01;
  double far = 100.0;
  int tile_size = 16;
  double alpha_cutoff = 1.0 / 255.0;    // contributions below this are skipped
  double transmittance_floor = 1e-4;    // stop compositing once T drops below
  double lowpass_sigma = 0.3;           // screen-space filter radius (pixels)
  double alpha_valid_threshold = 0.5;   // alpha above which depth/normal count as valid

  void validate() const;
};

// Homogeneous geometry of one splat under one camera. H maps tangent-plane
// coordinates (u, v, 1, 1) to world space; M = W * H maps them to screen
// space (x*z, y*z, z, z).
struct SplatGeometry {
  Mat4 H = Mat4::Zero();
  Mat4 M = Mat4::Zero();
  Vec3 center_cam = Vec3::Zero();
  Vec3 normal_cam = Vec3::Zero();  // t_w in camera space, flipped to face the camera
  double flip = 1.0;
  Vec2 screen_center = Vec2::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  bool culled = true;
  // Pixel range [x0, x1) x [y0, y1) that can receive a contribution.
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

SplatGeometry build_splat_geometry(const Splat& splat, const Camera& camera, const RasterConfig& config = {});

struct Intersection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
};

// Intersects the ray through continuous pixel coordinates (x, y) with the
// splat plane. Returns nothing when the ray is parallel to the plane or the
// hit depth lies outside [near, far].
std::optional<Intersection> ray_splat_intersect(const SplatGeometry& geometry, double x, double y,
                                                const RasterConfig& config = {});

// Object-space Gaussian with a screen-space low-pass floor.
double gaussian_weight(double u, double v, double screen_dist_sq, double lowpass_sigma);

struct RenderOutput {
  Image3 color;
  Image1 depth;   // expected camera depth, 0 where alpha == 0
  Image3 normal;  // camera-space unit normals, 0 where nothing was hit
  Image1 alpha;

  int width() const { return alpha.width; }
  int height() const { return alpha.height; }
};

// Intermediate state kept from a forward pass for the backward pass.
struct RenderCache {
  struct Contribution {
    std::uint32_t slot;  // position in the tile's splat list
    double transmittance;
  };
  struct Tile {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::vector<std::uint32_t> splats;        // indices into geometry, depth order
    std::vector<std::uint32_t> pixel_begin;   // CSR offsets into contributions
    std::vector<Contribution> contributions;
  };
  Camera camera;
  RasterConfig config;
  std::vector<SplatGeometry> geometry;  // aligned with the input splats
  std::vector<Tile> tiles;
  Image1 normal_norm;  // |sum of weighted normals| before normalization
};

// Per-pixel evaluation of one splat, shared by the forward and backward passes.
struct SplatSample {
  double G = 0.0;
  double z = 0.0;
  double u = 0.0;
  double v = 0.0;
  bool object_space = true;  // false when the low-pass filter dominates
};
std::optional<SplatSample> evaluate_splat(const SplatGeometry& geometry, double x, double y,
                                          const RasterConfig& config);

// Front-to-back alpha compositing of all splats. Splats are ordered by center
// depth with ties broken by id, so the result does not depend on input order.
RenderOutput render(std::span<const Splat> splats, const Camera& camera, const RasterConfig& config = {},
                    RenderCache* cache = nullptr);

}  // namespace splatroom
