#pragma once

#include "splatroom/rasterizer.hpp"
#include "splatroom/scene.hpp"

#include <span>

namespace splatroom {

// Layout of one surfel's raw parameters in gradient and optimizer buffers.
namespace param {
inline constexpr int kCenter = 0;    // 3: world center (== offset for the optimizer)
inline constexpr int kRotation = 3;  // 4: quaternion (w, x, y, z)
inline constexpr int kScale = 7;     // 2: log scales
inline constexpr int kOpacity = 9;   // 1: raw opacity
inline constexpr int kColor = 10;    // 3: raw color
inline constexpr int kCount = 13;
}  // namespace param

using ParamMatrix = Eigen::Matrix<double, Eigen::Dynamic, param::kCount, Eigen::RowMajor>;
using ParamRow = Eigen::Matrix<double, 1, param::kCount>;

ParamRow pack_params(const Splat& s);
void unpack_params(const ParamRow& row, Splat& s);

struct ParamGrads {
  ParamMatrix params;            // one row per splat
  Eigen::VectorXd screen_grad;   // |dL/d(projected center)| in NDC units

  static ParamGrads zeros(std::size_t n);
  ParamGrads& operator+=(const ParamGrads& o);
};

// Upstream gradients w.r.t. each rendered map.
struct MapGrads {
  Image3 color;
  Image1 depth;
  Image3 normal;
  Image1 alpha;

  static MapGrads zeros(int width, int height);
  MapGrads& operator+=(const MapGrads& o);
};

// Reverse-mode derivative of render(). The cache must come from the forward
// pass that produced `output`. Throws std::invalid_argument naming the map if
// an upstream gradient is not finite.
ParamGrads backward(std::span<const Splat> splats, const RenderCache& cache, const RenderOutput& output,
                    const MapGrads& grads);

// Gradient of a quaternion-parameterized rotation: given dL/dR for
// R = quaternion_to_matrix(q), returns dL/dq (tangent to the sphere at q).
Vec4 quaternion_backward(const Vec4& q, const Mat3& dR);

// Adds each seed's mean surfel screen gradient to grad_accum and the sum of
// its surfels' opacities to opacity_accum; rows of grads follow
// scene.surfels() order.
void accumulate_seed_stats(const ParamGrads& grads, Scene& scene);

}  // namespace splatroom
