#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/gradients.hpp"
#include "splatroom/rasterizer.hpp"
#include "splatroom/types.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace splatroom {

struct LossWeights {
  double lambda_rgb = 1.0;
  double lambda_d = 1.0;
  double lambda_n = 1.0;
  double lambda_1 = 0.01;
  double lambda_cos = 0.01;
  double lambda_grad = 0.5;
  double lambda_geo = 0.05;
  double lambda_pho = 0.2;
  double rgb_ssim_mix = 0.2;

  void validate() const;
};

// Photometric loss (1 - mix) * L1 + mix * (1 - SSIM), SSIM over an 11x11
// Gaussian window (sigma 1.5, zero padding) averaged over pixels and channels.
// Writes d(loss)/d(rendered) to grad when given.
double rgb_loss(const Image3& rendered, const Image3& target, double ssim_mix, Image3* grad = nullptr);

// Mean SSIM alone, exposed for tests and the diagnostics oracle.
double ssim(const Image3& a, const Image3& b);

struct DepthAlignment {
  double s = 1.0;
  double t = 0.0;
  bool degenerate = false;
};

// Least-squares (s, t) minimizing sum over valid pixels of (s * rendered + t - prior)^2.
DepthAlignment align_depth(const Image1& rendered, const Image1& prior, const Mask& valid);

struct DepthLossInfo {
  DepthAlignment alignment;
  double data = 0.0;      // mean squared aligned residual
  double gradient = 0.0;  // multi-scale gradient-matching term (unweighted)
  std::size_t valid = 0;
  bool empty = false;
};

// Scale/shift-invariant depth loss: data + lambda_grad * gradient term, with
// gradients flowing through the alignment.
double depth_loss(const Image1& rendered, const Image1& prior, const Mask& valid, double lambda_grad,
                  Image1* grad = nullptr, DepthLossInfo* info = nullptr);

// Multi-scale gradient matching on a residual map: for steps 1, 2, 4, 8 the
// absolute forward differences between valid grid neighbors, normalized by
// the number of valid grid pixels at that step.
double gradient_matching(const Image1& residual, const Mask& valid, Image1* grad = nullptr);

// lambda_1 * mean L1 + lambda_cos * mean (1 - cos) over valid pixels whose
// rendered normal is not (near) zero.
double normal_loss(const Image3& rendered, const Image3& prior, const Mask& valid, double lambda_1,
                   double lambda_cos, Image3* grad = nullptr);

struct MvConfig {
  int patch_radius = 3;
  int sample_stride = 4;
  double tau_geo = 1.0;  // pixels
  int start_iter = 7000;
  double alpha_threshold = 0.5;  // rendered alpha required at sampled and warped pixels

  void validate() const;
};

// Homography induced by the plane through the reference-camera point
// depth * K_r^-1 (x, y, 1) with camera-space normal n, mapping reference
// pixels to neighbor pixels. Normalized so H(2, 2) = 1 when nonzero. The
// normal need not be unit length. Returns nothing when the plane passes
// within 1e-8 of the reference center.
template <class Scalar>
std::optional<Eigen::Matrix<Scalar, 3, 3>> try_plane_homography(const Mat3& K_r, const Mat3& K_n, const Mat3& R_rn,
                                                                const Vec3& T_rn,
                                                                const Eigen::Matrix<Scalar, 3, 1>& normal_r,
                                                                const Scalar& depth_r,
                                                                const Eigen::Matrix<Scalar, 2, 1>& pixel) {
  using V3 = Eigen::Matrix<Scalar, 3, 1>;
  using M3 = Eigen::Matrix<Scalar, 3, 3>;
  V3 n = normal_r;
  if (n.z() > Scalar(0)) n = -n;
  const V3 X = K_r.inverse().cast<Scalar>() * V3(pixel.x(), pixel.y(), Scalar(1)) * depth_r;
  const Scalar D = -n.dot(X);
  using std::abs;
  if (abs(D) < Scalar(1e-8)) return std::nullopt;
  M3 H = K_n.cast<Scalar>() * (R_rn.cast<Scalar>() - T_rn.cast<Scalar>() * n.transpose() / D) *
         K_r.inverse().cast<Scalar>();
  const Scalar h22 = H(2, 2);
  if (abs(h22) > Scalar(0)) H /= h22;
  return H;
}

// Throwing variant: std::domain_error("degenerate plane").
template <class Scalar>
Eigen::Matrix<Scalar, 3, 3> plane_homography(const Mat3& K_r, const Mat3& K_n, const Mat3& R_rn, const Vec3& T_rn,
                                             const Eigen::Matrix<Scalar, 3, 1>& normal_r, const Scalar& depth_r,
                                             const Eigen::Matrix<Scalar, 2, 1>& pixel) {
  auto H = try_plane_homography<Scalar>(K_r, K_n, R_rn, T_rn, normal_r, depth_r, pixel);
  if (!H) throw std::domain_error("degenerate plane");
  return *H;
}

// Normalized cross-correlation of two equally sized patches; nothing when
// either patch has (near) zero variance.
std::optional<double> ncc(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

struct MvView {
  const Image3& image;
  const Camera& camera;
  const RenderOutput& render;
};

struct MvResult {
  double value = 0.0;  // lambda_geo * geo + lambda_pho * pho
  double geo = 0.0;
  double pho = 0.0;
  std::size_t n_geo = 0;
  std::size_t n_pho = 0;
  bool empty = true;
  MapGrads ref_grads;  // w.r.t. the reference render (depth and normal)
  MapGrads nb_grads;   // w.r.t. the neighbor render (depth and normal)
};

// Forward-backward reprojection error and patch NCC between a reference view
// and a neighbor view, computed from the rendered depth and normals.
MvResult mv_consistency_loss(const MvView& ref, const MvView& nb, const MvConfig& config,
                             const LossWeights& weights, bool want_grads = true);

struct LossTerms {
  double rgb = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double mv = 0.0;  // already weighted internally
};

// L = lambda_rgb * rgb + lambda_d * depth + lambda_n * normal + mv. Throws
// std::runtime_error naming the first non-finite term.
double total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace splatroom
