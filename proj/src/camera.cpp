#include "splatroom/camera.hpp"

#include <stdexcept>

namespace splatroom {

Mat4 Camera::world_to_screen() const {
  Mat4 proj = Mat4::Zero();
  proj.block<2, 3>(0, 0) = K.topRows<2>();
  proj(2, 2) = 1.0;
  proj(3, 2) = 1.0;
  Mat4 extrinsic = Mat4::Identity();
  extrinsic.topLeftCorner<3, 3>() = R_wc;
  extrinsic.topRightCorner<3, 1>() = t_wc;
  return proj * extrinsic;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
  if (!(fx() > 0) || !(fy() > 0)) throw std::invalid_argument("camera: focal lengths must be positive");
  if (K(0, 1) != 0.0 || K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0)
    throw std::invalid_argument("camera: K must be zero-skew with last row (0, 0, 1)");
  if ((R_wc * R_wc.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || R_wc.determinant() < 0)
    throw std::invalid_argument("camera: R_wc is not a rotation");
  if (!t_wc.allFinite() || !K.allFinite()) throw std::invalid_argument("camera: non-finite pose");
}

Camera Camera::from_intrinsics(double fx, double fy, double cx, double cy, int width, int height) {
  Camera cam;
  cam.K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  cam.width = width;
  cam.height = height;
  return cam;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                       double cx, double cy, int width, int height) {
  Camera cam = from_intrinsics(fx, fy, cx, cy, width, height);
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) throw std::invalid_argument("look_at: up is parallel to the view direction");
  right.normalize();
  const Vec3 down = forward.cross(right);
  cam.R_wc.row(0) = right.transpose();
  cam.R_wc.row(1) = down.transpose();
  cam.R_wc.row(2) = forward.transpose();
  cam.t_wc = -cam.R_wc * eye;
  return cam;
}

RelativePose relative_pose(const Camera& ref, const Camera& nb) {
  RelativePose p;
  p.R = nb.R_wc * ref.R_wc.transpose();
  p.T = nb.t_wc - p.R * ref.t_wc;
  return p;
}

}  // namespace splatroom
