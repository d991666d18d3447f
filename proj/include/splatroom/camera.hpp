#pragma once

#include "splatroom/types.hpp"

namespace splatroom {

// Pinhole camera. Right-handed, +z into the screen, +y down the image,
// pixel (0, 0) top-left with pixel centers at half-integers.
struct Camera {
  Mat3 K = Mat3::Identity();
  Mat3 R_wc = Mat3::Identity();  // world -> camera rotation
  Vec3 t_wc = Vec3::Zero();
  int width = 0;
  int height = 0;

  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  Vec3 to_camera(const Vec3& world) const { return R_wc * world + t_wc; }
  Vec3 center() const { return -R_wc.transpose() * t_wc; }
  Vec3 view_direction() const { return R_wc.row(2).transpose(); }

  // Continuous pixel coordinates of a camera-space point.
  Vec2 project_camera(const Vec3& pc) const {
    return {fx() * pc.x() / pc.z() + cx(), fy() * pc.y() / pc.z() + cy()};
  }
  Vec2 project(const Vec3& world) const { return project_camera(to_camera(world)); }

  // Camera-space direction (z = 1) through continuous pixel coordinates.
  Vec3 ray(double x, double y) const { return {(x - cx()) / fx(), (y - cy()) / fy(), 1.0}; }

  // World-to-screen matrix mapping homogeneous world points to
  // (x*z, y*z, z, z) with (x, y) the pixel and z the camera depth.
  Mat4 world_to_screen() const;

  // Throws std::invalid_argument when intrinsics or rotation are invalid.
  void validate() const;

  static Camera from_intrinsics(double fx, double fy, double cx, double cy, int width, int height);
  // Camera at eye looking at target; up is a world direction that maps to -y
  // in the image.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                        double cx, double cy, int width, int height);
};

// Relative pose taking reference-camera coordinates to neighbor-camera
// coordinates: X_n = R * X_r + T.
struct RelativePose {
  Mat3 R;
  Vec3 T;
};
RelativePose relative_pose(const Camera& ref, const Camera& nb);

}  // namespace splatroom
