#pragma once

#include "splatroom/dataset.hpp"
#include "splatroom/io.hpp"

#include <optional>

namespace splatroom {

enum class RoomTexture { Checker, GradientNoise };
enum class Trajectory { Circle, Grid };

// Axis-aligned room [0, W] x [0, D] x [0, H] with z up, viewed from inside.
struct SyntheticRoomSpec {
  Vec3 extents = Vec3(3.0, 3.0, 2.5);
  RoomTexture texture = RoomTexture::Checker;
  double tile_size = 0.25;       // checker square / noise cell edge (meters)
  int n_views = 24;
  Trajectory trajectory = Trajectory::Circle;
  double trajectory_radius = 0.6;  // circle radius or grid half-width (meters)
  double pitch_deg = 25.0;         // alternating up/down tilt
  int width = 128;
  int height = 96;
  double hfov_deg = 90.0;
  double depth_noise = 0.0;        // multiplicative sigma of the depth prior
  double normal_noise_deg = 0.0;   // sigma of the normal prior tilt
  double depth_prior_scale = 1.0;  // affine distortion of the depth prior
  double depth_prior_shift = 0.0;
  int n_points = 4000;
  double point_noise = 0.005;      // Gaussian position noise (meters)
  double outlier_fraction = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

// Applies `key = value` overrides (extents = W D H, texture = checker|noise, ...).
SyntheticRoomSpec parse_room_spec(const ConfigMap& config);

struct SyntheticRoom {
  Dataset dataset;
  TriangleMesh gt_mesh;  // 12 triangles
};

// Renders the room analytically. Images are quantized to 8 bits and priors to
// 32-bit floats so a saved dataset loads back unchanged.
SyntheticRoom generate_synthetic_room(const SyntheticRoomSpec& spec);

// Analytic shading of the room along a world-space ray from inside it:
// returns the hit point, inward face normal and texture color.
struct RoomHit {
  Vec3 point;
  Vec3 normal;
  Vec3 color;
  double t;
};
std::optional<RoomHit> trace_room(const SyntheticRoomSpec& spec, const Vec3& origin, const Vec3& dir);

Vec3 room_texture(const SyntheticRoomSpec& spec, int face, const Vec3& p);

TriangleMesh room_mesh(const Vec3& extents);

std::vector<Camera> room_cameras(const SyntheticRoomSpec& spec);

}  // namespace splatroom
