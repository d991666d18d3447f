#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/scene.hpp"
#include "splatroom/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace splatroom {

// One training view: image, camera and optional monocular priors. Depth
// priors are metric camera z (0 = no prior); normal priors are camera-space
// unit vectors (0 = no prior).
struct Frame {
  std::string name;
  Camera camera;
  Image3 image;
  std::optional<Image1> depth_prior;
  std::optional<Image3> normal_prior;
};

struct Dataset {
  std::vector<Frame> frames;
  std::vector<SfmPoint> points;

  std::vector<Camera> cameras() const {
    std::vector<Camera> out;
    for (const Frame& f : frames) out.push_back(f.camera);
    return out;
  }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Vec3> colors;  // empty or one per vertex

  bool empty() const { return triangles.empty(); }
};

}  // namespace splatroom
