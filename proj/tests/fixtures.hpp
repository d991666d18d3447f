#pragma once

#include "splatroom/dataset.hpp"
#include "splatroom/rasterizer.hpp"
#include "splatroom/scene.hpp"

#include <vector>

namespace splatroom::test {

// A textured plane of splats at depth 3 seen by `views` cameras side by side,
// close enough to be multi-view neighbors. Images and priors are renders of
// the plane; the SfM points are the splat centers.
inline Dataset plane_dataset(int views, int size, int grid = 10) {
  std::vector<Splat> truth;
  for (int j = 0; j < grid; ++j)
    for (int i = 0; i < grid; ++i) {
      Splat s;
      s.center = Vec3(-0.9 + 1.8 * i / (grid - 1), -0.9 + 1.8 * j / (grid - 1), 3.0 + 0.05 * (i % 3));
      s.log_scale = Vec2::Constant(std::log(0.15));
      s.raw_opacity = 3.0;
      const double shade = (i + j) % 2 ? 1.5 : -1.0;
      s.raw_color = Vec3(shade, 0.3 * shade, -shade);
      s.id = std::uint64_t(truth.size());
      truth.push_back(s);
    }
  Dataset data;
  const double f = 0.9 * size, c = 0.5 * size;
  for (int v = 0; v < views; ++v) {
    Frame frame;
    frame.name = "view" + std::to_string(v);
    frame.camera = Camera::look_at(Vec3(0.15 * v, 0.05 * v, 0.0), Vec3(0.0, 0.0, 3.0), Vec3(0, -1, 0), f, f, c, c,
                                   size, size);
    const RenderOutput r = render(truth, frame.camera);
    frame.image = r.color;
    frame.depth_prior = r.depth;
    frame.normal_prior = r.normal;
    data.frames.push_back(std::move(frame));
  }
  for (const Splat& s : truth) {
    SfmPoint p;
    p.position = s.center;
    p.match_count = 5;
    data.points.push_back(p);
  }
  return data;
}

}  // namespace splatroom::test
