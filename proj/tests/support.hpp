#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/scene.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

namespace splatroom::test {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("splatroom_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag) ^ std::uintptr_t(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

inline Camera forward_camera(int w, int h, double f) {
  return Camera::from_intrinsics(f, f, 0.5 * w, 0.5 * h, w, h);
}

// Splats scattered in front of an identity-pose camera.
inline std::vector<Splat> scattered_splats(Rng& rng, int n, double min_raw_opacity = -1.0) {
  std::vector<Splat> out;
  for (int i = 0; i < n; ++i) {
    Splat s;
    s.center = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(1.5, 3.0));
    s.rotation = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    s.log_scale = Vec2(std::log(rng.uniform(0.1, 0.4)), std::log(rng.uniform(0.1, 0.4)));
    s.raw_opacity = rng.uniform(min_raw_opacity, min_raw_opacity + 3.0);
    s.raw_color = Vec3(rng.normal(), rng.normal(), rng.normal());
    s.id = std::uint64_t(i);
    out.push_back(s);
  }
  return out;
}

// Fronto-parallel splat facing an identity-pose camera.
inline Splat facing_splat(const Vec3& center, double scale, double raw_opacity, const Vec3& raw_color,
                          std::uint64_t id = 0) {
  Splat s;
  s.center = center;
  s.log_scale = Vec2::Constant(std::log(scale));
  s.raw_opacity = raw_opacity;
  s.raw_color = raw_color;
  s.id = id;
  return s;
}

}  // namespace splatroom::test
