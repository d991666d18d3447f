#include "splatroom/parallel.hpp"
#include "splatroom/rasterizer.hpp"

#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace splatroom;
using namespace splatroom::test;

TEST_CASE("geometry of an identity-frame splat") {
  Splat s;
  const SplatGeometry g = build_splat_geometry(s, forward_camera(100, 100, 100));
  Mat4 expected = Mat4::Zero();
  expected(0, 0) = 1;
  expected(1, 1) = 1;
  expected(3, 3) = 1;
  CHECK(g.H == expected);
}

TEST_CASE("on-axis splat projects to the principal point") {
  Splat s;
  s.center = Vec3(0, 0, 5);
  const SplatGeometry g = build_splat_geometry(s, Camera::from_intrinsics(100, 100, 50, 50, 100, 100));
  CHECK(g.screen_center.x() == doctest::Approx(50.0).epsilon(1e-14));
  CHECK(g.screen_center.y() == doctest::Approx(50.0).epsilon(1e-14));
  CHECK(g.center_cam.z() == 5.0);
  // The normal faces the camera.
  CHECK(g.normal_cam.isApprox(Vec3(0, 0, -1)));
}

TEST_CASE("ray through the center and one tangent unit away") {
  Splat s;
  s.center = Vec3(0, 0, 5);
  const Camera cam = Camera::from_intrinsics(100, 100, 50, 50, 100, 100);
  const SplatGeometry g = build_splat_geometry(s, cam);
  const auto hit = ray_splat_intersect(g, 50, 50);
  REQUIRE(hit);
  CHECK(std::abs(hit->u) < 1e-12);
  CHECK(std::abs(hit->v) < 1e-12);
  CHECK(hit->z == doctest::Approx(5.0).epsilon(1e-14));

  const auto off = ray_splat_intersect(g, 50 + 100.0 / 5.0, 50);
  REQUIRE(off);
  CHECK(std::abs(off->u - 1.0) < 1e-6);
  CHECK(std::abs(off->v) < 1e-12);

  // Edge-on plane through the camera center: off-plane rays meet it only at
  // the camera, in front of the near plane.
  Splat edge = s;
  edge.rotation = Vec4(std::cos(M_PI / 4), 0, std::sin(M_PI / 4), 0);
  CHECK_FALSE(ray_splat_intersect(build_splat_geometry(edge, cam), 70, 50));
}

TEST_CASE("gaussian weight") {
  CHECK(gaussian_weight(0, 0, 123.0, 0.3) == 1.0);
  CHECK(gaussian_weight(1, 1, 1e6, 0.3) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  // The screen-space floor wins far out in the tangent plane.
  CHECK(gaussian_weight(100, 0, 0.0, 0.3) == 1.0);
  const double w = gaussian_weight(50, 50, 0.09, 0.3);
  CHECK(w == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("one opaque splat covering a pixel") {
  const Camera cam = Camera::from_intrinsics(16, 16, 8.5, 8.5, 16, 16);
  const Splat s = facing_splat(Vec3(0, 0, 2), 0.5, 10.0, Vec3(1.0, -0.5, 0.3));
  const RenderOutput out = render(std::vector<Splat>{s}, cam);
  const Vec3 color = s.raw_color.unaryExpr([](double v) { return sigmoid(v); });
  CHECK(out.alpha.at(8, 8) >= 0.99);
  for (int c = 0; c < 3; ++c) CHECK(out.color.at(8, 8, c) == doctest::Approx(color[c]).epsilon(1e-4));
  CHECK(out.depth.at(8, 8) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(out.normal.at(8, 8, 0) == 0.0);
  CHECK(out.normal.at(8, 8, 1) == 0.0);
  CHECK(out.normal.at(8, 8, 2) == -1.0);
}

TEST_CASE("two stacked splats composite front to back") {
  const Camera cam = Camera::from_intrinsics(16, 16, 8.5, 8.5, 16, 16);
  const Splat red = facing_splat(Vec3(0, 0, 2), 0.5, 0.0, Vec3(40, -40, -40), 0);
  const Splat blue = facing_splat(Vec3(0, 0, 3), 0.5, 40.0, Vec3(-40, -40, 40), 1);
  const RenderOutput out = render(std::vector<Splat>{blue, red}, cam);
  CHECK(out.color.at(8, 8, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.color.at(8, 8, 1) == doctest::Approx(0.0));
  CHECK(out.color.at(8, 8, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.alpha.at(8, 8) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.depth.at(8, 8) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("empty scene renders nothing") {
  const RenderOutput out = render(std::vector<Splat>{}, forward_camera(8, 6, 8));
  CHECK(out.alpha.data.abs().maxCoeff() == 0.0);
  CHECK(out.depth.data.abs().maxCoeff() == 0.0);
  CHECK(out.normal.data.abs().maxCoeff() == 0.0);
  CHECK(out.color.data.abs().maxCoeff() == 0.0);
}

TEST_CASE("output does not depend on input order or worker count") {
  Rng rng(17);
  const Camera cam = forward_camera(24, 20, 20);
  std::vector<Splat> splats = scattered_splats(rng, 30);
  splats[4].center = splats[9].center;  // a depth tie, broken by id
  RasterConfig cfg;
  cfg.tile_size = 5;
  const RenderOutput ref = render(splats, cam, cfg);

  std::vector<Splat> shuffled = splats;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());
  const RenderOutput perm = render(shuffled, cam, cfg);
  CHECK((perm.color.data == ref.color.data).all());
  CHECK((perm.depth.data == ref.depth.data).all());
  CHECK((perm.normal.data == ref.normal.data).all());
  CHECK((perm.alpha.data == ref.alpha.data).all());

  const int saved = thread_count();
  for (int threads : {1, 3}) {
    set_thread_count(threads);
    const RenderOutput t = render(splats, cam, cfg);
    CHECK((t.color.data == ref.color.data).all());
    CHECK((t.depth.data == ref.depth.data).all());
    CHECK((t.alpha.data == ref.alpha.data).all());
  }
  set_thread_count(saved);
}

TEST_CASE("alpha is monotone in raw opacity") {
  Rng rng(23);
  const Camera cam = forward_camera(16, 16, 14);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Splat> splats = scattered_splats(rng, 8);
    const std::size_t i = std::size_t(rng.uniform_int(0, 7));
    const RenderOutput lo = render(splats, cam);
    splats[i].raw_opacity += rng.uniform(0.1, 2.0);
    const RenderOutput hi = render(splats, cam);
    CHECK((hi.alpha.data - lo.alpha.data).minCoeff() >= -1e-12);
  }
}

TEST_CASE("blending weights and final transmittance sum to one") {
  Rng rng(29);
  const Camera cam = forward_camera(16, 16, 14);
  RasterConfig cfg;
  cfg.transmittance_floor = 0.0;
  const std::vector<Splat> splats = scattered_splats(rng, 15, 0.5);
  RenderCache cache;
  const RenderOutput out = render(splats, cam, cfg, &cache);
  double worst = 0.0;
  for (const auto& tile : cache.tiles) {
    const int tw = tile.x1 - tile.x0;
    for (int y = tile.y0; y < tile.y1; ++y)
      for (int x = tile.x0; x < tile.x1; ++x) {
        const std::size_t p = std::size_t(y - tile.y0) * tw + (x - tile.x0);
        double sum = 0.0, T = 1.0;
        for (std::uint32_t c = tile.pixel_begin[p]; c < tile.pixel_begin[p + 1]; ++c) {
          const auto& contrib = tile.contributions[c];
          const SplatGeometry& g = cache.geometry[tile.splats[contrib.slot]];
          const double w = g.opacity * evaluate_splat(g, x + 0.5, y + 0.5, cfg)->G;
          sum += w * contrib.transmittance;
          T = contrib.transmittance * (1.0 - w);
        }
        worst = std::max(worst, std::abs(sum + T - 1.0));
        worst = std::max(worst, std::abs(out.alpha.at(x, y) - sum));
      }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("rendered maps stay in range") {
  Rng rng(31);
  const Camera cam = forward_camera(20, 16, 16);
  const RenderOutput out = render(scattered_splats(rng, 20), cam);
  CHECK(out.alpha.data.minCoeff() >= 0.0);
  CHECK(out.alpha.data.maxCoeff() <= 1.0 + 1e-12);
  for (Eigen::Index i = 0; i < out.alpha.size(); ++i) {
    const double n = out.normal.data.row(i).matrix().norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-12));
  }
}

TEST_CASE("splats behind the camera are culled") {
  const Splat s = facing_splat(Vec3(0, 0, -2), 1.0, 5.0, Vec3::Zero());
  const RenderOutput out = render(std::vector<Splat>{s}, forward_camera(8, 8, 8));
  CHECK(out.alpha.data.maxCoeff() == 0.0);
}

TEST_CASE("invalid raster configuration is rejected") {
  RasterConfig cfg;
  cfg.near = 0.0;
  CHECK_THROWS_AS(render(std::vector<Splat>{}, forward_camera(4, 4, 4), cfg), std::invalid_argument);
  cfg = RasterConfig{};
  cfg.tile_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
