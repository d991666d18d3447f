#include "splatroom/losses.hpp"

#include "support.hpp"

using namespace splatroom;
using namespace splatroom::test;

namespace {

Image3 random_image(Rng& rng, int w, int h) {
  Image3 img(w, h);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = rng.uniform();
  return img;
}

Image3 random_unit_field(Rng& rng, int w, int h) {
  Image3 img(w, h);
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.data.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose().array();
  return img;
}

Image1 image1(int w, int h, std::initializer_list<double> values) {
  Image1 img(w, h);
  Eigen::Index i = 0;
  for (double v : values) img.data(i++) = v;
  return img;
}

}  // namespace

TEST_CASE("rgb loss of identical images is zero") {
  Rng rng(1);
  const Image3 a = random_image(rng, 16, 12);
  Image3 g;
  CHECK(rgb_loss(a, a, 0.2, &g) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rgb loss of constant images") {
  Image3 zero(8, 8), one(8, 8);
  one.data.setConstant(1.0);
  const double total = rgb_loss(zero, one, 0.2);
  CHECK(total - 0.2 * (1.0 - ssim(zero, one)) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(rgb_loss(zero, one, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(rgb_loss(zero, Image3(8, 7), 0.2), std::invalid_argument);
}

TEST_CASE("depth alignment recovers affine relations") {
  const Mask all(3, 1, true);
  const Image1 x = image1(3, 1, {1, 2, 3});
  const DepthAlignment id = align_depth(x, x, all);
  CHECK(id.s == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(id.t) < 1e-14);
  const DepthAlignment a = align_depth(x, image1(3, 1, {3, 5, 7}), all);
  CHECK(a.s == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(a.t == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_FALSE(a.degenerate);

  // A constant rendering cannot be scaled: the shift alone absorbs the mean.
  const DepthAlignment flat = align_depth(image1(3, 1, {2, 2, 2}), image1(3, 1, {1, 2, 6}), all);
  CHECK(flat.degenerate);
  CHECK(flat.t == doctest::Approx(3.0));
}

TEST_CASE("depth alignment is a local minimum of the data term") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Image1 x(10, 10), y(10, 10);
    Mask valid(10, 10);
    for (int i = 0; i < 100; ++i) {
      x.data(i) = rng.uniform(1, 4);
      y.data(i) = 0.7 * x.data(i) + 0.3 + 0.2 * rng.normal();
      valid.set(std::size_t(i), rng.uniform() < 0.8);
    }
    const DepthAlignment a = align_depth(x, y, valid);
    auto cost = [&](double s, double t) {
      double c = 0;
      for (int i = 0; i < 100; ++i)
        if (valid[std::size_t(i)]) c += std::pow(s * x.data(i) + t - y.data(i), 2);
      return c;
    };
    const double best = cost(a.s, a.t);
    for (double ds : {-1e-3, 0.0, 1e-3})
      for (double dt : {-1e-3, 0.0, 1e-3}) CHECK(cost(a.s + ds, a.t + dt) >= best - 1e-12);
  }
}

TEST_CASE("depth loss vanishes for affinely related depth") {
  Rng rng(7);
  Image1 x(12, 12), y(12, 12);
  for (int i = 0; i < 144; ++i) {
    x.data(i) = rng.uniform(1, 3);
    y.data(i) = 2.5 * x.data(i) - 0.4;
  }
  DepthLossInfo info;
  const double l = depth_loss(x, y, Mask(12, 12, true), 0.5, nullptr, &info);
  CHECK(std::abs(l) < 1e-12);
  CHECK(info.alignment.s == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(info.valid == 144);

  const double none = depth_loss(x, y, Mask(12, 12, false), 0.5, nullptr, &info);
  CHECK(none == 0.0);
  CHECK(info.empty);
}

TEST_CASE("normal loss cases") {
  Rng rng(9);
  const Image3 n = random_unit_field(rng, 6, 5);
  const Mask all(6, 5, true);
  CHECK(normal_loss(n, n, all, 0.3, 0.7) == doctest::Approx(0.0).epsilon(1e-14));

  Image3 neg(6, 5);
  neg.data = -n.data;
  double l1 = 0;
  for (Eigen::Index i = 0; i < n.size(); ++i) l1 += (2.0 * n.data.row(i)).abs().sum();
  l1 /= double(n.size());
  CHECK(normal_loss(neg, n, all, 0.0, 1.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(normal_loss(neg, n, all, 1.0, 0.0) == doctest::Approx(l1).epsilon(1e-14));

  // Zero rendered normals and masked pixels are ignored.
  Image3 holes = neg;
  holes.data.row(0).setZero();
  Mask some = all;
  some.set(1, false);
  Image3 g;
  normal_loss(holes, n, some, 0.5, 0.5, &g);
  CHECK(g.data.row(0).abs().sum() == 0.0);
  CHECK(g.data.row(1).abs().sum() == 0.0);
}

TEST_CASE("plane homography special cases") {
  const Mat3 K = Camera::from_intrinsics(100, 100, 50, 40, 100, 80).K;
  const Vec3 n(0, 0, -1);
  const Vec2 px(30, 20);
  const Mat3 I = Mat3::Identity();
  const Mat3 H0 = plane_homography<double>(K, K, I, Vec3::Zero(), n, 2.0, px);
  CHECK((H0 - I).cwiseAbs().maxCoeff() < 1e-14);

  const double t = 0.2, d = 4.0;
  const Mat3 H = plane_homography<double>(K, K, I, Vec3(-t, 0, 0), n, d, px);
  for (const Vec2& p : {Vec2(30, 20), Vec2(70, 5), Vec2(10, 60)}) {
    const Vec3 q = H * Vec3(p.x(), p.y(), 1);
    CHECK(q.x() / q.z() == doctest::Approx(p.x() - 100 * t / d).epsilon(1e-12));
    CHECK(q.y() / q.z() == doctest::Approx(p.y()).epsilon(1e-12));
  }

  // A plane through the camera center has no homography.
  CHECK_FALSE(try_plane_homography<double>(K, K, I, Vec3(-t, 0, 0), Vec3(1, 0, 0), 2.0, Vec2(50, 40)));
  CHECK_THROWS_AS(plane_homography<double>(K, K, I, Vec3(-t, 0, 0), Vec3(1, 0, 0), 2.0, Vec2(50, 40)),
                  std::domain_error);
}

TEST_CASE("ncc bounds and exact cases") {
  Rng rng(11);
  Eigen::ArrayXd a(49), b(49);
  for (int i = 0; i < 49; ++i) {
    a(i) = rng.uniform();
    b(i) = rng.uniform();
  }
  CHECK(*ncc(a, a) == 1.0);
  CHECK(*ncc(a, -a) == -1.0);
  CHECK(*ncc(a, 0.2 - 3.0 * a) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_FALSE(ncc(a, Eigen::ArrayXd::Constant(49, 0.4)));
  for (int trial = 0; trial < 200; ++trial) {
    for (int i = 0; i < 49; ++i) b(i) = rng.normal() + (trial % 3) * a(i);
    const double v = *ncc(a, b);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(ncc(a, Eigen::ArrayXd(3)), std::invalid_argument);
}

TEST_CASE("multi-view loss of a view against itself is zero") {
  const int w = 24, h = 24;
  const Camera cam = Camera::from_intrinsics(20, 20, 12, 12, w, h);
  RenderOutput r{Image3(w, h), Image1(w, h), Image3(w, h), Image1(w, h)};
  Image3 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      r.depth.at(x, y) = 3.0;
      r.normal.at(x, y, 2) = -1.0;
      r.alpha.at(x, y) = 1.0;
      const double v = 0.5 + 0.4 * std::sin(0.7 * x) * std::cos(0.4 * y);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  MvConfig cfg;
  const MvResult res = mv_consistency_loss({img, cam, r}, {img, cam, r}, cfg, LossWeights{});
  CHECK_FALSE(res.empty);
  CHECK(res.n_geo > 0);
  CHECK(res.n_pho == res.n_geo);
  CHECK(res.geo < 1e-9);
  CHECK(res.pho < 1e-12);
  CHECK(res.value < 1e-9);
}

TEST_CASE("total loss is the weighted sum") {
  LossWeights w;
  CHECK(total_loss(LossTerms{}, w) == 0.0);
  CHECK(total_loss(LossTerms{0.1, 0.2, 0.3, 0.05}, w) == doctest::Approx(0.65).epsilon(1e-15));
  w.lambda_d = 0.5;
  CHECK(total_loss(LossTerms{0.1, 0.2, 0.3, 0.05}, w) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(LossTerms{0.1, std::nan(""), 0.0, 0.0}, w), std::runtime_error);
}

TEST_CASE("losses are non-negative") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Image3 a = random_image(rng, 10, 9), b = random_image(rng, 10, 9);
    CHECK(rgb_loss(a, b, 0.2) >= 0.0);
    Image1 x(10, 9), y(10, 9);
    for (int i = 0; i < 90; ++i) {
      x.data(i) = rng.uniform(1, 3);
      y.data(i) = rng.uniform(1, 3);
    }
    CHECK(depth_loss(x, y, Mask(10, 9, true), 0.5) >= 0.0);
    CHECK(normal_loss(random_unit_field(rng, 10, 9), random_unit_field(rng, 10, 9), Mask(10, 9, true), 0.5, 0.5) >=
          0.0);
  }
}
