#include "splatroom/scene.hpp"

#include "support.hpp"

#include <set>
#include <tuple>

using namespace splatroom;

namespace {

SfmPoint point(const Vec3& p, int matches) {
  SfmPoint s;
  s.position = p;
  s.match_count = matches;
  return s;
}

}  // namespace

TEST_CASE("filter_points keeps points with at least epsilon matches") {
  const std::vector<SfmPoint> pts = {point(Vec3(1, 0, 0), 5), point(Vec3(2, 0, 0), 1)};
  const auto kept = filter_points(pts, 3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].position == Vec3(1, 0, 0));

  const auto all = filter_points(pts, 0);
  REQUIRE(all.size() == 2);
  CHECK(all[1].position == pts[1].position);
}

TEST_CASE("voxelize_seeds anchors seeds at voxel centers") {
  SeedConfig cfg;
  cfg.delta = 0.1;
  cfg.epsilon = 0;
  const Scene one = voxelize_seeds(std::vector<SfmPoint>{point(Vec3(0.12, 0.07, -0.03), 3)}, cfg);
  REQUIRE(one.seeds().size() == 1);
  CHECK((one.seeds()[0].anchor - Vec3(0.15, 0.05, -0.05)).norm() < 1e-12);
  CHECK(one.seeds()[0].key == Vec3i(1, 0, -1));

  const Scene same = voxelize_seeds(std::vector<SfmPoint>{point(Vec3(0.12, 0.07, 0.03), 3),
                                                          point(Vec3(0.18, 0.01, 0.09), 3)},
                                    cfg);
  CHECK(same.seeds().size() == 1);
}

TEST_CASE("voxelize_seeds on an empty filtered set throws") {
  SeedConfig cfg;
  cfg.epsilon = 5;
  CHECK_THROWS_AS(voxelize_seeds(filter_points(std::vector<SfmPoint>{point(Vec3::Zero(), 1)}, cfg.epsilon), cfg), std::invalid_argument);
  CHECK_THROWS_AS(voxelize_seeds(std::vector<SfmPoint>{}, cfg), std::invalid_argument);
}

TEST_CASE("every active seed owns exactly k surfels") {
  Rng rng(3);
  std::vector<SfmPoint> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(point(Vec3(rng.uniform(), rng.uniform(), rng.uniform()), 4));
  SeedConfig cfg;
  cfg.delta = 0.2;
  cfg.k = 7;
  Scene scene = voxelize_seeds(pts, cfg);
  CHECK_NOTHROW(scene.check_integrity());
  CHECK(scene.surfels().size() == scene.seeds().size() * 7);
  for (const SeedPoint& s : scene.seeds()) CHECK(s.surfel_ids.size() == 7);

  // Seeds sorted by voxel key.
  for (std::size_t i = 1; i < scene.seeds().size(); ++i) {
    const Vec3i a = scene.seeds()[i - 1].key, b = scene.seeds()[i].key;
    CHECK(std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z()));
  }

  // Removing seeds keeps references consistent and reports surviving rows.
  std::vector<bool> remove(scene.seeds().size(), false);
  for (std::size_t i = 0; i < remove.size(); i += 3) remove[i] = true;
  const std::vector<Surfel> before = scene.surfels();
  const auto kept = scene.remove_seeds(remove);
  CHECK_NOTHROW(scene.check_integrity());
  REQUIRE(kept.size() == scene.surfels().size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(scene.surfels()[i].id == before[kept[i]].id);
}

TEST_CASE("voxelization is idempotent on its own anchors") {
  Rng rng(11);
  std::vector<SfmPoint> pts;
  for (int i = 0; i < 2000; ++i)
    pts.push_back(point(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)), 9));
  SeedConfig cfg;
  cfg.delta = 0.3;
  const Scene first = voxelize_seeds(pts, cfg);
  std::vector<SfmPoint> anchors;
  for (const SeedPoint& s : first.seeds()) anchors.push_back(point(s.anchor, 9));
  const Scene second = voxelize_seeds(anchors, cfg);
  REQUIRE(second.seeds().size() == first.seeds().size());
  for (std::size_t i = 0; i < first.seeds().size(); ++i) CHECK(second.seeds()[i].key == first.seeds()[i].key);
}

TEST_CASE("random_seeds matches the voxel seed count") {
  Rng rng(5);
  std::vector<SfmPoint> pts;
  for (int i = 0; i < 800; ++i) pts.push_back(point(Vec3(rng.uniform(), rng.uniform(), 0.2 * rng.uniform()), 5));
  SeedConfig cfg;
  cfg.delta = 0.1;
  const Scene voxel = voxelize_seeds(pts, cfg);
  const Scene random = random_seeds(pts, cfg);
  CHECK(random.seeds().size() == voxel.seeds().size());
  CHECK_NOTHROW(random.check_integrity());
}

TEST_CASE("surfel_world_center adds offset to anchor") {
  Scene scene{SeedConfig{}};
  Rng rng(1);
  SurfelInit init;
  scene.add_seed(Vec3(1, 2, 3), Vec3i::Zero(), 0, init, rng);
  scene.add_seed(Vec3(1, 0, 0), Vec3i(1, 0, 0), 0, init, rng);
  Surfel& a = scene.surfels()[0];
  a.offset.setZero();
  CHECK(scene.surfel_world_center(a.id) == Vec3(1, 2, 3));
  Surfel& b = scene.surfels()[std::size_t(scene.k())];
  b.offset = Vec3(-0.1, 0.2, 0);
  CHECK((scene.surfel_world_center(b.id) - Vec3(0.9, 0.2, 0)).norm() < 1e-15);

  CHECK_THROWS_AS(scene.surfel_world_center(999999), std::out_of_range);
  scene.seeds()[0].active = false;
  CHECK_THROWS_AS(scene.surfel_world_center(a.id), std::out_of_range);
}

TEST_CASE("activations are bijections onto their ranges") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double raw = rng.uniform(-15, 15);
    const double a = sigmoid(raw);
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(std::abs(inverse_sigmoid(a) - raw) < 1e-9);
    CHECK(std::exp(raw) > 0.0);
    CHECK(std::abs(std::log(std::exp(raw)) - raw) < 1e-9);
  }
}

TEST_CASE("fresh surfels follow the initialization rule") {
  Scene scene{SeedConfig{}};
  Rng rng(8);
  SurfelInit init;
  init.voxel_size = 0.2;
  scene.add_seed(Vec3::Zero(), Vec3i::Zero(), 0, init, rng);
  for (const Surfel& s : scene.surfels()) {
    CHECK(s.offset.cwiseAbs().maxCoeff() <= 0.05);
    CHECK((s.scale() - Vec2::Constant(0.05)).norm() < 1e-12);
    CHECK(std::abs(s.opacity() - init.opacity) < 1e-12);
  }
  std::set<double> xs;
  for (const Surfel& s : scene.surfels()) xs.insert(s.offset.x());
  CHECK(xs.size() == scene.surfels().size());
}
