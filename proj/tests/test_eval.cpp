#include "splatroom/eval.hpp"
#include "splatroom/synthetic.hpp"

#include "support.hpp"

#include <json.hpp>

using namespace splatroom;

namespace {

std::vector<Vec3> random_cloud(Rng& rng, int n, double spread = 1.0) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(spread * rng.uniform(), spread * rng.uniform(), spread * rng.uniform());
  return out;
}

}  // namespace

TEST_CASE("fscore is the harmonic mean") {
  CHECK(std::abs(fscore(0.648, 0.518) - 0.575) <= 0.001);
  CHECK(fscore(1.0, 1.0) == 1.0);
  CHECK(fscore(0.0, 0.0) == 0.0);
  CHECK(fscore(0.5, 0.0) == 0.0);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(), r = rng.uniform();
    const double f = fscore(p, r);
    CHECK(f <= 2.0 * std::min(p, r) + 1e-15);
    CHECK(f >= std::min(p, r) - 1e-15);
    CHECK(f <= std::max(p, r) + 1e-15);
  }
}

TEST_CASE("kd-tree agrees with brute force") {
  Rng rng(9);
  for (int n : {1, 7, 8, 9, 300}) {
    std::vector<Vec3> pts = random_cloud(rng, n);
    if (n == 300) pts.push_back(pts[17]);  // duplicate: lowest index wins
    const KdTree tree(pts);
    for (int q = 0; q < 200; ++q) {
      const Vec3 query(rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2));
      std::size_t best = 0;
      for (std::size_t i = 1; i < pts.size(); ++i)
        if ((pts[i] - query).squaredNorm() < (pts[best] - query).squaredNorm()) best = i;
      const KdTree::Hit hit = tree.nearest(query);
      CHECK(hit.index == best);
      CHECK(hit.distance == doctest::Approx((pts[best] - query).norm()).epsilon(1e-14));
    }
  }
  CHECK(KdTree(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(1, 0, 0)}).nearest(Vec3(1, 0, 0)).index == 0);
  CHECK_THROWS_AS(KdTree({}).nearest(Vec3::Zero()), std::logic_error);
}

TEST_CASE("identical clouds score perfectly") {
  Rng rng(1);
  const std::vector<Vec3> cloud = random_cloud(rng, 500);
  const Metrics m = compute_metrics(cloud, cloud, EvalConfig{});
  CHECK(m.accuracy == 0.0);
  CHECK(m.completion == 0.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.fscore == 1.0);
}

TEST_CASE("swapping clouds swaps the one-sided metrics") {
  Rng rng(2);
  const std::vector<Vec3> a = random_cloud(rng, 300), b = random_cloud(rng, 200, 1.3);
  EvalConfig cfg;
  cfg.threshold = 0.1;
  const Metrics ab = compute_metrics(a, b, cfg), ba = compute_metrics(b, a, cfg);
  CHECK(ab.accuracy == ba.completion);
  CHECK(ab.completion == ba.accuracy);
  CHECK(ab.precision == ba.recall);
  CHECK(ab.recall == ba.precision);
  CHECK(ab.fscore == doctest::Approx(ba.fscore).epsilon(1e-15));
  for (double v : {ab.precision, ab.recall, ab.fscore}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(ab.fscore <= 2.0 * std::min(ab.precision, ab.recall) + 1e-15);
}

TEST_CASE("a shifted cloud reports the shift") {
  std::vector<Vec3> gt, pred;
  for (int i = 0; i < 10; ++i) {
    gt.emplace_back(i, 0, 0);
    pred.emplace_back(i, 0.03, 0);
  }
  EvalConfig cfg;
  const Metrics m = compute_metrics(pred, gt, cfg);
  CHECK(m.accuracy == doctest::Approx(0.03));
  CHECK(m.completion == doctest::Approx(0.03));
  CHECK(m.fscore == 1.0);
  cfg.threshold = 0.02;
  CHECK(compute_metrics(pred, gt, cfg).fscore == 0.0);
  CHECK_THROWS_AS(compute_metrics({}, gt, cfg), std::invalid_argument);
  cfg.threshold = 0.0;
  CHECK_THROWS_AS(compute_metrics(pred, gt, cfg), std::invalid_argument);
}

TEST_CASE("mesh samples lie on the surface and are reproducible") {
  const TriangleMesh box = room_mesh(Vec3(2, 3, 1));
  const std::vector<Vec3> s = sample_mesh(box, 5000, 7);
  CHECK(s == sample_mesh(box, 5000, 7));
  CHECK(s != sample_mesh(box, 5000, 8));
  int on_floor = 0;
  for (const Vec3& p : s) {
    const Vec3 lo = p, hi = Vec3(2, 3, 1) - p;
    const double d = std::min(lo.minCoeff(), hi.minCoeff());
    CHECK(std::abs(d) < 1e-12);
    if (std::abs(p.z()) < 1e-12) ++on_floor;
  }
  // Floor area is 6 of a total 22.
  CHECK(std::abs(on_floor / 5000.0 - 6.0 / 22.0) < 0.03);
  CHECK_THROWS_AS(sample_mesh(TriangleMesh{}, 10, 0), std::invalid_argument);
}

TEST_CASE("metrics json carries every field") {
  Metrics m;
  m.fscore = 0.5;
  const auto j = nlohmann::json::parse(metrics_json(m, EvalConfig{}));
  for (const char* key : {"accuracy", "completion", "precision", "recall", "fscore", "threshold", "samples", "seed"})
    CHECK(j.contains(key));
  CHECK(j["fscore"].get<double>() == 0.5);
}
