#include "splatroom/checkpoint.hpp"
#include "splatroom/parallel.hpp"
#include "splatroom/trainer.hpp"

#include "support.hpp"

using namespace splatroom;
using namespace splatroom::test;

namespace {

Scene seeded(const Dataset& data, double delta = 0.3, int k = 4) {
  SeedConfig cfg;
  cfg.delta = delta;
  cfg.k = k;
  Scene scene = voxelize_seeds(filter_points(data.points, cfg.epsilon), cfg);
  scene.cameras() = data.cameras();
  return scene;
}

}  // namespace

TEST_CASE("zero iterations leave the scene unchanged") {
  const Dataset data = plane_dataset(2, 16);
  Scene scene = seeded(data);
  PipelineConfig cfg;
  cfg.train.total_iters = 0;
  TrainState state = make_train_state(scene, cfg.train);
  const std::string before = serialize_checkpoint(scene, state, cfg);
  const FitResult r = fit(scene, state, data, cfg);
  CHECK(r.reports.empty());
  CHECK(serialize_checkpoint(scene, state, cfg) == before);
}

TEST_CASE("zero loss weights leave parameters unchanged") {
  const Dataset data = plane_dataset(2, 16);
  Scene scene = seeded(data);
  PipelineConfig cfg;
  cfg.weights.lambda_rgb = cfg.weights.lambda_d = cfg.weights.lambda_n = 0.0;
  cfg.weights.lambda_geo = cfg.weights.lambda_pho = 0.0;
  cfg.densify.enabled = false;
  TrainState state = make_train_state(scene, cfg.train);
  const std::vector<Surfel> before = scene.surfels();
  FitOptions opt;
  opt.iterations = 25;
  for (const StepReport& r : fit(scene, state, data, cfg, opt).reports) CHECK(r.update_norm == 0.0);
  REQUIRE(scene.surfels().size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const Surfel &a = before[i], &b = scene.surfels()[i];
    CHECK(a.offset == b.offset);
    CHECK(a.rotation == b.rotation);
    CHECK(a.log_scale == b.log_scale);
    CHECK(a.raw_opacity == b.raw_opacity);
    CHECK(a.raw_color == b.raw_color);
  }
}

TEST_CASE("a scene that already matches every target does not move") {
  Dataset data = plane_dataset(1, 16);
  Scene scene = seeded(data);
  for (Frame& f : data.frames) {
    const RenderOutput r = render(scene.splats(), f.camera);
    f.image = r.color;
    f.depth_prior = r.depth;
    f.normal_prior = r.normal;
  }
  PipelineConfig cfg;
  cfg.densify.enabled = false;
  // Adam normalizes any nonzero gradient to a full step; a large epsilon
  // makes the step proportional to the gradient instead.
  cfg.train.adam_eps = 1.0;
  TrainState state = make_train_state(scene, cfg.train);
  const StepReport r = train_step(state, scene, data, cfg);
  CHECK(r.rgb < 1e-12);
  CHECK(r.update_norm < 1e-12);
}

TEST_CASE("multi-view term starts at its scheduled iteration") {
  const Dataset data = plane_dataset(2, 20);
  Scene scene = seeded(data);
  PipelineConfig cfg;
  cfg.densify.enabled = false;
  TrainState state = make_train_state(scene, cfg.train);
  state.iteration = 6998;
  const StepReport a = train_step(state, scene, data, cfg);
  const StepReport b = train_step(state, scene, data, cfg);
  CHECK(a.iteration == 6999);
  CHECK_FALSE(a.mv);
  CHECK(b.iteration == 7000);
  CHECK(b.mv);
  CHECK(b.neighbor == 1 - b.view);
}

TEST_CASE("views are drawn once per epoch") {
  const Dataset data = plane_dataset(3, 12);
  Scene scene = seeded(data);
  PipelineConfig cfg;
  cfg.densify.enabled = false;
  TrainState state = make_train_state(scene, cfg.train);
  FitOptions opt;
  opt.iterations = 9;
  const FitResult r = fit(scene, state, data, cfg, opt);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen;
    for (int i = 0; i < 3; ++i) seen.push_back(r.reports[std::size_t(3 * epoch + i)].view);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("optimizer moments stay aligned through densification") {
  const Dataset data = plane_dataset(2, 24);
  Scene scene = seeded(data, 0.4, 3);
  PipelineConfig cfg;
  cfg.densify.start_iter = 20;
  cfg.densify.end_iter = 200;
  cfg.densify.interval = 10;
  cfg.densify.grow_window = 5;
  cfg.densify.prune_window = 10;
  cfg.densify.theta_g = 1e-7;
  cfg.densify.theta_alpha = 0.35;
  TrainState state = make_train_state(scene, cfg.train);
  std::size_t grown = 0, pruned = 0;
  for (int it = 0; it < 120; ++it) {
    const std::uint64_t fresh = scene.next_surfel_id();
    const StepReport r = train_step(state, scene, data, cfg);
    REQUIRE(state.adam.m.rows() == Eigen::Index(scene.surfels().size()));
    REQUIRE(state.adam.v.rows() == Eigen::Index(scene.surfels().size()));
    CHECK_NOTHROW(scene.check_integrity());
    CHECK(r.densified == cfg.densify.is_event(r.iteration));
    for (std::size_t i = 0; i < scene.surfels().size(); ++i)
      if (scene.surfels()[i].id >= fresh) {
        CHECK(state.adam.m.row(Eigen::Index(i)).isZero(0.0));
        CHECK(state.adam.v.row(Eigen::Index(i)).isZero(0.0));
      }
    grown += r.grown;
    pruned += r.pruned;
  }
  CHECK(grown > 0);
  CHECK(pruned > 0);
}

TEST_CASE("fit is reproducible and independent of the worker count") {
  const Dataset data = plane_dataset(2, 16);
  PipelineConfig cfg;
  cfg.train.seed = 99;
  cfg.densify.start_iter = 10;
  cfg.densify.interval = 10;
  cfg.densify.grow_window = 5;
  cfg.densify.prune_window = 5;
  cfg.densify.theta_g = 1e-6;
  cfg.mv.start_iter = 15;
  FitOptions opt;
  opt.iterations = 40;
  auto run = [&](int threads) {
    set_thread_count(threads);
    Scene scene = seeded(data);
    TrainState state = make_train_state(scene, cfg.train);
    fit(scene, state, data, cfg, opt);
    return serialize_checkpoint(scene, state, cfg);
  };
  const int saved = thread_count();
  const std::string a = run(1), b = run(1), c = run(4);
  set_thread_count(saved);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("loss log rows") {
  StepReport r;
  r.iteration = 3;
  r.total = 0.5;
  r.rgb = 0.25;
  r.depth = 0.125;
  const std::string row = report_csv_row(r);
  const std::string header = report_csv_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
  CHECK(row.rfind("3,0,0.5,0.25,0.125,,,,", 0) == 0);
}

TEST_CASE("neighbor selection") {
  const Dataset data = plane_dataset(3, 12);
  CHECK(select_neighbor(data.frames, 0) == 1);
  CHECK(select_neighbor(data.frames, 2) == 1);
  Dataset turned = data;
  turned.frames[1].camera = Camera::look_at(Vec3(0.15, 0.05, 0), Vec3(5, 0.05, 0), Vec3(0, -1, 0), 10, 10, 6, 6,
                                            12, 12);
  CHECK(select_neighbor(turned.frames, 0) == 2);
  CHECK_FALSE(select_neighbor(std::vector<Frame>{data.frames[0]}, 0));
}

TEST_CASE("offset learning rate decays log-linearly") {
  TrainConfig cfg;
  cfg.total_iters = 100;
  CHECK(cfg.offset_lr(0, 2.0) == doctest::Approx(2.0 * cfg.lr_offset));
  CHECK(cfg.offset_lr(100, 2.0) == doctest::Approx(2.0 * cfg.lr_offset_final));
  CHECK(cfg.offset_lr(50, 1.0) == doctest::Approx(std::sqrt(cfg.lr_offset * cfg.lr_offset_final)));
}
