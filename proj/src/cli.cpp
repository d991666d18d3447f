#include "splatroom/cli.hpp"

#include "splatroom/checkpoint.hpp"
#include "splatroom/diagnostics.hpp"
#include "splatroom/eval.hpp"
#include "splatroom/io.hpp"
#include "splatroom/meshing.hpp"
#include "splatroom/parallel.hpp"
#include "splatroom/settings.hpp"
#include "splatroom/synthetic.hpp"
#include "splatroom/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace splatroom {

namespace fs = std::filesystem;

namespace {

std::string sibling(const std::string& manifest, const std::string& name) {
  return (fs::path(manifest).parent_path() / name).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Config file first, then explicit flags.
Settings load_settings(const std::string& config_path, Settings base = {}) {
  if (!config_path.empty()) apply_settings(base, read_config_file(config_path));
  return base;
}

Scene initial_scene(const Dataset& dataset, const Settings& s) {
  const auto points = filter_points(dataset.points, s.seeds.epsilon);
  Scene scene = s.random_init ? random_seeds(points, s.seeds) : voxelize_seeds(points, s.seeds);
  scene.cameras() = dataset.cameras();
  return scene;
}

std::vector<Vec3> load_cloud(const std::string& path, const EvalConfig& cfg, std::uint64_t seed) {
  PlyData ply = read_ply(path);
  if (ply.faces.empty()) {
    if (ply.positions.empty()) throw IoError(path + ": no vertices");
    return ply.positions;
  }
  TriangleMesh mesh;
  mesh.vertices = std::move(ply.positions);
  mesh.triangles = std::move(ply.faces);
  return sample_mesh(mesh, cfg.n_samples, seed);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Seed-guided 2D Gaussian splatting for indoor rooms"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  // synth
  std::string synth_spec, synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic room dataset");
  synth->add_option("spec", synth_spec, "room spec file or 'default'")->required();
  synth->add_option("out_dir", synth_out, "output directory")->required();

  // init
  std::string init_manifest, init_out, init_config;
  std::optional<double> init_delta;
  std::optional<int> init_epsilon, init_k;
  bool init_random = false;
  auto* init = app.add_subcommand("init", "voxelize the sparse points into seeds");
  init->add_option("manifest", init_manifest)->required();
  init->add_option("--delta", init_delta, "base voxel size (m)")->check(CLI::PositiveNumber);
  init->add_option("--epsilon", init_epsilon, "minimum feature-match count")->check(CLI::NonNegativeNumber);
  init->add_option("--k", init_k, "surfels per seed")->check(CLI::PositiveNumber);
  init->add_option("--config", init_config, "key = value settings file");
  init->add_option("--out", init_out, "checkpoint (default <manifest dir>/init.ckpt)");
  init->add_flag("--random-seeds", init_random, "place seeds at random instead");

  // train
  std::string train_manifest, train_out, train_config, train_init, train_log, train_ckpt_dir;
  std::optional<int> train_iters;
  auto* train = app.add_subcommand("train", "optimize the splats");
  train->add_option("manifest", train_manifest)->required();
  train->add_option("--iters", train_iters, "total iterations")->check(CLI::NonNegativeNumber);
  train->add_option("--config", train_config, "key = value settings file");
  train->add_option("--out", train_out, "final checkpoint (default <manifest dir>/model.ckpt)");
  train->add_option("--init", train_init, "start from this checkpoint");
  train->add_option("--log", train_log, "per-iteration CSV (default next to --out)");
  train->add_option("--checkpoint-dir", train_ckpt_dir, "write periodic checkpoints here");

  // render
  std::string render_ckpt, render_which, render_out;
  auto* rend = app.add_subcommand("render", "render color, depth and normals");
  rend->add_option("checkpoint", render_ckpt)->required();
  rend->add_option("camera", render_which, "camera index or 'all'")->required();
  rend->add_option("out_dir", render_out)->required();

  // mesh
  std::string mesh_ckpt, mesh_manifest, mesh_out, mesh_config;
  std::optional<double> mesh_voxel, mesh_trunc;
  auto* mesh = app.add_subcommand("mesh", "fuse rendered depth into a mesh");
  mesh->add_option("checkpoint", mesh_ckpt)->required();
  mesh->add_option("manifest", mesh_manifest)->required();
  mesh->add_option("out", mesh_out, "output PLY")->required();
  mesh->add_option("--voxel", mesh_voxel, "TSDF voxel size (m)")->check(CLI::PositiveNumber);
  mesh->add_option("--trunc", mesh_trunc, "truncation distance (m)")->check(CLI::PositiveNumber);
  mesh->add_option("--config", mesh_config, "key = value settings file");

  // eval
  std::string eval_pred, eval_gt, eval_json, eval_config;
  std::optional<double> eval_threshold;
  std::optional<int> eval_samples;
  std::optional<std::uint64_t> eval_seed;
  auto* ev = app.add_subcommand("eval", "accuracy, completion, precision, recall, F-score");
  ev->add_option("pred", eval_pred, "predicted mesh or point cloud PLY")->required();
  ev->add_option("gt", eval_gt, "ground-truth mesh or point cloud PLY")->required();
  ev->add_option("--threshold", eval_threshold, "distance threshold (m)")->check(CLI::PositiveNumber);
  ev->add_option("--samples", eval_samples, "points sampled per mesh")->check(CLI::PositiveNumber);
  ev->add_option("--seed", eval_seed, "sampling seed");
  ev->add_option("--json", eval_json, "also write the report here");
  ev->add_option("--config", eval_config, "key = value settings file");

  // verify
  std::uint64_t verify_seed = 42;
  double verify_scale = 1.0;
  std::string verify_json;
  bool verify_coverage = false;
  auto* verify = app.add_subcommand("verify", "run the oracle suites");
  verify->add_option("--seed", verify_seed);
  verify->add_option("--tolerance-scale", verify_scale)->check(CLI::PositiveNumber);
  verify->add_option("--json", verify_json, "write every report here");
  verify->add_flag("--coverage", verify_coverage, "list where each derived example is checked");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    set_thread_count(threads);
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    if (*synth) {
      SyntheticRoomSpec spec;
      if (synth_spec != "default") spec = parse_room_spec(read_config_file(synth_spec));
      const SyntheticRoom room = generate_synthetic_room(spec);
      save_dataset(synth_out, room.dataset);
      write_mesh((fs::path(synth_out) / "gt_mesh.ply").string(), room.gt_mesh);
      out << "wrote " << room.dataset.frames.size() << " views, " << room.dataset.points.size() << " points to "
          << synth_out << "\n";
      return kExitOk;
    }

    if (*init) {
      Settings s = load_settings(init_config);
      if (init_delta) s.seeds.delta = *init_delta;
      if (init_epsilon) s.seeds.epsilon = *init_epsilon;
      if (init_k) s.seeds.k = *init_k;
      if (init_random) s.random_init = true;
      s.validate();
      const Dataset ds = load_dataset(init_manifest);
      const Scene scene = initial_scene(ds, s);
      const TrainState state = make_train_state(scene, s.pipeline.train);
      const std::string path = init_out.empty() ? sibling(init_manifest, "init.ckpt") : init_out;
      ensure_parent(path);
      save_checkpoint(path, scene, state, s.pipeline);
      out << "seeds " << scene.seeds().size() << " surfels " << scene.surfels().size() << " -> " << path << "\n";
      return kExitOk;
    }

    if (*train) {
      const Dataset ds = load_dataset(train_manifest);
      Scene scene;
      TrainState state;
      Settings s;
      if (!train_init.empty()) {
        Checkpoint ck = load_checkpoint(train_init);
        s.pipeline = ck.config;
        s.seeds = ck.scene.config();
        s = load_settings(train_config, s);
        scene = std::move(ck.scene);
        state = std::move(ck.state);
      } else {
        s = load_settings(train_config);
      }
      if (train_iters) s.pipeline.train.total_iters = *train_iters;
      s.validate();
      if (train_init.empty()) {
        scene = initial_scene(ds, s);
        state = make_train_state(scene, s.pipeline.train);
      }
      if (scene.cameras().size() != ds.frames.size())
        throw std::runtime_error("checkpoint has " + std::to_string(scene.cameras().size()) + " cameras, dataset has " +
                                 std::to_string(ds.frames.size()) + " frames");
      const std::string path = train_out.empty() ? sibling(train_manifest, "model.ckpt") : train_out;
      ensure_parent(path);
      FitOptions opts;
      opts.log_path = train_log.empty() ? fs::path(path).replace_extension(".csv").string() : train_log;
      opts.checkpoint_dir = train_ckpt_dir;
      opts.on_step = [&](const StepReport& r) {
        if (r.iteration % 100 == 0 || r.iteration == s.pipeline.train.total_iters)
          out << "iter " << r.iteration << " loss " << r.total << " rgb " << r.rgb << " seeds " << r.seeds
              << " surfels " << r.surfels << " (" << std::fixed << std::setprecision(1) << elapsed() << " s)"
              << std::defaultfloat << std::setprecision(6) << "\n";
      };
      fit(scene, state, ds, s.pipeline, opts);
      save_checkpoint(path, scene, state, s.pipeline);
      out << "trained to iteration " << state.iteration << " -> " << path << "\n";
      return kExitOk;
    }

    if (*rend) {
      std::optional<std::size_t> which;
      if (render_which != "all") {
        if (render_which.empty() || !std::all_of(render_which.begin(), render_which.end(), ::isdigit)) {
          err << "camera must be an index or 'all'\n";
          return kExitUsage;
        }
        which = std::stoul(render_which);
      }
      const Checkpoint ck = load_checkpoint(render_ckpt);
      const auto& cams = ck.scene.cameras();
      if (which && *which >= cams.size())
        throw std::runtime_error("camera " + render_which + " out of range (" + std::to_string(cams.size()) + " cameras)");
      fs::create_directories(render_out);
      const auto splats = ck.scene.splats();
      for (std::size_t i = 0; i < cams.size(); ++i) {
        if (which && i != *which) continue;
        const RenderOutput r = render(splats, cams[i], ck.config.raster);
        std::ostringstream stem;
        stem << "view" << std::setw(4) << std::setfill('0') << i;
        const fs::path base = fs::path(render_out) / stem.str();
        write_png(base.string() + "_color.png", r.color);
        write_pfm(base.string() + "_depth.pfm", r.depth);
        write_pfm(base.string() + "_normal.pfm", r.normal);
        write_pfm(base.string() + "_alpha.pfm", r.alpha);
      }
      out << "rendered " << (which ? 1 : cams.size()) << " view(s) to " << render_out << "\n";
      return kExitOk;
    }

    if (*mesh) {
      Settings s = load_settings(mesh_config);
      if (mesh_voxel) s.tsdf.voxel_size = *mesh_voxel;
      if (mesh_trunc) s.tsdf.truncation = *mesh_trunc;
      s.tsdf.validate();
      const Checkpoint ck = load_checkpoint(mesh_ckpt);
      const Dataset ds = load_dataset(mesh_manifest);
      const TriangleMesh m = reconstruct_mesh(ck.scene, ds.cameras(), s.tsdf, ck.config.raster);
      if (m.triangles.empty()) throw std::runtime_error("no surface was extracted");
      ensure_parent(mesh_out);
      write_mesh(mesh_out, m);
      out << "mesh " << m.vertices.size() << " vertices " << m.triangles.size() << " triangles -> " << mesh_out << "\n";
      return kExitOk;
    }

    if (*ev) {
      Settings s = load_settings(eval_config);
      if (eval_threshold) s.eval.threshold = *eval_threshold;
      if (eval_samples) s.eval.n_samples = *eval_samples;
      if (eval_seed) s.eval.seed = *eval_seed;
      s.eval.validate();
      const auto pred = load_cloud(eval_pred, s.eval, s.eval.seed);
      const auto gt = load_cloud(eval_gt, s.eval, s.eval.seed + 1);
      const Metrics m = compute_metrics(pred, gt, s.eval);
      const std::string report = metrics_json(m, s.eval);
      out << report << "\n";
      if (!eval_json.empty()) {
        ensure_parent(eval_json);
        write_text_file(eval_json, report + "\n");
      }
      return kExitOk;
    }

    if (*verify) {
      auto reports = run_gradient_suite(verify_seed, verify_scale);
      const std::size_t n_grad = reports.size();
      auto eq = run_equivalence_suite(verify_seed, verify_scale);
      reports.insert(reports.end(), eq.begin(), eq.end());
      std::size_t failures = 0;
      for (const SuiteSummary& s : summarize(reports)) {
        failures += s.failures;
        out << (s.failures ? "FAIL " : "PASS ") << s.name << " checks=" << s.checks << " failed=" << s.failures
            << " worst_abs=" << s.worst_abs << " worst_rel=" << s.worst_rel << "\n";
      }
      for (const OracleReport& r : reports)
        if (!r.passed)
          out << "  failed: " << r.name << " [" << r.instance << "] abs=" << r.max_abs << " rel=" << r.max_rel
              << " tol_abs=" << r.tol_abs << " tol_rel=" << r.tol_rel << "\n";
      if (verify_coverage)
        for (const CoverageEntry& c : coverage_table()) out << "coverage: " << c.example << " -> " << c.check << "\n";
      out << "gradient probes " << n_grad << ", equivalence checks " << eq.size() << ", failures " << failures << " ("
          << std::fixed << std::setprecision(1) << elapsed() << " s)\n";
      if (!verify_json.empty()) {
        ensure_parent(verify_json);
        write_text_file(verify_json, reports_json(reports) + "\n");
      }
      return failures == 0 ? kExitOk : kExitRuntime;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace splatroom
