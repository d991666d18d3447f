#include "splatroom/trainer.hpp"

#include "splatroom/checkpoint.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace splatroom {

void TrainConfig::validate() const {
  if (total_iters < 0) throw std::invalid_argument("train config: total_iters must be >= 0");
  const double rates[] = {lr_offset, lr_offset_final, lr_rotation, lr_scale, lr_opacity, lr_color};
  for (double r : rates)
    if (!(r > 0)) throw std::invalid_argument("train config: learning rates must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
    throw std::invalid_argument("train config: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw std::invalid_argument("train config: adam_eps must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("train config: checkpoint_every must be >= 0");
}

double TrainConfig::offset_lr(int iter, double extent) const {
  const double t = total_iters > 0 ? std::clamp(double(iter) / total_iters, 0.0, 1.0) : 1.0;
  return std::exp((1.0 - t) * std::log(lr_offset) + t * std::log(lr_offset_final)) * extent;
}

void PipelineConfig::validate() const {
  train.validate();
  densify.validate();
  weights.validate();
  mv.validate();
  raster.validate();
}

double scene_extent(const Scene& scene) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const SeedPoint& s : scene.seeds()) {
    if (!s.active) continue;
    lo = lo.cwiseMin(s.anchor);
    hi = hi.cwiseMax(s.anchor);
  }
  const double d = (hi - lo).norm();
  return std::isfinite(d) && d > 0 ? d : 1.0;
}

TrainState make_train_state(const Scene& scene, const TrainConfig& config) {
  TrainState state;
  state.rng = Rng(config.seed);
  state.extent = scene_extent(scene);
  extend_moments(state.adam, scene.surfels().size());
  return state;
}

void extend_moments(AdamState& adam, std::size_t rows) {
  const Eigen::Index old = adam.m.rows();
  if (Eigen::Index(rows) < old) throw std::logic_error("extend_moments: cannot shrink");
  adam.m.conservativeResize(Eigen::Index(rows), Eigen::NoChange);
  adam.v.conservativeResize(Eigen::Index(rows), Eigen::NoChange);
  adam.m.bottomRows(Eigen::Index(rows) - old).setZero();
  adam.v.bottomRows(Eigen::Index(rows) - old).setZero();
}

void compact_moments(AdamState& adam, const std::vector<std::size_t>& kept) {
  ParamMatrix m(Eigen::Index(kept.size()), param::kCount), v(Eigen::Index(kept.size()), param::kCount);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    m.row(Eigen::Index(i)) = adam.m.row(Eigen::Index(kept[i]));
    v.row(Eigen::Index(i)) = adam.v.row(Eigen::Index(kept[i]));
  }
  adam.m = std::move(m);
  adam.v = std::move(v);
}

std::optional<int> select_neighbor(const std::vector<Frame>& frames, int view) {
  const Camera& ref = frames[std::size_t(view)].camera;
  const double cos_limit = std::cos(30.0 * M_PI / 180.0);
  std::optional<int> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (int(i) == view) continue;
    const Camera& c = frames[i].camera;
    if (!(ref.view_direction().dot(c.view_direction()) > cos_limit)) continue;
    const double d = (c.center() - ref.center()).norm();
    if (d < best_dist) {
      best_dist = d;
      best = int(i);
    }
  }
  return best;
}

namespace {

int next_view(TrainState& state, std::size_t n_views) {
  if (state.order.size() != n_views || state.order_pos >= state.order.size()) {
    state.order.resize(n_views);
    std::iota(state.order.begin(), state.order.end(), 0);
    for (std::size_t i = n_views; i > 1; --i) {
      const std::size_t j = std::size_t(state.rng.uniform_int(0, std::int64_t(i) - 1));
      std::swap(state.order[i - 1], state.order[j]);
    }
    state.order_pos = 0;
  }
  return state.order[state.order_pos++];
}

// Pixels with a positive prior and rendered alpha above the threshold.
Mask prior_mask(const RenderOutput& out, const Eigen::ArrayXd& prior_norm, double alpha_threshold) {
  Mask m(out.width(), out.height());
  for (Eigen::Index i = 0; i < out.alpha.size(); ++i)
    m.set(std::size_t(i), prior_norm(i) > 0.0 && out.alpha.data(i) > alpha_threshold);
  return m;
}

[[noreturn]] void non_finite(const std::string& term, int view, int iter) {
  std::ostringstream os;
  os << "non-finite loss term: " << term << " (view " << view << ", iteration " << iter << ")";
  throw std::runtime_error(os.str());
}

double adam_update(TrainState& state, Scene& scene, const ParamGrads& grads, const TrainConfig& cfg) {
  AdamState& adam = state.adam;
  auto& surfels = scene.surfels();
  if (adam.m.rows() != Eigen::Index(surfels.size()))
    throw std::logic_error("optimizer state does not match the scene");
  ++adam.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(adam.step));
  const double c2 = 1.0 - std::pow(b2, double(adam.step));
  ParamRow lr;
  lr.segment<3>(param::kCenter).setConstant(cfg.offset_lr(state.iteration, state.extent));
  lr.segment<4>(param::kRotation).setConstant(cfg.lr_rotation);
  lr.segment<2>(param::kScale).setConstant(cfg.lr_scale);
  lr(param::kOpacity) = cfg.lr_opacity;
  lr.segment<3>(param::kColor).setConstant(cfg.lr_color);

  adam.m = b1 * adam.m + (1.0 - b1) * grads.params;
  adam.v = b2 * adam.v + (1.0 - b2) * grads.params.cwiseAbs2();
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < surfels.size(); ++i) {
    const Eigen::Index r = Eigen::Index(i);
    const ParamRow step =
        -(lr.array() * (adam.m.row(r).array() / c1) / ((adam.v.row(r).array() / c2).sqrt() + cfg.adam_eps)).matrix();
    Surfel& s = surfels[i];
    const Vec3 offset = s.offset;
    const Vec4 rot = s.rotation;
    const Vec2 scale = s.log_scale;
    const double opacity = s.raw_opacity;
    const Vec3 color = s.raw_color;
    s.offset += step.segment<3>(param::kCenter).transpose();
    s.rotation = (s.rotation + step.segment<4>(param::kRotation).transpose()).normalized();
    s.log_scale += step.segment<2>(param::kScale).transpose();
    s.raw_opacity += step(param::kOpacity);
    s.raw_color += step.segment<3>(param::kColor).transpose();
    norm_sq += (s.offset - offset).squaredNorm() + (s.rotation - rot).squaredNorm() +
               (s.log_scale - scale).squaredNorm() + std::pow(s.raw_opacity - opacity, 2) +
               (s.raw_color - color).squaredNorm();
  }
  return std::sqrt(norm_sq);
}

}  // namespace

StepReport train_step(TrainState& state, Scene& scene, const Dataset& dataset, const PipelineConfig& config) {
  if (dataset.frames.empty()) throw std::invalid_argument("train_step: dataset has no frames");
  if (scene.surfels().empty()) throw std::invalid_argument("train_step: scene has no surfels");
  const int iter = state.iteration + 1;
  const LossWeights& w = config.weights;
  StepReport report;
  report.iteration = iter;
  report.view = next_view(state, dataset.frames.size());
  const Frame& frame = dataset.frames[std::size_t(report.view)];

  const std::vector<Splat> splats = scene.splats();
  RenderCache cache;
  const RenderOutput out = render(splats, frame.camera, config.raster, &cache);
  MapGrads map = MapGrads::zeros(out.width(), out.height());

  LossTerms terms;
  Image3 g_rgb;
  terms.rgb = rgb_loss(out.color, frame.image, w.rgb_ssim_mix, &g_rgb);
  report.rgb = terms.rgb;
  if (!std::isfinite(terms.rgb)) non_finite("rgb", report.view, iter);
  map.color.data += w.lambda_rgb * g_rgb.data;

  const double alpha_thr = config.raster.alpha_valid_threshold;
  if (frame.depth_prior && w.lambda_d > 0) {
    const Mask valid = prior_mask(out, frame.depth_prior->data, alpha_thr);
    Image1 g;
    terms.depth = depth_loss(out.depth, *frame.depth_prior, valid, w.lambda_grad, &g);
    if (!std::isfinite(terms.depth)) non_finite("depth", report.view, iter);
    report.depth = terms.depth;
    map.depth.data += w.lambda_d * g.data;
  }
  if (frame.normal_prior && w.lambda_n > 0) {
    const Mask valid = prior_mask(out, frame.normal_prior->data.rowwise().norm(), alpha_thr);
    Image3 g;
    terms.normal = normal_loss(out.normal, *frame.normal_prior, valid, w.lambda_1, w.lambda_cos, &g);
    if (!std::isfinite(terms.normal)) non_finite("normal", report.view, iter);
    report.normal = terms.normal;
    map.normal.data += w.lambda_n * g.data;
  }

  ParamGrads grads = ParamGrads::zeros(splats.size());
  if (iter >= config.mv.start_iter && dataset.frames.size() >= 2 && (w.lambda_geo > 0 || w.lambda_pho > 0)) {
    if (const auto nb = select_neighbor(dataset.frames, report.view)) {
      const Frame& nframe = dataset.frames[std::size_t(*nb)];
      RenderCache ncache;
      const RenderOutput nout = render(splats, nframe.camera, config.raster, &ncache);
      const MvResult mv =
          mv_consistency_loss({frame.image, frame.camera, out}, {nframe.image, nframe.camera, nout}, config.mv, w);
      if (!std::isfinite(mv.value)) non_finite("multi-view", report.view, iter);
      terms.mv = mv.value;
      report.mv = mv.value;
      report.mv_geo = mv.geo;
      report.mv_pho = mv.pho;
      report.neighbor = *nb;
      if (!mv.empty) {
        map += mv.ref_grads;
        grads += backward(splats, ncache, nout, mv.nb_grads);
      }
    }
  }
  report.total = total_loss(terms, w);
  grads += backward(splats, cache, out, map);

  if (config.densify.accumulates(iter)) accumulate_seed_stats(grads, scene);
  state.iteration = iter;
  report.update_norm = adam_update(state, scene, grads, config.train);

  if (config.densify.is_event(iter)) {
    report.densified = true;
    report.grown = grow_seeds(scene, config.densify, iter, state.rng);
    extend_moments(state.adam, scene.surfels().size());
    const PruneResult pr = prune_seeds(scene, config.densify, iter);
    report.pruned = pr.pruned;
    compact_moments(state.adam, pr.kept_surfels);
  }

  state.last_loss = report.total;
  state.loss_ema = iter == 1 ? report.total : 0.99 * state.loss_ema + 0.01 * report.total;
  report.seeds = scene.seeds().size();
  report.surfels = scene.surfels().size();
  return report;
}

std::string report_csv_header() {
  return "iteration,view,total,rgb,depth,normal,mv,mv_geo,mv_pho,seeds,surfels,grown,pruned";
}

std::string report_csv_row(const StepReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
    os << ',';
  };
  os << r.iteration << ',' << r.view << ',' << r.total << ',' << r.rgb << ',';
  opt(r.depth);
  opt(r.normal);
  opt(r.mv);
  if (r.mv) os << r.mv_geo << ',' << r.mv_pho;
  else os << ',';
  os << ',' << r.seeds << ',' << r.surfels << ',' << r.grown << ',' << r.pruned;
  return os.str();
}

FitResult fit(Scene& scene, TrainState& state, const Dataset& dataset, const PipelineConfig& config,
              const FitOptions& options) {
  config.validate();
  const int target = options.iterations >= 0 ? state.iteration + options.iterations : config.train.total_iters;
  FitResult result;
  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path);
    if (!log) throw std::runtime_error("cannot write loss log: " + options.log_path);
    log << report_csv_header() << '\n';
  }
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);
  while (state.iteration < target) {
    StepReport r = train_step(state, scene, dataset, config);
    if (log) log << report_csv_row(r) << '\n';
    if (options.on_step) options.on_step(r);
    if (!options.checkpoint_dir.empty() && config.train.checkpoint_every > 0 &&
        r.iteration % config.train.checkpoint_every == 0) {
      std::ostringstream name;
      name << "iter_" << std::setw(6) << std::setfill('0') << r.iteration << ".ckpt";
      save_checkpoint((std::filesystem::path(options.checkpoint_dir) / name.str()).string(), scene, state, config);
    }
    result.reports.push_back(std::move(r));
  }
  return result;
}

}  // namespace splatroom
