#pragma once

#include "splatroom/dataset.hpp"
#include "splatroom/densify.hpp"
#include "splatroom/gradients.hpp"
#include "splatroom/losses.hpp"
#include "splatroom/rasterizer.hpp"
#include "splatroom/scene.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace splatroom {

struct TrainConfig {
  int total_iters = 30000;
  double lr_offset = 0.00016;
  double lr_offset_final = 0.0000016;
  double lr_rotation = 0.001;
  double lr_scale = 0.005;
  double lr_opacity = 0.05;
  double lr_color = 0.0025;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-15;
  std::uint64_t seed = 0;
  int checkpoint_every = 5000;

  void validate() const;
  // Offset learning rate at an iteration: log-linear decay from lr_offset to
  // lr_offset_final over total_iters, times the scene extent.
  double offset_lr(int iter, double extent) const;
};

// Everything the training loop is configured by.
struct PipelineConfig {
  TrainConfig train;
  DensifyConfig densify;
  LossWeights weights;
  MvConfig mv;
  RasterConfig raster;

  void validate() const;
};

struct AdamState {
  ParamMatrix m;
  ParamMatrix v;
  std::int64_t step = 0;
};

struct TrainState {
  int iteration = 0;
  AdamState adam;
  Rng rng;
  std::vector<int> order;  // current epoch's view permutation
  std::size_t order_pos = 0;
  double extent = 1.0;     // seed-anchor bounding-box diagonal
  double last_loss = 0.0;
  double loss_ema = 0.0;
};

TrainState make_train_state(const Scene& scene, const TrainConfig& config);

// Diagonal of the bounding box of active seed anchors (1 when degenerate).
double scene_extent(const Scene& scene);

struct StepReport {
  int iteration = 0;
  int view = 0;
  double total = 0.0;
  double rgb = 0.0;
  std::optional<double> depth;
  std::optional<double> normal;
  std::optional<double> mv;  // present whenever the multi-view term was evaluated
  double mv_geo = 0.0;
  double mv_pho = 0.0;
  int neighbor = -1;
  bool densified = false;
  std::size_t grown = 0;
  std::size_t pruned = 0;
  std::size_t seeds = 0;
  std::size_t surfels = 0;
  double update_norm = 0.0;  // Euclidean norm of the parameter change
};

// Nearest other view whose viewing direction is within 30 degrees, if any.
std::optional<int> select_neighbor(const std::vector<Frame>& frames, int view);

// Adds zeroed moments for appended surfels and drops moments of removed ones
// (kept[i] = old row of new row i).
void compact_moments(AdamState& adam, const std::vector<std::size_t>& kept);
void extend_moments(AdamState& adam, std::size_t rows);

StepReport train_step(TrainState& state, Scene& scene, const Dataset& dataset, const PipelineConfig& config);

struct FitOptions {
  std::string log_path;         // CSV loss log; empty disables
  std::string checkpoint_dir;   // periodic checkpoints; empty disables
  std::function<void(const StepReport&)> on_step;
  int iterations = -1;          // -1 runs up to train.total_iters
};

struct FitResult {
  std::vector<StepReport> reports;
};

// Runs train_step until state.iteration reaches the target. Deterministic
// for a fixed seed and independent of the worker count.
FitResult fit(Scene& scene, TrainState& state, const Dataset& dataset, const PipelineConfig& config,
              const FitOptions& options = {});

// CSV helpers for the loss log.
std::string report_csv_header();
std::string report_csv_row(const StepReport& r);

}  // namespace splatroom
