#pragma once

#include "splatroom/scene.hpp"

#include <vector>

namespace splatroom {

struct DensifyConfig {
  int grow_window = 100;     // N_g: iterations of gradient statistics per growth decision
  int prune_window = 100;    // N_alpha: iterations of opacity statistics per prune decision
  int interval = 100;        // densify every `interval` iterations inside [start_iter, end_iter]
  double theta_g = 0.0002;   // base growth threshold on the mean screen gradient
  double theta_alpha = 0.5;  // prune threshold on mean per-surfel opacity
  int max_level = 2;
  int start_iter = 1500;
  int end_iter = 15000;
  bool enabled = true;

  void validate() const;
  bool in_window(int iter) const { return enabled && iter >= start_iter && iter <= end_iter; }
  bool is_event(int iter) const { return in_window(iter) && iter % interval == 0; }
  // Iterations whose gradients feed the next densification event.
  bool accumulates(int iter) const {
    return enabled && iter > start_iter - std::max(grow_window, prune_window) && iter <= end_iter;
  }
  double growth_threshold(int level) const { return theta_g * double(1 << level); }
};

// Voxel size at a multi-resolution level.
inline double level_voxel_size(double delta, int level) { return delta / double(1 << level); }

// Seeds whose mean screen gradient exceeds the level threshold spawn finer
// seeds at the level+1 voxels occupied by their surfel centers. Returns the
// number of seeds created; no-op outside the densification window.
std::size_t grow_seeds(Scene& scene, const DensifyConfig& config, int iter, Rng& rng);

struct PruneResult {
  std::size_t pruned = 0;
  bool kept_fallback = false;                // everything qualified; the strongest seed was kept
  std::vector<std::size_t> kept_surfels;     // old surfel index of each surviving surfel
};

// Deactivates and removes seeds whose mean per-surfel opacity over the last
// window is below theta_alpha. Never empties the scene.
PruneResult prune_seeds(Scene& scene, const DensifyConfig& config, int iter);

}  // namespace splatroom
