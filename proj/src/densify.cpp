#include "splatroom/densify.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <stdexcept>
#include <tuple>

namespace splatroom {

void DensifyConfig::validate() const {
  if (start_iter >= end_iter) throw std::invalid_argument("densify config: start_iter must precede end_iter");
  if (!(theta_g > 0) || !(theta_alpha > 0)) throw std::invalid_argument("densify config: thresholds must be positive");
  if (grow_window < 1 || prune_window < 1 || interval < 1)
    throw std::invalid_argument("densify config: windows must be >= 1");
  if (max_level < 0 || max_level > 20) throw std::invalid_argument("densify config: max_level out of range");
}

namespace {

using LevelKey = std::tuple<int, int, int, int>;
LevelKey level_key(int level, const Vec3i& k) { return {level, k.x(), k.y(), k.z()}; }

}  // namespace

std::size_t grow_seeds(Scene& scene, const DensifyConfig& config, int iter, Rng& rng) {
  if (!config.in_window(iter)) return 0;
  const double delta = scene.config().delta;

  std::map<LevelKey, bool> occupied;
  for (const SeedPoint& s : scene.seeds())
    if (s.active) occupied[level_key(s.level, s.key)] = true;

  struct Candidate {
    int level;
    Vec3i key;
    Vec3 color_sum = Vec3::Zero();
    int count = 0;
    Vec4 rotation;
  };
  std::map<LevelKey, Candidate> created;  // ordered so creation order is deterministic

  for (SeedPoint& seed : scene.seeds()) {
    if (!seed.active || seed.grad_count < config.grow_window) continue;
    const double mean_grad = seed.grad_accum / seed.grad_count;
    seed.grad_accum = 0.0;
    seed.grad_count = 0;
    const int next_level = seed.level + 1;
    if (mean_grad <= config.growth_threshold(seed.level) || next_level > config.max_level) continue;
    const double size = level_voxel_size(delta, next_level);
    for (SurfelId sid : seed.surfel_ids) {
      const Surfel& surfel = scene.surfels()[scene.surfel_index(sid)];
      const Vec3i key = voxel_key(seed.anchor + surfel.offset, size);
      const LevelKey lk = level_key(next_level, key);
      if (occupied.count(lk)) continue;
      auto [it, inserted] = created.try_emplace(lk, Candidate{next_level, key, Vec3::Zero(), 0, surfel.rotation});
      it->second.color_sum += surfel.color();
      ++it->second.count;
    }
  }

  for (const auto& [lk, c] : created) {
    SurfelInit init;
    init.voxel_size = level_voxel_size(delta, c.level);
    init.color = c.color_sum / c.count;
    init.rotation = c.rotation;
    scene.add_seed(voxel_center(c.key, init.voxel_size), c.key, c.level, init, rng);
  }
  return created.size();
}

PruneResult prune_seeds(Scene& scene, const DensifyConfig& config, int iter) {
  PruneResult result;
  auto& seeds = scene.seeds();
  std::vector<bool> remove(seeds.size(), false);
  if (config.in_window(iter)) {
    const double norm = double(config.prune_window) * scene.k();
    std::size_t best = seeds.size();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      SeedPoint& s = seeds[i];
      if (!s.active || s.opacity_count < config.prune_window) continue;
      if (best == seeds.size() || s.opacity_accum > seeds[best].opacity_accum) best = i;
      remove[i] = s.opacity_accum / norm < config.theta_alpha;
    }
    const std::size_t n_remove = std::size_t(std::count(remove.begin(), remove.end(), true));
    if (n_remove == seeds.size() && best < seeds.size()) {
      remove[best] = false;
      result.kept_fallback = true;
      std::clog << "warning: pruning would remove every seed at iteration " << iter
                << "; keeping the seed with the largest accumulated opacity\n";
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (remove[i]) {
        seeds[i].active = false;
      } else if (seeds[i].opacity_count >= config.prune_window) {
        seeds[i].opacity_accum = 0.0;
        seeds[i].opacity_count = 0;
      }
    }
  }
  result.pruned = std::size_t(std::count(remove.begin(), remove.end(), true));
  result.kept_surfels = scene.remove_seeds(remove);
  return result;
}

}  // namespace splatroom
