#include "splatroom/scene.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace splatroom {

namespace {

struct KeyLess {
  bool operator()(const Vec3i& a, const Vec3i& b) const {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  }
};

double clamp_color(double c) { return std::clamp(c, 0.02, 0.98); }

}  // namespace

void SeedConfig::validate() const {
  if (!(delta > 0)) throw std::invalid_argument("seed config: delta must be positive");
  if (k < 1) throw std::invalid_argument("seed config: k must be >= 1");
  if (epsilon < 0) throw std::invalid_argument("seed config: epsilon must be >= 0");
}

SeedId Scene::add_seed(const Vec3& anchor, const Vec3i& key, int level, const SurfelInit& init, Rng& rng) {
  SeedPoint seed;
  seed.id = next_seed_id_++;
  seed.anchor = anchor;
  seed.key = key;
  seed.level = level;
  seed.surfel_ids.reserve(config_.k);
  const double jitter = init.voxel_size / 4.0;
  const double log_scale = std::log(init.voxel_size / 4.0);
  for (int j = 0; j < config_.k; ++j) {
    Surfel s;
    s.id = next_surfel_id_++;
    s.seed_id = seed.id;
    for (int a = 0; a < 3; ++a) s.offset(a) = rng.uniform(-jitter, jitter);
    s.rotation = init.rotation.normalized();
    s.log_scale = Vec2::Constant(log_scale);
    s.raw_opacity = inverse_sigmoid(init.opacity);
    for (int c = 0; c < 3; ++c) s.raw_color(c) = inverse_sigmoid(clamp_color(init.color(c)));
    surfel_index_[s.id] = surfels_.size();
    seed.surfel_ids.push_back(s.id);
    surfels_.push_back(s);
  }
  seed_index_[seed.id] = seeds_.size();
  seeds_.push_back(std::move(seed));
  return seeds_.back().id;
}

std::vector<std::size_t> Scene::remove_seeds(const std::vector<bool>& remove) {
  if (remove.size() != seeds_.size()) throw std::invalid_argument("remove_seeds: mask size mismatch");
  std::unordered_map<SeedId, bool> dropped;
  std::vector<SeedPoint> kept_seeds;
  kept_seeds.reserve(seeds_.size());
  for (std::size_t i = 0; i < seeds_.size(); ++i) {
    if (remove[i])
      dropped[seeds_[i].id] = true;
    else
      kept_seeds.push_back(std::move(seeds_[i]));
  }
  std::vector<std::size_t> kept;
  std::vector<Surfel> kept_surfels;
  kept.reserve(surfels_.size());
  kept_surfels.reserve(surfels_.size());
  for (std::size_t i = 0; i < surfels_.size(); ++i) {
    if (dropped.count(surfels_[i].seed_id)) continue;
    kept.push_back(i);
    kept_surfels.push_back(surfels_[i]);
  }
  seeds_ = std::move(kept_seeds);
  surfels_ = std::move(kept_surfels);
  reindex();
  return kept;
}

void Scene::reindex() {
  seed_index_.clear();
  surfel_index_.clear();
  for (std::size_t i = 0; i < seeds_.size(); ++i) seed_index_[seeds_[i].id] = i;
  for (std::size_t i = 0; i < surfels_.size(); ++i) surfel_index_[surfels_[i].id] = i;
}

std::size_t Scene::seed_index(SeedId id) const {
  auto it = seed_index_.find(id);
  if (it == seed_index_.end()) throw std::out_of_range("unknown seed id " + std::to_string(id));
  return it->second;
}

std::size_t Scene::surfel_index(SurfelId id) const {
  auto it = surfel_index_.find(id);
  if (it == surfel_index_.end()) throw std::out_of_range("unknown surfel id " + std::to_string(id));
  return it->second;
}

Vec3 Scene::surfel_world_center(SurfelId id) const {
  const Surfel& s = surfels_[surfel_index(id)];
  const SeedPoint& seed = seeds_[seed_index(s.seed_id)];
  if (!seed.active) throw std::out_of_range("surfel " + std::to_string(id) + " belongs to an inactive seed");
  return seed.anchor + s.offset;
}

std::vector<Splat> Scene::splats() const {
  std::vector<Splat> out(surfels_.size());
  for (std::size_t i = 0; i < surfels_.size(); ++i) {
    const Surfel& s = surfels_[i];
    const SeedPoint& seed = seeds_[seed_index(s.seed_id)];
    out[i] = {seed.anchor + s.offset, s.rotation, s.log_scale, s.raw_opacity, s.raw_color, s.id};
  }
  return out;
}

void Scene::check_integrity() const {
  std::unordered_map<SeedId, int> owned;
  for (const Surfel& s : surfels_) {
    auto it = seed_index_.find(s.seed_id);
    if (it == seed_index_.end()) throw std::logic_error("surfel references a missing seed");
    if (!seeds_[it->second].active) throw std::logic_error("surfel references an inactive seed");
    ++owned[s.seed_id];
  }
  for (const SeedPoint& seed : seeds_) {
    if (!seed.active) continue;
    if (int(seed.surfel_ids.size()) != config_.k || owned[seed.id] != config_.k)
      throw std::logic_error("seed " + std::to_string(seed.id) + " does not own exactly k surfels");
    for (SurfelId sid : seed.surfel_ids) {
      auto it = surfel_index_.find(sid);
      if (it == surfel_index_.end() || surfels_[it->second].seed_id != seed.id)
        throw std::logic_error("seed lists a surfel it does not own");
    }
  }
}

std::vector<SfmPoint> filter_points(std::span<const SfmPoint> points, int epsilon) {
  std::vector<SfmPoint> out;
  out.reserve(points.size());
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [epsilon](const SfmPoint& p) { return p.match_count >= epsilon; });
  return out;
}

Vec3i voxel_key(const Vec3& p, double voxel_size) {
  return (p / voxel_size).array().floor().cast<int>();
}

Vec3 voxel_center(const Vec3i& key, double voxel_size) {
  return (key.cast<double>().array() + 0.5).matrix() * voxel_size;
}

Scene voxelize_seeds(std::span<const SfmPoint> points, const SeedConfig& config) {
  config.validate();
  if (points.empty()) throw std::invalid_argument("no points after filtering");
  struct Cell {
    Vec3 color_sum = Vec3::Zero();
    int colored = 0;
  };
  std::map<Vec3i, Cell, KeyLess> cells;
  for (const SfmPoint& p : points) {
    if (!p.position.allFinite()) throw std::invalid_argument("point position is not finite");
    Cell& cell = cells[voxel_key(p.position, config.delta)];
    if (p.color) {
      cell.color_sum += *p.color;
      ++cell.colored;
    }
  }
  Scene scene(config);
  Rng rng(config.rng_seed);
  for (const auto& [key, cell] : cells) {
    SurfelInit init;
    init.voxel_size = config.delta;
    if (cell.colored > 0) init.color = cell.color_sum / cell.colored;
    scene.add_seed(voxel_center(key, config.delta), key, 0, init, rng);
  }
  return scene;
}

Scene random_seeds(std::span<const SfmPoint> points, const SeedConfig& config) {
  config.validate();
  if (points.empty()) throw std::invalid_argument("no points after filtering");
  Vec3 lo = points.front().position, hi = lo;
  std::map<Vec3i, bool, KeyLess> occupied;
  Vec3 mean_color = Vec3::Zero();
  int colored = 0;
  for (const SfmPoint& p : points) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
    occupied[voxel_key(p.position, config.delta)] = true;
    if (p.color) {
      mean_color += *p.color;
      ++colored;
    }
  }
  Scene scene(config);
  Rng rng(config.rng_seed);
  SurfelInit init;
  init.voxel_size = config.delta;
  if (colored > 0) init.color = mean_color / colored;
  for (std::size_t i = 0; i < occupied.size(); ++i) {
    Vec3 anchor;
    for (int a = 0; a < 3; ++a) anchor(a) = rng.uniform(lo(a), hi(a));
    scene.add_seed(anchor, voxel_key(anchor, config.delta), 0, init, rng);
  }
  return scene;
}

}  // namespace splatroom
