#pragma once

#include "splatroom/camera.hpp"
#include "splatroom/types.hpp"

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace splatroom {

struct SfmPoint {
  Vec3 position = Vec3::Zero();
  int match_count = 0;
  std::optional<Vec3> color;
};

struct SeedConfig {
  int epsilon = 3;       // minimum feature-match count kept by filter_points
  double delta = 0.05;   // base voxel size (meters)
  int k = 10;            // surfels per seed
  std::uint64_t rng_seed = 0;

  void validate() const;
};

using SurfelId = std::uint64_t;
using SeedId = std::uint64_t;

// Raw (pre-activation) surfel parameters. Effective opacity and color are
// sigmoids of the raw values and scales are exponentials, so the effective
// values always lie in their valid ranges.
struct Surfel {
  SurfelId id = 0;
  SeedId seed_id = 0;
  Vec3 offset = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // quaternion (w, x, y, z)
  Vec2 log_scale = Vec2::Zero();
  double raw_opacity = 0.0;
  Vec3 raw_color = Vec3::Zero();

  double opacity() const { return sigmoid(raw_opacity); }
  Vec2 scale() const { return log_scale.array().exp(); }
  Vec3 color() const { return raw_color.unaryExpr([](double v) { return sigmoid(v); }); }
};

struct SeedPoint {
  SeedId id = 0;
  Vec3 anchor = Vec3::Zero();
  Vec3i key = Vec3i::Zero();  // voxel key at this seed's level
  int level = 0;
  double grad_accum = 0.0;
  int grad_count = 0;
  double opacity_accum = 0.0;
  int opacity_count = 0;
  std::vector<SurfelId> surfel_ids;
  bool active = true;
};

// Initial appearance/shape of a freshly created seed's surfels.
struct SurfelInit {
  double voxel_size = 0.05;  // jitter is U[-voxel/4, voxel/4]^3, scale voxel/4
  Vec3 color = Vec3::Constant(0.5);
  Vec4 rotation = Vec4(1, 0, 0, 0);
  double opacity = 0.1;
};

// One flattened primitive handed to the rasterizer: world center plus the
// surfel's raw parameters.
struct Splat {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);
  Vec2 log_scale = Vec2::Zero();
  double raw_opacity = 0.0;
  Vec3 raw_color = Vec3::Zero();
  std::uint64_t id = 0;
};

class Scene {
 public:
  Scene() = default;
  explicit Scene(SeedConfig config) : config_(config) {}

  const SeedConfig& config() const { return config_; }
  int k() const { return config_.k; }

  const std::vector<SeedPoint>& seeds() const { return seeds_; }
  std::vector<SeedPoint>& seeds() { return seeds_; }
  const std::vector<Surfel>& surfels() const { return surfels_; }
  std::vector<Surfel>& surfels() { return surfels_; }

  std::vector<Camera>& cameras() { return cameras_; }
  const std::vector<Camera>& cameras() const { return cameras_; }

  // Appends an active seed with k freshly initialized surfels.
  SeedId add_seed(const Vec3& anchor, const Vec3i& key, int level, const SurfelInit& init, Rng& rng);

  // Removes the flagged seeds and their surfels. Returns, for each surviving
  // surfel in new order, its index before removal.
  std::vector<std::size_t> remove_seeds(const std::vector<bool>& remove);

  std::size_t seed_index(SeedId id) const;
  std::size_t surfel_index(SurfelId id) const;
  bool has_surfel(SurfelId id) const { return surfel_index_.count(id) != 0; }

  // anchor + offset of the surfel; throws std::out_of_range on a dangling
  // handle or an inactive seed.
  Vec3 surfel_world_center(SurfelId id) const;

  // Snapshot for rendering, in surfel order.
  std::vector<Splat> splats() const;

  // Throws std::logic_error if seed/surfel references are inconsistent.
  void check_integrity() const;

  // Rebuild id lookup tables after direct edits of seeds()/surfels().
  void reindex();

  std::uint64_t next_seed_id() const { return next_seed_id_; }
  std::uint64_t next_surfel_id() const { return next_surfel_id_; }
  void set_next_ids(std::uint64_t seed, std::uint64_t surfel) {
    next_seed_id_ = seed;
    next_surfel_id_ = surfel;
  }

 private:
  SeedConfig config_;
  std::vector<SeedPoint> seeds_;
  std::vector<Surfel> surfels_;
  std::vector<Camera> cameras_;
  std::unordered_map<SeedId, std::size_t> seed_index_;
  std::unordered_map<SurfelId, std::size_t> surfel_index_;
  std::uint64_t next_seed_id_ = 0;
  std::uint64_t next_surfel_id_ = 0;
};

std::vector<SfmPoint> filter_points(std::span<const SfmPoint> points, int epsilon);

Vec3i voxel_key(const Vec3& p, double voxel_size);
Vec3 voxel_center(const Vec3i& key, double voxel_size);

// One seed per occupied voxel of size config.delta, anchored at the voxel
// center, with k surfels each. Seeds are ordered by voxel key. Throws
// std::invalid_argument("no points after filtering") on empty input.
Scene voxelize_seeds(std::span<const SfmPoint> points, const SeedConfig& config);

// Seeds placed uniformly at random inside the bounding box of the points
// (same seed count as voxelize_seeds would produce). Used to ablate the
// voxel-guided initialization.
Scene random_seeds(std::span<const SfmPoint> points, const SeedConfig& config);

}  // namespace splatroom
