#pragma once

#include "splatroom/dataset.hpp"
#include "splatroom/types.hpp"

#include <string>
#include <vector>

namespace splatroom {

struct EvalConfig {
  double threshold = 0.05;
  int n_samples = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Exact nearest-neighbor queries over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;
  };
  // Throws std::logic_error on an empty tree.
  Hit nearest(const Vec3& q) const;

 private:
  struct Node {
    int axis = -1;             // -1 marks a leaf
    double split = 0.0;
    std::uint32_t begin = 0;   // leaf range into order_
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, Hit& best, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

// Area-weighted uniform samples on the surface, deterministic given seed.
// Throws std::invalid_argument on an empty mesh.
std::vector<Vec3> sample_mesh(const TriangleMesh& mesh, int n, std::uint64_t seed);

struct Metrics {
  double accuracy = 0.0;
  double completion = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

// Harmonic mean of precision and recall; 0 when both are 0.
double fscore(double precision, double recall);

// Point-to-point metrics between predicted and ground-truth clouds.
Metrics compute_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, const EvalConfig& config);

std::string metrics_json(const Metrics& m, const EvalConfig& config);

}  // namespace splatroom
