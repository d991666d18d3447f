#include "splatroom/eval.hpp"

#include "splatroom/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace splatroom {

void EvalConfig::validate() const {
  if (!(threshold > 0)) throw std::invalid_argument("eval config: threshold must be positive");
  if (n_samples < 1) throw std::invalid_argument("eval config: n_samples must be >= 1");
}

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, std::uint32_t(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = std::int32_t(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[std::size_t(id)].begin = begin;
    nodes_[std::size_t(id)].end = end;
    return id;
  }
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& n = nodes_[std::size_t(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(std::int32_t node, const Vec3& q, Hit& best, double& best_sq) const {
  const Node& n = nodes_[std::size_t(node)];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const double d = (points_[order_[i]] - q).squaredNorm();
      if (d < best_sq || (d == best_sq && order_[i] < best.index)) {
        best_sq = d;
        best.index = order_[i];
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t first = diff < 0 ? n.left : n.right;
  const std::int32_t second = diff < 0 ? n.right : n.left;
  search(first, q, best, best_sq);
  if (diff * diff <= best_sq) search(second, q, best, best_sq);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("nearest neighbor query on an empty point set");
  Hit best;
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, q, best, best_sq);
  best.distance = std::sqrt(best_sq);
  return best;
}

std::vector<Vec3> sample_mesh(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw std::invalid_argument("cannot sample an empty mesh");
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    const Vec3& a = mesh.vertices[std::size_t(f[0])];
    total += 0.5 * (mesh.vertices[std::size_t(f[1])] - a).cross(mesh.vertices[std::size_t(f[2])] - a).norm();
    cumulative[t] = total;
  }
  if (!(total > 0)) throw std::invalid_argument("cannot sample a mesh with zero area");
  Rng rng(seed);
  std::vector<Vec3> out(static_cast<std::size_t>(n));
  for (Vec3& p : out) {
    const double pick = rng.uniform() * total;
    const std::size_t t = std::min<std::size_t>(
        std::size_t(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin()),
        cumulative.size() - 1);
    const auto& f = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    p = (1.0 - r1) * mesh.vertices[std::size_t(f[0])] + r1 * (1.0 - r2) * mesh.vertices[std::size_t(f[1])] +
        r1 * r2 * mesh.vertices[std::size_t(f[2])];
  }
  return out;
}

double fscore(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2.0 * precision * recall / s : 0.0;
}

namespace {

// Mean nearest distance from `from` to `to` and fraction within threshold.
std::pair<double, double> one_sided(const std::vector<Vec3>& from, const KdTree& to, double threshold) {
  std::vector<double> dist(from.size());
  parallel_for(from.size(), [&](std::size_t i) { dist[i] = to.nearest(from[i]).distance; });
  double sum = 0.0;
  std::size_t within = 0;
  for (double d : dist) {
    sum += d;
    if (d < threshold) ++within;
  }
  return {sum / double(from.size()), double(within) / double(from.size())};
}

}  // namespace

Metrics compute_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, const EvalConfig& config) {
  config.validate();
  if (pred.empty() || gt.empty()) throw std::invalid_argument("compute_metrics: empty point cloud");
  const KdTree gt_tree(gt), pred_tree(pred);
  Metrics m;
  std::tie(m.accuracy, m.precision) = one_sided(pred, gt_tree, config.threshold);
  std::tie(m.completion, m.recall) = one_sided(gt, pred_tree, config.threshold);
  m.fscore = fscore(m.precision, m.recall);
  return m;
}

std::string metrics_json(const Metrics& m, const EvalConfig& config) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["completion"] = m.completion;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["fscore"] = m.fscore;
  j["threshold"] = config.threshold;
  j["samples"] = config.n_samples;
  j["seed"] = config.seed;
  return j.dump(2);
}

}  // namespace splatroom
