#include "splatroom/diagnostics.hpp"

#include "splatroom/eval.hpp"
#include "splatroom/gradients.hpp"
#include "splatroom/io.hpp"
#include "splatroom/losses.hpp"
#include "splatroom/meshing.hpp"
#include "splatroom/rasterizer.hpp"
#include "splatroom/scene.hpp"
#include "splatroom/synthetic.hpp"
#include "splatroom/trainer.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace splatroom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFdStep = 1e-4;
constexpr double kFdRel = 1e-3;
constexpr double kFdAbs = 1e-6;

double scaled(double tol, double scale) { return std::isinf(scale) ? kInf : tol * scale; }
bool within(double err, double tol) { return std::isinf(tol) || (std::isfinite(err) && err <= tol); }

class Collector {
 public:
  explicit Collector(double scale) : scale_(scale) {}

  void add(const std::string& name, const std::string& instance, double abs, double rel, double tol_abs,
           double tol_rel) {
    OracleReport r;
    r.name = name;
    r.instance = instance;
    r.max_abs = abs;
    r.max_rel = rel;
    r.tol_abs = scaled(tol_abs, scale_);
    r.tol_rel = scaled(tol_rel, scale_);
    r.passed = within(abs, r.tol_abs) || within(rel, r.tol_rel);
    reports_.push_back(std::move(r));
  }

  // Deviation of a value from its reference, relative to the reference.
  void compare(const std::string& name, const std::string& instance, double value, double reference,
               double tol_abs, double tol_rel) {
    const double abs = std::abs(value - reference);
    const double rel = abs == 0.0 ? 0.0 : abs / std::max(std::abs(reference), 1e-300);
    add(name, instance, abs, rel, tol_abs, tol_rel);
  }

  // Largest deviation over a set of comparisons, relative to the largest reference.
  void compare_all(const std::string& name, const std::string& instance, double max_abs, double max_ref,
                   double tol_abs, double tol_rel) {
    const double rel = max_abs == 0.0 ? 0.0 : max_abs / std::max(max_ref, 1e-300);
    add(name, instance, max_abs, rel, tol_abs, tol_rel);
  }

  // Mismatch count of an exact check.
  void count(const std::string& name, const std::string& instance, double mismatches) {
    add(name, instance, mismatches, mismatches, 0.0, 0.0);
  }
  void expect(const std::string& name, const std::string& instance, bool ok) { count(name, instance, ok ? 0 : 1); }

  // Analytic derivative against a central difference.
  void probe(const std::string& name, const std::string& instance, double analytic, double numeric) {
    const double abs = std::abs(analytic - numeric);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    add(name, instance, abs, abs == 0.0 ? 0.0 : abs / mag, kFdAbs, kFdRel);
  }

  std::vector<OracleReport> take() { return std::move(reports_); }

 private:
  double scale_;
  std::vector<OracleReport> reports_;
};

std::string describe(std::initializer_list<std::pair<const char*, double>> items) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [k, v] : items) {
    out << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return out.str();
}

Vec4 random_quaternion(Rng& rng) {
  return Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
}

Camera random_camera(Rng& rng, int w, int h) {
  Camera cam = Camera::from_intrinsics(w, w, 0.5 * w, 0.5 * h, w, h);
  const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  cam.R_wc = Eigen::AngleAxisd(rng.uniform(0.0, 0.3), axis.normalized()).toRotationMatrix();
  cam.t_wc = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  return cam;
}

// Splats in front of the camera, mostly inside its view. With min_facing > 0
// the splat normal makes at least that |cosine| with the viewing ray.
std::vector<Splat> random_splats(Rng& rng, const Camera& cam, int n, double min_opacity_raw = -1.0,
                                 double min_facing = 0.0) {
  std::vector<Splat> splats;
  for (int i = 0; i < n; ++i) {
    Splat s;
    const Vec3 pc(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(1.5, 3.0));
    s.center = cam.R_wc.transpose() * (pc - cam.t_wc);
    do {
      s.rotation = random_quaternion(rng) * rng.uniform(0.8, 1.2);
    } while (std::abs((cam.R_wc * quaternion_to_matrix(s.rotation).col(2)).dot(pc.normalized())) < min_facing);
    s.log_scale = Vec2(std::log(rng.uniform(0.1, 0.5)), std::log(rng.uniform(0.1, 0.5)));
    s.raw_opacity = rng.uniform(min_opacity_raw, min_opacity_raw + 3.0);
    s.raw_color = Vec3(rng.normal(), rng.normal(), rng.normal());
    s.id = std::uint64_t(i);
    splats.push_back(s);
  }
  return splats;
}

template <int C>
void fill_normal(Image<C>& img, Rng& rng) {
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = rng.normal();
}

// Fixed random quadratic functional of all rendered maps.
struct QuadraticLoss {
  MapGrads lin, quad;

  QuadraticLoss(Rng& rng, int w, int h) : lin(MapGrads::zeros(w, h)), quad(MapGrads::zeros(w, h)) {
    fill_normal(lin.color, rng);
    fill_normal(lin.depth, rng);
    fill_normal(lin.normal, rng);
    fill_normal(lin.alpha, rng);
    fill_normal(quad.color, rng);
    fill_normal(quad.depth, rng);
    fill_normal(quad.normal, rng);
    fill_normal(quad.alpha, rng);
  }

  double operator()(const RenderOutput& o, MapGrads* g) const {
    double value = 0.0;
    auto term = [&](const auto& map, const auto& l, const auto& q, auto* gm) {
      value += (l.data * map.data).sum() + 0.5 * (q.data * map.data.square()).sum();
      if (gm) gm->data = l.data + q.data * map.data;
    };
    term(o.color, lin.color, quad.color, g ? &g->color : nullptr);
    term(o.depth, lin.depth, quad.depth, g ? &g->depth : nullptr);
    term(o.normal, lin.normal, quad.normal, g ? &g->normal : nullptr);
    term(o.alpha, lin.alpha, quad.alpha, g ? &g->alpha : nullptr);
    return value;
  }
};

const char* kParamNames[param::kCount] = {"cx", "cy", "cz", "qw", "qx", "qy", "qz",
                                          "su", "sv", "opacity", "r", "g", "b"};

// Central difference of f over one packed parameter of one splat.
template <class F>
double splat_fd(std::vector<Splat> splats, std::size_t i, int k, F&& f) {
  ParamRow row = pack_params(splats[i]);
  const double orig = row(k);
  row(k) = orig + kFdStep;
  unpack_params(row, splats[i]);
  const double plus = f(splats);
  row(k) = orig - kFdStep;
  unpack_params(row, splats[i]);
  const double minus = f(splats);
  return (plus - minus) / (2.0 * kFdStep);
}

// Discrete state of a render: depth order, normal flips, and which branch
// (none, low-pass, object space) each splat takes at each pixel. The forward
// map is smooth only while this stays fixed.
std::vector<int> render_branches(const std::vector<Splat>& splats, const Camera& cam, const RasterConfig& cfg) {
  std::vector<int> sig;
  std::vector<SplatGeometry> geo;
  for (const Splat& s : splats) geo.push_back(build_splat_geometry(s, cam, cfg));
  std::vector<int> order(splats.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::pair(geo[a].center_cam.z(), a) < std::pair(geo[b].center_cam.z(), b);
  });
  sig.insert(sig.end(), order.begin(), order.end());
  for (const SplatGeometry& g : geo) {
    sig.push_back(g.culled ? 0 : g.flip > 0 ? 1 : 2);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const bool covered = !g.culled && x >= g.x0 && x < g.x1 && y >= g.y0 && y < g.y1;
        const auto e = covered ? evaluate_splat(g, x + 0.5, y + 0.5, cfg) : std::nullopt;
        sig.push_back(!e ? 0 : e->object_space ? 1 : 2);
      }
  }
  return sig;
}

// Draws distinct (splat, parameter) probes until `wanted` of them have a
// stencil on which `branches` stays constant. A central difference that
// crosses a branch switch measures a jump, not a derivative, so such draws are
// skipped; the skip count is reported with the coverage check.
template <class Branches, class Loss>
void probe_smooth(Collector& out, Rng& rng, const std::string& name, const std::string& prefix,
                  const std::vector<Splat>& splats, const ParamGrads& grads, int wanted, Branches&& branches,
                  Loss&& loss) {
  const auto base_sig = branches(splats);
  auto smooth_at = [&](std::size_t i, int k) {
    for (double sign : {1.0, -1.0}) {
      std::vector<Splat> moved = splats;
      ParamRow row = pack_params(moved[i]);
      row(k) += sign * kFdStep;
      unpack_params(row, moved[i]);
      if (branches(moved) != base_sig) return false;
    }
    return true;
  };
  int done = 0, skipped = 0;
  std::set<std::pair<std::size_t, int>> used;
  while (done < wanted && used.size() < splats.size() * param::kCount) {
    const std::size_t i = std::size_t(rng.uniform_int(0, std::int64_t(splats.size()) - 1));
    const int k = int(rng.uniform_int(0, param::kCount - 1));
    if (!used.insert({i, k}).second) continue;
    if (!smooth_at(i, k)) {
      ++skipped;
      continue;
    }
    out.probe(name, prefix + "splat " + std::to_string(i) + " " + kParamNames[k], grads.params(Eigen::Index(i), k),
              splat_fd(splats, i, k, loss));
    ++done;
  }
  out.expect(name + "_coverage",
             prefix + std::to_string(done) + " smooth probes, " + std::to_string(skipped) + " skipped at branch switches",
             done == wanted);
}

void raster_probes(Collector& out, Rng& rng, int instance) {
  const int w = 16, h = 16;
  const Camera cam = random_camera(rng, w, h);
  // Near-grazing splats curve too sharply for a 1e-4 central difference.
  const std::vector<Splat> splats = random_splats(rng, cam, 6 + 2 * instance, -1.0, 0.25);
  RasterConfig cfg;
  cfg.alpha_cutoff = 0.0;  // no skipped contributions or early exit
  cfg.transmittance_floor = 0.0;
  const QuadraticLoss loss(rng, w, h);

  RenderCache cache;
  const RenderOutput base = render(splats, cam, cfg, &cache);
  MapGrads upstream = MapGrads::zeros(w, h);
  loss(base, &upstream);
  const ParamGrads grads = backward(splats, cache, base, upstream);

  probe_smooth(out, rng, "gradients.raster", "scene " + std::to_string(instance) + " ", splats, grads,
               3 * param::kCount,
               [&](const std::vector<Splat>& s) { return render_branches(s, cam, cfg); },
               [&](const std::vector<Splat>& s) { return loss(render(s, cam, cfg), nullptr); });
}

template <int C, class F>
void map_probes(Collector& out, Rng& rng, const std::string& name, Image<C>& input, const Image<C>& grad, int n,
                F&& loss) {
  for (int t = 0; t < n; ++t) {
    const auto i = rng.uniform_int(0, input.data.size() - 1);
    double* v = input.data.data() + i;
    const double orig = *v;
    *v = orig + kFdStep;
    const double plus = loss();
    *v = orig - kFdStep;
    const double minus = loss();
    *v = orig;
    out.probe(name, "element " + std::to_string(i), grad.data.data()[i], (plus - minus) / (2.0 * kFdStep));
  }
}

// Two views of the plane z - 0.1 x = 3 with an analytic texture.
struct PlanePair {
  Camera c0, c1;
  RenderOutput r0, r1;
  Image3 i0, i1;
};

double plane_hit(const Camera& c, double x, double y, Vec3* point) {
  const Vec3 dir = c.R_wc.transpose() * c.ray(x, y);
  const Vec3 o = c.center();
  const double s = (3.0 - o.z() + 0.1 * o.x()) / (dir.z() - 0.1 * dir.x());
  if (point) *point = o + s * dir;
  return s;
}

PlanePair plane_pair(Rng& rng, double noise, int size) {
  PlanePair p;
  const double f = 0.85 * size, c = 0.5 * size;
  p.c0 = Camera::look_at(Vec3(0, 0, 0), Vec3(0, 0, 3), Vec3(0, -1, 0), f, f, c, c, size, size);
  p.c1 = Camera::look_at(Vec3(0.3, 0.05, 0), Vec3(0, 0, 3), Vec3(0, -1, 0), f, f, c, c, size, size);
  const Vec3 nw = Vec3(-0.1, 0, 1).normalized();
  auto build = [&](const Camera& cam, RenderOutput& r, Image3& img) {
    r.color = Image3(size, size);
    r.depth = Image1(size, size);
    r.normal = Image3(size, size);
    r.alpha = Image1(size, size);
    img = Image3(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        Vec3 P;
        plane_hit(cam, x + 0.5, y + 0.5, &P);
        r.depth.at(x, y) = cam.to_camera(P).z() * (1.0 + noise * rng.normal());
        Vec3 nc = cam.R_wc * nw;
        if (noise > 0) nc += noise * Vec3(rng.normal(), rng.normal(), rng.normal());
        r.normal.pixel(x, y) = nc.normalized().transpose().array();
        r.alpha.at(x, y) = 1.0;
        const double v = 0.5 + 0.4 * std::sin(3.0 * P.x()) * std::cos(2.0 * P.y());
        img.pixel(x, y) = Eigen::Array3d(v, 0.8 * v + 0.1, 1.0 - v).transpose();
      }
  };
  build(p.c0, p.r0, p.i0);
  build(p.c1, p.r1, p.i1);
  return p;
}

void loss_map_probes(Collector& out, Rng& rng) {
  const int w = 16, h = 12;
  {
    Image3 a(w, h), b(w, h);
    for (Eigen::Index i = 0; i < a.data.size(); ++i) {
      a.data.data()[i] = rng.uniform();
      b.data.data()[i] = rng.uniform();
    }
    Image3 g;
    rgb_loss(a, b, 0.2, &g);
    map_probes(out, rng, "gradients.loss.rgb", a, g, 20, [&] { return rgb_loss(a, b, 0.2); });
  }
  {
    Image1 d(w, h), prior(w, h);
    Mask valid(w, h);
    for (int i = 0; i < w * h; ++i) {
      d.data(i) = 1.0 + rng.uniform();
      prior.data(i) = 2.0 + rng.uniform();
      valid.set(std::size_t(i), rng.uniform() < 0.8);
    }
    Image1 g;
    depth_loss(d, prior, valid, 0.5, &g);
    map_probes(out, rng, "gradients.loss.depth", d, g, 20, [&] { return depth_loss(d, prior, valid, 0.5); });
  }
  {
    Image3 n(w, h), prior(w, h);
    Mask valid(w, h);
    for (int i = 0; i < w * h; ++i) {
      n.data.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose().array();
      prior.data.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose().array();
      valid.set(std::size_t(i), rng.uniform() < 0.8);
    }
    Image3 g;
    normal_loss(n, prior, valid, 0.3, 0.7, &g);
    map_probes(out, rng, "gradients.loss.normal", n, g, 20, [&] { return normal_loss(n, prior, valid, 0.3, 0.7); });
  }
  {
    PlanePair p = plane_pair(rng, 0.01, 24);
    const MvConfig cfg;
    const LossWeights weights;
    auto value = [&] { return mv_consistency_loss({p.i0, p.c0, p.r0}, {p.i1, p.c1, p.r1}, cfg, weights, false).value; };
    const MvResult res = mv_consistency_loss({p.i0, p.c0, p.r0}, {p.i1, p.c1, p.r1}, cfg, weights);
    for (int side = 0; side < 2; ++side) {
      RenderOutput& r = side == 0 ? p.r0 : p.r1;
      const MapGrads& g = side == 0 ? res.ref_grads : res.nb_grads;
      // Probe entries the loss actually depends on.
      std::vector<std::pair<Eigen::Index, int>> live;
      for (Eigen::Index i = 0; i < g.depth.size(); ++i) {
        if (g.depth.data(i) != 0.0) live.emplace_back(i, 0);
        for (int c = 0; c < 3; ++c)
          if (g.normal.data(i, c) != 0.0) live.emplace_back(i, c + 1);
      }
      for (int t = 0; t < 20 && !live.empty(); ++t) {
        const auto [i, c] = live[std::size_t(rng.uniform_int(0, std::int64_t(live.size()) - 1))];
        double* v = c == 0 ? &r.depth.data(i) : &r.normal.data(i, c - 1);
        const double analytic = c == 0 ? g.depth.data(i) : g.normal.data(i, c - 1);
        const double orig = *v;
        *v = orig + kFdStep;
        const double plus = value();
        *v = orig - kFdStep;
        const double minus = value();
        *v = orig;
        out.probe(side == 0 ? "gradients.loss.mv_ref" : "gradients.loss.mv_neighbor",
                  "pixel " + std::to_string(i) + (c == 0 ? " depth" : " normal" + std::to_string(c - 1)), analytic,
                  (plus - minus) / (2.0 * kFdStep));
      }
    }
  }
}

// Photometric, depth and normal losses evaluated on a render, differentiated
// through the rasterizer. Validity masks are held fixed.
void chain_probes(Collector& out, Rng& rng) {
  const int w = 12, h = 12;
  const Camera cam = random_camera(rng, w, h);
  const std::vector<Splat> splats = random_splats(rng, cam, 8, 1.0, 0.25);
  RasterConfig cfg;
  cfg.alpha_cutoff = 0.0;
  cfg.transmittance_floor = 0.0;
  Image3 target(w, h), normal_prior(w, h);
  Image1 depth_prior(w, h);
  for (int i = 0; i < w * h; ++i) {
    target.data.row(i) = Eigen::Array3d(rng.uniform(), rng.uniform(), rng.uniform()).transpose();
    depth_prior.data(i) = rng.uniform(1.0, 3.0);
    normal_prior.data.row(i) = Vec3(rng.normal(), rng.normal(), -2.0).normalized().transpose().array();
  }
  LossWeights weights;
  weights.lambda_1 = 0.5;
  weights.lambda_cos = 0.5;

  RenderCache cache;
  const RenderOutput base = render(splats, cam, cfg, &cache);
  Mask valid(w, h);
  for (int i = 0; i < w * h; ++i) valid.set(std::size_t(i), base.alpha.data(i) > 0.3);

  auto evaluate = [&](const RenderOutput& o, MapGrads* g) {
    LossTerms t;
    Image3 g_rgb, g_n;
    Image1 g_d;
    t.rgb = rgb_loss(o.color, target, weights.rgb_ssim_mix, g ? &g_rgb : nullptr);
    t.depth = depth_loss(o.depth, depth_prior, valid, weights.lambda_grad, g ? &g_d : nullptr);
    t.normal = normal_loss(o.normal, normal_prior, valid, weights.lambda_1, weights.lambda_cos, g ? &g_n : nullptr);
    if (g) {
      *g = MapGrads::zeros(w, h);
      g->color.data = weights.lambda_rgb * g_rgb.data;
      g->depth.data = weights.lambda_d * g_d.data;
      g->normal.data = weights.lambda_n * g_n.data;
    }
    return total_loss(t, weights);
  };
  MapGrads upstream;
  evaluate(base, &upstream);
  const ParamGrads grads = backward(splats, cache, base, upstream);

  // Signs of every absolute-value argument in the losses, on top of the
  // render branches.
  auto branches = [&](const std::vector<Splat>& s) {
    std::vector<int> sig = render_branches(s, cam, cfg);
    const RenderOutput o = render(s, cam, cfg);
    auto push_sign = [&](double v) { sig.push_back(v > 0 ? 1 : v < 0 ? -1 : 0); };
    for (Eigen::Index i = 0; i < o.color.data.size(); ++i) push_sign(o.color.data.data()[i] - target.data.data()[i]);
    for (int i = 0; i < w * h; ++i) {
      if (!valid[std::size_t(i)]) continue;
      sig.push_back(o.normal.data.row(i).matrix().norm() > 1e-12);
      for (int c = 0; c < 3; ++c) push_sign(o.normal.data(i, c) - normal_prior.data(i, c));
    }
    const DepthAlignment a = align_depth(o.depth, depth_prior, valid);
    Image1 residual(w, h);
    residual.data = a.s * o.depth.data + a.t - depth_prior.data;
    for (int step : {1, 2, 4, 8})
      for (int y = 0; y < h; y += step)
        for (int x = 0; x < w; x += step) {
          if (!valid(x, y)) continue;
          if (x + step < w && valid(x + step, y)) push_sign(residual.at(x + step, y) - residual.at(x, y));
          if (y + step < h && valid(x, y + step)) push_sign(residual.at(x, y + step) - residual.at(x, y));
        }
    return sig;
  };
  probe_smooth(out, rng, "gradients.chain", "", splats, grads, 2 * param::kCount, branches,
               [&](const std::vector<Splat>& s) { return evaluate(render(s, cam, cfg), nullptr); });
}

// ---- independent oracles --------------------------------------------------

Mat3 oracle_rotation(const Vec4& q) {
  Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  quat.normalize();
  return quat.toRotationMatrix();
}

Vec2 oracle_project(const Camera& cam, const Vec3& world) {
  const Vec3 pc = cam.R_wc * world + cam.t_wc;
  return {cam.K(0, 0) * pc.x() / pc.z() + cam.K(0, 2), cam.K(1, 1) * pc.y() / pc.z() + cam.K(1, 2)};
}

struct OracleHit {
  double u, v, z;
};

// Solves center + u * s_u t_u + v * s_v t_v = origin + lambda * dir directly.
std::optional<OracleHit> oracle_intersect(const Splat& s, const Camera& cam, double x, double y) {
  const Mat3 R = oracle_rotation(s.rotation);
  const Vec3 tu = std::exp(s.log_scale(0)) * R.col(0), tv = std::exp(s.log_scale(1)) * R.col(1);
  const Vec3 dir = cam.R_wc.transpose() * Vec3((x - cam.K(0, 2)) / cam.K(0, 0), (y - cam.K(1, 2)) / cam.K(1, 1), 1.0);
  Mat3 A;
  A.col(0) = tu;
  A.col(1) = tv;
  A.col(2) = -dir;
  const Eigen::FullPivLU<Mat3> lu(A);
  if (!lu.isInvertible()) return std::nullopt;
  const Vec3 sol = lu.solve(cam.center() - s.center);
  return OracleHit{sol(0), sol(1), sol(2)};  // dir has unit camera z, so lambda is the depth
}

// Front-to-back compositing without tiles, bounding boxes or early exit.
RenderOutput naive_render(const std::vector<Splat>& splats, const Camera& cam, const RasterConfig& cfg) {
  struct Prim {
    const Splat* s;
    double depth, opacity;
    Vec2 screen;
    Vec3 normal, color;
  };
  std::vector<Prim> prims;
  for (const Splat& s : splats) {
    const Vec3 pc = cam.R_wc * s.center + cam.t_wc;
    if (!(pc.z() > cfg.near && pc.z() < cfg.far)) continue;
    const double opacity = 1.0 / (1.0 + std::exp(-s.raw_opacity));
    if (cfg.alpha_cutoff > 0 && opacity <= cfg.alpha_cutoff) continue;
    Vec3 n = cam.R_wc * oracle_rotation(s.rotation).col(2);
    if (n.dot(pc) > 0) n = -n;
    const Vec3 color = s.raw_color.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    prims.push_back({&s, pc.z(), opacity, oracle_project(cam, s.center), n, color});
  }
  std::sort(prims.begin(), prims.end(), [](const Prim& a, const Prim& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.s->id < b.s->id;
  });
  RenderOutput out{Image3(cam.width, cam.height), Image1(cam.width, cam.height), Image3(cam.width, cam.height),
                   Image1(cam.width, cam.height)};
  const double sigma2 = cfg.lowpass_sigma * cfg.lowpass_sigma;
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) {
      const double x = px + 0.5, y = py + 0.5;
      double T = 1.0, depth = 0.0;
      Vec3 color = Vec3::Zero(), normal = Vec3::Zero();
      for (const Prim& p : prims) {
        const auto hit = oracle_intersect(*p.s, cam, x, y);
        const double rho3 = hit ? hit->u * hit->u + hit->v * hit->v : kInf;
        const double rho2 = (Vec2(x, y) - p.screen).squaredNorm() / sigma2;
        double G, z;
        if (rho3 <= rho2) {
          if (hit->z < cfg.near || hit->z > cfg.far) continue;
          G = std::exp(-0.5 * rho3);
          z = hit->z;
        } else {
          G = std::exp(-0.5 * rho2);
          z = p.depth;
        }
        const double a = p.opacity * G;
        if (a < cfg.alpha_cutoff) continue;
        color += T * a * p.color;
        depth += T * a * z;
        normal += T * a * p.normal;
        T *= 1.0 - a;
      }
      out.alpha.at(px, py) = 1.0 - T;
      out.color.pixel(px, py) = color.transpose().array();
      out.depth.at(px, py) = T < 1.0 ? depth / (1.0 - T) : 0.0;
      if (normal.norm() > 1e-12) out.normal.pixel(px, py) = normal.normalized().transpose().array();
    }
  return out;
}

// ---- equivalence checks ----------------------------------------------------

void check_scene(Collector& out, Rng& rng) {
  {
    std::vector<SfmPoint> pts(1000);
    for (auto& p : pts) {
      p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
      p.match_count = int(rng.uniform_int(0, 9));
    }
    const auto kept = filter_points(pts, 5);
    std::vector<Vec3> expected;
    for (const auto& p : pts)
      if (p.match_count >= 5) expected.push_back(p.position);
    double mismatches = std::abs(double(kept.size()) - double(expected.size()));
    for (std::size_t i = 0; i < std::min(kept.size(), expected.size()); ++i)
      if (kept[i].position != expected[i]) ++mismatches;
    out.count("scene.filter_points", "1000 points, epsilon 5", mismatches);
  }
  {
    std::vector<SfmPoint> pts(10000);
    std::set<std::tuple<long, long, long>> keys;
    for (auto& p : pts) {
      p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
      p.match_count = 10;
      keys.insert({long(std::floor(p.position.x() / 0.25)), long(std::floor(p.position.y() / 0.25)),
                   long(std::floor(p.position.z() / 0.25))});
    }
    SeedConfig cfg;
    cfg.delta = 0.25;
    cfg.k = 1;
    const Scene scene = voxelize_seeds(pts, cfg);
    out.count("scene.voxelize", "10k points, delta 0.25", std::abs(double(scene.seeds().size()) - double(keys.size())));
  }
  {
    std::vector<SfmPoint> pts(50);
    for (auto& p : pts) p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    SeedConfig cfg;
    cfg.delta = 0.2;
    cfg.k = 4;
    const Scene scene = voxelize_seeds(pts, cfg);
    double worst = 0.0;
    for (const Surfel& s : scene.surfels()) {
      Vec3 anchor = Vec3::Zero();
      for (const SeedPoint& seed : scene.seeds())
        if (seed.id == s.seed_id) anchor = seed.anchor;
      worst = std::max(worst, (scene.surfel_world_center(s.id) - (anchor + s.offset)).cwiseAbs().maxCoeff());
    }
    out.count("scene.world_center", "anchor + offset, 50 points", worst);
  }
}

void check_raster(Collector& out, Rng& rng) {
  {
    double worst = 0.0, ref = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Camera cam = random_camera(rng, 32, 24);
      const Splat s = random_splats(rng, cam, 1)[0];
      const SplatGeometry g = build_splat_geometry(s, cam);
      const Eigen::Vector4d m = g.M * Eigen::Vector4d(0, 0, 1, 1);
      const Vec2 p = oracle_project(cam, s.center);
      const double z = (cam.R_wc * s.center + cam.t_wc).z();
      worst = std::max({worst, std::abs(m(0) / m(3) - p.x()), std::abs(m(1) / m(3) - p.y()), std::abs(m(2) - z),
                        std::abs(m(3) - z)});
      ref = std::max({ref, std::abs(p.x()), std::abs(p.y()), z});
    }
    out.compare_all("raster.projection", "100 random splats and cameras", worst, ref, 0.0, 1e-9);
  }
  {
    Camera cam = Camera::from_intrinsics(100, 100, 50, 50, 100, 100);
    Splat s;
    s.center = Vec3(0.1, -0.05, 2.0);
    s.log_scale = Vec2(std::log(0.2), std::log(0.3));
    const SplatGeometry g = build_splat_geometry(s, cam);
    const Vec2 target = oracle_project(cam, s.center + Vec3(0.2, 0, 0));
    const auto hit = ray_splat_intersect(g, target.x(), target.y());
    out.expect("raster.intersection_offset", "ray one tangent unit along t_u: hit exists", hit.has_value());
    if (hit) {
      out.compare("raster.intersection_offset", "u", hit->u, 1.0, 1e-6, 0.0);
      out.compare("raster.intersection_offset", "v", hit->v, 0.0, 1e-6, 0.0);
    }
  }
  {
    double worst = 0.0, ref = 0.0, presence = 0.0;
    RasterConfig cfg;
    for (int t = 0; t < 1000; ++t) {
      const Camera cam = random_camera(rng, 32, 24);
      const Splat s = random_splats(rng, cam, 1)[0];
      const SplatGeometry g = build_splat_geometry(s, cam, cfg);
      const Vec2 c = oracle_project(cam, s.center);
      const double x = c.x() + rng.uniform(-3, 3), y = c.y() + rng.uniform(-3, 3);
      const auto hit = ray_splat_intersect(g, x, y, cfg);
      auto oracle = oracle_intersect(s, cam, x, y);
      if (oracle && (oracle->z < cfg.near || oracle->z > cfg.far)) oracle.reset();
      if (hit.has_value() != oracle.has_value()) {
        ++presence;
        continue;
      }
      if (!hit) continue;
      worst = std::max({worst, std::abs(hit->u - oracle->u), std::abs(hit->v - oracle->v), std::abs(hit->z - oracle->z)});
      ref = std::max({ref, std::abs(oracle->u), std::abs(oracle->v), std::abs(oracle->z)});
    }
    out.count("raster.intersection", "1000 random splats/pixels: hit presence", presence);
    out.compare_all("raster.intersection", "1000 random splats/pixels: (u, v, z)", worst, ref, 0.0, 1e-8);
  }
  {
    // Tangent plane contains the viewing axis; the pixel sits 0.3 px off the
    // projected center.
    const Camera cam = Camera::from_intrinsics(64, 64, 32, 32, 64, 64);
    Mat3 R;
    R.col(0) = Vec3::UnitX();
    R.col(1) = Vec3::UnitZ();
    R.col(2) = -Vec3::UnitY();
    Splat s;
    s.center = Vec3(0, 0, 2);
    s.rotation = matrix_to_quaternion(R);
    s.log_scale = Vec2(std::log(1e-3), std::log(1e-3));
    RasterConfig cfg;
    const SplatGeometry g = build_splat_geometry(s, cam, cfg);
    const double x = 32.0, y = 32.3;
    const auto sample = evaluate_splat(g, x, y, cfg);
    const auto hit = oracle_intersect(s, cam, x, y);
    const double object = hit ? std::exp(-0.5 * (hit->u * hit->u + hit->v * hit->v)) : 0.0;
    const double lowpass = std::exp(-0.5 * 0.09 / (cfg.lowpass_sigma * cfg.lowpass_sigma));
    out.expect("raster.lowpass_needle", "sample exists", sample.has_value());
    if (sample) {
      out.expect("raster.lowpass_needle", "weight >= exp(-1/2)", sample->G >= std::exp(-0.5) * (1.0 - 1e-12));
      out.compare("raster.lowpass_needle", "weight equals max of both branches", sample->G, std::max(object, lowpass),
                  1e-12, 0.0);
      out.compare("raster.lowpass_needle", "gaussian_weight agrees", gaussian_weight(0.0, 1e6, 0.09, 0.3),
                  lowpass, 1e-12, 0.0);
    }
  }
  for (int t = 0; t < 3; ++t) {
    const Camera cam = random_camera(rng, 8, 8);
    const auto splats = random_splats(rng, cam, 20);
    RasterConfig cfg;
    cfg.tile_size = 3;
    cfg.transmittance_floor = 0.0;
    const RenderOutput fast = render(splats, cam, cfg);
    const RenderOutput slow = naive_render(splats, cam, cfg);
    const double worst = std::max({(fast.color.data - slow.color.data).abs().maxCoeff(),
                                   (fast.depth.data - slow.depth.data).abs().maxCoeff(),
                                   (fast.normal.data - slow.normal.data).abs().maxCoeff(),
                                   (fast.alpha.data - slow.alpha.data).abs().maxCoeff()});
    out.add("raster.compositor", "20 splats, 8x8, instance " + std::to_string(t), worst, worst, 1e-6, 0.0);
  }
}

void check_densify(Collector& out, Rng& rng) {
  {
    // Accumulators against running sums kept here.
    std::vector<SfmPoint> pts(30);
    for (auto& p : pts) p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    SeedConfig sc;
    sc.delta = 0.3;
    sc.k = 3;
    Scene scene = voxelize_seeds(pts, sc);
    std::map<SeedId, std::pair<double, double>> expected;
    for (int it = 0; it < 100; ++it) {
      ParamGrads g = ParamGrads::zeros(scene.surfels().size());
      for (Eigen::Index i = 0; i < g.screen_grad.size(); ++i) g.screen_grad(i) = rng.uniform();
      for (Surfel& s : scene.surfels()) s.raw_opacity = rng.normal();
      for (const SeedPoint& seed : scene.seeds()) {
        double grad = 0.0, opacity = 0.0;
        int members = 0;
        for (std::size_t i = 0; i < scene.surfels().size(); ++i)
          if (scene.surfels()[i].seed_id == seed.id) {
            grad += g.screen_grad(Eigen::Index(i));
            opacity += 1.0 / (1.0 + std::exp(-scene.surfels()[i].raw_opacity));
            ++members;
          }
        expected[seed.id].first += grad / members;
        expected[seed.id].second += opacity;
      }
      accumulate_seed_stats(g, scene);
    }
    double worst = 0.0, ref = 0.0, counts = 0.0;
    for (const SeedPoint& seed : scene.seeds()) {
      worst = std::max({worst, std::abs(seed.grad_accum - expected[seed.id].first),
                        std::abs(seed.opacity_accum - expected[seed.id].second)});
      ref = std::max({ref, expected[seed.id].first, expected[seed.id].second});
      if (seed.grad_count != 100 || seed.opacity_count != 100) ++counts;
    }
    out.compare_all("densify.accumulation", "100 iterations: sums", worst, ref, 0.0, 1e-12);
    out.count("densify.accumulation", "100 iterations: counts", counts);
  }
  for (int t = 0; t < 3; ++t) {
    std::vector<SfmPoint> pts(150);
    for (auto& p : pts) p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    SeedConfig sc;
    sc.delta = 0.2;
    sc.k = 4;
    Scene scene = voxelize_seeds(pts, sc);
    Rng init_rng(rng.next());
    for (int extra = 0; extra < 10; ++extra) {
      const Vec3 a(rng.uniform(), rng.uniform(), rng.uniform());
      SurfelInit init;
      init.voxel_size = 0.1;
      const Vec3i key = voxel_key(a, 0.1);
      scene.add_seed(voxel_center(key, 0.1), key, 1, init, init_rng);
    }
    DensifyConfig cfg;
    for (SeedPoint& s : scene.seeds()) {
      s.grad_count = int(rng.uniform_int(1, 3)) * 50;
      s.grad_accum = rng.uniform(0.0, 5.0) * cfg.theta_g * s.grad_count;
    }
    for (Surfel& s : scene.surfels())
      s.offset = Vec3(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15));

    // Rule replay.
    std::set<std::tuple<int, long, long, long>> occupied, expected;
    for (const SeedPoint& s : scene.seeds()) occupied.insert({s.level, s.key.x(), s.key.y(), s.key.z()});
    for (const SeedPoint& s : scene.seeds()) {
      if (s.grad_count < cfg.grow_window) continue;
      if (!(s.grad_accum / s.grad_count > cfg.theta_g * std::pow(2.0, s.level))) continue;
      if (s.level + 1 > cfg.max_level) continue;
      const double size = sc.delta / std::pow(2.0, s.level + 1);
      for (const Surfel& f : scene.surfels()) {
        if (f.seed_id != s.id) continue;
        const Vec3 c = s.anchor + f.offset;
        const std::tuple<int, long, long, long> key{s.level + 1, long(std::floor(c.x() / size)),
                                                    long(std::floor(c.y() / size)), long(std::floor(c.z() / size))};
        if (!occupied.count(key)) expected.insert(key);
      }
    }
    const std::size_t before = scene.seeds().size();
    Rng grow_rng(7);
    const std::size_t grown = grow_seeds(scene, cfg, cfg.start_iter, grow_rng);
    std::set<std::tuple<int, long, long, long>> actual;
    double anchor_err = 0.0;
    for (std::size_t i = before; i < scene.seeds().size(); ++i) {
      const SeedPoint& s = scene.seeds()[i];
      actual.insert({s.level, s.key.x(), s.key.y(), s.key.z()});
      const double size = sc.delta / std::pow(2.0, s.level);
      anchor_err = std::max(anchor_err, (s.anchor - (s.key.cast<double>().array() + 0.5).matrix() * size).norm());
    }
    std::vector<std::tuple<int, long, long, long>> diff;
    std::set_symmetric_difference(actual.begin(), actual.end(), expected.begin(), expected.end(),
                                  std::back_inserter(diff));
    const std::string inst = "instance " + std::to_string(t);
    out.count("densify.grow", inst + ": new seed set", double(diff.size()) + std::abs(double(grown) - double(expected.size())));
    out.add("densify.grow", inst + ": anchors at voxel centers", anchor_err, anchor_err, 1e-12, 0.0);
  }
  for (int t = 0; t < 3; ++t) {
    std::vector<SfmPoint> pts(200);
    for (auto& p : pts) p.position = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    SeedConfig sc;
    sc.delta = 0.2;
    sc.k = 3;
    Scene scene = voxelize_seeds(pts, sc);
    DensifyConfig cfg;
    for (SeedPoint& s : scene.seeds()) {
      s.opacity_count = int(rng.uniform_int(0, 2)) * 50 + 20;
      s.opacity_accum = rng.uniform() * s.opacity_count * sc.k;
    }
    std::set<SeedId> survivors;
    for (const SeedPoint& s : scene.seeds())
      if (!(s.opacity_count >= cfg.prune_window &&
            s.opacity_accum / (double(cfg.prune_window) * sc.k) < cfg.theta_alpha))
        survivors.insert(s.id);
    const std::size_t total = scene.seeds().size();
    const PruneResult res = prune_seeds(scene, cfg, cfg.start_iter);
    std::set<SeedId> actual;
    for (const SeedPoint& s : scene.seeds()) actual.insert(s.id);
    std::vector<SeedId> diff;
    std::set_symmetric_difference(actual.begin(), actual.end(), survivors.begin(), survivors.end(),
                                  std::back_inserter(diff));
    out.count("densify.prune", "instance " + std::to_string(t) + ": surviving seeds",
              double(diff.size()) + std::abs(double(res.pruned) - double(total - survivors.size())));
  }
}

// SSIM by direct 2D windowing with zero padding.
double oracle_ssim(const Image3& a, const Image3& b) {
  const int r = 5;
  double w2[11][11];
  double sum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) sum += w2[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2.0 * 1.5 * 1.5));
  for (auto& row : w2)
    for (double& v : row) v /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height) continue;
            const double w = w2[dy + r][dx + r], p = a.at(xx, yy, c), q = b.at(xx, yy, c);
            mx += w * p;
            my += w * q;
            exx += w * p * p;
            eyy += w * q * q;
            exy += w * p * q;
          }
        const double vx = exx - mx * mx, vy = eyy - my * my, cxy = exy - mx * my;
        total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
  return total / (3.0 * a.width * a.height);
}

void check_losses(Collector& out, Rng& rng) {
  {
    Image3 a(16, 16), b(16, 16);
    for (Eigen::Index i = 0; i < a.data.size(); ++i) {
      a.data.data()[i] = rng.uniform();
      b.data.data()[i] = std::clamp(a.data.data()[i] + 0.2 * rng.normal(), 0.0, 1.0);
    }
    out.compare("losses.ssim", "random 16x16 pair", ssim(a, b), oracle_ssim(a, b), 1e-6, 0.0);
  }
  for (int t = 0; t < 3; ++t) {
    const int w = 10, h = 10;
    Image1 x(w, h), y(w, h);
    Mask valid(w, h);
    for (int i = 0; i < w * h; ++i) {
      x.data(i) = rng.uniform(1.0, 3.0);
      y.data(i) = 0.7 * x.data(i) + 0.3 + 0.1 * rng.normal();
      valid.set(std::size_t(i), rng.uniform() < 0.8);
    }
    // Dense grid search, then one Gauss-Newton step solved by QR.
    auto cost = [&](double s, double o) {
      double c = 0;
      for (int i = 0; i < w * h; ++i)
        if (valid[std::size_t(i)]) c += std::pow(s * x.data(i) + o - y.data(i), 2);
      return c;
    };
    double bs = 0, bt = 0, best = kInf;
    for (int i = -60; i <= 60; ++i)
      for (int j = -60; j <= 60; ++j)
        if (const double c = cost(i * 0.05, j * 0.05); c < best) {
          best = c;
          bs = i * 0.05;
          bt = j * 0.05;
        }
    const std::size_t n = valid.count();
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd r(n);
    for (int i = 0, row = 0; i < w * h; ++i) {
      if (!valid[std::size_t(i)]) continue;
      A(row, 0) = x.data(i);
      A(row, 1) = 1.0;
      r(row) = y.data(i) - (bs * x.data(i) + bt);
      ++row;
    }
    const Eigen::Vector2d step = A.colPivHouseholderQr().solve(r);
    const DepthAlignment al = align_depth(x, y, valid);
    const std::string inst = "100 pixels, instance " + std::to_string(t);
    out.compare("losses.alignment", inst + ": s", al.s, bs + step(0), 1e-6, 0.0);
    out.compare("losses.alignment", inst + ": t", al.t, bt + step(1), 1e-6, 0.0);
  }
  for (int orth = 0; orth < 2; ++orth) {
    const int w = 12, h = 9, n = w * h;
    Image1 rendered(w, h), prior(w, h);
    Mask valid(w, h, true);
    for (int i = 0; i < n; ++i) {
      rendered.data(i) = rng.uniform(1.0, 3.0);
      prior.data(i) = rng.uniform(1.0, 3.0);
    }
    if (orth) {
      const Eigen::ArrayXd xc = rendered.data - rendered.data.mean();
      const Eigen::ArrayXd yc = prior.data - prior.data.mean();
      prior.data -= ((xc * yc).sum() / xc.square().sum()) * xc;
    }
    const Eigen::ArrayXd xc = rendered.data - rendered.data.mean();
    const Eigen::ArrayXd yc = prior.data - prior.data.mean();
    const double expected = (yc.square().sum() - std::pow((xc * yc).sum(), 2) / xc.square().sum()) / n;
    DepthLossInfo info;
    depth_loss(rendered, prior, valid, 0.0, nullptr, &info);
    out.compare("losses.depth_residual", orth ? "prior orthogonal to render" : "random maps", info.data, expected, 1e-12,
                1e-9);
  }
  {
    const int w = 8, h = 8;
    const double a = 0.3, b = -0.7;
    Image1 res(w, h);
    Mask valid(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        res.at(x, y) = a * x + b * y;
        valid.set(std::size_t(y * w + x), rng.uniform() < 0.8);
      }
    // Each valid pair of grid neighbors differs by |a| h or |b| h on a ramp.
    double expected = 0.0;
    for (int step : {1, 2, 4, 8}) {
      double pairs_x = 0, pairs_y = 0, grid = 0;
      for (int y = 0; y < h; y += step)
        for (int x = 0; x < w; x += step) {
          if (!valid(x, y)) continue;
          ++grid;
          if (x + step < w && valid(x + step, y)) ++pairs_x;
          if (y + step < h && valid(x, y + step)) ++pairs_y;
        }
      if (grid > 0) expected += (pairs_x * std::abs(a) + pairs_y * std::abs(b)) * step / grid;
    }
    out.compare("losses.gradient_matching", "8x8 ramp with masked pixels", gradient_matching(res, valid), expected,
                1e-12, 1e-12);
  }
  {
    const int w = 9, h = 7;
    Image3 n(w, h), prior(w, h);
    Mask valid(w, h);
    for (int i = 0; i < w * h; ++i) {
      n.data.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose().array();
      prior.data.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose().array();
      valid.set(std::size_t(i), rng.uniform() < 0.9);
      if (rng.uniform() < 0.1) n.data.row(i).setZero();
    }
    double l1 = 0, lc = 0, count = 0;
    for (int i = 0; i < w * h; ++i) {
      const Vec3 a = n.data.row(i).matrix().transpose(), b = prior.data.row(i).matrix().transpose();
      if (!valid[std::size_t(i)] || a.norm() < 1e-6) continue;
      l1 += std::abs(a.x() - b.x()) + std::abs(a.y() - b.y()) + std::abs(a.z() - b.z());
      lc += 1.0 - a.dot(b) / (a.norm() * b.norm());
      ++count;
    }
    out.compare("losses.normal", "random unit fields", normal_loss(n, prior, valid, 0.4, 0.6),
                (0.4 * l1 + 0.6 * lc) / count, 1e-7, 0.0);
  }
  {
    const Mat3 K = Camera::from_intrinsics(100, 100, 50, 40, 100, 80).K;
    const double t = 0.2, d = 2.5;
    const Mat3 H = plane_homography<double>(K, K, Mat3::Identity(), Vec3(-t, 0, 0), Vec3(0, 0, -1), d, Vec2(50, 40));
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
      const Vec3 p(rng.uniform(0, 100), rng.uniform(0, 80), 1.0);
      const Vec3 q = H * p;
      worst = std::max({worst, std::abs(q.x() / q.z() - (p.x() - 100 * t / d)), std::abs(q.y() / q.z() - p.y())});
    }
    out.add("losses.homography_parallax", "pure x translation, fronto-parallel plane", worst, worst, 1e-9, 0.0);
  }
  {
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
      const Camera ref = random_camera(rng, 64, 48);
      Camera nb = random_camera(rng, 64, 48);
      nb.K(0, 0) = 70;
      const RelativePose rel = relative_pose(ref, nb);
      const Vec2 p(rng.uniform(0, 64), rng.uniform(0, 48));
      const double depth = rng.uniform(1.0, 4.0);
      const Vec3 n = Vec3(rng.normal(), rng.normal(), -3.0).normalized();
      const Vec3 X = depth * ref.ray(p.x(), p.y());  // plane point in reference coordinates
      const Mat3 H = plane_homography<double>(ref.K, nb.K, rel.R, rel.T, n, depth, p);
      // A second point on the same plane, reprojected explicitly.
      const Vec2 q(p.x() + rng.uniform(-5, 5), p.y() + rng.uniform(-5, 5));
      const Vec3 ray = ref.ray(q.x(), q.y());
      const Vec3 Y = ray * (n.dot(X) / n.dot(ray));
      const Vec3 Yn = rel.R * Y + rel.T;
      if (Yn.z() <= 0.1) continue;
      const Vec2 expected = nb.project_camera(Yn);
      const Vec3 h = H * Vec3(q.x(), q.y(), 1.0);
      worst = std::max(worst, (h.head<2>() / h.z() - expected).norm());
    }
    out.add("losses.homography_reprojection", "100 random poses and planes (pixels)", worst, worst, 1e-6, 0.0);
  }
  {
    PlanePair p = plane_pair(rng, 0.0, 32);
    const MvConfig cfg;
    const LossWeights weights;
    const MvResult res = mv_consistency_loss({p.i0, p.c0, p.r0}, {p.i1, p.c1, p.r1}, cfg, weights, false);
    out.expect("losses.mv_plane", "samples used", res.n_geo > 0 && res.n_pho > 0);
    out.add("losses.mv_plane", "geometric term", res.geo, res.geo, 1e-6, 0.0);
    out.add("losses.mv_plane", "photometric term", res.pho, res.pho, 1e-4, 0.0);
    const RelativePose rel = relative_pose(p.c0, p.c1);
    double worst = 0;
    for (int y = 4; y < 28; y += 4)
      for (int x = 4; x < 28; x += 4) {
        const Vec2 px(x + 0.5, y + 0.5);
        const double d = p.r0.depth.at(x, y);
        const Vec3 n = p.r0.normal.pixel(x, y).matrix().transpose();
        const Mat3 H = plane_homography<double>(p.c0.K, p.c1.K, rel.R, rel.T, n, d, px);
        Vec3 P;
        plane_hit(p.c0, px.x(), px.y(), &P);
        const Vec2 expected = oracle_project(p.c1, P);
        const Vec3 h = H * Vec3(px.x(), px.y(), 1.0);
        worst = std::max(worst, (h.head<2>() / h.z() - expected).norm());
      }
    out.add("losses.mv_plane", "homography against 3D reprojection (pixels)", worst, worst, 1e-6, 0.0);
  }
  {
    double bounds = 0, identity = 0, negation = 0, affine = 0, constant = 0;
    for (int t = 0; t < 200; ++t) {
      Eigen::ArrayXd a(49), b(49);
      for (int i = 0; i < 49; ++i) {
        a(i) = rng.uniform();
        b(i) = rng.uniform();
      }
      const auto v = ncc(a, b);
      if (!v || *v < -1.0 || *v > 1.0) ++bounds;
      if (ncc(a, a) != std::optional<double>(1.0)) ++identity;
      if (ncc(a, -a) != std::optional<double>(-1.0)) ++negation;
      if (const auto s = ncc(a, 2.0 * a + 3.0)) affine = std::max(affine, std::abs(*s - 1.0));
      else affine = kInf;
      if (ncc(a, Eigen::ArrayXd::Constant(49, 0.5))) ++constant;
    }
    out.count("losses.ncc", "200 random patches: within [-1, 1]", bounds);
    out.count("losses.ncc", "identity is exactly 1", identity);
    out.count("losses.ncc", "negation is exactly -1", negation);
    out.add("losses.ncc", "affine invariance", affine, affine, 1e-12, 0.0);
    out.count("losses.ncc", "constant patch is undefined", constant);
  }
  {
    double worst = 0, ref = 0;
    for (int t = 0; t < 100; ++t) {
      LossWeights w;
      w.lambda_rgb = rng.uniform();
      w.lambda_d = rng.uniform();
      w.lambda_n = rng.uniform();
      const LossTerms terms{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
      const Eigen::Vector4d lam(w.lambda_rgb, w.lambda_d, w.lambda_n, 1.0);
      const Eigen::Vector4d val(terms.rgb, terms.depth, terms.normal, terms.mv);
      const double expected = lam.dot(val);
      worst = std::max(worst, std::abs(total_loss(terms, w) - expected));
      ref = std::max(ref, std::abs(expected));
    }
    out.compare_all("losses.total", "100 random weights and terms", worst, ref, 0.0, 1e-12);
  }
}

void check_trainer(Collector& out, Rng& rng) {
  const int w = 8, h = 8;
  const Camera cam = Camera::from_intrinsics(8, 8, 4, 4, w, h);
  // Target rendered from one random 5-splat configuration, fit from another.
  auto make = [&](std::uint64_t seed) {
    SeedConfig sc;
    sc.k = 5;
    sc.rng_seed = seed;
    Scene scene(sc);
    Rng r(seed);
    SurfelInit init;
    init.voxel_size = 0.4;
    init.opacity = 0.6;
    scene.add_seed(Vec3(0, 0, 2), Vec3i::Zero(), 0, init, r);
    for (Surfel& s : scene.surfels()) {
      s.offset = Vec3(r.uniform(-0.4, 0.4), r.uniform(-0.4, 0.4), r.uniform(-0.2, 0.2));
      s.rotation = Vec4(1, 0.3 * r.normal(), 0.3 * r.normal(), 0.3 * r.normal()).normalized();
      s.log_scale = Vec2::Constant(std::log(0.25));
      s.raw_color = Vec3(2 * r.normal(), 2 * r.normal(), 2 * r.normal());
    }
    scene.cameras().push_back(cam);
    return scene;
  };
  const std::uint64_t a = rng.next(), b = rng.next();
  const Scene truth = make(a);
  Scene scene = make(b);
  Dataset ds;
  Frame f;
  f.name = "target";
  f.camera = cam;
  f.image = render(truth.splats(), cam).color;
  ds.frames.push_back(f);
  PipelineConfig cfg;
  cfg.densify.enabled = false;
  cfg.train.total_iters = 200;
  cfg.train.lr_color = 0.05;
  cfg.train.lr_offset = 0.01;
  cfg.train.lr_offset_final = 0.001;
  TrainState state = make_train_state(scene, cfg.train);
  const FitResult res = fit(scene, state, ds, cfg, {});
  const double first = res.reports.front().total, last = res.reports.back().total;
  out.add("trainer.smoke", describe({{"initial", first}, {"final", last}}) + " (final / initial)", last / first,
          last / first, 0.5, 0.0);
}

void check_meshing(Collector& out, Rng& rng) {
  (void)rng;
  {
    // Plane z = 2 seen by a frontal and an oblique camera.
    const int size = 64;
    const Camera c0 = Camera::look_at(Vec3(0, 0, 0), Vec3(0, 0, 2), Vec3(0, -1, 0), 60, 60, 32, 32, size, size);
    const Camera c1 = Camera::look_at(Vec3(0.5, 0.2, 0.3), Vec3(0, 0, 2), Vec3(0, -1, 0), 60, 60, 32, 32, size, size);
    TsdfConfig cfg;
    cfg.voxel_size = 0.02;
    cfg.truncation = 0.08;
    cfg.padding = 0.0;
    TsdfVolume vol = make_volume(Vec3(-0.4, -0.4, 1.7), Vec3(0.4, 0.4, 2.3), cfg);
    for (const Camera* c : {&c0, &c1}) {
      Image1 depth(size, size), alpha(size, size);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const Vec3 dir = c->R_wc.transpose() * c->ray(x + 0.5, y + 0.5);
          const double s = (2.0 - c->center().z()) / dir.z();
          depth.at(x, y) = s;
          alpha.at(x, y) = 1.0;
        }
      integrate_depth(vol, depth, nullptr, alpha, *c, cfg);
    }
    const TriangleMesh mesh = extract_mesh(vol);
    double worst = 0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, std::abs(v.z() - 2.0));
    out.expect("meshing.tsdf_plane", "surface extracted", !mesh.triangles.empty());
    out.add("meshing.tsdf_plane", "two views: vertex distance to plane", worst, worst / cfg.voxel_size,
            cfg.voxel_size / 2, 0.0);
  }
  {
    TsdfConfig cfg;
    cfg.voxel_size = 0.05;
    cfg.truncation = 0.2;
    cfg.padding = 0.0;
    const double radius = 0.63;
    TsdfVolume vol = make_volume(Vec3::Constant(-1.0), Vec3::Constant(1.0), cfg);
    vol.fill([&](const Vec3& p) { return p.norm() - radius; });
    const TriangleMesh mesh = extract_mesh(vol);
    double worst = 0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - radius));
    std::set<std::pair<int, int>> edges;
    for (const auto& t : mesh.triangles)
      for (int e = 0; e < 3; ++e) {
        const int a = t[e], b = t[(e + 1) % 3];
        edges.insert({std::min(a, b), std::max(a, b)});
      }
    const double euler = double(mesh.vertices.size()) - double(edges.size()) + double(mesh.triangles.size());
    out.add("meshing.sphere", "vertex radius error", worst, worst / radius, cfg.voxel_size, 0.0);
    out.count("meshing.sphere", "Euler characteristic - 2", std::abs(euler - 2.0));
  }
  {
    TsdfConfig cfg;
    cfg.voxel_size = 0.05;
    cfg.truncation = 0.2;
    cfg.padding = 0.0;
    TsdfVolume vol = make_volume(Vec3::Constant(-0.5), Vec3::Constant(0.5), cfg);
    vol.fill([](const Vec3& p) { return p.z() - 0.0123; });
    const TriangleMesh mesh = extract_mesh(vol);
    double worst = mesh.vertices.empty() ? kInf : 0.0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, std::abs(v.z() - 0.0123));
    out.add("meshing.plane_sdf", "vertex distance to plane", worst, worst / cfg.voxel_size, 1e-6 * cfg.voxel_size, 0.0);
  }
  {
    SeedConfig sc;
    sc.k = 1;
    Scene scene(sc);
    Rng r(1);
    SurfelInit init;
    init.voxel_size = 1.2;  // scale 0.3
    init.opacity = 0.99;
    scene.add_seed(Vec3(0, 0, 2), Vec3i::Zero(), 0, init, r);
    scene.surfels()[0].offset.setZero();
    const Camera cam = Camera::from_intrinsics(40, 40, 32, 32, 64, 64);
    TsdfConfig cfg;
    cfg.voxel_size = 0.01;
    cfg.truncation = 0.04;
    cfg.padding = 0.15;
    const TriangleMesh mesh = reconstruct_mesh(scene, {cam}, cfg);
    double worst = mesh.vertices.empty() ? kInf : 0.0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, std::abs(v.z() - 2.0));
    out.expect("meshing.single_splat", "patch extracted", mesh.triangles.size() > 10);
    out.add("meshing.single_splat", "vertex distance to splat plane", worst, worst / cfg.voxel_size,
            cfg.voxel_size, 0.0);
  }
}

void check_eval(Collector& out, Rng& rng) {
  {
    TriangleMesh square;
    square.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
    square.triangles = {Eigen::Vector3i(0, 1, 2), Eigen::Vector3i(0, 2, 3)};
    const int n = 10000;
    const auto pts = sample_mesh(square, n, rng.next());
    double outside = 0, lower = 0;
    for (const Vec3& p : pts) {
      if (p.x() < 0 || p.x() > 1 || p.y() < 0 || p.y() > 1 || p.z() != 0) ++outside;
      if (p.x() >= p.y()) ++lower;  // triangle (0, 1, 2)
    }
    const double sigma = std::sqrt(n * 0.5 * 0.5);
    out.count("eval.sampling", "unit square: points outside", outside);
    out.add("eval.sampling", "unit square: triangle count deviation (sigmas)", std::abs(lower - 0.5 * n) / sigma,
            std::abs(lower - 0.5 * n) / sigma, 3.0, 0.0);
  }
  for (int t = 0; t < 3; ++t) {
    std::vector<Vec3> a(200), b(200);
    for (auto& p : a) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    for (auto& p : b) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform()) * 1.1;
    EvalConfig cfg;
    cfg.threshold = 0.08;
    const Metrics m = compute_metrics(a, b, cfg);
    auto side = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
      double sum = 0, within = 0;
      for (const Vec3& p : from) {
        double best = kInf;
        for (const Vec3& q : to) best = std::min(best, (p - q).norm());
        sum += best;
        if (best < cfg.threshold) ++within;
      }
      return std::make_pair(sum / double(from.size()), within / double(from.size()));
    };
    const auto [acc, prec] = side(a, b);
    const auto [comp, rec] = side(b, a);
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const double worst = std::max({std::abs(m.accuracy - acc), std::abs(m.completion - comp),
                                   std::abs(m.precision - prec), std::abs(m.recall - rec), std::abs(m.fscore - f)});
    out.add("eval.metrics", "200 random points each, instance " + std::to_string(t), worst, worst, 1e-9, 0.0);
  }
}

void check_io(Collector& out, Rng& rng) {
  SyntheticRoomSpec spec;
  spec.n_views = 3;
  spec.width = 32;
  spec.height = 24;
  spec.n_points = 200;
  spec.seed = rng.next() % 1000;
  spec.depth_noise = 0.01;
  spec.normal_noise_deg = 2.0;
  const SyntheticRoom room = generate_synthetic_room(spec);
  {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("splatroom_roundtrip_" + std::to_string(rng.next() % 1000000007ULL));
    save_dataset(dir.string(), room.dataset);
    const Dataset back = load_dataset((dir / "manifest.json").string());
    std::filesystem::remove_all(dir);
    double mismatches = std::abs(double(back.frames.size()) - double(room.dataset.frames.size())) +
                        std::abs(double(back.points.size()) - double(room.dataset.points.size()));
    for (std::size_t i = 0; i < std::min(back.frames.size(), room.dataset.frames.size()); ++i) {
      const Frame &a = room.dataset.frames[i], &b = back.frames[i];
      if (!(a.image.data == b.image.data).all()) ++mismatches;
      if (!(a.depth_prior->data == b.depth_prior->data).all()) ++mismatches;
      if (!(a.normal_prior->data == b.normal_prior->data).all()) ++mismatches;
      if (a.camera.K != b.camera.K || a.camera.R_wc != b.camera.R_wc || a.camera.t_wc != b.camera.t_wc) ++mismatches;
    }
    for (std::size_t i = 0; i < std::min(back.points.size(), room.dataset.points.size()); ++i) {
      const SfmPoint &a = room.dataset.points[i], &b = back.points[i];
      if (a.position != b.position || a.match_count != b.match_count || a.color != b.color) ++mismatches;
    }
    out.count("io.roundtrip", "3-view synthetic dataset: buffers differing", mismatches);
  }
  {
    SyntheticRoomSpec clean = spec;
    clean.depth_noise = 0.0;
    clean.normal_noise_deg = 0.0;
    const SyntheticRoom r = generate_synthetic_room(clean);
    double mismatches = 0;
    for (const Frame& f : r.dataset.frames) {
      const Vec3 o = f.camera.center();
      for (int y = 0; y < f.camera.height; ++y)
        for (int x = 0; x < f.camera.width; ++x) {
          const Vec3 d = f.camera.R_wc.transpose() * f.camera.ray(x + 0.5, y + 0.5);
          // Nearest wall plane in front of the ray whose hit lies on the box.
          double best = kInf;
          int face = -1;
          for (int fi = 0; fi < 6; ++fi) {
            const int axis = fi / 2;
            const double wall = fi % 2 ? clean.extents[axis] : 0.0;
            if (d[axis] == 0) continue;
            const double t = (wall - o[axis]) / d[axis];
            if (t <= 0) continue;
            const Vec3 p = o + t * d;
            bool inside = true;
            for (int k = 0; k < 3; ++k)
              if (k != axis && (p[k] < -1e-9 || p[k] > clean.extents[k] + 1e-9)) inside = false;
            if (inside && t < best) {
              best = t;
              face = fi;
            }
          }
          if (face < 0) {
            ++mismatches;
            continue;
          }
          Vec3 p = o + best * d;
          p[face / 2] = face % 2 ? clean.extents[face / 2] : 0.0;
          const Vec3 c = room_texture(clean, face, p);
          for (int k = 0; k < 3; ++k)
            if (f.image.at(x, y, k) != std::round(std::clamp(c[k], 0.0, 1.0) * 255.0) / 255.0) {
              ++mismatches;
              break;
            }
          Vec3 n = Vec3::Zero();
          n[face / 2] = face % 2 ? -1.0 : 1.0;
          const Vec3 nc = f.camera.R_wc * n;
          if (f.depth_prior->at(x, y) != double(float(best))) ++mismatches;
          for (int k = 0; k < 3; ++k)
            if (f.normal_prior->at(x, y, k) != double(float(nc[k]))) {
              ++mismatches;
              break;
            }
        }
    }
    out.count("io.synthetic_shading", "3 views 32x24: pixels differing from direct ray-plane shading", mismatches);
  }
}

}  // namespace

std::vector<OracleReport> run_gradient_suite(std::uint64_t seed, double tolerance_scale) {
  Collector out(tolerance_scale);
  Rng rng(seed);
  for (int s = 0; s < 5; ++s) raster_probes(out, rng, s);
  loss_map_probes(out, rng);
  chain_probes(out, rng);
  return out.take();
}

std::vector<OracleReport> run_equivalence_suite(std::uint64_t seed, double tolerance_scale) {
  Collector out(tolerance_scale);
  Rng rng(seed);
  check_scene(out, rng);
  check_raster(out, rng);
  check_densify(out, rng);
  check_losses(out, rng);
  check_trainer(out, rng);
  check_meshing(out, rng);
  check_eval(out, rng);
  check_io(out, rng);
  return out.take();
}

const std::vector<CoverageEntry>& coverage_table() {
  static const std::vector<CoverageEntry> table = {
      {"point filter against a linear scan", "scene.filter_points"},
      {"seed count against distinct voxel keys", "scene.voxelize"},
      {"surfel world center against anchor + offset", "scene.world_center"},
      {"splat center projection against pinhole projection", "raster.projection"},
      {"ray one tangent unit along t_u gives u = 1, v = 0", "raster.intersection_offset"},
      {"ray-splat intersection against a 3x3 linear solve", "raster.intersection"},
      {"edge-on needle splat held up by the low-pass floor", "raster.lowpass_needle"},
      {"tiled compositor against a naive compositor", "raster.compositor"},
      {"surfel parameter gradients against finite differences", "gradients.raster"},
      {"seed statistics against running sums", "densify.accumulation"},
      {"growth against rule replay", "densify.grow"},
      {"pruning against rule replay", "densify.prune"},
      {"SSIM against direct windowing", "losses.ssim"},
      {"scale/shift alignment against grid search plus least squares", "losses.alignment"},
      {"aligned residual against its closed form", "losses.depth_residual"},
      {"gradient matching on a ramp", "losses.gradient_matching"},
      {"normal loss against a per-pixel loop", "losses.normal"},
      {"plane homography parallax for a pure translation", "losses.homography_parallax"},
      {"plane homography against 3D reprojection", "losses.homography_reprojection"},
      {"two-view plane scene with exact geometry", "losses.mv_plane"},
      {"total loss against a dot product", "losses.total"},
      {"loss gradients against finite differences", "gradients.loss.*, gradients.chain"},
      {"200-step fit of a 5-splat target", "trainer.smoke"},
      {"3000-iteration synthetic room: photometric loss and held-out depth", "acceptance: heldout"},
      {"TSDF fusion of an analytic plane", "meshing.tsdf_plane"},
      {"marching cubes on a sphere SDF", "meshing.sphere"},
      {"marching cubes on a plane SDF", "meshing.plane_sdf"},
      {"mesh of one opaque splat", "meshing.single_splat"},
      {"synthetic room mesh F-score", "acceptance: criterion 6"},
      {"area-weighted surface sampling", "eval.sampling"},
      {"metrics against an O(n^2) scan", "eval.metrics"},
      {"dataset save/load round trip", "io.roundtrip"},
      {"synthetic renderer against ray-plane shading", "io.synthetic_shading"},
      {"command-line pipeline smoke run", "acceptance: criterion 6"},
      {"gradient suite at default tolerances", "gradients.* (verify, acceptance: criterion 3)"},
      {"equivalence suite at default tolerances", "verify, acceptance: criterion 4"},
  };
  return table;
}

std::vector<SuiteSummary> summarize(const std::vector<OracleReport>& reports) {
  std::vector<SuiteSummary> out;
  std::map<std::string, std::size_t> index;
  for (const OracleReport& r : reports) {
    auto [it, inserted] = index.try_emplace(r.name, out.size());
    if (inserted) out.push_back({r.name});
    SuiteSummary& s = out[it->second];
    ++s.checks;
    if (!r.passed) ++s.failures;
    s.worst_abs = std::max(s.worst_abs, r.max_abs);
    s.worst_rel = std::max(s.worst_rel, r.max_rel);
  }
  return out;
}

std::string reports_json(const std::vector<OracleReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  };
  for (const OracleReport& r : reports) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["instance"] = r.instance;
    j["max_abs"] = num(r.max_abs);
    j["max_rel"] = num(r.max_rel);
    j["tol_abs"] = num(r.tol_abs);
    j["tol_rel"] = num(r.tol_rel);
    j["passed"] = r.passed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace splatroom
