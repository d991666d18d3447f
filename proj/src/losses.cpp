#include "splatroom/losses.hpp"

#include "splatroom/parallel.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace splatroom {

void LossWeights::validate() const {
  const double all[] = {lambda_rgb, lambda_d,   lambda_n,   lambda_1,    lambda_cos,
                        lambda_grad, lambda_geo, lambda_pho, rgb_ssim_mix};
  for (double w : all)
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
  if (rgb_ssim_mix > 1.0) throw std::invalid_argument("rgb_ssim_mix must lie in [0, 1]");
}

void MvConfig::validate() const {
  if (patch_radius < 1) throw std::invalid_argument("mv config: patch_radius must be >= 1");
  if (sample_stride < 1) throw std::invalid_argument("mv config: sample_stride must be >= 1");
  if (!(tau_geo > 0)) throw std::invalid_argument("mv config: tau_geo must be positive");
}

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable Gaussian filter with zero padding; symmetric, so it is its own adjoint.
Eigen::ArrayXd blur(const Eigen::ArrayXd& img, int w, int h) {
  static const auto taps = gaussian_taps();
  constexpr int r = kWindow / 2;
  Eigen::ArrayXd tmp = Eigen::ArrayXd::Zero(img.size());
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) acc += taps[k + r] * img[Eigen::Index(y) * w + xx];
      }
      tmp[Eigen::Index(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) acc += taps[k + r] * tmp[Eigen::Index(yy) * w + x];
      }
      out[Eigen::Index(y) * w + x] = acc;
    }
  return out;
}

// Sum of the SSIM map of one channel; optionally d(sum)/dx scaled by `scale`.
double ssim_channel(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y, int w, int h, double scale,
                    Eigen::ArrayXd* dx) {
  const Eigen::ArrayXd mx = blur(x, w, h), my = blur(y, w, h);
  const Eigen::ArrayXd exx = blur(x * x, w, h), eyy = blur(y * y, w, h), exy = blur(x * y, w, h);
  const Eigen::ArrayXd a1 = 2.0 * mx * my + kC1;
  const Eigen::ArrayXd a2 = 2.0 * (exy - mx * my) + kC2;
  const Eigen::ArrayXd b1 = mx * mx + my * my + kC1;
  const Eigen::ArrayXd b2 = (exx - mx * mx) + (eyy - my * my) + kC2;
  const Eigen::ArrayXd s = (a1 * a2) / (b1 * b2);
  if (dx) {
    const Eigen::ArrayXd g_mu = scale * ((2.0 * my * a2 - 2.0 * my * a1) / (b1 * b2) -
                                         s * (2.0 * mx / b1 - 2.0 * mx / b2));
    const Eigen::ArrayXd g_exx = scale * (-s / b2);
    const Eigen::ArrayXd g_exy = scale * (2.0 * a1 / (b1 * b2));
    *dx = blur(g_mu, w, h) + 2.0 * x * blur(g_exx, w, h) + y * blur(g_exy, w, h);
  }
  return s.sum();
}

void require_same_shape(const char* what, int w0, int h0, int w1, int h1) {
  if (w0 != w1 || h0 != h1) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

double ssim(const Image3& a, const Image3& b) {
  require_same_shape("ssim", a.width, a.height, b.width, b.height);
  const double n = double(a.size()) * 3.0;
  if (n == 0) return 1.0;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += ssim_channel(a.data.col(c), b.data.col(c), a.width, a.height, 0, nullptr);
  return total / n;
}

double rgb_loss(const Image3& rendered, const Image3& target, double ssim_mix, Image3* grad) {
  require_same_shape("rgb_loss", rendered.width, rendered.height, target.width, target.height);
  const double n = double(rendered.size()) * 3.0;
  if (n == 0) return 0.0;
  const auto diff = rendered.data - target.data;
  const double l1 = diff.abs().sum() / n;
  if (grad) {
    *grad = Image3(rendered.width, rendered.height);
    grad->data = diff.unaryExpr([](double v) { return sign(v); }) * ((1.0 - ssim_mix) / n);
  }
  double ssim_sum = 0.0;
  if (ssim_mix > 0.0) {
    for (int c = 0; c < 3; ++c) {
      Eigen::ArrayXd d;
      ssim_sum += ssim_channel(rendered.data.col(c), target.data.col(c), rendered.width, rendered.height,
                               1.0 / n, grad ? &d : nullptr);
      if (grad) grad->data.col(c) -= ssim_mix * d;
    }
  }
  return (1.0 - ssim_mix) * l1 + (ssim_mix > 0.0 ? ssim_mix * (1.0 - ssim_sum / n) : 0.0);
}

DepthAlignment align_depth(const Image1& rendered, const Image1& prior, const Mask& valid) {
  require_same_shape("align_depth", rendered.width, rendered.height, prior.width, prior.height);
  require_same_shape("align_depth", rendered.width, rendered.height, valid.width, valid.height);
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (Eigen::Index i = 0; i < rendered.size(); ++i) {
    if (!valid[std::size_t(i)]) continue;
    const double x = rendered.data(i), y = prior.data(i);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  DepthAlignment a;
  const double det = n * sxx - sx * sx;
  if (n < 2 || !(det > 1e-12 * n * sxx)) {
    a.s = 0.0;
    a.t = n > 0 ? sy / n : 0.0;
    a.degenerate = true;
    return a;
  }
  a.s = (n * sxy - sx * sy) / det;
  a.t = (sy - a.s * sx) / n;
  return a;
}

double gradient_matching(const Image1& residual, const Mask& valid, Image1* grad) {
  const int w = residual.width, h = residual.height;
  if (grad) *grad = Image1(w, h);
  double total = 0.0;
  for (int step : {1, 2, 4, 8}) {
    std::size_t count = 0;
    for (int y = 0; y < h; y += step)
      for (int x = 0; x < w; x += step)
        if (valid(x, y)) ++count;
    if (count == 0) continue;
    const double inv = 1.0 / double(count);
    double sum = 0.0;
    for (int y = 0; y < h; y += step)
      for (int x = 0; x < w; x += step) {
        if (!valid(x, y)) continue;
        const double r = residual.at(x, y);
        if (x + step < w && valid(x + step, y)) {
          const double d = residual.at(x + step, y) - r;
          sum += std::abs(d);
          if (grad) {
            grad->at(x + step, y) += sign(d) * inv;
            grad->at(x, y) -= sign(d) * inv;
          }
        }
        if (y + step < h && valid(x, y + step)) {
          const double d = residual.at(x, y + step) - r;
          sum += std::abs(d);
          if (grad) {
            grad->at(x, y + step) += sign(d) * inv;
            grad->at(x, y) -= sign(d) * inv;
          }
        }
      }
    total += sum * inv;
  }
  return total;
}

double depth_loss(const Image1& rendered, const Image1& prior, const Mask& valid, double lambda_grad, Image1* grad,
                  DepthLossInfo* info) {
  const DepthAlignment al = align_depth(rendered, prior, valid);
  const int w = rendered.width, h = rendered.height;
  DepthLossInfo local;
  DepthLossInfo& out = info ? *info : local;
  out = DepthLossInfo{};
  out.alignment = al;
  out.valid = valid.count();
  if (grad) *grad = Image1(w, h);
  if (out.valid == 0) {
    out.empty = true;
    return 0.0;
  }
  const double n = double(out.valid);
  Image1 residual(w, h);
  for (Eigen::Index i = 0; i < rendered.size(); ++i)
    if (valid[std::size_t(i)]) residual.data(i) = al.s * rendered.data(i) + al.t - prior.data(i);
  out.data = residual.data.square().sum() / n;
  Image1 g_grad;
  out.gradient = gradient_matching(residual, valid, grad ? &g_grad : nullptr);
  const double value = out.data + lambda_grad * out.gradient;
  if (!grad || al.degenerate) return value;

  // dL/dR, then chain through R_i = s x_i + t - y_i including s(x), t(x).
  Eigen::ArrayXd g_r = (2.0 / n) * residual.data + lambda_grad * g_grad.data;
  double sx = 0, sy = 0, sxx = 0, dl_ds = 0, dl_dt = 0;
  for (Eigen::Index i = 0; i < rendered.size(); ++i) {
    if (!valid[std::size_t(i)]) continue;
    const double x = rendered.data(i);
    sx += x;
    sy += prior.data(i);
    sxx += x * x;
    dl_ds += g_r(i) * x;
    dl_dt += g_r(i);
  }
  const double det = n * sxx - sx * sx;
  for (Eigen::Index i = 0; i < rendered.size(); ++i) {
    if (!valid[std::size_t(i)]) continue;
    const double x = rendered.data(i), y = prior.data(i);
    const double ds = (n * y - sy - al.s * (2.0 * n * x - 2.0 * sx)) / det;
    const double dt = (-ds * sx - al.s) / n;
    grad->data(i) = al.s * g_r(i) + dl_ds * ds + dl_dt * dt;
  }
  return value;
}

double normal_loss(const Image3& rendered, const Image3& prior, const Mask& valid, double lambda_1, double lambda_cos,
                   Image3* grad) {
  require_same_shape("normal_loss", rendered.width, rendered.height, prior.width, prior.height);
  require_same_shape("normal_loss", rendered.width, rendered.height, valid.width, valid.height);
  if (grad) *grad = Image3(rendered.width, rendered.height);
  std::vector<Eigen::Index> pixels;
  for (Eigen::Index i = 0; i < rendered.size(); ++i)
    if (valid[std::size_t(i)] && rendered.data.row(i).matrix().norm() >= 1e-6 &&
        prior.data.row(i).matrix().norm() > 0.0)
      pixels.push_back(i);
  if (pixels.empty()) return 0.0;
  const double inv = 1.0 / double(pixels.size());
  double l1 = 0.0, lcos = 0.0;
  for (Eigen::Index i : pixels) {
    const Vec3 n = rendered.data.row(i).matrix().transpose();
    const Vec3 p = prior.data.row(i).matrix().transpose();
    const double nn = n.norm(), pn = p.norm();
    const double c = n.dot(p) / (nn * pn);
    l1 += (n - p).cwiseAbs().sum();
    lcos += 1.0 - c;
    if (grad) {
      const Vec3 dcos = p / (nn * pn) - c * n / (nn * nn);
      const Vec3 g = lambda_1 * inv * (n - p).unaryExpr([](double v) { return sign(v); }) - lambda_cos * inv * dcos;
      grad->data.row(i) = g.transpose().array();
    }
  }
  return lambda_1 * l1 * inv + lambda_cos * lcos * inv;
}

std::optional<double> ncc(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("ncc: patch size mismatch");
  const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
  const double va = da.square().sum(), vb = db.square().sum();
  if (va <= 1e-12 || vb <= 1e-12) return std::nullopt;
  return std::clamp((da * db).sum() / std::sqrt(va * vb), -1.0, 1.0);
}

namespace {

// Derivative slots: 0 reference depth, 1-3 reference normal, then for each of
// the four neighbor bilinear corners its depth and normal.
constexpr int kMvVars = 20;
using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, kMvVars, 1>>;
using AdVec2 = Eigen::Matrix<Ad, 2, 1>;
using AdVec3 = Eigen::Matrix<Ad, 3, 1>;
using AdMat3 = Eigen::Matrix<Ad, 3, 3>;

Ad variable(double value, int slot) { return Ad(value, kMvVars, slot); }
Ad constant(double value) { return Ad(value, Eigen::Matrix<double, kMvVars, 1>::Zero()); }

// Bilinear footprint at continuous pixel coordinates (centers at +0.5).
struct Footprint {
  int x0, y0;
  Ad fx, fy;
  std::array<Eigen::Index, 4> index;
  std::array<Ad, 4> weight;
};

std::optional<Footprint> footprint(const AdVec2& p, int w, int h) {
  const double xs = p.x().value() - 0.5, ys = p.y().value() - 0.5;
  if (w < 2 || h < 2 || !(xs >= 0.0) || !(ys >= 0.0) || xs > w - 1 || ys > h - 1) return std::nullopt;
  Footprint f;
  f.x0 = std::min(int(std::floor(xs)), w - 2);
  f.y0 = std::min(int(std::floor(ys)), h - 2);
  f.fx = p.x() - (f.x0 + 0.5);
  f.fy = p.y() - (f.y0 + 0.5);
  const Ad one = constant(1.0);
  f.index = {Eigen::Index(f.y0) * w + f.x0, Eigen::Index(f.y0) * w + f.x0 + 1, Eigen::Index(f.y0 + 1) * w + f.x0,
             Eigen::Index(f.y0 + 1) * w + f.x0 + 1};
  f.weight = {(one - f.fx) * (one - f.fy), f.fx * (one - f.fy), (one - f.fx) * f.fy, f.fx * f.fy};
  return f;
}

Ad sample(const Footprint& f, const Eigen::ArrayXd& img) {
  Ad v = constant(0.0);
  for (int k = 0; k < 4; ++k) v += f.weight[k] * img(f.index[k]);
  return v;
}

AdVec2 apply(const AdMat3& H, const AdVec2& p) {
  const AdVec3 q = H * AdVec3(p.x(), p.y(), constant(1.0));
  return {q.x() / q.z(), q.y() / q.z()};
}

struct MvSample {
  bool geo = false;
  bool pho = false;
  Eigen::Index ref_index = 0;
  std::array<Eigen::Index, 4> nb_index{};
  double phi = 0.0;
  double one_minus_ncc = 0.0;
  Eigen::Matrix<double, kMvVars, 1> d_phi = Eigen::Matrix<double, kMvVars, 1>::Zero();
  Eigen::Matrix<double, kMvVars, 1> d_pho = Eigen::Matrix<double, kMvVars, 1>::Zero();
};

}  // namespace

MvResult mv_consistency_loss(const MvView& ref, const MvView& nb, const MvConfig& config, const LossWeights& weights,
                             bool want_grads) {
  const int w = ref.render.width(), h = ref.render.height();
  const int nw = nb.render.width(), nh = nb.render.height();
  require_same_shape("mv_consistency_loss", w, h, ref.image.width, ref.image.height);
  require_same_shape("mv_consistency_loss", nw, nh, nb.image.width, nb.image.height);

  MvResult result;
  if (want_grads) {
    result.ref_grads = MapGrads::zeros(w, h);
    result.nb_grads = MapGrads::zeros(nw, nh);
  }
  const RelativePose rn = relative_pose(ref.camera, nb.camera);
  const RelativePose nr = relative_pose(nb.camera, ref.camera);
  const Eigen::ArrayXd gray_r = to_grayscale(ref.image).data;
  const Eigen::ArrayXd gray_n = to_grayscale(nb.image).data;
  const int r = config.patch_radius;
  const int side = 2 * r + 1;

  std::vector<std::pair<int, int>> grid;
  for (int y = r; y < h - r; y += config.sample_stride)
    for (int x = r; x < w - r; x += config.sample_stride) grid.emplace_back(x, y);

  std::vector<MvSample> samples(grid.size());
  parallel_for(grid.size(), [&](std::size_t gi) {
    const auto [x, y] = grid[gi];
    const Eigen::Index idx = ref.render.alpha.index(x, y);
    if (!(ref.render.alpha.data(idx) > config.alpha_threshold)) return;
    const double depth = ref.render.depth.data(idx);
    if (!(depth > 0.0)) return;
    const Vec3 normal = ref.render.normal.data.row(idx).matrix().transpose();
    if (normal.norm() < 1e-6) return;

    // Forward point must lie in front of the neighbor.
    const Vec3 X_r = depth * ref.camera.ray(x + 0.5, y + 0.5);
    if (!((rn.R * X_r + rn.T).z() > 0.0)) return;

    const Ad d_r = variable(depth, 0);
    const AdVec3 n_r(variable(normal.x(), 1), variable(normal.y(), 2), variable(normal.z(), 3));
    const AdVec2 p(constant(x + 0.5), constant(y + 0.5));
    const auto H_rn = try_plane_homography<Ad>(ref.camera.K, nb.camera.K, rn.R, rn.T, n_r, d_r, p);
    if (!H_rn) return;
    const AdVec2 p_n = apply(*H_rn, p);
    const auto fp = footprint(p_n, nw, nh);
    if (!fp) return;
    for (Eigen::Index k : fp->index)
      if (!(nb.render.alpha.data(k) > config.alpha_threshold)) return;

    Ad d_n = constant(0.0);
    AdVec3 n_n(constant(0.0), constant(0.0), constant(0.0));
    for (int k = 0; k < 4; ++k) {
      const Eigen::Index ki = fp->index[k];
      const int base = 4 + 4 * k;
      d_n += fp->weight[k] * variable(nb.render.depth.data(ki), base);
      for (int c = 0; c < 3; ++c) n_n[c] += fp->weight[k] * variable(nb.render.normal.data(ki, c), base + 1 + c);
    }
    if (!(d_n.value() > 0.0)) return;
    const auto H_nr = try_plane_homography<Ad>(nb.camera.K, ref.camera.K, nr.R, nr.T, n_n, d_n, p_n);
    if (!H_nr) return;
    const AdVec2 p_back = apply(*H_nr, p_n);
    const Ad ex = p.x() - p_back.x(), ey = p.y() - p_back.y();
    using std::sqrt;
    const Ad phi = sqrt(ex * ex + ey * ey + 1e-20);
    if (!(phi.value() < config.tau_geo)) return;

    MvSample& s = samples[gi];
    s.geo = true;
    s.ref_index = idx;
    s.nb_index = fp->index;
    s.phi = phi.value();
    s.d_phi = phi.derivatives();

    std::vector<double> a(std::size_t(side * side));
    std::vector<Ad> b(std::size_t(side * side));
    std::size_t m = 0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx, ++m) {
        a[m] = gray_r(Eigen::Index(y + dy) * w + x + dx);
        const AdVec2 q(constant(x + dx + 0.5), constant(y + dy + 0.5));
        const auto fq = footprint(apply(*H_rn, q), nw, nh);
        if (!fq) return;
        b[m] = sample(*fq, gray_n);
      }
    double mean_a = 0.0;
    Ad mean_b = constant(0.0);
    for (std::size_t i = 0; i < m; ++i) {
      mean_a += a[i];
      mean_b += b[i];
    }
    mean_a /= double(m);
    mean_b /= double(m);
    double va = 0.0;
    Ad vb = constant(0.0), cov = constant(0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double da = a[i] - mean_a;
      const Ad db = b[i] - mean_b;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
    if (va <= 1e-12 || vb.value() <= 1e-12) return;
    const Ad score = cov / sqrt(vb * va);
    s.pho = true;
    s.one_minus_ncc = 1.0 - score.value();
    s.d_pho = -score.derivatives();
  });

  double geo_sum = 0.0, pho_sum = 0.0;
  for (const MvSample& s : samples) {
    if (s.geo) {
      ++result.n_geo;
      geo_sum += s.phi;
    }
    if (s.pho) {
      ++result.n_pho;
      pho_sum += s.one_minus_ncc;
    }
  }
  if (result.n_geo == 0) return result;
  result.empty = false;
  result.geo = geo_sum / double(result.n_geo);
  result.pho = result.n_pho ? pho_sum / double(result.n_pho) : 0.0;
  result.value = weights.lambda_geo * result.geo + weights.lambda_pho * result.pho;
  if (!want_grads) return result;

  const double k_geo = weights.lambda_geo / double(result.n_geo);
  const double k_pho = result.n_pho ? weights.lambda_pho / double(result.n_pho) : 0.0;
  for (const MvSample& s : samples) {
    if (!s.geo) continue;
    Eigen::Matrix<double, kMvVars, 1> d = k_geo * s.d_phi;
    if (s.pho) d += k_pho * s.d_pho;
    result.ref_grads.depth.data(s.ref_index) += d(0);
    for (int c = 0; c < 3; ++c) result.ref_grads.normal.data(s.ref_index, c) += d(1 + c);
    for (int k = 0; k < 4; ++k) {
      const int base = 4 + 4 * k;
      result.nb_grads.depth.data(s.nb_index[k]) += d(base);
      for (int c = 0; c < 3; ++c) result.nb_grads.normal.data(s.nb_index[k], c) += d(base + 1 + c);
    }
  }
  return result;
}

double total_loss(const LossTerms& terms, const LossWeights& weights) {
  const std::pair<const char*, double> named[] = {
      {"rgb", terms.rgb}, {"depth", terms.depth}, {"normal", terms.normal}, {"multi-view", terms.mv}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite loss term: ") + name);
  return weights.lambda_rgb * terms.rgb + weights.lambda_d * terms.depth + weights.lambda_n * terms.normal + terms.mv;
}

}  // namespace splatroom
