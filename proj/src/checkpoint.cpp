#include "splatroom/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace splatroom {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[] = "SPLATROOM1";
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void i32(std::int64_t v) { pod(std::int32_t(v)); }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void boolean(bool v) { pod(std::uint8_t(v ? 1 : 0)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.append(s);
  }
  template <class Derived>
  void dense(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : in_(bytes) {}
  template <class T>
  T pod() {
    if (pos_ + sizeof(T) > in_.size()) throw std::runtime_error("checkpoint truncated");
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  int i32() { return pod<std::int32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  bool boolean() { return pod<std::uint8_t>() != 0; }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > in_.size() - pos_) throw std::runtime_error("checkpoint truncated");
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class Derived>
  void dense(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  std::size_t count(std::size_t min_item_bytes) {
    const std::uint64_t n = u64();
    if (min_item_bytes && n > (in_.size() - pos_) / min_item_bytes) throw std::runtime_error("checkpoint truncated");
    return std::size_t(n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const PipelineConfig& c) {
  const TrainConfig& t = c.train;
  w.i32(t.total_iters);
  for (double v : {t.lr_offset, t.lr_offset_final, t.lr_rotation, t.lr_scale, t.lr_opacity, t.lr_color, t.adam_beta1,
                   t.adam_beta2, t.adam_eps})
    w.f64(v);
  w.u64(t.seed);
  w.i32(t.checkpoint_every);
  const DensifyConfig& d = c.densify;
  for (int v : {d.grow_window, d.prune_window, d.interval, d.max_level, d.start_iter, d.end_iter}) w.i32(v);
  w.f64(d.theta_g);
  w.f64(d.theta_alpha);
  w.boolean(d.enabled);
  const LossWeights& l = c.weights;
  for (double v : {l.lambda_rgb, l.lambda_d, l.lambda_n, l.lambda_1, l.lambda_cos, l.lambda_grad, l.lambda_geo,
                   l.lambda_pho, l.rgb_ssim_mix})
    w.f64(v);
  w.i32(c.mv.patch_radius);
  w.i32(c.mv.sample_stride);
  w.f64(c.mv.tau_geo);
  w.i32(c.mv.start_iter);
  w.f64(c.mv.alpha_threshold);
  const RasterConfig& r = c.raster;
  w.f64(r.near);
  w.f64(r.far);
  w.i32(r.tile_size);
  for (double v : {r.alpha_cutoff, r.transmittance_floor, r.lowpass_sigma, r.alpha_valid_threshold}) w.f64(v);
}

PipelineConfig read_config(Reader& r) {
  PipelineConfig c;
  TrainConfig& t = c.train;
  t.total_iters = r.i32();
  for (double* v : {&t.lr_offset, &t.lr_offset_final, &t.lr_rotation, &t.lr_scale, &t.lr_opacity, &t.lr_color,
                    &t.adam_beta1, &t.adam_beta2, &t.adam_eps})
    *v = r.f64();
  t.seed = r.u64();
  t.checkpoint_every = r.i32();
  DensifyConfig& d = c.densify;
  for (int* v : {&d.grow_window, &d.prune_window, &d.interval, &d.max_level, &d.start_iter, &d.end_iter}) *v = r.i32();
  d.theta_g = r.f64();
  d.theta_alpha = r.f64();
  d.enabled = r.boolean();
  LossWeights& l = c.weights;
  for (double* v : {&l.lambda_rgb, &l.lambda_d, &l.lambda_n, &l.lambda_1, &l.lambda_cos, &l.lambda_grad,
                    &l.lambda_geo, &l.lambda_pho, &l.rgb_ssim_mix})
    *v = r.f64();
  c.mv.patch_radius = r.i32();
  c.mv.sample_stride = r.i32();
  c.mv.tau_geo = r.f64();
  c.mv.start_iter = r.i32();
  c.mv.alpha_threshold = r.f64();
  RasterConfig& rc = c.raster;
  rc.near = r.f64();
  rc.far = r.f64();
  rc.tile_size = r.i32();
  for (double* v : {&rc.alpha_cutoff, &rc.transmittance_floor, &rc.lowpass_sigma, &rc.alpha_valid_threshold})
    *v = r.f64();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Scene& scene, const TrainState& state, const PipelineConfig& config) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic) - 1);
  w.pod(kVersion);
  write_config(w, config);

  const SeedConfig& sc = scene.config();
  w.i32(sc.epsilon);
  w.f64(sc.delta);
  w.i32(sc.k);
  w.u64(sc.rng_seed);

  w.u64(scene.cameras().size());
  for (const Camera& c : scene.cameras()) {
    w.dense(c.K);
    w.dense(c.R_wc);
    w.dense(c.t_wc);
    w.i32(c.width);
    w.i32(c.height);
  }
  w.u64(scene.next_seed_id());
  w.u64(scene.next_surfel_id());
  w.u64(scene.seeds().size());
  for (const SeedPoint& s : scene.seeds()) {
    w.u64(s.id);
    w.dense(s.anchor);
    for (int i = 0; i < 3; ++i) w.i32(s.key[i]);
    w.i32(s.level);
    w.f64(s.grad_accum);
    w.i32(s.grad_count);
    w.f64(s.opacity_accum);
    w.i32(s.opacity_count);
    w.boolean(s.active);
    w.u64(s.surfel_ids.size());
    for (SurfelId id : s.surfel_ids) w.u64(id);
  }
  w.u64(scene.surfels().size());
  for (const Surfel& s : scene.surfels()) {
    w.u64(s.id);
    w.u64(s.seed_id);
    w.dense(s.offset);
    w.dense(s.rotation);
    w.dense(s.log_scale);
    w.f64(s.raw_opacity);
    w.dense(s.raw_color);
  }

  w.i32(state.iteration);
  w.pod(state.adam.step);
  w.u64(std::uint64_t(state.adam.m.rows()));
  w.dense(state.adam.m);
  w.dense(state.adam.v);
  w.str(state.rng.serialize());
  w.u64(state.order.size());
  for (int v : state.order) w.i32(v);
  w.u64(state.order_pos);
  w.f64(state.extent);
  w.f64(state.last_loss);
  w.f64(state.loss_ema);
  return std::move(w.bytes());
}

void save_checkpoint(const std::string& path, const Scene& scene, const TrainState& state,
                     const PipelineConfig& config) {
  const std::string bytes = serialize_checkpoint(scene, state, config);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) - 1 || bytes.compare(0, sizeof(kMagic) - 1, kMagic) != 0)
    throw std::runtime_error("not a checkpoint (bad magic)");
  const std::string body = bytes.substr(sizeof(kMagic) - 1);
  Reader r(body);
  if (r.pod<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.config = read_config(r);

  SeedConfig sc;
  sc.epsilon = r.i32();
  sc.delta = r.f64();
  sc.k = r.i32();
  sc.rng_seed = r.u64();
  Scene scene(sc);

  const std::size_t n_cams = r.count(8);
  for (std::size_t i = 0; i < n_cams; ++i) {
    Camera c;
    r.dense(c.K);
    r.dense(c.R_wc);
    r.dense(c.t_wc);
    c.width = r.i32();
    c.height = r.i32();
    scene.cameras().push_back(c);
  }
  const std::uint64_t next_seed = r.u64();
  const std::uint64_t next_surfel = r.u64();
  const std::size_t n_seeds = r.count(8);
  for (std::size_t i = 0; i < n_seeds; ++i) {
    SeedPoint s;
    s.id = r.u64();
    r.dense(s.anchor);
    for (int k = 0; k < 3; ++k) s.key[k] = r.i32();
    s.level = r.i32();
    s.grad_accum = r.f64();
    s.grad_count = r.i32();
    s.opacity_accum = r.f64();
    s.opacity_count = r.i32();
    s.active = r.boolean();
    const std::size_t n_ids = r.count(8);
    for (std::size_t k = 0; k < n_ids; ++k) s.surfel_ids.push_back(r.u64());
    scene.seeds().push_back(std::move(s));
  }
  const std::size_t n_surfels = r.count(8);
  for (std::size_t i = 0; i < n_surfels; ++i) {
    Surfel s;
    s.id = r.u64();
    s.seed_id = r.u64();
    r.dense(s.offset);
    r.dense(s.rotation);
    r.dense(s.log_scale);
    s.raw_opacity = r.f64();
    r.dense(s.raw_color);
    scene.surfels().push_back(s);
  }
  scene.set_next_ids(next_seed, next_surfel);
  scene.reindex();
  scene.check_integrity();

  TrainState& st = ck.state;
  st.iteration = r.i32();
  st.adam.step = r.pod<std::int64_t>();
  const std::size_t rows = r.count(8 * param::kCount * 2);
  st.adam.m.resize(Eigen::Index(rows), param::kCount);
  st.adam.v.resize(Eigen::Index(rows), param::kCount);
  r.dense(st.adam.m);
  r.dense(st.adam.v);
  st.rng.deserialize(r.str());
  const std::size_t n_order = r.count(4);
  for (std::size_t i = 0; i < n_order; ++i) st.order.push_back(r.i32());
  st.order_pos = std::size_t(r.u64());
  st.extent = r.f64();
  st.last_loss = r.f64();
  st.loss_ema = r.f64();
  if (!r.done()) throw std::runtime_error("checkpoint has trailing data");
  if (rows != scene.surfels().size()) throw std::runtime_error("checkpoint optimizer state does not match surfels");
  ck.scene = std::move(scene);
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace splatroom
