#include "splatroom/synthetic.hpp"

#include "splatroom/parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace splatroom {

void SyntheticRoomSpec::validate() const {
  if ((extents.array() <= 0).any()) throw std::invalid_argument("room spec: extents must be positive");
  if (n_views < 2) throw std::invalid_argument("room spec: n_views must be >= 2");
  if (width < 2 || height < 2) throw std::invalid_argument("room spec: image must be at least 2x2");
  if (!(hfov_deg > 0 && hfov_deg < 180)) throw std::invalid_argument("room spec: hfov_deg must lie in (0, 180)");
  if (!(tile_size > 0)) throw std::invalid_argument("room spec: tile_size must be positive");
  if (depth_noise < 0 || normal_noise_deg < 0 || point_noise < 0)
    throw std::invalid_argument("room spec: noise levels must be >= 0");
  if (!(depth_prior_scale > 0)) throw std::invalid_argument("room spec: depth_prior_scale must be positive");
  if (outlier_fraction < 0 || outlier_fraction > 1)
    throw std::invalid_argument("room spec: outlier_fraction must lie in [0, 1]");
  if (n_points < 0) throw std::invalid_argument("room spec: n_points must be >= 0");
  if (trajectory_radius < 0) throw std::invalid_argument("room spec: trajectory_radius must be >= 0");
  const Vec3 half = 0.5 * extents;
  if (trajectory_radius >= std::min(half.x(), half.y()))
    throw std::invalid_argument("room spec: trajectory leaves the room");
}

SyntheticRoomSpec parse_room_spec(const ConfigMap& config) {
  SyntheticRoomSpec s;
  for (const auto& [key, value] : config) {
    std::istringstream in(value);
    bool ok = true;
    if (key == "extents") ok = bool(in >> s.extents.x() >> s.extents.y() >> s.extents.z());
    else if (key == "texture") {
      if (value == "checker") s.texture = RoomTexture::Checker;
      else if (value == "noise" || value == "gradient-noise") s.texture = RoomTexture::GradientNoise;
      else ok = false;
    } else if (key == "trajectory") {
      if (value == "circle") s.trajectory = Trajectory::Circle;
      else if (value == "grid") s.trajectory = Trajectory::Grid;
      else ok = false;
    } else if (key == "tile_size") ok = bool(in >> s.tile_size);
    else if (key == "n_views") ok = bool(in >> s.n_views);
    else if (key == "trajectory_radius") ok = bool(in >> s.trajectory_radius);
    else if (key == "pitch_deg") ok = bool(in >> s.pitch_deg);
    else if (key == "width") ok = bool(in >> s.width);
    else if (key == "height") ok = bool(in >> s.height);
    else if (key == "hfov_deg") ok = bool(in >> s.hfov_deg);
    else if (key == "depth_noise") ok = bool(in >> s.depth_noise);
    else if (key == "normal_noise_deg") ok = bool(in >> s.normal_noise_deg);
    else if (key == "depth_prior_scale") ok = bool(in >> s.depth_prior_scale);
    else if (key == "depth_prior_shift") ok = bool(in >> s.depth_prior_shift);
    else if (key == "n_points") ok = bool(in >> s.n_points);
    else if (key == "point_noise") ok = bool(in >> s.point_noise);
    else if (key == "outlier_fraction") ok = bool(in >> s.outlier_fraction);
    else if (key == "seed") ok = bool(in >> s.seed);
    else throw IoError("room spec: unknown key '" + key + "'");
    if (!ok) throw IoError("room spec: bad value for '" + key + "': " + value);
  }
  s.validate();
  return s;
}

namespace {

// Face f: axis f / 2, at the low (even f) or high (odd f) wall.
Vec3 face_normal(int f) {
  Vec3 n = Vec3::Zero();
  n[f / 2] = f % 2 == 0 ? 1.0 : -1.0;
  return n;
}

const Vec3 kFaceColor[6] = {{0.85, 0.35, 0.30}, {0.30, 0.70, 0.40}, {0.35, 0.45, 0.85},
                            {0.85, 0.75, 0.30}, {0.60, 0.60, 0.60}, {0.70, 0.40, 0.75}};

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

double lattice(std::uint64_t seed, int face, long a, long b) {
  const std::uint64_t h = mix64(seed ^ mix64(std::uint64_t(face) * 0x9e3779b97f4a7c15ULL ^
                                             mix64(std::uint64_t(a) * 0x632be59bd9b4e019ULL + std::uint64_t(b))));
  return double(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double quantize8(double v) { return double(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0; }
// Kept out of line: GCC 11's SLP vectorizer drops the float round trip when
// this is inlined into the per-channel loop at -O3.
[[gnu::noinline]] double quantize32(double v) { return double(float(v)); }

}  // namespace

Vec3 room_texture(const SyntheticRoomSpec& spec, int face, const Vec3& p) {
  const int axis = face / 2;
  const double a = p[(axis + 1) % 3] / spec.tile_size;
  const double b = p[(axis + 2) % 3] / spec.tile_size;
  double shade;
  if (spec.texture == RoomTexture::Checker) {
    shade = (long(std::floor(a)) + long(std::floor(b))) % 2 == 0 ? 1.0 : 0.4;
  } else {
    const long ia = long(std::floor(a)), ib = long(std::floor(b));
    const double fa = smooth(a - double(ia)), fb = smooth(b - double(ib));
    const double v00 = lattice(spec.seed, face, ia, ib), v10 = lattice(spec.seed, face, ia + 1, ib);
    const double v01 = lattice(spec.seed, face, ia, ib + 1), v11 = lattice(spec.seed, face, ia + 1, ib + 1);
    const double v = (1 - fa) * (1 - fb) * v00 + fa * (1 - fb) * v10 + (1 - fa) * fb * v01 + fa * fb * v11;
    shade = 0.3 + 0.7 * v;
  }
  return kFaceColor[face] * shade;
}

std::optional<RoomHit> trace_room(const SyntheticRoomSpec& spec, const Vec3& origin, const Vec3& dir) {
  if ((origin.array() <= 0).any() || (origin.array() >= spec.extents.array()).any()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  int face = -1;
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) continue;
    const bool high = dir[axis] > 0;
    const double t = ((high ? spec.extents[axis] : 0.0) - origin[axis]) / dir[axis];
    if (t < best) {
      best = t;
      face = 2 * axis + (high ? 1 : 0);
    }
  }
  if (face < 0) return std::nullopt;
  RoomHit hit;
  hit.t = best;
  hit.point = origin + best * dir;
  hit.point[face / 2] = face % 2 ? spec.extents[face / 2] : 0.0;
  hit.normal = face_normal(face);
  hit.color = room_texture(spec, face, hit.point);
  return hit;
}

TriangleMesh room_mesh(const Vec3& e) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1 ? e.x() : 0.0, i & 2 ? e.y() : 0.0, i & 4 ? e.z() : 0.0);
  // Two triangles per face, wound so normals point into the room.
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& q : quads) {
    m.triangles.emplace_back(q[0], q[1], q[2]);
    m.triangles.emplace_back(q[0], q[2], q[3]);
  }
  return m;
}

std::vector<Camera> room_cameras(const SyntheticRoomSpec& spec) {
  spec.validate();
  const Vec3 center = 0.5 * spec.extents;
  const double fx = 0.5 * spec.width / std::tan(0.5 * spec.hfov_deg * M_PI / 180.0);
  const double pitch = spec.pitch_deg * M_PI / 180.0;
  std::vector<Camera> cams;
  const int grid = int(std::ceil(std::sqrt(double(spec.n_views))));
  for (int i = 0; i < spec.n_views; ++i) {
    Vec3 eye;
    double yaw;
    if (spec.trajectory == Trajectory::Circle) {
      const double a = 2.0 * M_PI * i / spec.n_views;
      eye = center + spec.trajectory_radius * Vec3(std::cos(a), std::sin(a), 0.0);
      yaw = a + M_PI;  // look back through the room center
    } else {
      const int gx = i % grid, gy = i / grid;
      const double u = grid > 1 ? double(gx) / (grid - 1) * 2.0 - 1.0 : 0.0;
      const double v = grid > 1 ? double(gy) / (grid - 1) * 2.0 - 1.0 : 0.0;
      eye = center + spec.trajectory_radius * Vec3(u, v, 0.0);
      yaw = 2.0 * M_PI * std::fmod(i * 0.6180339887498949, 1.0);
    }
    const double tilt = (i % 2 == 0 ? 1.0 : -1.0) * pitch;
    const Vec3 forward(std::cos(tilt) * std::cos(yaw), std::cos(tilt) * std::sin(yaw), std::sin(tilt));
    cams.push_back(Camera::look_at(eye, eye + forward, Vec3::UnitZ(), fx, fx, 0.5 * spec.width, 0.5 * spec.height,
                                   spec.width, spec.height));
  }
  double spread = 0.0;
  for (const Camera& c : cams) spread = std::max(spread, (c.center() - cams.front().center()).norm());
  if (spread < 1e-9) throw std::invalid_argument("room spec: degenerate trajectory (all cameras coincide)");
  return cams;
}

SyntheticRoom generate_synthetic_room(const SyntheticRoomSpec& spec) {
  spec.validate();
  SyntheticRoom room;
  room.gt_mesh = room_mesh(spec.extents);
  const std::vector<Camera> cams = room_cameras(spec);
  auto& frames = room.dataset.frames;
  frames.resize(cams.size());

  parallel_for(cams.size(), [&](std::size_t v) {
    const Camera& cam = cams[v];
    Rng rng(mix64(spec.seed * 0x100000001b3ULL + v + 1));
    Frame& f = frames[v];
    std::ostringstream name;
    name << "view" << v;
    f.name = name.str();
    f.camera = cam;
    f.image = Image3(cam.width, cam.height);
    Image1 depth(cam.width, cam.height);
    Image3 normal(cam.width, cam.height);
    const Vec3 origin = cam.center();
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Vec3 dir = cam.R_wc.transpose() * cam.ray(x + 0.5, y + 0.5);
        const auto hit = trace_room(spec, origin, dir);
        if (!hit) continue;
        for (int c = 0; c < 3; ++c) f.image.at(x, y, c) = quantize8(hit->color[c]);
        // dir has unit camera z, so the ray parameter is the camera depth.
        double d = hit->t;
        if (spec.depth_noise > 0) d *= 1.0 + spec.depth_noise * rng.normal();
        depth.at(x, y) = quantize32(spec.depth_prior_scale * d + spec.depth_prior_shift);
        Vec3 n = cam.R_wc * hit->normal;
        if (spec.normal_noise_deg > 0) {
          Vec3 perp = n.cross(Vec3(rng.normal(), rng.normal(), rng.normal()));
          if (perp.norm() > 1e-12) {
            const double angle = spec.normal_noise_deg * M_PI / 180.0 * rng.normal();
            n = std::cos(angle) * n + std::sin(angle) * perp.normalized();
          }
        }
        for (int c = 0; c < 3; ++c) normal.at(x, y, c) = quantize32(n[c]);
      }
    f.depth_prior = std::move(depth);
    f.normal_prior = std::move(normal);
  });

  // Sparse wall samples plus uniform outliers inside the room.
  Rng rng(mix64(spec.seed ^ 0x5eedULL));
  const Vec3 e = spec.extents;
  const double areas[6] = {e.y() * e.z(), e.y() * e.z(), e.x() * e.z(), e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
  const double total = 2.0 * (e.y() * e.z() + e.x() * e.z() + e.x() * e.y());
  for (int i = 0; i < spec.n_points; ++i) {
    SfmPoint p;
    p.match_count = int(rng.uniform_int(1, 10));
    if (rng.uniform() < spec.outlier_fraction) {
      p.position = Vec3(rng.uniform(0, e.x()), rng.uniform(0, e.y()), rng.uniform(0, e.z()));
      p.color = Vec3(quantize8(rng.uniform()), quantize8(rng.uniform()), quantize8(rng.uniform()));
    } else {
      double pick = rng.uniform() * total;
      int face = 0;
      while (face < 5 && pick >= areas[face]) pick -= areas[face++];
      const int axis = face / 2;
      Vec3 q;
      q[axis] = face % 2 ? e[axis] : 0.0;
      q[(axis + 1) % 3] = rng.uniform(0, e[(axis + 1) % 3]);
      q[(axis + 2) % 3] = rng.uniform(0, e[(axis + 2) % 3]);
      const Vec3 c = room_texture(spec, face, q);
      p.color = Vec3(quantize8(c.x()), quantize8(c.y()), quantize8(c.z()));
      p.position = q + spec.point_noise * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    room.dataset.points.push_back(p);
  }
  return room;
}

}  // namespace splatroom
