#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace splatroom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec3i = Eigen::Vector3i;

// Row-major pixel storage: pixel (x, y) lives at row y * width + x.
template <int Channels>
struct Image {
  using Storage =
      Eigen::Array<double, Eigen::Dynamic, Channels,
                   Channels == 1 ? Eigen::ColMajor : Eigen::RowMajor>;

  int width = 0;
  int height = 0;
  Storage data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(Storage::Zero(Eigen::Index(w) * h, Channels)) {}

  Eigen::Index index(int x, int y) const { return Eigen::Index(y) * width + x; }
  Eigen::Index size() const { return Eigen::Index(width) * height; }
  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <int Other>
  bool same_shape(const Image<Other>& o) const { return width == o.width && height == o.height; }

  auto pixel(int x, int y) { return data.row(index(x, y)); }
  auto pixel(int x, int y) const { return data.row(index(x, y)); }
  double& at(int x, int y, int c = 0) { return data(index(x, y), c); }
  double at(int x, int y, int c = 0) const { return data(index(x, y), c); }
};

using Image1 = Image<1>;
using Image3 = Image<3>;

// Per-pixel boolean mask, same layout as Image1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool value = false)
      : width(w), height(h), data(std::size_t(w) * h, value ? 1 : 0) {}
  bool operator()(int x, int y) const { return data[std::size_t(y) * width + x] != 0; }
  bool operator[](std::size_t i) const { return data[i] != 0; }
  void set(std::size_t i, bool v) { data[i] = v ? 1 : 0; }
  std::size_t count() const;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double inverse_sigmoid(double y) { return std::log(y / (1.0 - y)); }

inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image1 to_grayscale(const Image3& rgb);

// Quaternion (w, x, y, z), not necessarily normalized, to rotation matrix of
// the normalized quaternion.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> quaternion_to_matrix(const Eigen::Matrix<Scalar, 4, 1>& q_raw) {
  using std::sqrt;
  const Eigen::Matrix<Scalar, 4, 1> q = q_raw / sqrt(q_raw.squaredNorm());
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix<Scalar, 3, 3> r;
  r << Scalar(1) - Scalar(2) * (y * y + z * z), Scalar(2) * (x * y - w * z), Scalar(2) * (x * z + w * y),
      Scalar(2) * (x * y + w * z), Scalar(1) - Scalar(2) * (x * x + z * z), Scalar(2) * (y * z - w * x),
      Scalar(2) * (x * z - w * y), Scalar(2) * (y * z + w * x), Scalar(1) - Scalar(2) * (x * x + y * y);
  return r;
}

// Quaternion (w, x, y, z) of a rotation matrix.
Vec4 matrix_to_quaternion(const Mat3& r);

// Deterministic RNG. Distributions are implemented here rather than taken from
// <random> so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace splatroom
