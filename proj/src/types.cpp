#include "splatroom/types.hpp"

#include <limits>
#include <numbers>
#include <stdexcept>
#include <sstream>

namespace splatroom {

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v != 0;
  return n;
}

Image1 to_grayscale(const Image3& rgb) {
  Image1 out(rgb.width, rgb.height);
  out.data = 0.299 * rgb.data.col(0) + 0.587 * rgb.data.col(1) + 0.114 * rgb.data.col(2);
  return out;
}

Vec4 matrix_to_quaternion(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out(0) < 0) out = -out;
  return out.normalized();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = std::uint64_t(hi - lo) + 1;
  if (span == 0) return std::int64_t(next());
  // Rejection sampling keeps the distribution exact.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return lo + std::int64_t(v % span);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw std::runtime_error("corrupt RNG state");
}

}  // namespace splatroom
