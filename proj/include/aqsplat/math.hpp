#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace aqsp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double inverse_softplus(double y) { return std::log(std::expm1(y)); }

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Mat3 quaternion_to_rotation(const Vec4& q);

/// Chain rule through normalization and the rotation map: returns dL/dq for
/// the unnormalized quaternion given dL/dR.
Vec4 quaternion_to_rotation_backward(const Vec4& q, const Mat3& grad_rotation);

/// Rotation matrix -> unit quaternion (w >= 0).
Vec4 rotation_to_quaternion(const Mat3& r);

/// FNV-1a style accumulator for the discrete structure of a forward pass
/// (active contributor sets, activation sign patterns, argmin choices). Two
/// evaluations with equal fingerprints lie on the same smooth piece.
class Fingerprint {
 public:
  void mix(std::uint64_t value) {
    state_ ^= value + 0x9e3779b97f4a7c15ULL + (state_ << 6) + (state_ >> 2);
    state_ *= 0x100000001b3ULL;
  }
  void mix_sign(double value) { mix(value > 0.0 ? 1u : (value < 0.0 ? 2u : 3u)); }
  std::uint64_t value() const { return state_; }
  bool operator==(const Fingerprint&) const = default;

 private:
  std::uint64_t state_ = 1469598103934665603ULL;
};

}  // namespace aqsp
