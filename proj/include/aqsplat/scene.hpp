#pragma once

#include "aqsplat/math.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace aqsp {

inline constexpr int kFeatureOctaves = 4;
inline constexpr int kFeatureDim = 3 * kFeatureOctaves * 2;
inline constexpr double kBoundQuantile = 0.97;

using Feature = Eigen::Matrix<double, kFeatureDim, 1>;

/// Number of spherical-harmonic coefficients per color channel.
constexpr int sh_coefficient_count(int degree) { return (degree + 1) * (degree + 1); }

/// One optimizable Gaussian. Rotation is (w, x, y, z); base_color holds
/// sh_coefficient_count(degree) RGB triples, coefficient-major.
struct GaussianPrimitive {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::vector<double> base_color = {0.5, 0.5, 0.5};
  Feature appearance_feature = Feature::Zero();

  double opacity() const { return sigmoid(opacity_logit); }
};

/// Struct-of-arrays storage for the scene. Index order is stable between
/// densification events and is used to break depth ties.
class GaussianCloud {
 public:
  explicit GaussianCloud(int sh_degree = 0);

  std::size_t size() const { return opacity_logits.size(); }
  bool empty() const { return size() == 0; }
  int sh_degree() const { return sh_degree_; }
  int color_stride() const { return 3 * sh_coefficient_count(sh_degree_); }

  void push_back(const GaussianPrimitive& g);
  GaussianPrimitive primitive(std::size_t i) const;
  void set_primitive(std::size_t i, const GaussianPrimitive& g);
  /// Keeps the rows for which keep[i] is true, preserving order.
  void filter(const std::vector<bool>& keep);

  Vec3 position(std::size_t i) const { return Eigen::Map<const Vec3>(&positions[3 * i]); }
  Vec4 rotation(std::size_t i) const { return Eigen::Map<const Vec4>(&rotations[4 * i]); }
  Vec3 log_scale(std::size_t i) const { return Eigen::Map<const Vec3>(&log_scales[3 * i]); }
  double opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
  std::span<const double> base_color(std::size_t i) const {
    return {base_colors.data() + i * color_stride(), static_cast<std::size_t>(color_stride())};
  }
  Feature feature(std::size_t i) const { return Eigen::Map<const Feature>(&features[kFeatureDim * i]); }

  void renormalize_rotations();
  /// Recomputes the frozen per-Gaussian Fourier features from positions.
  void refresh_features();

  std::vector<double> positions;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  std::vector<double> opacity_logits;
  std::vector<double> base_colors;
  std::vector<double> features;
  /// 0.97-quantile of per-point L-infinity norms, fixed at initialization.
  double normalization_bound = 1.0;

 private:
  int sh_degree_;
};

/// Pinhole camera with world-to-camera pose x_cam = R x_world + t.
/// Camera axes: x right, y down, z forward. Pixel centers sit at (u + 0.5, v + 0.5).
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 8, height = 8;

  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Throws ParameterDomainError when the pose is not orthonormal or the image is smaller than 8x8.
  void validate() const;
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                        int width, int height);
};

/// Row-major, channel-interleaved image.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  /// Copy with every value clamped to [0, 1]; used for export only.
  ImageBuffer clamped() const;
};

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
Mat3 covariance_from_params(const Vec4& rotation, const Vec3& log_scale);

/// Maps a coordinate from [-bound, bound] affinely to [0, 1], clamping outside.
Vec3 normalize_position(const Vec3& position, double bound);

/// [sin(pi p_k 2^m), cos(pi p_k 2^m)] for k = 1..3, m = 1..4 on already-normalized coordinates.
Feature fourier_encode(const Vec3& normalized);

Feature fourier_feature(const Vec3& position, double bound);

/// Linear-interpolated quantile of the per-point L-infinity norms.
double quantile_bound(std::span<const Vec3> positions, double q = kBoundQuantile);

/// Reads an ASCII PLY with x y z [r g b] vertex properties (colors 0..255 or 0..1 floats).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
};
PointCloud read_ascii_ply(const std::string& path);
void write_ascii_ply(const std::string& path, const PointCloud& cloud);

/// Initial Gaussians from a point cloud: isotropic scales from the mean
/// distance to the 3 nearest neighbours, identity rotation, opacity 0.1.
GaussianCloud cloud_from_points(const PointCloud& points, int sh_degree);

}  // namespace aqsp
