#include "aqsplat/scene.hpp"

#include "aqsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace aqsp {

Mat3 quaternion_to_rotation(const Vec4& q_raw) {
  const Vec4 q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quaternion_to_rotation_backward(const Vec4& q_raw, const Mat3& g) {
  const double norm = q_raw.norm();
  const Vec4 q = q_raw / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  dq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
               w * g(2, 1) - 2 * x * g(2, 2));
  dq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
               z * g(2, 1) - 2 * y * g(2, 2));
  dq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
               y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return (dq - q * q.dot(dq)) / norm;
}

Vec4 rotation_to_quaternion(const Mat3& r) {
  Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0) out = -out;
  return out / out.norm();
}

GaussianCloud::GaussianCloud(int sh_degree) : sh_degree_(sh_degree) {
  if (sh_degree < 0 || sh_degree > 3) {
    throw ParameterDomainError("spherical-harmonic degree must be in [0, 3]");
  }
}

void GaussianCloud::push_back(const GaussianPrimitive& g) {
  if (static_cast<int>(g.base_color.size()) != color_stride()) {
    throw UsageError("base_color length does not match the cloud's SH degree");
  }
  positions.insert(positions.end(), g.position.data(), g.position.data() + 3);
  rotations.insert(rotations.end(), g.rotation.data(), g.rotation.data() + 4);
  log_scales.insert(log_scales.end(), g.log_scale.data(), g.log_scale.data() + 3);
  opacity_logits.push_back(g.opacity_logit);
  base_colors.insert(base_colors.end(), g.base_color.begin(), g.base_color.end());
  features.insert(features.end(), g.appearance_feature.data(), g.appearance_feature.data() + kFeatureDim);
}

GaussianPrimitive GaussianCloud::primitive(std::size_t i) const {
  GaussianPrimitive g;
  g.position = position(i);
  g.rotation = rotation(i);
  g.log_scale = log_scale(i);
  g.opacity_logit = opacity_logits[i];
  const auto c = base_color(i);
  g.base_color.assign(c.begin(), c.end());
  g.appearance_feature = feature(i);
  return g;
}

void GaussianCloud::set_primitive(std::size_t i, const GaussianPrimitive& g) {
  Eigen::Map<Vec3>{&positions[3 * i]} = g.position;
  Eigen::Map<Vec4>{&rotations[4 * i]} = g.rotation;
  Eigen::Map<Vec3>{&log_scales[3 * i]} = g.log_scale;
  opacity_logits[i] = g.opacity_logit;
  std::copy(g.base_color.begin(), g.base_color.end(), base_colors.begin() + i * color_stride());
  Eigen::Map<Feature>{&features[kFeatureDim * i]} = g.appearance_feature;
}

namespace {
template <typename T>
void filter_rows(std::vector<T>& v, std::size_t stride, const std::vector<bool>& keep) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    if (out != i) {
      std::copy_n(v.begin() + i * stride, stride, v.begin() + out * stride);
    }
    ++out;
  }
  v.resize(out * stride);
}
}  // namespace

void GaussianCloud::filter(const std::vector<bool>& keep) {
  if (keep.size() != size()) throw UsageError("filter mask size mismatch");
  filter_rows(positions, 3, keep);
  filter_rows(rotations, 4, keep);
  filter_rows(log_scales, 3, keep);
  filter_rows(opacity_logits, 1, keep);
  filter_rows(base_colors, color_stride(), keep);
  filter_rows(features, kFeatureDim, keep);
}

void GaussianCloud::renormalize_rotations() {
  for (std::size_t i = 0; i < size(); ++i) {
    Eigen::Map<Vec4> q(&rotations[4 * i]);
    const double n = q.norm();
    if (n > 0) q /= n;
  }
}

void GaussianCloud::refresh_features() {
  for (std::size_t i = 0; i < size(); ++i) {
    Eigen::Map<Feature>{&features[kFeatureDim * i]} = fourier_feature(position(i), normalization_bound);
  }
}

void Camera::validate() const {
  if (width < 8 || height < 8) {
    throw ParameterDomainError("camera image must be at least 8x8");
  }
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw ParameterDomainError("camera pose is not finite");
  }
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw ParameterDomainError("camera rotation is not orthonormal");
  }
  if (!(fx > 0) || !(fy > 0)) {
    throw ParameterDomainError("focal lengths must be positive");
  }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

ImageBuffer ImageBuffer::clamped() const {
  ImageBuffer out = *this;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Mat3 covariance_from_params(const Vec4& rotation, const Vec3& log_scale) {
  if (!rotation.allFinite() || !log_scale.allFinite()) {
    throw ParameterDomainError("covariance parameters must be finite");
  }
  if (rotation.norm() == 0.0) {
    throw ParameterDomainError("rotation quaternion must be non-zero");
  }
  const Mat3 r = quaternion_to_rotation(rotation);
  const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

Vec3 normalize_position(const Vec3& position, double bound) {
  if (!(bound > 0)) throw ParameterDomainError("normalization bound must be positive");
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    out[k] = std::clamp(0.5 * (position[k] / bound + 1.0), 0.0, 1.0);
  }
  return out;
}

Feature fourier_encode(const Vec3& p) {
  if (!p.allFinite()) throw ParameterDomainError("position must be finite");
  Feature f;
  int idx = 0;
  for (int k = 0; k < 3; ++k) {
    for (int m = 1; m <= kFeatureOctaves; ++m) {
      const double arg = std::numbers::pi * p[k] * static_cast<double>(1 << m);
      f[idx++] = std::sin(arg);
      f[idx++] = std::cos(arg);
    }
  }
  return f;
}

Feature fourier_feature(const Vec3& position, double bound) {
  return fourier_encode(normalize_position(position, bound));
}

double quantile_bound(std::span<const Vec3> positions, double q) {
  if (positions.empty()) throw ParameterDomainError("quantile of an empty point set");
  std::vector<double> norms;
  norms.reserve(positions.size());
  for (const Vec3& p : positions) norms.push_back(p.cwiseAbs().maxCoeff());
  std::sort(norms.begin(), norms.end());
  const double h = (static_cast<double>(norms.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, norms.size() - 1);
  return norms[lo] + (h - static_cast<double>(lo)) * (norms[hi] - norms[lo]);
}

PointCloud read_ascii_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open PLY file: " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw MalformedRecordError("not a PLY file: " + path);
  std::size_t vertex_count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::string name;
      ss >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ss >> vertex_count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw MalformedRecordError("only ASCII PLY is supported: " + path);
  auto find = [&](const std::string& n) -> int {
    const auto it = std::find(props.begin(), props.end(), n);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int ir = find("red") >= 0 ? find("red") : find("r");
  const int ig = find("green") >= 0 ? find("green") : find("g");
  const int ib = find("blue") >= 0 ? find("blue") : find("b");
  if (ix < 0 || iy < 0 || iz < 0) throw MalformedRecordError("PLY lacks x/y/z: " + path);
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  std::vector<double> values(props.size());
  std::vector<double> raw_colors;
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!std::getline(in, line)) throw MalformedRecordError("PLY truncated: " + path);
    std::istringstream ss(line);
    for (double& x : values) {
      if (!(ss >> x)) throw MalformedRecordError("PLY vertex row malformed: " + path);
    }
    cloud.points.emplace_back(values[ix], values[iy], values[iz]);
    cloud.colors.emplace_back(has_color ? Vec3(values[ir], values[ig], values[ib]) : Vec3(0.5, 0.5, 0.5));
  }
  double max_c = 0;
  for (const Vec3& c : cloud.colors) max_c = std::max(max_c, c.maxCoeff());
  if (has_color && max_c > 1.0) {
    for (Vec3& c : cloud.colors) c /= 255.0;
  }
  return cloud;
}

void write_ascii_ply(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw MissingFileError("cannot write PLY file: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Vec3 c = i < cloud.colors.size() ? cloud.colors[i] : Vec3(0.5, 0.5, 0.5);
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    for (int k = 0; k < 3; ++k) out << ' ' << static_cast<int>(std::lround(std::clamp(c[k], 0.0, 1.0) * 255));
    out << '\n';
  }
}

GaussianCloud cloud_from_points(const PointCloud& pc, int sh_degree) {
  if (pc.points.empty()) throw ParameterDomainError("point cloud is empty");
  GaussianCloud cloud(sh_degree);
  cloud.normalization_bound = quantile_bound(pc.points);
  if (!(cloud.normalization_bound > 0)) cloud.normalization_bound = 1.0;
  const std::size_t n = pc.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    // Brute-force 3-NN; point clouds here are a few thousand points at most.
    std::array<double, 3> best = {1e300, 1e300, 1e300};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (pc.points[i] - pc.points[j]).squaredNorm();
      if (d2 < best[2]) {
        best[2] = d2;
        std::sort(best.begin(), best.end());
      }
    }
    double mean = 0;
    int count = 0;
    for (double b : best) {
      if (b < 1e299) {
        mean += b;
        ++count;
      }
    }
    const double dist = count > 0 ? std::sqrt(std::max(mean / count, 1e-7)) : 0.01;
    GaussianPrimitive g;
    g.position = pc.points[i];
    g.log_scale = Vec3::Constant(std::log(dist));
    g.opacity_logit = logit(0.1);
    g.base_color.assign(static_cast<std::size_t>(cloud.color_stride()), 0.0);
    for (int c = 0; c < 3; ++c) g.base_color[c] = pc.colors[i][c];
    g.appearance_feature = fourier_feature(g.position, cloud.normalization_bound);
    cloud.push_back(g);
  }
  return cloud;
}

}  // namespace aqsp
