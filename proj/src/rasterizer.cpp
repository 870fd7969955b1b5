#include "aqsplat/rasterizer.hpp"

#include "aqsplat/errors.hpp"
#include "aqsplat/spherical_harmonics.hpp"

#include <algorithm>
#include <cmath>

namespace aqsp {

GaussianGrads GaussianGrads::zeros(const GaussianCloud& cloud) {
  GaussianGrads g;
  g.positions.assign(cloud.positions.size(), 0.0);
  g.rotations.assign(cloud.rotations.size(), 0.0);
  g.log_scales.assign(cloud.log_scales.size(), 0.0);
  g.opacity_logits.assign(cloud.opacity_logits.size(), 0.0);
  g.base_colors.assign(cloud.base_colors.size(), 0.0);
  return g;
}

void GaussianGrads::set_zero() {
  for (auto* v : {&positions, &rotations, &log_scales, &opacity_logits, &base_colors}) {
    std::fill(v->begin(), v->end(), 0.0);
  }
}

namespace {

struct ProjectionTerms {
  Vec3 t;
  Mat23 jac;
};

ProjectionTerms projection_terms(const Camera& cam, const Vec3& position) {
  ProjectionTerms p;
  p.t = cam.rotation * position + cam.translation;
  const double tz = p.t.z(), inv = 1.0 / tz, inv2 = inv * inv;
  p.jac << cam.fx * inv, 0.0, -cam.fx * p.t.x() * inv2, 0.0, cam.fy * inv, -cam.fy * p.t.y() * inv2;
  return p;
}

Vec2 box_half_extent(const Mat2& cov) {
  return {kBoxSigmas * std::sqrt(std::max(cov(0, 0), 0.0)), kBoxSigmas * std::sqrt(std::max(cov(1, 1), 0.0))};
}

// Inclusive pixel range whose centers (i + 0.5) lie within [center - half, center + half].
bool pixel_range(double center, double half, int size, int& lo, int& hi) {
  lo = std::max(0, static_cast<int>(std::ceil(center - half - 0.5)));
  hi = std::min(size - 1, static_cast<int>(std::floor(center + half - 0.5)));
  return lo <= hi;
}

}  // namespace

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera) {
  std::vector<ProjectedGaussian> out;
  out.reserve(cloud.size());
  const Vec3 cam_center = camera.center();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double alpha = cloud.opacity(i);
    if (alpha < kMinOpacity) continue;
    const Vec3 pos = cloud.position(i);
    const ProjectionTerms pt = projection_terms(camera, pos);
    if (pt.t.z() <= kNearPlane) continue;

    const Mat3 sigma = covariance_from_params(cloud.rotation(i), cloud.log_scale(i));
    const Mat23 jw = pt.jac * camera.rotation;
    ProjectedGaussian pg;
    pg.index = i;
    pg.cov2d = jw * sigma * jw.transpose() + kLowPassDilation * Mat2::Identity();
    pg.mean2d = Vec2(camera.fx * pt.t.x() / pt.t.z() + camera.cx, camera.fy * pt.t.y() / pt.t.z() + camera.cy);
    pg.view_depth = pt.t.z();
    pg.opacity = alpha;

    const Vec2 half = box_half_extent(pg.cov2d);
    int x0, x1, y0, y1;
    if (!pixel_range(pg.mean2d.x(), half.x(), camera.width, x0, x1) ||
        !pixel_range(pg.mean2d.y(), half.y(), camera.height, y0, y1)) {
      continue;
    }
    pg.view_dir = (pos - cam_center).normalized();
    pg.color = eval_sh_color(cloud.sh_degree(), cloud.base_color(i), pg.view_dir);
    out.push_back(pg);
  }
  return out;
}

void sort_by_depth(std::vector<ProjectedGaussian>& projected) {
  std::stable_sort(projected.begin(), projected.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
    if (a.view_depth != b.view_depth) return a.view_depth < b.view_depth;
    return a.index < b.index;
  });
}

RenderOutput blend(const std::vector<ProjectedGaussian>& projected, int width, int height, bool keep_cache) {
  if (width <= 0 || height <= 0) throw UsageError("blend: image size must be positive");
  for (std::size_t k = 1; k < projected.size(); ++k) {
    const auto& a = projected[k - 1];
    const auto& b = projected[k];
    if (b.view_depth < a.view_depth || (b.view_depth == a.view_depth && b.index < a.index)) {
      throw UsageError("blend: input is not depth-sorted");
    }
  }

  RenderOutput out;
  out.color = ImageBuffer(width, height, 3);
  out.depth = ImageBuffer(width, height, 1);
  out.alpha_acc = ImageBuffer(width, height, 1);
  const std::size_t npix = out.depth.pixel_count();

  // Conic (inverse covariance) per slot; non-PD covariances are skipped.
  std::vector<Mat2> conic(projected.size());
  std::vector<bool> usable(projected.size(), true);
  for (std::size_t s = 0; s < projected.size(); ++s) {
    const Mat2& c = projected[s].cov2d;
    const double det = c.determinant();
    if (!(det > 0.0) || !(c(0, 0) > 0.0)) {
      usable[s] = false;
      ++out.skipped_non_pd;
      continue;
    }
    conic[s] = c.inverse();
  }

  // Bin slots into per-pixel candidate lists in depth order.
  std::vector<std::uint32_t> counts(npix + 1, 0);
  auto for_each_pixel = [&](std::size_t s, auto&& fn) {
    const Vec2 half = box_half_extent(projected[s].cov2d);
    int x0, x1, y0, y1;
    if (!pixel_range(projected[s].mean2d.x(), half.x(), width, x0, x1) ||
        !pixel_range(projected[s].mean2d.y(), half.y(), height, y0, y1)) {
      return;
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) fn(static_cast<std::size_t>(y) * width + x);
    }
  };
  for (std::size_t s = 0; s < projected.size(); ++s) {
    if (usable[s]) for_each_pixel(s, [&](std::size_t p) { ++counts[p + 1]; });
  }
  for (std::size_t p = 0; p < npix; ++p) counts[p + 1] += counts[p];
  std::vector<std::uint32_t> candidates(counts[npix]);
  {
    std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
    for (std::size_t s = 0; s < projected.size(); ++s) {
      if (usable[s]) {
        for_each_pixel(s, [&](std::size_t p) { candidates[cursor[p]++] = static_cast<std::uint32_t>(s); });
      }
    }
  }

  BlendCache cache;
  if (keep_cache) {
    cache.offsets.assign(npix + 1, 0);
    cache.records.reserve(candidates.size());
  }
  for (std::size_t p = 0; p < npix; ++p) {
    const double px = static_cast<double>(p % width) + 0.5;
    const double py = static_cast<double>(p / width) + 0.5;
    double transmittance = 1.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    std::uint32_t used = 0;
    for (std::uint32_t k = counts[p]; k < counts[p + 1]; ++k) {
      const std::uint32_t s = candidates[k];
      const ProjectedGaussian& g = projected[s];
      const double dx = px - g.mean2d.x(), dy = py - g.mean2d.y();
      const Mat2& a = conic[s];
      const double power = -0.5 * (a(0, 0) * dx * dx + 2.0 * a(0, 1) * dx * dy + a(1, 1) * dy * dy);
      const double sigma = g.opacity * std::exp(power);
      const double w = sigma * transmittance;
      color += w * g.color;
      depth += w * g.view_depth;
      if (keep_cache) cache.records.push_back({s, sigma, transmittance});
      out.fingerprint.mix(g.index);
      ++used;
      transmittance *= 1.0 - sigma;
      if (transmittance < kTransmittanceStop) break;
    }
    out.fingerprint.mix(used);
    if (keep_cache) cache.offsets[p + 1] = static_cast<std::uint32_t>(cache.records.size());
    for (int c = 0; c < 3; ++c) out.color.data[3 * p + c] = color[c];
    out.depth.data[p] = depth;
    out.alpha_acc.data[p] = 1.0 - transmittance;
  }
  if (keep_cache) out.cache = std::move(cache);
  return out;
}

std::vector<ProjectedGrad> blend_backward(const RenderGrads& grads, const std::vector<ProjectedGaussian>& projected,
                                          const RenderOutput& output) {
  if (!output.cache) throw UsageError("blend_backward: forward pass ran without a blend cache");
  const BlendCache& cache = *output.cache;
  const int width = output.depth.width;
  const std::size_t npix = output.depth.pixel_count();
  const bool has_c = !grads.color.data.empty(), has_d = !grads.depth.data.empty(),
             has_a = !grads.alpha_acc.data.empty();
  if ((has_c && grads.color.pixel_count() != npix) || (has_d && grads.depth.pixel_count() != npix) ||
      (has_a && grads.alpha_acc.pixel_count() != npix)) {
    throw UsageError("blend_backward: gradient image size mismatch");
  }

  std::vector<ProjectedGrad> out(projected.size());
  std::vector<Mat2> grad_conic(projected.size(), Mat2::Zero());
  for (std::size_t p = 0; p < npix; ++p) {
    const Vec3 gc = has_c ? Vec3(grads.color.data[3 * p], grads.color.data[3 * p + 1], grads.color.data[3 * p + 2])
                          : Vec3::Zero();
    const double gd = has_d ? grads.depth.data[p] : 0.0;
    const double ga = has_a ? grads.alpha_acc.data[p] : 0.0;
    if (gc.isZero(0.0) && gd == 0.0 && ga == 0.0) continue;
    const double px = static_cast<double>(p % width) + 0.5;
    const double py = static_cast<double>(p / width) + 0.5;

    // Back-to-front: rest_* is what the contributors behind the current one render.
    Vec3 rest_c = Vec3::Zero();
    double rest_d = 0.0, rest_a = 0.0;
    for (std::uint32_t k = cache.offsets[p + 1]; k-- > cache.offsets[p];) {
      const BlendRecord& rec = cache.records[k];
      const ProjectedGaussian& g = projected[rec.slot];
      ProjectedGrad& pg = out[rec.slot];
      const double w = rec.sigma * rec.transmittance;
      pg.color += w * gc;
      pg.view_depth += w * gd;
      const double dsigma =
          rec.transmittance * (gc.dot(g.color - rest_c) + gd * (g.view_depth - rest_d) + ga * (1.0 - rest_a));
      rest_c = rec.sigma * g.color + (1.0 - rec.sigma) * rest_c;
      rest_d = rec.sigma * g.view_depth + (1.0 - rec.sigma) * rest_d;
      rest_a = rec.sigma + (1.0 - rec.sigma) * rest_a;

      const double gauss = rec.sigma / g.opacity;
      pg.opacity += dsigma * gauss;
      const double dpower = dsigma * rec.sigma;
      const Vec2 d(px - g.mean2d.x(), py - g.mean2d.y());
      const Mat2 conic = g.cov2d.inverse();
      pg.mean2d += dpower * (conic * d);
      grad_conic[rec.slot] += (-0.5 * dpower) * (d * d.transpose());
    }
  }
  for (std::size_t s = 0; s < projected.size(); ++s) {
    if (grad_conic[s].isZero(0.0)) continue;
    const Mat2 conic = projected[s].cov2d.inverse();
    out[s].cov2d = -conic * grad_conic[s] * conic;
  }
  return out;
}

void project_backward(const GaussianCloud& cloud, const Camera& camera,
                      const std::vector<ProjectedGaussian>& projected, const std::vector<ProjectedGrad>& grads,
                      GaussianGrads& out) {
  if (grads.size() != projected.size()) throw UsageError("project_backward: gradient count mismatch");
  const Mat3& w = camera.rotation;
  const Vec3 cam_center = camera.center();
  for (std::size_t s = 0; s < projected.size(); ++s) {
    const ProjectedGrad& g = grads[s];
    const std::size_t i = projected[s].index;
    const Vec3 pos = cloud.position(i);
    const ProjectionTerms pt = projection_terms(camera, pos);
    const double tx = pt.t.x(), ty = pt.t.y(), tz = pt.t.z();
    const double inv = 1.0 / tz, inv2 = inv * inv, inv3 = inv2 * inv;

    Vec3 grad_t = Vec3::Zero();
    grad_t.z() += g.view_depth;
    grad_t.x() += g.mean2d.x() * camera.fx * inv;
    grad_t.z() -= g.mean2d.x() * camera.fx * tx * inv2;
    grad_t.y() += g.mean2d.y() * camera.fy * inv;
    grad_t.z() -= g.mean2d.y() * camera.fy * ty * inv2;

    const Vec4 q = cloud.rotation(i);
    const Mat3 rot = quaternion_to_rotation(q);
    const Vec3 scale = cloud.log_scale(i).array().exp();
    const Mat3 m = rot * scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    const Mat3 view_cov = w * sigma * w.transpose();
    const Mat23 jw = pt.jac * w;

    const Mat2 gcov = 0.5 * (g.cov2d + g.cov2d.transpose());
    const Mat3 grad_sigma = jw.transpose() * gcov * jw;
    const Mat23 grad_jac = 2.0 * gcov * pt.jac * view_cov;
    grad_t.z() += grad_jac(0, 0) * (-camera.fx * inv2);
    grad_t.x() += grad_jac(0, 2) * (-camera.fx * inv2);
    grad_t.z() += grad_jac(0, 2) * (2.0 * camera.fx * tx * inv3);
    grad_t.z() += grad_jac(1, 1) * (-camera.fy * inv2);
    grad_t.y() += grad_jac(1, 2) * (-camera.fy * inv2);
    grad_t.z() += grad_jac(1, 2) * (2.0 * camera.fy * ty * inv3);

    Vec3 grad_pos = w.transpose() * grad_t;

    const Mat3 grad_m = 2.0 * grad_sigma * m;
    const Mat3 grad_rot = grad_m * scale.asDiagonal();
    for (int k = 0; k < 3; ++k) {
      out.log_scales[3 * i + k] += grad_m.col(k).dot(rot.col(k)) * scale[k];
    }
    Eigen::Map<Vec4>(&out.rotations[4 * i]) += quaternion_to_rotation_backward(q, grad_rot);

    const double alpha = projected[s].opacity;
    out.opacity_logits[i] += g.opacity * alpha * (1.0 - alpha);

    const int stride = cloud.color_stride();
    const Vec3 offset = pos - cam_center;
    const Vec3 dir = offset.normalized();
    const Vec3 grad_dir = eval_sh_backward(cloud.sh_degree(), cloud.base_color(i), dir, g.color,
                                           std::span<double>(out.base_colors.data() + i * stride, stride));
    if (cloud.sh_degree() > 0) {
      grad_pos += (grad_dir - dir * dir.dot(grad_dir)) / offset.norm();
    }
    Eigen::Map<Vec3>(&out.positions[3 * i]) += grad_pos;
  }
}

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, bool keep_cache) {
  auto projected = project(cloud, camera);
  sort_by_depth(projected);
  return blend(projected, camera.width, camera.height, keep_cache);
}

}  // namespace aqsp
