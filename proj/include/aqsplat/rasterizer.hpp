#pragma once

#include "aqsplat/math.hpp"
#include "aqsplat/scene.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace aqsp {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kMinOpacity = 1.0 / 255.0;
inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kTransmittanceStop = 1e-4;
inline constexpr double kBoxSigmas = 3.0;

struct ProjectedGaussian {
  std::size_t index = 0;  ///< row in the GaussianCloud
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  double view_depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  Vec3 view_dir = Vec3::UnitZ();  ///< unit vector camera center -> Gaussian, world frame
};

/// Gradients w.r.t. the fields of a ProjectedGaussian. cov2d uses the
/// full-matrix convention: dL = <cov2d_grad, d cov2d> for symmetric perturbations.
struct ProjectedGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  double view_depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct BlendRecord {
  std::uint32_t slot;
  double sigma;
  double transmittance;  ///< T before this contributor
};

/// Per-pixel ordered contributors in CSR layout.
struct BlendCache {
  std::vector<std::uint32_t> offsets;
  std::vector<BlendRecord> records;
};

struct RenderOutput {
  ImageBuffer color;      ///< 3 channels
  ImageBuffer depth;      ///< accumulated camera-space depth
  ImageBuffer alpha_acc;  ///< sum of blending weights
  std::optional<BlendCache> cache;
  std::size_t skipped_non_pd = 0;
  Fingerprint fingerprint;
};

struct RenderGrads {
  ImageBuffer color;
  ImageBuffer depth;
  ImageBuffer alpha_acc;
};

/// Gradient storage mirroring GaussianCloud's arrays (features excluded).
struct GaussianGrads {
  std::vector<double> positions, rotations, log_scales, opacity_logits, base_colors;

  static GaussianGrads zeros(const GaussianCloud& cloud);
  void set_zero();
};

/// Perspective-projects every Gaussian, culling those behind the near plane,
/// below the opacity floor, or with a 3-sigma box entirely outside the image.
/// Colors are the SH base colors for the current view direction.
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera);

/// Stable sort by (view_depth, index).
void sort_by_depth(std::vector<ProjectedGaussian>& projected);

/// Front-to-back alpha blending; input must be depth-sorted.
RenderOutput blend(const std::vector<ProjectedGaussian>& projected, int width, int height,
                   bool keep_cache = true);

std::vector<ProjectedGrad> blend_backward(const RenderGrads& grads, const std::vector<ProjectedGaussian>& projected,
                                          const RenderOutput& output);

/// Chain rule from projected quantities to Gaussian parameters. grads[k].color
/// is interpreted as dL/d(base color) of projected[k]. Accumulates into out.
void project_backward(const GaussianCloud& cloud, const Camera& camera,
                      const std::vector<ProjectedGaussian>& projected, const std::vector<ProjectedGrad>& grads,
                      GaussianGrads& out);

/// Convenience: project + sort + blend.
RenderOutput render(const GaussianCloud& cloud, const Camera& camera, bool keep_cache = false);

}  // namespace aqsp
