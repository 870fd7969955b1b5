#pragma once

#include "aqsplat/model.hpp"
#include "aqsplat/scene.hpp"

namespace aqsp {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kStretchLowPercentile = 0.01;
inline constexpr double kStretchHighPercentile = 0.99;

/// Per-channel source and target bounds of the contrast stretch.
struct StretchRange {
  Vec3 source_min = Vec3::Zero();
  Vec3 source_max = Vec3::Ones();
  Vec3 target_min = Vec3::Zero();
  Vec3 target_max = Vec3::Ones();
};

/// Water-free render: the blended object colors, without the medium.
ImageBuffer restore_view(const Model& model, const Camera& camera);

/// Source bounds from the 1st/99th percentiles; target max per channel chosen
/// so the stretched, clamped channel mean equals the global mean.
StretchRange acs_range(const ImageBuffer& image);
/// (v - src_min) (dst_max - dst_min) / (src_max - src_min) + dst_min, clamped to [0, 1].
/// Channels with src_max <= src_min pass through unchanged.
ImageBuffer apply_stretch(const ImageBuffer& image, const StretchRange& range);
ImageBuffer acs_white_balance(const ImageBuffer& image);

/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b);
double ssim(const ImageBuffer& a, const ImageBuffer& b);

/// Linear-interpolated quantile of a sample (q in [0, 1]).
double quantile(std::vector<double> values, double q);

}  // namespace aqsp
