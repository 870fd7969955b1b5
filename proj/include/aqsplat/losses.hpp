#pragma once

#include "aqsplat/math.hpp"
#include "aqsplat/scene.hpp"

#include <vector>

namespace aqsp {

struct LossWeights {
  double lambda1 = 0.2;    ///< D-SSIM share of the reconstruction loss
  double lambda2 = 0.1;    ///< pseudo-depth L1
  double lambda3 = 0.01;   ///< edge-aware depth smoothness
  double lambda4 = 0.1;    ///< depth total variation
  double lambda5 = 100.0;  ///< minimum-scale penalty
  double gamma_eps = 1e-3; ///< floor on the image-gradient denominator
};

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean local SSIM over pixels and channels, Gaussian 11x11 window (sigma 1.5),
/// zero-padded "same" filtering. If grad_a is non-null it receives dSSIM/da.
double ssim_value(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a = nullptr);

/// (1 - lambda1) mean|render - target| + lambda1 (1 - SSIM) / 2.
double loss_recon(const ImageBuffer& render, const ImageBuffer& target, double lambda1,
                  ImageBuffer* grad_render = nullptr, Fingerprint* fp = nullptr);

struct DepthLossTerms {
  double pseudo = 0.0;  ///< unweighted mean |D - s D'| over valid pixels
  double smooth = 0.0;  ///< unweighted edge-aware term
  double tv = 0.0;      ///< unweighted anisotropic TV
  double total = 0.0;   ///< lambda2 pseudo + lambda3 smooth + lambda4 tv
  double alignment = 1.0;
};

/// Depth loss on inverse-depth maps. Non-finite entries of pseudo mark pixels
/// without supervision; pseudo may be null to drop that term. pseudo is
/// median-aligned to depth (the alignment scale is differentiated). image
/// only weights the smoothness term and receives no gradient.
DepthLossTerms loss_depth(const ImageBuffer& depth, const ImageBuffer* pseudo, const ImageBuffer& image,
                          const LossWeights& weights, ImageBuffer* grad_depth = nullptr, Fingerprint* fp = nullptr);

/// lambda5 * mean_i min_k exp(log_scale_ik); the gradient goes to the first argmin.
double loss_scale(const GaussianCloud& cloud, double lambda5, std::vector<double>* grad_log_scales = nullptr,
                  Fingerprint* fp = nullptr);

struct LossBreakdown {
  double recon = 0.0;
  double depth = 0.0;
  double scale = 0.0;
  double total() const { return recon + depth + scale; }
};

}  // namespace aqsp
