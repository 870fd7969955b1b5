#pragma once

#include "aqsplat/appearance.hpp"
#include "aqsplat/losses.hpp"
#include "aqsplat/medium.hpp"
#include "aqsplat/rasterizer.hpp"
#include "aqsplat/scene.hpp"

#include <cstdint>
#include <vector>

namespace aqsp {

struct ModelOptions {
  bool appearance = true;  ///< false: blend the SH base colors directly
  bool medium = true;      ///< false: identity medium, I = C
};

/// Everything that is optimized for one scene.
struct Model {
  GaussianCloud cloud;
  PoseEmbedder embedder;
  ColorNet color_net;
  MediumHeads medium;
  ModelOptions options;

  void init_networks(std::uint64_t seed);
};

struct ModelGrads {
  GaussianGrads gaussians;
  std::vector<double> embedder, color_net, backscatter, attenuation;
  /// Per-Gaussian |dL/dmean2d| in NDC units and visibility, for densification.
  std::vector<double> screen_grad;
  std::vector<std::uint32_t> visible;

  static ModelGrads zeros(const Model& model);
  void set_zero();
};

/// One rendered view with every cache needed for the backward pass.
struct ViewRender {
  Embedding embedding = Embedding::Zero();
  std::vector<ProjectedGaussian> projected;
  Eigen::MatrixXd base_colors;  ///< 3 x K, SH-evaluated, aligned with projected
  RenderOutput raster;          ///< color is the object image C, depth the accumulated depth
  ImageBuffer inverse_depth;    ///< 1 / (depth + 1)
  ImageBuffer image;            ///< composed underwater image I
  MediumOutput medium;
  PoseEmbedder::Cache embed_cache;
  AppearanceCache appearance_cache;
  MediumCache medium_cache;
  Fingerprint fingerprint;
};

ViewRender render_view(const Model& model, const Camera& camera, bool keep_cache = false);

/// Backpropagates dL/dI and dL/dD (either may be empty) into grads.
void backward_view(const Model& model, const Camera& camera, const ViewRender& view, const ImageBuffer& grad_image,
                   const ImageBuffer& grad_inverse_depth, ModelGrads& grads);

/// Total training loss on one view: reconstruction of the degraded target,
/// depth terms against the optional pseudo inverse depth, and the scale
/// penalty. Accumulates gradients when grads is non-null.
LossBreakdown view_loss(const Model& model, const Camera& camera, const ImageBuffer& target,
                        const ImageBuffer* pseudo_inverse_depth, const LossWeights& weights,
                        ModelGrads* grads = nullptr, Fingerprint* fp = nullptr);

/// Inverse form 1 / (z + 1) of a metric depth map; pixels at or beyond
/// far are marked unsupervised with NaN.
ImageBuffer pseudo_inverse_depth(const ImageBuffer& depth, double far);

}  // namespace aqsp
