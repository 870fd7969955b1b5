#include "aqsplat/model.hpp"

#include "aqsplat/errors.hpp"
#include "aqsplat/spherical_harmonics.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace aqsp {

void Model::init_networks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  embedder.init(rng);
  color_net.init(rng);
  medium.init(rng);
}

ModelGrads ModelGrads::zeros(const Model& model) {
  ModelGrads g;
  g.gaussians = GaussianGrads::zeros(model.cloud);
  g.embedder.assign(model.embedder.net.params().size(), 0.0);
  g.color_net.assign(model.color_net.net.params().size(), 0.0);
  g.backscatter.assign(model.medium.backscatter.net.params().size(), 0.0);
  g.attenuation.assign(model.medium.attenuation.net.params().size(), 0.0);
  g.screen_grad.assign(model.cloud.size(), 0.0);
  g.visible.assign(model.cloud.size(), 0);
  return g;
}

void ModelGrads::set_zero() {
  gaussians.set_zero();
  for (auto* v : {&embedder, &color_net, &backscatter, &attenuation, &screen_grad}) std::fill(v->begin(), v->end(), 0.0);
  std::fill(visible.begin(), visible.end(), 0u);
}

ViewRender render_view(const Model& model, const Camera& camera, bool keep_cache) {
  const GaussianCloud& cloud = model.cloud;
  ViewRender v;
  v.projected = project(cloud, camera);
  sort_by_depth(v.projected);
  const auto k = static_cast<Eigen::Index>(v.projected.size());
  v.base_colors.resize(3, k);
  for (Eigen::Index i = 0; i < k; ++i) v.base_colors.col(i) = v.projected[i].color;

  const bool needs_embedding = model.options.appearance || model.options.medium;
  if (needs_embedding) {
    v.embedding = embed_pose(model.embedder, camera, keep_cache ? &v.embed_cache : nullptr, &v.fingerprint);
  }
  if (model.options.appearance && k > 0) {
    Eigen::MatrixXd features(kFeatureDim, k);
    for (Eigen::Index i = 0; i < k; ++i) features.col(i) = cloud.feature(v.projected[i].index);
    const Eigen::MatrixXd colors = appearance_forward(model.color_net, v.base_colors, features, v.embedding,
                                                      keep_cache ? &v.appearance_cache : nullptr, &v.fingerprint);
    for (Eigen::Index i = 0; i < k; ++i) v.projected[i].color = colors.col(i);
  }

  v.raster = blend(v.projected, camera.width, camera.height, keep_cache);
  v.fingerprint.mix(v.raster.fingerprint.value());
  v.inverse_depth = ImageBuffer(camera.width, camera.height, 1);
  for (std::size_t p = 0; p < v.inverse_depth.data.size(); ++p) {
    v.inverse_depth.data[p] = 1.0 / (v.raster.depth.data[p] + 1.0);
  }

  if (model.options.medium) {
    v.medium = medium_forward(model.medium, v.raster.depth, v.embedding, keep_cache ? &v.medium_cache : nullptr,
                              &v.fingerprint);
    v.image = image_from_matrix(compose_underwater(as_channel_matrix(v.raster.color), v.medium), camera.width,
                                camera.height);
  } else {
    v.image = v.raster.color;
  }
  return v;
}

void backward_view(const Model& model, const Camera& camera, const ViewRender& view, const ImageBuffer& grad_image,
                   const ImageBuffer& grad_inverse_depth, ModelGrads& grads) {
  if (!view.raster.cache) throw UsageError("backward_view: view was rendered without caches");
  const int w = camera.width, h = camera.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;

  RenderGrads rg;
  rg.depth = ImageBuffer(w, h, 1);
  Embedding grad_embedding = Embedding::Zero();
  if (!grad_image.data.empty()) {
    if (model.options.medium) {
      const MediumInputGrads mg =
          medium_backward(model.medium, as_channel_matrix(grad_image), as_channel_matrix(view.raster.color),
                          view.medium, view.medium_cache, grads.backscatter, grads.attenuation);
      rg.color = image_from_matrix(mg.object_color, w, h);
      for (std::size_t p = 0; p < npix; ++p) rg.depth.data[p] += mg.depth(static_cast<Eigen::Index>(p));
      grad_embedding += mg.embedding;
    } else {
      rg.color = grad_image;
    }
  }
  if (!grad_inverse_depth.data.empty()) {
    for (std::size_t p = 0; p < npix; ++p) {
      const double d = view.inverse_depth.data[p];
      rg.depth.data[p] -= grad_inverse_depth.data[p] * d * d;
    }
  }

  std::vector<ProjectedGrad> pg = blend_backward(rg, view.projected, view.raster);
  const auto k = static_cast<Eigen::Index>(view.projected.size());
  if (model.options.appearance && k > 0) {
    Eigen::MatrixXd grad_colors(3, k);
    for (Eigen::Index i = 0; i < k; ++i) grad_colors.col(i) = pg[i].color;
    const AppearanceInputGrads ag = appearance_backward(model.color_net, grad_colors, view.appearance_cache,
                                                        grads.color_net);
    for (Eigen::Index i = 0; i < k; ++i) pg[i].color = ag.base.col(i);
    grad_embedding += ag.embedding;
  }
  if (model.options.appearance || model.options.medium) {
    embed_pose_backward(model.embedder, grad_embedding, view.embed_cache, grads.embedder);
  }

  for (Eigen::Index i = 0; i < k; ++i) {
    const std::size_t idx = view.projected[i].index;
    const double gx = pg[i].mean2d.x() * 0.5 * w;
    const double gy = pg[i].mean2d.y() * 0.5 * h;
    grads.screen_grad[idx] += std::sqrt(gx * gx + gy * gy);
    grads.visible[idx] += 1;
  }
  project_backward(model.cloud, camera, view.projected, pg, grads.gaussians);
}

LossBreakdown view_loss(const Model& model, const Camera& camera, const ImageBuffer& target,
                        const ImageBuffer* pseudo_inverse_depth, const LossWeights& weights, ModelGrads* grads,
                        Fingerprint* fp) {
  const bool want_grad = grads != nullptr;
  const ViewRender view = render_view(model, camera, want_grad);
  if (fp) fp->mix(view.fingerprint.value());
  LossBreakdown out;
  ImageBuffer grad_image, grad_depth;
  out.recon = loss_recon(view.image, target, weights.lambda1, want_grad ? &grad_image : nullptr, fp);
  const bool depth_active = weights.lambda2 != 0.0 || weights.lambda3 != 0.0 || weights.lambda4 != 0.0;
  if (depth_active) {
    out.depth = loss_depth(view.inverse_depth, pseudo_inverse_depth, target, weights,
                           want_grad ? &grad_depth : nullptr, fp)
                    .total;
  }
  std::vector<double> grad_scale;
  if (weights.lambda5 != 0.0) {
    out.scale = loss_scale(model.cloud, weights.lambda5, want_grad ? &grad_scale : nullptr, fp);
  }
  if (want_grad) {
    backward_view(model, camera, view, grad_image, grad_depth, *grads);
    for (std::size_t j = 0; j < grad_scale.size(); ++j) grads->gaussians.log_scales[j] += grad_scale[j];
  }
  return out;
}

ImageBuffer pseudo_inverse_depth(const ImageBuffer& depth, double far) {
  ImageBuffer out(depth.width, depth.height, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    const double z = depth.data[p];
    out.data[p] = (std::isfinite(z) && z >= 0.0 && z < far) ? 1.0 / (z + 1.0) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace aqsp
