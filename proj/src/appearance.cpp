#include "aqsplat/appearance.hpp"

#include "aqsplat/errors.hpp"
#include "aqsplat/spherical_harmonics.hpp"

#include <cmath>

namespace aqsp {

Eigen::VectorXd pose_encoding(const Camera& camera) {
  std::array<double, kPoseScalars> scalars{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) scalars[3 * r + c] = camera.rotation(r, c);
  }
  for (int k = 0; k < 3; ++k) scalars[9 + k] = camera.translation[k];
  Eigen::VectorXd enc(kPoseEncodingDim);
  int idx = 0;
  for (double v : scalars) {
    for (int j = 0; j < kPoseOctaves; ++j) {
      const double arg = std::ldexp(v, j);
      enc[idx++] = std::sin(arg);
      enc[idx++] = std::cos(arg);
    }
  }
  return enc;
}

Embedding embed_pose(const PoseEmbedder& embedder, const Camera& camera, PoseEmbedder::Cache* cache,
                     Fingerprint* fp) {
  const Eigen::MatrixXd out = embedder.net.forward(pose_encoding(camera), cache ? &cache->mlp : nullptr, fp);
  return out.col(0);
}

void embed_pose_backward(const PoseEmbedder& embedder, const Embedding& grad, const PoseEmbedder::Cache& cache,
                         std::span<double> grad_params) {
  embedder.net.backward(Eigen::MatrixXd(grad), cache.mlp, grad_params);
}

void ColorNet::init(std::mt19937_64& rng) {
  net.init_uniform(rng);
  const int last = net.layer_count() - 1;
  net.weight(last).setZero();
  net.bias(last).setZero();
}

namespace {
Eigen::MatrixXd color_net_input(const Eigen::MatrixXd& base, const Eigen::MatrixXd& features, const Embedding& e) {
  const Eigen::Index n = base.cols();
  Eigen::MatrixXd x(kColorNetInput, n);
  x.topRows(3) = base;
  x.middleRows(3, kFeatureDim) = features;
  x.bottomRows(kEmbeddingDim) = e.replicate(1, n);
  return x;
}
}  // namespace

AffineColor color_affine(const ColorNet& net, const Vec3& base_color, const Feature& feature, const Embedding& e) {
  const Eigen::MatrixXd raw = net.net.forward(color_net_input(base_color, feature, e));
  AffineColor a;
  a.gamma = raw.col(0).head<3>().array().exp();
  a.beta = raw.col(0).segment<3>(3);
  return a;
}

Vec3 appearance_color(const ColorNet& net, int sh_degree, const GaussianPrimitive& primitive, const Vec3& view_dir,
                      const Embedding& embedding) {
  const Vec3 base = eval_sh_color(sh_degree, primitive.base_color, view_dir);
  const AffineColor a = color_affine(net, base, primitive.appearance_feature, embedding);
  return a.gamma.cwiseProduct(base) + a.beta;
}

Eigen::MatrixXd appearance_forward(const ColorNet& net, const Eigen::MatrixXd& base, const Eigen::MatrixXd& features,
                                   const Embedding& embedding, AppearanceCache* cache, Fingerprint* fp) {
  if (base.rows() != 3 || features.rows() != kFeatureDim || base.cols() != features.cols()) {
    throw UsageError("appearance_forward: input shape mismatch");
  }
  const Eigen::MatrixXd raw =
      net.net.forward(color_net_input(base, features, embedding), cache ? &cache->mlp : nullptr, fp);
  const Eigen::MatrixXd gamma = raw.topRows(3).array().exp();
  Eigen::MatrixXd out = gamma.cwiseProduct(base) + raw.bottomRows(3);
  if (cache) {
    cache->base = base;
    cache->gamma = gamma;
    cache->valid = true;
  }
  return out;
}

AppearanceInputGrads appearance_backward(const ColorNet& net, const Eigen::MatrixXd& grad_colors,
                                         const AppearanceCache& cache, std::span<double> grad_params) {
  if (!cache.valid) throw UsageError("appearance_backward: forward cache missing");
  if (grad_colors.rows() != 3 || grad_colors.cols() != cache.base.cols()) {
    throw UsageError("appearance_backward: gradient shape mismatch");
  }
  Eigen::MatrixXd grad_raw(6, grad_colors.cols());
  grad_raw.topRows(3) = grad_colors.cwiseProduct(cache.base).cwiseProduct(cache.gamma);
  grad_raw.bottomRows(3) = grad_colors;
  const Eigen::MatrixXd grad_in = net.net.backward(grad_raw, cache.mlp, grad_params);
  AppearanceInputGrads out;
  out.base = grad_colors.cwiseProduct(cache.gamma) + grad_in.topRows(3);
  out.embedding = grad_in.bottomRows(kEmbeddingDim).rowwise().sum();
  return out;
}

}  // namespace aqsp
