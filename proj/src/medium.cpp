#include "aqsplat/medium.hpp"

#include "aqsplat/errors.hpp"

#include <cmath>

namespace aqsp {
namespace {

Eigen::MatrixXd sigmoid_of(const Eigen::MatrixXd& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }
Eigen::MatrixXd softplus_of(const Eigen::MatrixXd& x) { return x.unaryExpr([](double v) { return softplus(v); }); }

}  // namespace

void BackscatterHead::init(std::mt19937_64& rng) {
  net.init_uniform(rng);
  net.weight(1).setZero();
  auto b = net.bias(1);
  b.segment<3>(0).setConstant(logit(0.2));
  b.segment<3>(3).setConstant(inverse_softplus(1.0));
  b.segment<3>(6).setConstant(logit(0.01));
  b.segment<3>(9).setConstant(inverse_softplus(1.0));
}

void AttenuationHead::init(std::mt19937_64& rng) {
  net.init_uniform(rng);
  net.weight(1).setZero();
  auto b = net.bias(1);
  b.segment<3>(0).setConstant(0.0);
  b.segment<3>(3).setConstant(logit(0.4));
  b.segment<3>(6).setConstant(0.0);
  b.segment<3>(9).setConstant(logit(0.6));
}

Eigen::MatrixXd build_context(const ImageBuffer& inverse_depth, const Embedding& embedding) {
  if (inverse_depth.channels != 1) throw UsageError("build_context: depth must have one channel");
  const auto npix = static_cast<Eigen::Index>(inverse_depth.pixel_count());
  Eigen::MatrixXd ctx(kContextChannels, npix);
  ctx.row(0) = as_channel_matrix(inverse_depth).row(0);
  ctx.bottomRows(kEmbeddingDim) = embedding.replicate(1, npix);
  return ctx;
}

BackscatterParams backscatter_params(const Eigen::MatrixXd& raw) {
  if (raw.rows() != kHeadOutputs) throw UsageError("backscatter_params: expected 12 rows");
  return {sigmoid_of(raw.middleRows(0, 3)), softplus_of(raw.middleRows(3, 3)), sigmoid_of(raw.middleRows(6, 3)),
          softplus_of(raw.middleRows(9, 3))};
}

AttenuationParams attenuation_params(const Eigen::MatrixXd& raw) {
  if (raw.rows() != kHeadOutputs) throw UsageError("attenuation_params: expected 12 rows");
  AttenuationParams p;
  for (int t = 0; t < kAttenuationTerms; ++t) {
    p.amplitude[t] = sigmoid_of(raw.middleRows(6 * t, 3));
    p.rate[t] = sigmoid_of(raw.middleRows(6 * t + 3, 3));
  }
  return p;
}

Eigen::MatrixXd backscatter_formula(const BackscatterParams& p, const Eigen::RowVectorXd& z) {
  const auto zz = z.replicate(3, 1).array();
  return (p.b_inf.array() * (1.0 - (-p.rate.array() * zz).exp()) +
          p.residual.array() * (-p.residual_rate.array() * zz).exp())
      .matrix();
}

Eigen::MatrixXd attenuation_formula(const AttenuationParams& p, const Eigen::RowVectorXd& z) {
  const auto zz = z.replicate(3, 1).array();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, z.size());
  for (int t = 0; t < kAttenuationTerms; ++t) {
    a.array() += p.amplitude[t].array() * (-zz * p.rate[t].array()).exp();
  }
  return a;
}

Eigen::MatrixXd estimate_backscatter(const BackscatterHead& head, const Eigen::MatrixXd& context,
                                     const Eigen::RowVectorXd& z, int width, int height) {
  if (z.size() != context.cols()) throw UsageError("estimate_backscatter: z size mismatch");
  return backscatter_formula(backscatter_params(head.net.forward(context, width, height)), z);
}

Eigen::MatrixXd estimate_attenuation(const AttenuationHead& head, const Eigen::MatrixXd& context,
                                     const Eigen::RowVectorXd& z, int width, int height) {
  if (z.size() != context.cols()) throw UsageError("estimate_attenuation: z size mismatch");
  return attenuation_formula(attenuation_params(head.net.forward(context, width, height)), z);
}

Eigen::MatrixXd compose_underwater(const Eigen::MatrixXd& object_color, const MediumOutput& medium) {
  if (object_color.rows() != 3 || object_color.cols() != medium.attenuation.cols() ||
      medium.backscatter.cols() != object_color.cols()) {
    throw UsageError("compose_underwater: shape mismatch");
  }
  return medium.attenuation.cwiseProduct(object_color) + medium.backscatter;
}

ImageBuffer image_from_matrix(const Eigen::MatrixXd& m, int width, int height) {
  if (m.cols() != static_cast<Eigen::Index>(width) * height) throw UsageError("image_from_matrix: size mismatch");
  ImageBuffer img(width, height, static_cast<int>(m.rows()));
  as_channel_matrix(img) = m;
  return img;
}

MediumOutput medium_forward(const MediumHeads& heads, const ImageBuffer& depth, const Embedding& embedding,
                            MediumCache* cache, Fingerprint* fp) {
  if (depth.channels != 1) throw UsageError("medium_forward: depth must have one channel");
  const int w = depth.width, h = depth.height;
  MediumOutput out;
  out.z = as_channel_matrix(depth).row(0);
  ImageBuffer inverse(w, h, 1);
  for (std::size_t p = 0; p < depth.pixel_count(); ++p) inverse.data[p] = 1.0 / (depth.data[p] + 1.0);
  const Eigen::MatrixXd ctx = build_context(inverse, embedding);

  MediumCache local;
  MediumCache& c = cache ? *cache : local;
  c.backscatter_raw = heads.backscatter.net.forward(ctx, w, h, &c.backscatter_cache, fp);
  c.attenuation_raw = heads.attenuation.net.forward(ctx, w, h, &c.attenuation_cache, fp);
  c.backscatter = backscatter_params(c.backscatter_raw);
  c.attenuation = attenuation_params(c.attenuation_raw);
  out.backscatter = backscatter_formula(c.backscatter, out.z);
  out.attenuation = attenuation_formula(c.attenuation, out.z);
  if (cache) {
    c.context = ctx;
    c.inverse_depth = as_channel_matrix(inverse).row(0);
    c.width = w;
    c.height = h;
    c.valid = true;
  }
  return out;
}

MediumInputGrads medium_backward(const MediumHeads& heads, const Eigen::MatrixXd& grad_image,
                                 const Eigen::MatrixXd& object_color, const MediumOutput& output,
                                 const MediumCache& cache, std::span<double> grad_backscatter,
                                 std::span<double> grad_attenuation) {
  if (!cache.valid) throw UsageError("medium_backward: forward cache missing");
  const Eigen::Index npix = output.z.size();
  if (grad_image.rows() != 3 || grad_image.cols() != npix || object_color.cols() != npix) {
    throw UsageError("medium_backward: gradient shape mismatch");
  }
  const auto zz = output.z.replicate(3, 1).array();

  MediumInputGrads out;
  out.object_color = grad_image.cwiseProduct(output.attenuation);
  const Eigen::ArrayXXd grad_a = grad_image.array() * object_color.array();
  const Eigen::ArrayXXd grad_b = grad_image.array();
  Eigen::ArrayXXd grad_z = Eigen::ArrayXXd::Zero(3, npix);

  // Backscatter terms.
  const BackscatterParams& bp = cache.backscatter;
  const Eigen::ArrayXXd e_b = (-bp.rate.array() * zz).exp();
  const Eigen::ArrayXXd e_d = (-bp.residual_rate.array() * zz).exp();
  Eigen::MatrixXd graw_b(kHeadOutputs, npix);
  {
    const Eigen::ArrayXXd g_binf = grad_b * (1.0 - e_b);
    const Eigen::ArrayXXd g_rate = grad_b * bp.b_inf.array() * zz * e_b;
    const Eigen::ArrayXXd g_res = grad_b * e_d;
    const Eigen::ArrayXXd g_resrate = -grad_b * bp.residual.array() * zz * e_d;
    grad_z += grad_b * (bp.b_inf.array() * bp.rate.array() * e_b - bp.residual.array() * bp.residual_rate.array() * e_d);
    const auto& raw = cache.backscatter_raw;
    graw_b.middleRows(0, 3) = (g_binf * bp.b_inf.array() * (1.0 - bp.b_inf.array())).matrix();
    graw_b.middleRows(3, 3) =
        (g_rate * raw.middleRows(3, 3).unaryExpr([](double v) { return sigmoid(v); }).array()).matrix();
    graw_b.middleRows(6, 3) = (g_res * bp.residual.array() * (1.0 - bp.residual.array())).matrix();
    graw_b.middleRows(9, 3) =
        (g_resrate * raw.middleRows(9, 3).unaryExpr([](double v) { return sigmoid(v); }).array()).matrix();
  }

  // Attenuation terms.
  const AttenuationParams& ap = cache.attenuation;
  Eigen::MatrixXd graw_a(kHeadOutputs, npix);
  for (int t = 0; t < kAttenuationTerms; ++t) {
    const Eigen::ArrayXXd amp = ap.amplitude[t].array();
    const Eigen::ArrayXXd rate = ap.rate[t].array();
    const Eigen::ArrayXXd e = (-zz * rate).exp();
    const Eigen::ArrayXXd g_amp = grad_a * e;
    const Eigen::ArrayXXd g_rate = -grad_a * amp * zz * e;
    grad_z += -grad_a * amp * rate * e;
    graw_a.middleRows(6 * t, 3) = (g_amp * amp * (1.0 - amp)).matrix();
    graw_a.middleRows(6 * t + 3, 3) = (g_rate * rate * (1.0 - rate)).matrix();
  }

  const Eigen::MatrixXd gctx_b = heads.backscatter.net.backward(graw_b, cache.backscatter_cache, grad_backscatter);
  const Eigen::MatrixXd gctx_a = heads.attenuation.net.backward(graw_a, cache.attenuation_cache, grad_attenuation);
  const Eigen::MatrixXd gctx = gctx_b + gctx_a;

  out.depth = grad_z.colwise().sum().matrix();
  // D = 1 / (depth + 1)  =>  dD/ddepth = -D^2
  out.depth -= gctx.row(0).cwiseProduct(cache.inverse_depth.cwiseProduct(cache.inverse_depth));
  out.embedding = gctx.bottomRows(kEmbeddingDim).rowwise().sum();
  return out;
}

}  // namespace aqsp
