#pragma once

#include "aqsplat/appearance.hpp"
#include "aqsplat/math.hpp"
#include "aqsplat/nn.hpp"
#include "aqsplat/scene.hpp"

#include <array>
#include <random>
#include <span>

namespace aqsp {

inline constexpr int kContextChannels = 1 + kEmbeddingDim;
inline constexpr int kHeadHidden = 16;
inline constexpr int kAttenuationTerms = 2;
inline constexpr int kHeadOutputs = 12;

/// Per-pixel backscatter parameters, each 3 x P.
struct BackscatterParams {
  Eigen::MatrixXd b_inf;          ///< sigmoid, asymptotic veiling light
  Eigen::MatrixXd rate;           ///< softplus, accumulation rate b
  Eigen::MatrixXd residual;       ///< sigmoid, near-range term B_res
  Eigen::MatrixXd residual_rate;  ///< softplus, d
};

/// Per-pixel attenuation terms a'_p exp(-z a_p), each 3 x P, both in (0, 1).
struct AttenuationParams {
  std::array<Eigen::MatrixXd, kAttenuationTerms> amplitude;
  std::array<Eigen::MatrixXd, kAttenuationTerms> rate;
};

/// Raw head output rows: [B_inf(3), b(3), B_res(3), d(3)].
struct BackscatterHead {
  ConvNet net{{kContextChannels, kHeadHidden, kHeadOutputs}};
  void init(std::mt19937_64& rng);
};

/// Raw head output rows: [a'_1(3), a_1(3), a'_2(3), a_2(3)].
struct AttenuationHead {
  ConvNet net{{kContextChannels, kHeadHidden, kHeadOutputs}};
  void init(std::mt19937_64& rng);
};

struct MediumHeads {
  BackscatterHead backscatter;
  AttenuationHead attenuation;
  void init(std::mt19937_64& rng) {
    backscatter.init(rng);
    attenuation.init(rng);
  }
};

/// Concat(inverse depth, embedding broadcast to every pixel): 17 x P.
Eigen::MatrixXd build_context(const ImageBuffer& inverse_depth, const Embedding& embedding);

BackscatterParams backscatter_params(const Eigen::MatrixXd& raw);
AttenuationParams attenuation_params(const Eigen::MatrixXd& raw);

/// B_inf (1 - exp(-b z)) + B_res exp(-d z); z is 1 x P.
Eigen::MatrixXd backscatter_formula(const BackscatterParams& p, const Eigen::RowVectorXd& z);
/// sum_p a'_p exp(-z a_p).
Eigen::MatrixXd attenuation_formula(const AttenuationParams& p, const Eigen::RowVectorXd& z);

Eigen::MatrixXd estimate_backscatter(const BackscatterHead& head, const Eigen::MatrixXd& context,
                                     const Eigen::RowVectorXd& z, int width, int height);
Eigen::MatrixXd estimate_attenuation(const AttenuationHead& head, const Eigen::MatrixXd& context,
                                     const Eigen::RowVectorXd& z, int width, int height);

struct MediumOutput {
  Eigen::MatrixXd backscatter;  ///< 3 x P
  Eigen::MatrixXd attenuation;  ///< 3 x P
  Eigen::RowVectorXd z;         ///< distance used, 1 x P
};

/// I_c = a_c(z) * C_c + B_c.
Eigen::MatrixXd compose_underwater(const Eigen::MatrixXd& object_color, const MediumOutput& medium);

struct MediumCache {
  Eigen::MatrixXd context;
  ConvNet::Cache backscatter_cache, attenuation_cache;
  Eigen::MatrixXd backscatter_raw, attenuation_raw;
  BackscatterParams backscatter;
  AttenuationParams attenuation;
  Eigen::RowVectorXd inverse_depth;
  int width = 0, height = 0;
  bool valid = false;
};

/// Runs both heads on the context built from the rendered depth; z = depth,
/// context uses 1 / (depth + 1).
MediumOutput medium_forward(const MediumHeads& heads, const ImageBuffer& depth, const Embedding& embedding,
                            MediumCache* cache = nullptr, Fingerprint* fp = nullptr);

struct MediumInputGrads {
  Eigen::MatrixXd object_color;  ///< 3 x P
  Eigen::RowVectorXd depth;      ///< through both z and the inverse-depth context
  Embedding embedding = Embedding::Zero();
};

MediumInputGrads medium_backward(const MediumHeads& heads, const Eigen::MatrixXd& grad_image,
                                 const Eigen::MatrixXd& object_color, const MediumOutput& output,
                                 const MediumCache& cache, std::span<double> grad_backscatter,
                                 std::span<double> grad_attenuation);

inline Eigen::Map<const Eigen::MatrixXd> as_channel_matrix(const ImageBuffer& img) {
  return {img.data.data(), img.channels, static_cast<Eigen::Index>(img.pixel_count())};
}
inline Eigen::Map<Eigen::MatrixXd> as_channel_matrix(ImageBuffer& img) {
  return {img.data.data(), img.channels, static_cast<Eigen::Index>(img.pixel_count())};
}
ImageBuffer image_from_matrix(const Eigen::MatrixXd& m, int width, int height);

}  // namespace aqsp
