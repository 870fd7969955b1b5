#pragma once

#include "aqsplat/math.hpp"
#include "aqsplat/nn.hpp"
#include "aqsplat/scene.hpp"

#include <random>
#include <span>

namespace aqsp {

inline constexpr int kEmbeddingDim = 16;
inline constexpr int kPoseScalars = 12;
inline constexpr int kPoseOctaves = 4;
inline constexpr int kPoseEncodingDim = kPoseScalars * kPoseOctaves * 2;
inline constexpr int kHiddenUnits = 128;
inline constexpr int kColorNetInput = 3 + kFeatureDim + kEmbeddingDim;

using Embedding = Eigen::Matrix<double, kEmbeddingDim, 1>;

/// [sin(2^j x), cos(2^j x)], j = 0..3, for the 9 rotation entries (row-major) then t.
Eigen::VectorXd pose_encoding(const Camera& camera);

/// Two-layer perceptron mapping the encoded camera pose to a view embedding.
struct PoseEmbedder {
  Mlp net{{kPoseEncodingDim, kHiddenUnits, kEmbeddingDim}};

  struct Cache {
    Mlp::Cache mlp;
  };

  void init(std::mt19937_64& rng) { net.init_uniform(rng); }
};

Embedding embed_pose(const PoseEmbedder& embedder, const Camera& camera, PoseEmbedder::Cache* cache = nullptr,
                     Fingerprint* fp = nullptr);
void embed_pose_backward(const PoseEmbedder& embedder, const Embedding& grad, const PoseEmbedder::Cache& cache,
                         std::span<double> grad_params);

/// Three-layer perceptron F(c_i, f_i, e_j) -> (raw gamma, beta). gamma = exp(raw).
/// init() zeroes the output layer so the affine map starts as the identity.
struct ColorNet {
  Mlp net{{kColorNetInput, kHiddenUnits, kHiddenUnits, 6}};

  void init(std::mt19937_64& rng);
};

struct AffineColor {
  Vec3 gamma;
  Vec3 beta;
};

AffineColor color_affine(const ColorNet& net, const Vec3& base_color, const Feature& feature, const Embedding& e);

/// gamma * base + beta for one primitive seen along view_dir.
Vec3 appearance_color(const ColorNet& net, int sh_degree, const GaussianPrimitive& primitive, const Vec3& view_dir,
                      const Embedding& embedding);

struct AppearanceCache {
  Mlp::Cache mlp;
  Eigen::MatrixXd base;   ///< 3 x N
  Eigen::MatrixXd gamma;  ///< 3 x N
  bool valid = false;
};

/// Batched color synthesis; base (3 x N), features (24 x N). Returns 3 x N.
Eigen::MatrixXd appearance_forward(const ColorNet& net, const Eigen::MatrixXd& base, const Eigen::MatrixXd& features,
                                   const Embedding& embedding, AppearanceCache* cache = nullptr,
                                   Fingerprint* fp = nullptr);

struct AppearanceInputGrads {
  Eigen::MatrixXd base;  ///< 3 x N
  Embedding embedding = Embedding::Zero();
};

/// Accumulates ColorNet parameter gradients; returns gradients w.r.t. the base
/// colors and the embedding.
AppearanceInputGrads appearance_backward(const ColorNet& net, const Eigen::MatrixXd& grad_colors,
                                         const AppearanceCache& cache, std::span<double> grad_params);

}  // namespace aqsp
