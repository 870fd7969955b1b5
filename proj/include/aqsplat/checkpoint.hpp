#pragma once

#include "aqsplat/model.hpp"

#include <string>

namespace aqsp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary layout:
///   "AQSP", u32 version, u64 count, u32 sh_degree, f64 normalization_bound,
///   per Gaussian (f64): position[3], rotation[4], log_scale[3], opacity_logit,
///   base_color[3 * (degree + 1)^2], appearance_feature[24];
///   u32 section count, then per section: u32 name length, name, u64 n, f32[n].
/// Sections: options, pose_embedder, color_net, backscatter_head, attenuation_head.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace aqsp
