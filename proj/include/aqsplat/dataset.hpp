#pragma once

#include "aqsplat/scene.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aqsp {

/// Ground-truth water for the simulator: I = J exp(-beta_d z) + b_inf (1 - exp(-beta_b z)).
struct MediumTruth {
  Vec3 beta_d = Vec3(1.3, 1.2, 0.9);
  Vec3 beta_b = Vec3(0.95, 0.85, 0.7);
  Vec3 b_inf = Vec3(0.07, 0.2, 0.39);
  double far = 10.0;  ///< distance assigned to background pixels
};

enum class SceneKind { PlaneGrid, SphereField, BoxRoom };

struct SyntheticSceneSpec {
  SceneKind kind = SceneKind::SphereField;
  int gaussians = 500;
  int cameras = 24;
  double ring_radius = 2.2;
  double ring_height = 1.2;
  Vec3 look_at = Vec3(0.0, 0.0, 0.2);
  double fov_degrees = 60.0;
  int width = 64;
  int height = 64;
  MediumTruth medium;
  std::uint64_t seed = 0;
  double position_noise = 0.02;  ///< fraction of the scene extent
  double color_noise = 0.05;
  int sh_degree = 0;

  /// "paper" (64x64, 500 Gaussians, 24 views) or "toy" (32x32, 150 Gaussians, 12 views).
  static SyntheticSceneSpec preset(const std::string& name, std::uint64_t seed);
  void validate() const;
};

struct Dataset {
  std::vector<Camera> cameras;
  std::vector<ImageBuffer> images;        ///< degraded observations I
  std::vector<ImageBuffer> clean_images;  ///< J, empty when unknown
  std::vector<ImageBuffer> depth_maps;    ///< metric depth z, empty when absent
  std::optional<MediumTruth> medium;

  std::size_t size() const { return cameras.size(); }
  /// Views with index % 8 == 0 are held out from training.
  static bool is_held_out(std::size_t view) { return view % 8 == 0; }
  void validate() const;
};

struct SyntheticScene {
  Dataset dataset;       ///< full-precision images and depths
  GaussianCloud truth;
  GaussianCloud initial; ///< truth with seeded position and color noise
};

SyntheticScene generate_scene(const SyntheticSceneSpec& spec);

/// Applies the water model per pixel; z is a 1-channel distance map.
ImageBuffer apply_water(const ImageBuffer& clean, const ImageBuffer& z, const MediumTruth& medium);
/// Closed-form inverse of apply_water.
ImageBuffer remove_water(const ImageBuffer& degraded, const ImageBuffer& z, const MediumTruth& medium);

/// Directory layout: cameras.json, images/NNN.png, clean/NNN.png, depth/NNN.f32,
/// medium.json, manifest.json (FNV-1a checksums of every file), and init.aqsp
/// when an initial cloud is given.
void save_dataset(const std::string& dir, const Dataset& dataset, const GaussianCloud* initial = nullptr);
Dataset load_dataset(const std::string& dir);

/// init.aqsp if present, else points.ply through cloud_from_points.
GaussianCloud load_initial_cloud(const std::string& dir, int sh_degree = 0);

/// One camera record (object, or a one-element array) in the cameras.json format.
Camera load_camera_file(const std::string& path);

/// The dataset as it reads back from disk: 8-bit images, float32 depths.
Dataset as_stored(const Dataset& dataset);

std::uint64_t fnv1a_file(const std::string& path);

}  // namespace aqsp
