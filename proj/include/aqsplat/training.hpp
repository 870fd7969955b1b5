#pragma once

#include "aqsplat/dataset.hpp"
#include "aqsplat/losses.hpp"
#include "aqsplat/model.hpp"
#include "aqsplat/optimizer.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace aqsp {

/// Every tunable of a training run. Schedules are fractions of `iterations`.
struct TrainConfig {
  int iterations = 2000;
  std::uint64_t seed = 0;
  int sh_degree = 0;
  LossWeights weights;
  bool appearance = true;
  bool medium = true;
  bool depth_loss = true;
  bool scale_loss = true;
  double far = 10.0;  ///< pseudo-depth at or beyond this is unsupervised

  double lr_position_init = 1.6e-4;  ///< multiplied by the camera extent
  double lr_position_final = 1.6e-6;
  double lr_color = 2.5e-3;
  double lr_color_rest_divisor = 20.0;  ///< higher SH bands
  double lr_opacity = 5e-2;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_network = 1e-3;
  /// Leading fraction of iterations in which base colors and the ColorNet are
  /// frozen while geometry, the pose embedder and the medium heads train.
  double medium_warmup_fraction = 0.1;

  int densify_every = 100;
  double densify_start_fraction = 0.25;
  double densify_stop_fraction = 0.5;
  double densify_grad_threshold = 2e-4;
  double percent_dense = 0.01;  ///< clone/split boundary, fraction of the extent
  double prune_opacity = 0.005;
  double split_scale_divisor = 1.6;
  int split_children = 2;
  std::uint64_t max_gaussians = 20000;

  int log_every = 1;
  int checkpoint_every = 0;  ///< 0: final checkpoint only

  /// Applies "key = value" lines; '#' starts a comment. Unknown keys throw UsageError.
  void apply(const std::string& text);
  static TrainConfig from_file(const std::string& path);
  std::string to_text() const;
};

struct MetricsRow {
  int iteration = 0;
  double recon = 0, depth = 0, scale = 0;
  double psnr_heldout = 0;
};

/// Running screen-space gradient statistics between densification events.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<std::uint32_t> count;

  void reset(std::size_t n) {
    grad_sum.assign(n, 0.0);
    count.assign(n, 0);
  }
  void accumulate(const ModelGrads& grads);
};

/// Outcome of densify_and_prune: `appended` rows were added at the end, then
/// rows with keep[i] == false (indices over the grown cloud) were removed.
struct DensifyResult {
  std::size_t cloned = 0, split = 0, pruned = 0;
  std::size_t appended = 0;
  std::vector<bool> keep;
};

DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, const TrainConfig& config,
                                double scene_extent, std::mt19937_64& rng);

/// Adam state for every parameter group of a Model.
struct ModelOptimizer {
  Adam positions, rotations, log_scales, opacity_logits, base_colors;
  Adam embedder, color_net, backscatter, attenuation;

  explicit ModelOptimizer(const Model& model);
  void apply(const DensifyResult& result, const GaussianCloud& cloud);
};

double position_learning_rate(const TrainConfig& config, int iteration, double scene_extent);

/// 1.1 x the largest distance of a camera center from their mean.
double camera_extent(const std::vector<Camera>& cameras);

struct TrainingRun {
  Model model;
  std::vector<MetricsRow> metrics;
};

/// Called after every iteration with the iteration number (1-based) and model.
using TrainCallback = std::function<void(int, const Model&)>;

/// Full training loop. Writes checkpoint.aqsp and metrics.csv into out_dir
/// when out_dir is non-empty. On a non-finite loss, dumps the offending
/// buffers into out_dir/nan_dump and throws NumericError.
TrainingRun train(const Dataset& dataset, const GaussianCloud& initial, const TrainConfig& config,
                  const std::string& out_dir = {}, const TrainCallback& callback = {});

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace aqsp
