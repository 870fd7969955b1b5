#pragma once

#include "aqsplat/dataset.hpp"
#include "aqsplat/model.hpp"

#include <string>
#include <vector>

namespace aqsp {

struct EvalRow {
  std::size_t view_id = 0;
  double psnr_render = 0, ssim_render = 0;      ///< composed render vs observed image
  double psnr_restored = 0, ssim_restored = 0;  ///< white-balanced restoration vs clean image (NaN if unknown)
};

std::vector<EvalRow> evaluate_views(const Model& model, const Dataset& dataset, bool held_out_only = false);
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

/// Fitted medium statistics for one view, channel and distance bin.
struct MediumBin {
  std::size_t view_id = 0;
  int channel = 0;
  double z_center = 0;
  double mean_attenuation = 0;  ///< fitted a_c(z) at the pixel distances
  double mean_backscatter = 0;
  double mean_b_inf = 0;
  double true_attenuation = 0;  ///< mean exp(-beta_d z), NaN without ground truth
  std::size_t count = 0;
};

/// Bins foreground pixels (depth below the far plane) by distance. The fitted
/// curves are evaluated at the dataset distances with the per-pixel head
/// parameters of the model's own forward pass.
std::vector<MediumBin> medium_report(const Model& model, const Dataset& dataset, int bins,
                                     bool held_out_only = false);
void write_medium_csv(const std::string& path, const std::vector<MediumBin>& rows);

}  // namespace aqsp
