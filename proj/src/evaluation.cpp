#include "aqsplat/evaluation.hpp"

#include "aqsplat/errors.hpp"
#include "aqsplat/restoration.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace aqsp {

std::vector<EvalRow> evaluate_views(const Model& model, const Dataset& dataset, bool held_out_only) {
  std::vector<EvalRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (held_out_only && !Dataset::is_held_out(i)) continue;
    EvalRow r;
    r.view_id = i;
    const ViewRender v = render_view(model, dataset.cameras[i]);
    r.psnr_render = psnr(v.image, dataset.images[i]);
    r.ssim_render = ssim(v.image, dataset.images[i]);
    if (dataset.clean_images.empty()) {
      r.psnr_restored = r.ssim_restored = nan;
    } else {
      const ImageBuffer restored = acs_white_balance(v.raster.color);
      r.psnr_restored = psnr(restored, dataset.clean_images[i]);
      r.ssim_restored = ssim(restored, dataset.clean_images[i]);
    }
    rows.push_back(r);
  }
  return rows;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "view_id,psnr_render,ssim_render,psnr_restored,ssim_restored\n" << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.view_id << ',' << r.psnr_render << ',' << r.ssim_render << ',' << r.psnr_restored << ',' << r.ssim_restored
      << '\n';
  }
}

std::vector<MediumBin> medium_report(const Model& model, const Dataset& dataset, int bins, bool held_out_only) {
  if (bins < 1) throw UsageError("medium_report: need at least one bin");
  if (dataset.depth_maps.empty()) throw UsageError("medium_report: dataset has no depth maps");
  const double far = dataset.medium ? dataset.medium->far : 10.0;
  double z_min = std::numeric_limits<double>::infinity(), z_max = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (held_out_only && !Dataset::is_held_out(i)) continue;
    for (double z : dataset.depth_maps[i].data) {
      if (z < far) {
        z_min = std::min(z_min, z);
        z_max = std::max(z_max, z);
      }
    }
  }
  std::vector<MediumBin> rows;
  if (!(z_max > z_min)) return rows;
  const double width = (z_max - z_min) / bins;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (held_out_only && !Dataset::is_held_out(i)) continue;
    MediumCache cache;
    const ViewRender v = render_view(model, dataset.cameras[i]);
    medium_forward(model.medium, v.raster.depth, v.embedding, &cache);
    const ImageBuffer& zmap = dataset.depth_maps[i];
    const Eigen::RowVectorXd z = as_channel_matrix(zmap).row(0);
    const Eigen::MatrixXd att = attenuation_formula(cache.attenuation, z);
    const Eigen::MatrixXd bs = backscatter_formula(cache.backscatter, z);
    for (int c = 0; c < 3; ++c) {
      std::vector<MediumBin> acc(static_cast<std::size_t>(bins));
      for (Eigen::Index p = 0; p < z.size(); ++p) {
        if (!(z[p] < far)) continue;
        const int b = std::min(bins - 1, static_cast<int>((z[p] - z_min) / width));
        MediumBin& m = acc[static_cast<std::size_t>(b)];
        m.mean_attenuation += att(c, p);
        m.mean_backscatter += bs(c, p);
        m.mean_b_inf += cache.backscatter.b_inf(c, p);
        if (dataset.medium) m.true_attenuation += std::exp(-dataset.medium->beta_d[c] * z[p]);
        ++m.count;
      }
      for (int b = 0; b < bins; ++b) {
        MediumBin m = acc[static_cast<std::size_t>(b)];
        if (m.count == 0) continue;
        const double n = static_cast<double>(m.count);
        m.view_id = i;
        m.channel = c;
        m.z_center = z_min + (b + 0.5) * width;
        m.mean_attenuation /= n;
        m.mean_backscatter /= n;
        m.mean_b_inf /= n;
        m.true_attenuation = dataset.medium ? m.true_attenuation / n : nan;
        rows.push_back(m);
      }
    }
  }
  return rows;
}

void write_medium_csv(const std::string& path, const std::vector<MediumBin>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "view_id,channel,z_center,mean_attenuation,mean_backscatter,mean_b_inf,true_attenuation,count\n"
    << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.view_id << ',' << r.channel << ',' << r.z_center << ',' << r.mean_attenuation << ',' << r.mean_backscatter
      << ',' << r.mean_b_inf << ',' << r.true_attenuation << ',' << r.count << '\n';
  }
}

}  // namespace aqsp
