#include "aqsplat/restoration.hpp"

#include "aqsplat/errors.hpp"
#include "aqsplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace aqsp {

ImageBuffer restore_view(const Model& model, const Camera& camera) {
  Model object_only_view = model;
  object_only_view.options.medium = false;
  return render_view(object_only_view, camera).image;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ParameterDomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::vector<double> channel_values(const ImageBuffer& image, int c) {
  std::vector<double> v(image.pixel_count());
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = image.data[p * image.channels + c];
  return v;
}

double stretched_mean(const std::vector<double>& v, double lo, double hi, double target_max) {
  double sum = 0;
  for (double x : v) sum += std::clamp((x - lo) * target_max / (hi - lo), 0.0, 1.0);
  return sum / static_cast<double>(v.size());
}

}  // namespace

StretchRange acs_range(const ImageBuffer& image) {
  if (image.channels != 3) throw UsageError("acs: need a 3-channel image");
  StretchRange r;
  double global = 0;
  for (double v : image.data) {
    if (!std::isfinite(v)) throw ParameterDomainError("acs: non-finite pixel value");
    global += v;
  }
  global /= static_cast<double>(image.data.size());
  for (int c = 0; c < 3; ++c) {
    const auto v = channel_values(image, c);
    const double lo = quantile(v, kStretchLowPercentile), hi = quantile(v, kStretchHighPercentile);
    r.source_min[c] = lo;
    r.source_max[c] = hi;
    r.target_min[c] = 0.0;
    if (!(hi > lo)) {
      r.target_max[c] = 1.0;
      continue;
    }
    // The stretched mean is non-decreasing in the target max; bisect for the gray-world mean.
    const double target = std::clamp(global, 0.0, 1.0);
    if (stretched_mean(v, lo, hi, 1.0) <= target + 1e-12) {
      r.target_max[c] = 1.0;
      continue;
    }
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (a + b);
      (stretched_mean(v, lo, hi, mid) < target ? a : b) = mid;
    }
    r.target_max[c] = 0.5 * (a + b);
  }
  return r;
}

ImageBuffer apply_stretch(const ImageBuffer& image, const StretchRange& r) {
  ImageBuffer out = image;
  const auto n = image.pixel_count();
  for (int c = 0; c < image.channels; ++c) {
    const double lo = r.source_min[c], hi = r.source_max[c];
    if (!(hi > lo)) continue;
    const double gain = (r.target_max[c] - r.target_min[c]) / (hi - lo);
    for (std::size_t p = 0; p < n; ++p) {
      double& v = out.data[p * image.channels + c];
      v = std::clamp((v - lo) * gain + r.target_min[c], 0.0, 1.0);
    }
  }
  return out;
}

ImageBuffer acs_white_balance(const ImageBuffer& image) { return apply_stretch(image, acs_range(image)); }

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw UsageError("psnr: shape mismatch");
  double mse = 0;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const double d = a.data[k] - b.data[k];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) { return ssim_value(a, b); }

}  // namespace aqsp
