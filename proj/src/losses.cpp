#include "aqsplat/losses.hpp"

#include "aqsplat/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace aqsp {
namespace {

std::array<double, kSsimWindow> gaussian_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable zero-padded "same" filter of one w x h plane. The kernel is
// symmetric, so this is also its own adjoint.
std::vector<double> filter_plane(const std::vector<double>& src, int w, int h) {
  static const auto kernel = gaussian_kernel();
  constexpr int r = kSsimWindow / 2;
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        const int sx = x + k;
        if (sx >= 0 && sx < w) acc += kernel[k + r] * src[static_cast<std::size_t>(y) * w + sx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        const int sy = y + k;
        if (sy >= 0 && sy < h) acc += kernel[k + r] * tmp[static_cast<std::size_t>(sy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim_value(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) {
  if (!a.same_shape(b)) throw UsageError("ssim: shape mismatch");
  const int w = a.width, h = a.height, ch = a.channels;
  const std::size_t n = a.pixel_count();
  if (grad_a) *grad_a = ImageBuffer(w, h, ch);
  double total = 0;
  const double norm = 1.0 / (static_cast<double>(n) * ch);
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      pa[p] = a.data[p * ch + c];
      pb[p] = b.data[p * ch + c];
      paa[p] = pa[p] * pa[p];
      pbb[p] = pb[p] * pb[p];
      pab[p] = pa[p] * pb[p];
    }
    const auto mu_a = filter_plane(pa, w, h), mu_b = filter_plane(pb, w, h);
    const auto e_aa = filter_plane(paa, w, h), e_bb = filter_plane(pbb, w, h), e_ab = filter_plane(pab, w, h);
    std::vector<double> g_mu(n), g_eaa(n), g_eab(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double ma = mu_a[p], mb = mu_b[p];
      const double s_aa = e_aa[p] - ma * ma, s_bb = e_bb[p] - mb * mb, s_ab = e_ab[p] - ma * mb;
      const double n1 = 2 * ma * mb + kSsimC1, n2 = 2 * s_ab + kSsimC2;
      const double d1 = ma * ma + mb * mb + kSsimC1, d2 = s_aa + s_bb + kSsimC2;
      const double s = (n1 * n2) / (d1 * d2);
      total += s;
      if (grad_a) {
        const double dmu = (2 * mb * n2 - 2 * mb * n1) / (d1 * d2) - s * (2 * ma / d1 - 2 * ma / d2);
        g_mu[p] = norm * dmu;
        g_eaa[p] = norm * (-s / d2);
        g_eab[p] = norm * (2 * n1 / (d1 * d2));
      }
    }
    if (grad_a) {
      const auto f_mu = filter_plane(g_mu, w, h), f_aa = filter_plane(g_eaa, w, h), f_ab = filter_plane(g_eab, w, h);
      for (std::size_t p = 0; p < n; ++p) {
        grad_a->data[p * ch + c] = f_mu[p] + 2 * pa[p] * f_aa[p] + pb[p] * f_ab[p];
      }
    }
  }
  return total * norm;
}

double loss_recon(const ImageBuffer& render, const ImageBuffer& target, double lambda1, ImageBuffer* grad_render,
                  Fingerprint* fp) {
  if (!render.same_shape(target)) throw UsageError("loss_recon: shape mismatch");
  const double count = static_cast<double>(render.data.size());
  double l1 = 0;
  for (std::size_t k = 0; k < render.data.size(); ++k) l1 += std::abs(render.data[k] - target.data[k]);
  l1 /= count;
  double loss = (1.0 - lambda1) * l1;
  ImageBuffer ssim_grad;
  if (lambda1 != 0.0) {
    const double s = ssim_value(render, target, grad_render ? &ssim_grad : nullptr);
    loss += lambda1 * (1.0 - s) / 2.0;
  }
  if (grad_render) {
    *grad_render = ImageBuffer(render.width, render.height, render.channels);
    for (std::size_t k = 0; k < render.data.size(); ++k) {
      const double r = render.data[k] - target.data[k];
      const double sign = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
      grad_render->data[k] = (1.0 - lambda1) * sign / count;
      if (lambda1 != 0.0) grad_render->data[k] -= 0.5 * lambda1 * ssim_grad.data[k];
    }
  }
  if (fp) {
    for (std::size_t k = 0; k < render.data.size(); ++k) fp->mix_sign(render.data[k] - target.data[k]);
  }
  return loss;
}

namespace {

// Value at the median of the selected entries, with the indices (one or two)
// that define it.
double median_of(const std::vector<std::pair<double, std::size_t>>& values, std::vector<std::size_t>& idx) {
  auto v = values;
  const std::size_t n = v.size();
  auto cmp = [](const auto& a, const auto& b) { return a.first < b.first || (a.first == b.first && a.second < b.second); };
  std::nth_element(v.begin(), v.begin() + n / 2, v.end(), cmp);
  const auto upper = v[n / 2];
  idx.assign(1, upper.second);
  if (n % 2 == 1) return upper.first;
  const auto lower = *std::max_element(v.begin(), v.begin() + n / 2, cmp);
  idx.push_back(lower.second);
  return 0.5 * (upper.first + lower.first);
}

double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

DepthLossTerms loss_depth(const ImageBuffer& depth, const ImageBuffer* pseudo, const ImageBuffer& image,
                          const LossWeights& weights, ImageBuffer* grad_depth, Fingerprint* fp) {
  if (depth.channels != 1) throw UsageError("loss_depth: depth must have one channel");
  if (pseudo && !depth.same_shape(*pseudo)) throw UsageError("loss_depth: pseudo-depth shape mismatch");
  if (image.width != depth.width || image.height != depth.height) throw UsageError("loss_depth: image shape mismatch");
  const int w = depth.width, h = depth.height;
  const std::size_t npix = depth.pixel_count();
  const double inv_p = 1.0 / static_cast<double>(npix);
  DepthLossTerms terms;
  if (grad_depth) *grad_depth = ImageBuffer(w, h, 1);

  if (pseudo && weights.lambda2 != 0.0) {
    std::vector<std::pair<double, std::size_t>> own, ref;
    for (std::size_t p = 0; p < npix; ++p) {
      if (std::isfinite(pseudo->data[p])) {
        own.emplace_back(depth.data[p], p);
        ref.emplace_back(pseudo->data[p], p);
      }
    }
    if (!own.empty()) {
      std::vector<std::size_t> own_idx, ref_idx;
      const double med_own = median_of(own, own_idx);
      const double med_ref = median_of(ref, ref_idx);
      const double scale = med_ref != 0.0 ? med_own / med_ref : 1.0;
      terms.alignment = scale;
      const double inv_n = 1.0 / static_cast<double>(own.size());
      double sum = 0, dscale = 0;
      for (const auto& [d, p] : own) {
        const double r = d - scale * pseudo->data[p];
        sum += std::abs(r);
        if (fp) fp->mix_sign(r);
        if (grad_depth) {
          grad_depth->data[p] += weights.lambda2 * inv_n * sgn(r);
          dscale -= weights.lambda2 * inv_n * sgn(r) * pseudo->data[p];
        }
      }
      terms.pseudo = sum * inv_n;
      if (fp) {
        for (auto i : own_idx) fp->mix(i);
      }
      if (grad_depth && med_ref != 0.0) {
        const double share = 1.0 / static_cast<double>(own_idx.size());
        for (auto i : own_idx) grad_depth->data[i] += dscale * share / med_ref;
      }
    }
  }

  const int ch = image.channels;
  auto image_grad = [&](std::size_t p, std::size_t q) {
    double acc = 0;
    for (int c = 0; c < ch; ++c) acc += std::abs(image.data[q * ch + c] - image.data[p * ch + c]);
    return acc / ch;
  };
  double smooth = 0, tv_x = 0, tv_y = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int axis = 0; axis < 2; ++axis) {
        if ((axis == 0 && x + 1 >= w) || (axis == 1 && y + 1 >= h)) continue;
        const std::size_t q = axis == 0 ? p + 1 : p + w;
        const double gd = depth.data[q] - depth.data[p];
        const double denom = std::max(image_grad(p, q), weights.gamma_eps);
        smooth += std::abs(gd) / denom;
        (axis == 0 ? tv_x : tv_y) += std::abs(gd);
        if (fp) fp->mix_sign(gd);
        if (grad_depth) {
          const double g = sgn(gd) * inv_p * (weights.lambda3 / denom + weights.lambda4);
          grad_depth->data[q] += g;
          grad_depth->data[p] -= g;
        }
      }
    }
  }
  terms.smooth = smooth * inv_p;
  terms.tv = (tv_x + tv_y) * inv_p;
  terms.total = weights.lambda2 * terms.pseudo + weights.lambda3 * terms.smooth + weights.lambda4 * terms.tv;
  return terms;
}

double loss_scale(const GaussianCloud& cloud, double lambda5, std::vector<double>* grad_log_scales, Fingerprint* fp) {
  if (grad_log_scales) grad_log_scales->assign(cloud.log_scales.size(), 0.0);
  if (cloud.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(cloud.size());
  double sum = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    int arg = 0;
    for (int k = 1; k < 3; ++k) {
      if (cloud.log_scales[3 * i + k] < cloud.log_scales[3 * i + arg]) arg = k;
    }
    const double s = std::exp(cloud.log_scales[3 * i + arg]);
    sum += s;
    if (fp) fp->mix(static_cast<std::uint64_t>(arg));
    if (grad_log_scales) (*grad_log_scales)[3 * i + arg] = lambda5 * inv_n * s;
  }
  return lambda5 * sum * inv_n;
}

}  // namespace aqsp
