#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "aqsplat/errors.hpp"
#include "aqsplat/losses.hpp"
#include "aqsplat/restoration.hpp"

using namespace aqsp;

namespace {

// Mean local SSIM with the full 11x11 window applied directly (no separable passes).
double reference_ssim(const ImageBuffer& a, const ImageBuffer& b) {
  double k1[11], sum = 0;
  for (int i = 0; i < 11; ++i) {
    k1[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    sum += k1[i];
  }
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int j = -5; j <= 5; ++j) {
          for (int i = -5; i <= 5; ++i) {
            const int sx = x + i, sy = y + j;
            if (sx < 0 || sy < 0 || sx >= a.width || sy >= a.height) continue;
            const double w = k1[i + 5] * k1[j + 5] / (sum * sum);
            const double va = a.at(sx, sy, c), vb = b.at(sx, sy, c);
            ma += w * va;
            mb += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        const double c1 = 1e-4, c2 = 9e-4;
        total += ((2 * ma * mb + c1) * (2 * (ab - ma * mb) + c2)) /
                 ((ma * ma + mb * mb + c1) * (aa - ma * ma + bb - mb * mb + c2));
      }
    }
  }
  return total / (static_cast<double>(a.pixel_count()) * a.channels);
}

ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageBuffer img(w, h, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

double channel_mean(const ImageBuffer& img, int c) {
  double s = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) s += img.data[p * 3 + c];
  return s / static_cast<double>(img.pixel_count());
}

}  // namespace

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({7}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile({}, 0.5), ParameterDomainError);
}

TEST_CASE("psnr values") {
  const ImageBuffer a(8, 8, 3, 0.2);
  CHECK(psnr(a, a) == 99.0);
  const ImageBuffer b(8, 8, 3, 0.3);
  // MSE = 0.01
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / 0.01)));
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  CHECK(psnr(ImageBuffer(8, 8, 3, 0.0), ImageBuffer(8, 8, 3, 1.0)) == doctest::Approx(0.0));
  std::mt19937_64 rng(1);
  const ImageBuffer x = random_image(rng, 8, 8, 3), y = random_image(rng, 8, 8, 3);
  CHECK(psnr(x, y) == psnr(y, x));
}

TEST_CASE("ssim against the direct window oracle") {
  std::mt19937_64 rng(2);
  const ImageBuffer a = random_image(rng, 16, 16, 3), b = random_image(rng, 16, 16, 3);
  CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) < 1e-12);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(ssim(a, a) == 1.0);
  const ImageBuffer flat(16, 16, 3, 0.4);
  CHECK(ssim(flat, flat) == 1.0);
}

TEST_CASE("ssim of a pattern against its complement is low") {
  ImageBuffer a(16, 16, 1), inv(16, 16, 1);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      a.at(x, y) = ((x / 2 + y / 3) % 2) ? 0.9 : 0.1;
      inv.at(x, y) = 1.0 - a.at(x, y);
    }
  }
  const double s = ssim(a, inv);
  CHECK(s == doctest::Approx(reference_ssim(a, inv)).epsilon(1e-12));
  CHECK(s < 0.5);
}

TEST_CASE("stretch is the affine range map") {
  ImageBuffer img(8, 8, 3, 0.4);
  StretchRange r;
  r.source_min = Vec3::Constant(0.2);
  r.source_max = Vec3::Constant(0.6);
  const ImageBuffer out = apply_stretch(img, r);
  const double oracle = (0.4 - 0.2) * (1.0 - 0.0) / (0.6 - 0.2) + 0.0;
  CHECK(out.at(0, 0, 0) == doctest::Approx(oracle));
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.5));
  r.source_max[1] = 0.2;
  CHECK(apply_stretch(img, r).at(0, 0, 1) == 0.4);
}

TEST_CASE("white balance leaves a constant gray image unchanged") {
  const ImageBuffer gray(12, 12, 3, 0.37);
  CHECK(acs_white_balance(gray).data == gray.data);
}

TEST_CASE("white balance is the identity on balanced full-range images") {
  std::mt19937_64 rng(3);
  ImageBuffer img(20, 20, 3);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> vals;
    for (int i = 0; i < 400; ++i) vals.push_back(i < 40 ? 0.0 : (i >= 360 ? 1.0 : (i - 40) / 319.0));
    std::shuffle(vals.begin(), vals.end(), rng);
    for (int p = 0; p < 400; ++p) img.data[p * 3 + c] = vals[p];
  }
  const ImageBuffer out = acs_white_balance(img);
  for (std::size_t k = 0; k < img.data.size(); ++k) CHECK(out.data[k] == doctest::Approx(img.data[k]).epsilon(1e-12));
}

TEST_CASE("white balance is monotone and meets the gray-world mean") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    ImageBuffer img(24, 24, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 tint(0.2 + 0.2 * u(rng), 0.4 + 0.2 * u(rng), 0.6 + 0.3 * u(rng));
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
      for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = tint[c] * (0.3 + 0.7 * u(rng));
    }
    const ImageBuffer out = acs_white_balance(img);
    double global = 0;
    for (double v : img.data) global += v;
    global /= static_cast<double>(img.data.size());
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(channel_mean(out, c) - global) < 0.02);
      for (std::size_t p = 0; p + 1 < img.pixel_count(); ++p) {
        const double a = img.data[p * 3 + c], b = img.data[(p + 1) * 3 + c];
        const double oa = out.data[p * 3 + c], ob = out.data[(p + 1) * 3 + c];
        if (a < b) CHECK(oa <= ob);
        if (a > b) CHECK(oa >= ob);
      }
    }
  }
}

TEST_CASE("white balance rejects bad input") {
  CHECK_THROWS_AS(acs_white_balance(ImageBuffer(8, 8, 1)), UsageError);
  ImageBuffer bad(8, 8, 3, 0.5);
  bad.data[4] = NAN;
  CHECK_THROWS_AS(acs_white_balance(bad), ParameterDomainError);
}
