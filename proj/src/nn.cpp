#include "aqsplat/nn.hpp"

#include "aqsplat/errors.hpp"

#include <cmath>

namespace aqsp {
namespace {

void apply_leaky(Eigen::MatrixXd& m, Fingerprint* fp) {
  double* d = m.data();
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    if (fp) fp->mix(d[k] > 0.0 ? 1u : 0u);
    if (!(d[k] > 0.0)) d[k] *= kLeakySlope;
  }
}

void leaky_backward(Eigen::MatrixXd& grad, const Eigen::MatrixXd& pre) {
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    if (!(pre.data()[k] > 0.0)) grad.data()[k] *= kLeakySlope;
  }
}

void uniform_fill(double* p, std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) p[i] = dist(rng);
}

}  // namespace

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw UsageError("Mlp needs at least one layer");
  std::size_t total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
  }
  params_.assign(total, 0.0);
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int l) {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

void Mlp::init_uniform(std::mt19937_64& rng) {
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const std::size_t n = static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
    uniform_fill(params_.data() + offsets_[l], n, bound, rng);
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache, Fingerprint* fp) const {
  if (x.rows() != input_dim()) throw UsageError("Mlp::forward: input width mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    if (l + 1 < layer_count()) apply_leaky(z, fp);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& grad_out, const Cache& cache, std::span<double> grad) const {
  if (cache.inputs.size() != static_cast<std::size_t>(layer_count())) {
    throw UsageError("Mlp::backward: forward cache missing");
  }
  if (grad.size() != params_.size()) throw UsageError("Mlp::backward: gradient buffer size mismatch");
  Eigen::MatrixXd g = grad_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    if (l + 1 < layer_count()) leaky_backward(g, cache.pre[l]);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + static_cast<std::size_t>(widths_[l + 1]) * widths_[l],
                                   widths_[l + 1]);
    gw.noalias() += g * cache.inputs[l].transpose();
    gb += g.rowwise().sum();
    g = weight(l).transpose() * g;
  }
  return g;
}

Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, int width, int height) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index npix = static_cast<Eigen::Index>(width) * height;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(channels * 9, npix);
  for (int y = 0; y < height; ++y) {
    for (int xx = 0; xx < width; ++xx) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + xx;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= width) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(sy) * width + sx;
          const int tap = ky * 3 + kx;
          for (Eigen::Index c = 0; c < channels; ++c) cols(c * 9 + tap, p) = x(c, src);
        }
      }
    }
  }
  return cols;
}

Eigen::MatrixXd col2im3x3(const Eigen::MatrixXd& cols, int channels, int width, int height) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int xx = 0; xx < width; ++xx) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + xx;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= width) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(sy) * width + sx;
          const int tap = ky * 3 + kx;
          for (int c = 0; c < channels; ++c) x(c, src) += cols(c * 9 + tap, p);
        }
      }
    }
  }
  return x;
}

ConvNet::ConvNet(std::vector<int> channels) : channels_(std::move(channels)) {
  if (channels_.size() < 2) throw UsageError("ConvNet needs at least one layer");
  std::size_t total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(channels_[l + 1]) * channels_[l] * 9 + channels_[l + 1];
  }
  params_.assign(total, 0.0);
}

Eigen::Map<Eigen::MatrixXd> ConvNet::weight(int l) {
  return {params_.data() + offsets_[l], channels_[l + 1], channels_[l] * 9};
}
Eigen::Map<const Eigen::MatrixXd> ConvNet::weight(int l) const {
  return {params_.data() + offsets_[l], channels_[l + 1], channels_[l] * 9};
}
Eigen::Map<Eigen::VectorXd> ConvNet::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(channels_[l + 1]) * channels_[l] * 9,
          channels_[l + 1]};
}
Eigen::Map<const Eigen::VectorXd> ConvNet::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<std::size_t>(channels_[l + 1]) * channels_[l] * 9,
          channels_[l + 1]};
}

void ConvNet::init_uniform(std::mt19937_64& rng) {
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(9.0 * channels_[l]);
    const std::size_t n = static_cast<std::size_t>(channels_[l + 1]) * (channels_[l] * 9 + 1);
    uniform_fill(params_.data() + offsets_[l], n, bound, rng);
  }
}

Eigen::MatrixXd ConvNet::forward(const Eigen::MatrixXd& x, int width, int height, Cache* cache,
                                 Fingerprint* fp) const {
  if (x.rows() != input_channels() || x.cols() != static_cast<Eigen::Index>(width) * height) {
    throw UsageError("ConvNet::forward: input shape mismatch");
  }
  if (cache) {
    cache->columns.clear();
    cache->pre.clear();
    cache->width = width;
    cache->height = height;
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd cols = im2col3x3(h, width, height);
    Eigen::MatrixXd z = weight(l) * cols;
    z.colwise() += bias(l);
    if (cache) {
      cache->columns.push_back(std::move(cols));
      cache->pre.push_back(z);
    }
    if (l + 1 < layer_count()) apply_leaky(z, fp);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd ConvNet::backward(const Eigen::MatrixXd& grad_out, const Cache& cache, std::span<double> grad) const {
  if (cache.columns.size() != static_cast<std::size_t>(layer_count())) {
    throw UsageError("ConvNet::backward: forward cache missing");
  }
  if (grad.size() != params_.size()) throw UsageError("ConvNet::backward: gradient buffer size mismatch");
  Eigen::MatrixXd g = grad_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    if (l + 1 < layer_count()) leaky_backward(g, cache.pre[l]);
    const std::size_t wsize = static_cast<std::size_t>(channels_[l + 1]) * channels_[l] * 9;
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], channels_[l + 1], channels_[l] * 9);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + wsize, channels_[l + 1]);
    gw.noalias() += g * cache.columns[l].transpose();
    gb += g.rowwise().sum();
    const Eigen::MatrixXd gcols = weight(l).transpose() * g;
    g = col2im3x3(gcols, channels_[l], cache.width, cache.height);
  }
  return g;
}

}  // namespace aqsp
