#include "aqsplat/optimizer.hpp"

#include "aqsplat/errors.hpp"

#include <algorithm>
#include <cmath>

namespace aqsp {

void Adam::step(std::span<double> params, std::span<const double> grads, double lr,
                std::span<const double> lr_pattern) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw UsageError("adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    m_[k] = hyper_.beta1 * m_[k] + (1.0 - hyper_.beta1) * g;
    v_[k] = hyper_.beta2 * v_[k] + (1.0 - hyper_.beta2) * g * g;
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    const double rate = lr_pattern.empty() ? lr : lr * lr_pattern[k % lr_pattern.size()];
    params[k] -= rate * m_hat / (std::sqrt(v_hat) + hyper_.epsilon);
  }
}

void Adam::filter_rows(const std::vector<bool>& keep, std::size_t stride) {
  if (keep.size() * stride != m_.size()) throw UsageError("adam: filter mask size mismatch");
  std::size_t out = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    std::copy_n(m_.begin() + i * stride, stride, m_.begin() + out * stride);
    std::copy_n(v_.begin() + i * stride, stride, v_.begin() + out * stride);
    ++out;
  }
  m_.resize(out * stride);
  v_.resize(out * stride);
}

void Adam::append_rows(std::size_t count, std::size_t stride) {
  m_.resize(m_.size() + count * stride, 0.0);
  v_.resize(v_.size() + count * stride, 0.0);
}

}  // namespace aqsp
