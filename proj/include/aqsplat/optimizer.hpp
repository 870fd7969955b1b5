#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace aqsp {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over one flat parameter group. Rows of `stride`
/// entries can be filtered or appended to follow densification.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamHyper hyper = {}) : hyper_(hyper), m_(size, 0.0), v_(size, 0.0) {}

  /// lr_pattern, when non-empty, multiplies lr by lr_pattern[k % pattern size].
  void step(std::span<double> params, std::span<const double> grads, double lr,
            std::span<const double> lr_pattern = {});

  /// Keeps rows where keep[i] is true.
  void filter_rows(const std::vector<bool>& keep, std::size_t stride);
  /// Appends zero moments for count * stride new entries.
  void append_rows(std::size_t count, std::size_t stride);

  std::size_t size() const { return m_.size(); }
  std::uint64_t steps() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  AdamHyper hyper_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace aqsp
