#pragma once

#include "aqsplat/math.hpp"

#include <span>

namespace aqsp {

/// View-dependent base color. The degree-0 coefficient is stored as the RGB
/// value itself (unit DC basis); higher bands use the real SH basis.
Vec3 eval_sh_color(int degree, std::span<const double> coeffs, const Vec3& dir);

/// Accumulates dL/dcoeffs into grad_coeffs and returns dL/ddir.
Vec3 eval_sh_backward(int degree, std::span<const double> coeffs, const Vec3& dir, const Vec3& grad_color,
                      std::span<double> grad_coeffs);

}  // namespace aqsp
