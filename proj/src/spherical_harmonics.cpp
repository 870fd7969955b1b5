#include "aqsplat/spherical_harmonics.hpp"

#include "aqsplat/scene.hpp"

#include <array>

namespace aqsp {
namespace {

// Forward-mode dual number carrying d/d(x, y, z).
struct Dual3 {
  double v = 0;
  std::array<double, 3> d = {0, 0, 0};
};

Dual3 operator-(const Dual3& a, const Dual3& b) {
  return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
}
Dual3 operator*(const Dual3& a, const Dual3& b) {
  return {a.v * b.v,
          {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1], a.d[2] * b.v + a.v * b.d[2]}};
}
Dual3 operator*(double s, const Dual3& a) { return {s * a.v, {s * a.d[0], s * a.d[1], s * a.d[2]}}; }

template <typename T>
void sh_basis(int degree, const T& x, const T& y, const T& z, T* out) {
  constexpr double c1 = 0.4886025119029199;
  constexpr double c2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
  constexpr double c3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277, -0.5900435899266435};
  out[0] = T{};
  if (degree < 1) return;
  out[1] = (-c1) * y;
  out[2] = c1 * z;
  out[3] = (-c1) * x;
  if (degree < 2) return;
  const T xx = x * x, yy = y * y, zz = z * z, xy = x * y, yz = y * z, xz = x * z;
  out[4] = c2[0] * xy;
  out[5] = c2[1] * yz;
  out[6] = c2[2] * (2.0 * zz - xx - yy);
  out[7] = c2[3] * xz;
  out[8] = c2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = c3[0] * (y * (3.0 * xx - yy));
  out[10] = c3[1] * (xy * z);
  out[11] = c3[2] * (y * (4.0 * zz - xx - yy));
  out[12] = c3[3] * (z * (2.0 * zz - 3.0 * xx - 3.0 * yy));
  out[13] = c3[4] * (x * (4.0 * zz - xx - yy));
  out[14] = c3[5] * (z * (xx - yy));
  out[15] = c3[6] * (x * (xx - 3.0 * yy));
}

}  // namespace

Vec3 eval_sh_color(int degree, std::span<const double> coeffs, const Vec3& dir) {
  Vec3 color(coeffs[0], coeffs[1], coeffs[2]);
  if (degree == 0) return color;
  std::array<double, 16> basis{};
  sh_basis<double>(degree, dir.x(), dir.y(), dir.z(), basis.data());
  for (int k = 1; k < sh_coefficient_count(degree); ++k) {
    for (int c = 0; c < 3; ++c) color[c] += basis[k] * coeffs[3 * k + c];
  }
  return color;
}

Vec3 eval_sh_backward(int degree, std::span<const double> coeffs, const Vec3& dir, const Vec3& grad_color,
                      std::span<double> grad_coeffs) {
  for (int c = 0; c < 3; ++c) grad_coeffs[c] += grad_color[c];
  if (degree == 0) return Vec3::Zero();
  std::array<Dual3, 16> basis{};
  const Dual3 x{dir.x(), {1, 0, 0}}, y{dir.y(), {0, 1, 0}}, z{dir.z(), {0, 0, 1}};
  sh_basis<Dual3>(degree, x, y, z, basis.data());
  Vec3 grad_dir = Vec3::Zero();
  for (int k = 1; k < sh_coefficient_count(degree); ++k) {
    double dot = 0;
    for (int c = 0; c < 3; ++c) {
      grad_coeffs[3 * k + c] += basis[k].v * grad_color[c];
      dot += coeffs[3 * k + c] * grad_color[c];
    }
    for (int a = 0; a < 3; ++a) grad_dir[a] += dot * basis[k].d[a];
  }
  return grad_dir;
}

}  // namespace aqsp
