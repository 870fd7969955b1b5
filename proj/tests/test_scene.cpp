#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"

#include "aqsplat/errors.hpp"
#include "aqsplat/scene.hpp"

using namespace aqsp;

namespace {

// Plain triple-loop product, kept independent of Eigen's expression templates.
Mat3 dense_product(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("covariance of the identity quaternion with unit scales is the identity") {
  const Mat3 c = covariance_from_params(Vec4(1, 0, 0, 0), Vec3::Zero());
  CHECK((c - Mat3::Identity()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("covariance of a quarter turn about z swaps the first two axes") {
  const double h = std::sqrt(0.5);
  const Mat3 c = covariance_from_params(Vec4(h, 0, 0, h), Vec3(std::log(2.0), 0, 0));

  Mat3 r;
  r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  Mat3 s = Mat3::Zero();
  s(0, 0) = 2.0;
  s(1, 1) = 1.0;
  s(2, 2) = 1.0;
  const Mat3 rs = dense_product(r, s);
  const Mat3 expected = dense_product(rs, rs.transpose());
  CHECK((c - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(expected(0, 0) == doctest::Approx(1.0));
  CHECK(expected(1, 1) == doctest::Approx(4.0));
  CHECK(expected(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("diagonal covariance for identity rotation") {
  const Mat3 c = covariance_from_params(Vec4(1, 0, 0, 0), Vec3(std::log(3.0), std::log(2.0), 0));
  Mat3 expected = Mat3::Zero();
  expected.diagonal() << 9, 4, 1;
  CHECK((c - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance rejects non-finite or zero input") {
  CHECK_THROWS_AS(covariance_from_params(Vec4(NAN, 0, 0, 0), Vec3::Zero()), ParameterDomainError);
  CHECK_THROWS_AS(covariance_from_params(Vec4(1, 0, 0, 0), Vec3(INFINITY, 0, 0)), ParameterDomainError);
  CHECK_THROWS_AS(covariance_from_params(Vec4::Zero(), Vec3::Zero()), ParameterDomainError);
}

TEST_CASE("covariance eigenvalues are the squared scales") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4 q(n(rng), n(rng), n(rng), n(rng));
    const Vec3 ls(n(rng), n(rng), n(rng));
    const Mat3 c = covariance_from_params(q, ls);
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(c);
    std::vector<double> got(es.eigenvalues().data(), es.eigenvalues().data() + 3);
    std::vector<double> want = {std::exp(2 * ls[0]), std::exp(2 * ls[1]), std::exp(2 * ls[2])};
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-9 * std::max(1.0, want[k]));
    CHECK(got[0] > 0.0);
  }
}

TEST_CASE("rotation round trip through quaternions") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    q /= q.norm();
    if (q[0] < 0) q = -q;
    const Vec4 back = rotation_to_quaternion(quaternion_to_rotation(q));
    CHECK((back - q).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fourier feature of the origin of normalized space") {
  const Feature f = fourier_encode(Vec3::Zero());
  REQUIRE(f.size() == 24);
  for (int i = 0; i < 24; i += 2) {
    CHECK(f[i] == 0.0);
    CHECK(f[i + 1] == 1.0);
  }
}

TEST_CASE("fourier feature at one half, first octave") {
  const Feature f = fourier_encode(Vec3(0.5, 0.0, 0.0));
  CHECK(std::abs(f[0]) < 1e-12);
  CHECK(f[1] == doctest::Approx(-1.0));
}

TEST_CASE("fourier feature normalization clamps and is deterministic") {
  CHECK(fourier_feature(Vec3(5, -5, 0.3), 1.0).size() == 24);
  CHECK(normalize_position(Vec3(5, -5, 0), 1.0) == Vec3(1, 0, 0.5));
  const Feature a = fourier_feature(Vec3(0.1, 0.2, 0.3), 0.7);
  const Feature b = fourier_feature(Vec3(0.1, 0.2, 0.3), 0.7);
  CHECK(a == b);
  CHECK_THROWS_AS(fourier_feature(Vec3::Zero(), 0.0), ParameterDomainError);
}

TEST_CASE("fourier feature is Lipschitz in normalized position") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Each entry has slope at most pi * 2^4 per coordinate.
  const double lipschitz = std::numbers::pi * 16.0 * std::sqrt(24.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 d = 1e-4 * Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    const double change = (fourier_encode(p + d) - fourier_encode(p)).norm();
    CHECK(change <= lipschitz * d.norm() + 1e-12);
  }
}

TEST_CASE("quantile bound of norms 1..100") {
  std::vector<Vec3> pts;
  for (int i = 1; i <= 100; ++i) pts.emplace_back(0.0, -static_cast<double>(i), 0.5);
  // Order statistics sit at ranks 0..99; the 0.97 quantile lands at rank 96.03.
  const double rank = 0.97 * 99.0;
  const double oracle = 1.0 + rank;
  CHECK(oracle == doctest::Approx(97.03).epsilon(1e-12));
  CHECK(quantile_bound(pts) == doctest::Approx(97.03).epsilon(1e-12));
}

TEST_CASE("quantile bound of degenerate sets") {
  std::vector<Vec3> same(7, Vec3(5, -1, 2));
  CHECK(quantile_bound(same) == 5.0);
  std::vector<Vec3> one = {Vec3(0, 2, 0)};
  CHECK(quantile_bound(one) == 2.0);
  CHECK_THROWS_AS(quantile_bound(std::vector<Vec3>{}), ParameterDomainError);
}

TEST_CASE("quaternion renormalization is idempotent") {
  GaussianCloud cloud;
  GaussianPrimitive g;
  g.rotation = Vec4(3, 1, -2, 0.5);
  cloud.push_back(g);
  cloud.renormalize_rotations();
  const std::vector<double> once = cloud.rotations;
  cloud.renormalize_rotations();
  CHECK(cloud.rotations == once);
  CHECK(cloud.rotation(0).norm() == doctest::Approx(1.0));
}

TEST_CASE("cloud filter keeps order") {
  GaussianCloud cloud;
  for (int i = 0; i < 5; ++i) {
    GaussianPrimitive g;
    g.position = Vec3(i, 0, 0);
    cloud.push_back(g);
  }
  cloud.filter({true, false, true, false, true});
  REQUIRE(cloud.size() == 3);
  CHECK(cloud.position(0).x() == 0.0);
  CHECK(cloud.position(1).x() == 2.0);
  CHECK(cloud.position(2).x() == 4.0);
}

TEST_CASE("base color length must match the SH degree") {
  GaussianCloud cloud(1);
  GaussianPrimitive g;
  CHECK_THROWS_AS(cloud.push_back(g), UsageError);
  g.base_color.assign(12, 0.1);
  cloud.push_back(g);
  CHECK(cloud.color_stride() == 12);
}

TEST_CASE("camera validation") {
  Camera cam;
  CHECK_NOTHROW(cam.validate());
  cam.width = 4;
  CHECK_THROWS_AS(cam.validate(), ParameterDomainError);
  cam.width = 8;
  cam.rotation(0, 1) = 0.1;
  CHECK_THROWS_AS(cam.validate(), ParameterDomainError);
  const Camera la = Camera::look_at(Vec3(2, 0, 1), Vec3::Zero(), Vec3::UnitZ(), 50, 50, 32, 32);
  CHECK_NOTHROW(la.validate());
  CHECK((la.center() - Vec3(2, 0, 1)).norm() < 1e-12);
}

TEST_CASE("ply round trip and point initialization") {
  PointCloud pc;
  for (int i = 0; i < 6; ++i) {
    pc.points.emplace_back(0.1 * i, 0.05 * (i % 2), -0.2);
    pc.colors.emplace_back(i / 6.0, 0.5, 1.0);
  }
  const std::string path = (std::filesystem::temp_directory_path() / "aqsplat_test_points.ply").string();
  write_ascii_ply(path, pc);
  const PointCloud back = read_ascii_ply(path);
  std::filesystem::remove(path);
  REQUIRE(back.points.size() == 6);
  CHECK((back.points[3] - pc.points[3]).norm() < 1e-9);
  const GaussianCloud cloud = cloud_from_points(back, 0);
  REQUIRE(cloud.size() == 6);
  const Vec3 ls = cloud.log_scale(0);
  CHECK(ls[0] == ls[1]);
  CHECK(ls[1] == ls[2]);
  CHECK(cloud.opacity(0) == doctest::Approx(0.1));
  CHECK(cloud.normalization_bound > 0.0);
  CHECK_THROWS_AS(read_ascii_ply("no_such_file.ply"), MissingFileError);
}
