#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "aqsplat/errors.hpp"
#include "aqsplat/medium.hpp"

using namespace aqsp;

namespace {

BackscatterParams scalar_backscatter(double b_inf, double rate, double res, double res_rate, Eigen::Index n = 1) {
  BackscatterParams p;
  p.b_inf = Eigen::MatrixXd::Constant(3, n, b_inf);
  p.rate = Eigen::MatrixXd::Constant(3, n, rate);
  p.residual = Eigen::MatrixXd::Constant(3, n, res);
  p.residual_rate = Eigen::MatrixXd::Constant(3, n, res_rate);
  return p;
}

AttenuationParams scalar_attenuation(double a1, double r1, double a2, double r2, Eigen::Index n = 1) {
  AttenuationParams p;
  p.amplitude[0] = Eigen::MatrixXd::Constant(3, n, a1);
  p.rate[0] = Eigen::MatrixXd::Constant(3, n, r1);
  p.amplitude[1] = Eigen::MatrixXd::Constant(3, n, a2);
  p.rate[1] = Eigen::MatrixXd::Constant(3, n, r2);
  return p;
}

MediumHeads random_heads(std::uint64_t seed) {
  MediumHeads heads;
  std::mt19937_64 rng(seed);
  heads.backscatter.net.init_uniform(rng);
  heads.attenuation.net.init_uniform(rng);
  return heads;
}

ImageBuffer random_depth(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.3, 4.0);
  ImageBuffer d(w, h, 1);
  for (double& v : d.data) v = u(rng);
  return d;
}

}  // namespace

TEST_CASE("context concatenates inverse depth and the broadcast embedding") {
  ImageBuffer d(4, 4, 1, 0.5);
  Embedding e;
  for (int k = 0; k < kEmbeddingDim; ++k) e[k] = k + 1.0;
  const Eigen::MatrixXd ctx = build_context(d, e);
  CHECK(ctx.rows() == 17);
  CHECK(ctx.cols() == 16);
  CHECK((ctx.row(0).array() == 0.5).all());
  CHECK(ctx(5, 7) == 5.0);
  CHECK(build_context(d, Embedding::Zero()).bottomRows(16).isZero(0.0));
  CHECK_THROWS_AS(build_context(ImageBuffer(4, 4, 3), e), UsageError);
}

TEST_CASE("backscatter formula at zero, at infinity, and at the simulated coefficients") {
  const auto p = scalar_backscatter(0.39, 0.7, 0.03, 2.0);
  Eigen::RowVectorXd z0(1), zinf(1), z1(1);
  z0 << 0.0;
  zinf << 1e6;
  z1 << 1.0;
  CHECK(backscatter_formula(p, z0)(0, 0) == doctest::Approx(0.03));
  CHECK(std::abs(backscatter_formula(p, zinf)(0, 0) - 0.39) < 1e-6);
  const auto q = scalar_backscatter(0.39, 0.7, 0.0, 1.0);
  const double oracle = 0.39 * (1.0 - std::exp(-0.7));
  CHECK(backscatter_formula(q, z1)(2, 0) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(oracle == doctest::Approx(0.19634).epsilon(1e-4));
}

TEST_CASE("attenuation formula cases") {
  Eigen::RowVectorXd z0(1), z1(1);
  z0 << 0.0;
  z1 << 1.0;
  CHECK(attenuation_formula(scalar_attenuation(0.3, 0.2, 0.6, 0.9), z0)(1, 0) == doctest::Approx(0.9));
  const double single = attenuation_formula(scalar_attenuation(1.0, 1.0, 0.0, 0.5), z1)(0, 0);
  CHECK(single == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(single == doctest::Approx(0.36788).epsilon(1e-4));
  CHECK(attenuation_formula(scalar_attenuation(0.0, 0.4, 0.0, 0.8), z1).isZero(0.0));
}

TEST_CASE("composition with the simulated red channel") {
  MediumOutput m;
  m.z = Eigen::RowVectorXd::Ones(1);
  m.attenuation = Eigen::MatrixXd::Constant(3, 1, std::exp(-1.3));
  m.backscatter = Eigen::MatrixXd::Constant(3, 1, 0.07 * (1.0 - std::exp(-0.95)));
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(3, 1);
  const double i_r = compose_underwater(c, m)(0, 0);
  CHECK(i_r == doctest::Approx(std::exp(-1.3) + 0.07 * (1.0 - std::exp(-0.95))).epsilon(1e-14));
  CHECK(i_r == doctest::Approx(0.31546).epsilon(1e-4));

  MediumOutput vac;
  vac.z = Eigen::RowVectorXd::Ones(2);
  vac.attenuation = Eigen::MatrixXd::Ones(3, 2);
  vac.backscatter = Eigen::MatrixXd::Zero(3, 2);
  const Eigen::MatrixXd obj = Eigen::MatrixXd::Random(3, 2);
  CHECK(compose_underwater(obj, vac) == obj);
  CHECK(compose_underwater(Eigen::MatrixXd::Zero(3, 1), m) == m.backscatter);
}

TEST_CASE("monotonicity on z grids and bounded ranges for random head outputs") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 3.0);
  Eigen::RowVectorXd grid(100);
  for (int i = 0; i < 100; ++i) grid[i] = 0.1 * i;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd raw(kHeadOutputs, 1);
    for (int r = 0; r < kHeadOutputs; ++r) raw(r, 0) = n(rng);
    BackscatterParams bp = backscatter_params(raw.replicate(1, 100));
    AttenuationParams ap = attenuation_params(raw.replicate(1, 100));
    bp.residual.setZero();
    const Eigen::MatrixXd b = backscatter_formula(bp, grid);
    const Eigen::MatrixXd a = attenuation_formula(ap, grid);
    for (int i = 1; i < 100; ++i) {
      for (int c = 0; c < 3; ++c) {
        CHECK(b(c, i) >= b(c, i - 1));
        CHECK(a(c, i) <= a(c, i - 1));
      }
    }
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= 2.0);
    for (int t = 0; t < kAttenuationTerms; ++t) {
      CHECK(ap.amplitude[t].minCoeff() >= 0.0);
      CHECK(ap.rate[t].maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("initial heads describe a mild medium") {
  MediumHeads heads;
  std::mt19937_64 rng(1);
  heads.init(rng);
  std::mt19937_64 drng(2);
  const ImageBuffer depth = random_depth(drng, 8, 8);
  MediumCache cache;
  medium_forward(heads, depth, Embedding::Random(), &cache);
  CHECK(cache.backscatter.b_inf(0, 0) == doctest::Approx(0.2));
  CHECK(cache.backscatter.rate(1, 3) == doctest::Approx(1.0));
  CHECK(cache.backscatter.residual_rate(2, 5) == doctest::Approx(1.0));
  CHECK(cache.attenuation.amplitude[0](0, 0) == doctest::Approx(0.5));
  CHECK(cache.attenuation.amplitude[1](2, 9) == doctest::Approx(0.5));
}

TEST_CASE("medium backward matches finite differences") {
  const MediumHeads heads = random_heads(41);
  std::mt19937_64 rng(42);
  const int w = 8, h = 8;
  const ImageBuffer depth = random_depth(rng, w, h);
  Embedding e;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < kEmbeddingDim; ++k) e[k] = u(rng);
  Eigen::MatrixXd obj(3, w * h), up(3, w * h);
  for (Eigen::Index i = 0; i < obj.size(); ++i) {
    obj.data()[i] = u(rng) + 0.5;
    up.data()[i] = u(rng);
  }

  auto loss = [&](const MediumHeads& hd, const ImageBuffer& d, const Eigen::MatrixXd& c) {
    return compose_underwater(c, medium_forward(hd, d, e)).cwiseProduct(up).sum();
  };

  MediumCache cache;
  const MediumOutput out = medium_forward(heads, depth, e, &cache);
  std::vector<double> gb(heads.backscatter.net.params().size(), 0.0);
  std::vector<double> ga(heads.attenuation.net.params().size(), 0.0);
  const MediumInputGrads g = medium_backward(heads, up, obj, out, cache, gb, ga);

  CHECK((g.object_color - up.cwiseProduct(out.attenuation)).cwiseAbs().maxCoeff() == 0.0);

  const double step = 1e-6;
  auto compare = [](double analytic, double fd) {
    return std::abs(analytic - fd) <= std::max(1e-4 * std::abs(fd), 1e-7);
  };
  std::uniform_int_distribution<std::size_t> pick_b(0, gb.size() - 1), pick_a(0, ga.size() - 1);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t kb = pick_b(rng), ka = pick_a(rng);
    MediumHeads p = heads, m = heads;
    p.backscatter.net.params()[kb] += step;
    m.backscatter.net.params()[kb] -= step;
    CHECK(compare(gb[kb], (loss(p, depth, obj) - loss(m, depth, obj)) / (2 * step)));
    p = heads;
    m = heads;
    p.attenuation.net.params()[ka] += step;
    m.attenuation.net.params()[ka] -= step;
    CHECK(compare(ga[ka], (loss(p, depth, obj) - loss(m, depth, obj)) / (2 * step)));
  }
  for (int px : {0, 9, 27, 63}) {
    ImageBuffer dp = depth, dm = depth;
    dp.data[px] += step;
    dm.data[px] -= step;
    CHECK(compare(g.depth[px], (loss(heads, dp, obj) - loss(heads, dm, obj)) / (2 * step)));
  }

  std::vector<double> zb(gb.size(), 0.0), za(ga.size(), 0.0);
  const MediumInputGrads z = medium_backward(heads, Eigen::MatrixXd::Zero(3, w * h), obj, out, cache, zb, za);
  CHECK(z.depth.isZero(0.0));
  CHECK(z.embedding.isZero(0.0));
  for (double v : zb) CHECK(v == 0.0);
  for (double v : za) CHECK(v == 0.0);
  CHECK_THROWS_AS(medium_backward(heads, up, obj, out, MediumCache{}, gb, ga), UsageError);
}
