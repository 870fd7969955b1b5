#include "aqsplat/gradcheck.hpp"

#include "aqsplat/spherical_harmonics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace aqsp {

GradcheckProblem make_gradcheck_problem(std::uint64_t seed, int max_gaussians, int size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);

  GradcheckProblem pb;
  const int sh_degree = static_cast<int>(seed % 3 == 2 ? 1 : 0) + static_cast<int>(seed % 5 == 4 ? 2 : 0);
  pb.model.cloud = GaussianCloud(std::min(sh_degree, 3));
  const int n = std::max(4, static_cast<int>(uni(0.5, 1.0) * max_gaussians));
  std::vector<Vec3> points;
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive g;
    g.position = Vec3(uni(-0.8, 0.8), uni(-0.8, 0.8), uni(-0.6, 0.6));
    g.rotation = Vec4(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
    g.log_scale = Vec3(std::log(uni(0.08, 0.35)), std::log(uni(0.08, 0.35)), std::log(uni(0.08, 0.35)));
    g.opacity_logit = logit(uni(0.05, 0.7));
    g.base_color.assign(static_cast<std::size_t>(3 * sh_coefficient_count(pb.model.cloud.sh_degree())), 0.0);
    for (std::size_t k = 0; k < g.base_color.size(); ++k) g.base_color[k] = k < 3 ? uni(0.1, 0.9) : uni(-0.2, 0.2);
    pb.model.cloud.push_back(g);
    points.push_back(g.position);
  }
  pb.model.cloud.normalization_bound = quantile_bound(points);
  pb.model.cloud.refresh_features();

  const double angle = uni(0.0, 2.0 * M_PI);
  const Vec3 eye(3.0 * std::cos(angle), uni(-0.8, 0.8), 3.0 * std::sin(angle));
  pb.camera = Camera::look_at(eye, Vec3::Zero(), Vec3(0, -1, 0), 0.9 * size, 0.9 * size, size, size);

  pb.model.embedder.net.init_uniform(rng);
  pb.model.color_net.net.init_uniform(rng);
  pb.model.medium.backscatter.net.init_uniform(rng);
  pb.model.medium.attenuation.net.init_uniform(rng);

  pb.target = ImageBuffer(size, size, 3);
  for (double& v : pb.target.data) v = uni(0.0, 1.0);
  ImageBuffer depth(size, size, 1);
  for (double& v : depth.data) v = uni(1.5, 4.5);
  for (int k = 0; k < size; ++k) depth.data[static_cast<std::size_t>(u(rng) * depth.data.size())] = 100.0;
  pb.pseudo_inverse_depth = pseudo_inverse_depth(depth, 10.0);
  return pb;
}

namespace {

// Entries at least this large always enter max_rel_error, even when they
// pass on the absolute tolerance.
constexpr double kReportFloor = 1e-5;

struct Entry {
  std::size_t group;
  double* param;
  double analytic;
};

}  // namespace

std::vector<GroupReport> gradcheck(GradcheckProblem& pb, std::uint64_t seed, const GradcheckOptions& opt) {
  Model& m = pb.model;
  ModelGrads grads = ModelGrads::zeros(m);
  Fingerprint base_fp;
  view_loss(m, pb.camera, pb.target, &pb.pseudo_inverse_depth, pb.weights, &grads, &base_fp);

  std::vector<GroupReport> reports;
  std::vector<Entry> entries;
  auto add_all = [&](const std::string& name, std::vector<double>& params, const std::vector<double>& g) {
    reports.push_back({name});
    for (std::size_t k = 0; k < params.size(); ++k) entries.push_back({reports.size() - 1, &params[k], g[k]});
  };
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  auto add_sample = [&](const std::string& name, std::vector<double>& params, const std::vector<double>& g) {
    reports.push_back({name});
    std::vector<std::size_t> idx(params.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), opt.samples_per_network));
    std::sort(idx.begin(), idx.end());
    for (auto k : idx) entries.push_back({reports.size() - 1, &params[k], g[k]});
  };
  add_all("position", m.cloud.positions, grads.gaussians.positions);
  add_all("rotation", m.cloud.rotations, grads.gaussians.rotations);
  add_all("log_scale", m.cloud.log_scales, grads.gaussians.log_scales);
  add_all("opacity", m.cloud.opacity_logits, grads.gaussians.opacity_logits);
  add_all("base_color", m.cloud.base_colors, grads.gaussians.base_colors);
  add_sample("pose_embedder", m.embedder.net.params(), grads.embedder);
  add_sample("color_net", m.color_net.net.params(), grads.color_net);
  add_sample("backscatter_head", m.medium.backscatter.net.params(), grads.backscatter);
  add_sample("attenuation_head", m.medium.attenuation.net.params(), grads.attenuation);

  auto loss_at = [&](double* p, double value, Fingerprint& fp) {
    const double saved = *p;
    *p = value;
    const LossBreakdown l = view_loss(m, pb.camera, pb.target, &pb.pseudo_inverse_depth, pb.weights, nullptr, &fp);
    *p = saved;
    return l;
  };
  // Differencing term by term keeps a large constant term (usually the scale
  // penalty) from swamping the small ones in round-off.
  auto diff = [](const LossBreakdown& a, const LossBreakdown& b) {
    return (a.recon - b.recon) + (a.depth - b.depth) + (a.scale - b.scale);
  };

  for (const Entry& e : entries) {
    GroupReport& r = reports[e.group];
    double numeric = 0.0;
    bool smooth = false;
    for (double h = opt.step; h >= opt.min_step * 0.999; h *= 0.1) {
      Fingerprint fp_plus, fp_minus;
      const LossBreakdown lp = loss_at(e.param, *e.param + h, fp_plus);
      const LossBreakdown lm = loss_at(e.param, *e.param - h, fp_minus);
      if (fp_plus == base_fp && fp_minus == base_fp) {
        numeric = diff(lp, lm) / (2.0 * h);
        smooth = true;
        break;
      }
    }
    if (!smooth) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    r.max_gradient = std::max(r.max_gradient, std::abs(e.analytic));
    const double abs_err = std::abs(e.analytic - numeric);
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    const double scale = std::max(std::abs(e.analytic), std::abs(numeric));
    const double rel = scale > 0.0 ? abs_err / scale : 0.0;
    if (abs_err <= opt.abs_tolerance && scale < kReportFloor) continue;
    r.max_rel_error = std::max(r.max_rel_error, rel);
    if (abs_err > opt.abs_tolerance && rel >= opt.rel_tolerance) ++r.failures;
  }
  return reports;
}

void merge_reports(std::vector<GroupReport>& into, const std::vector<GroupReport>& add) {
  for (const GroupReport& a : add) {
    auto it = std::find_if(into.begin(), into.end(), [&](const GroupReport& r) { return r.group == a.group; });
    if (it == into.end()) {
      into.push_back(a);
      continue;
    }
    it->checked += a.checked;
    it->failures += a.failures;
    it->skipped += a.skipped;
    it->max_rel_error = std::max(it->max_rel_error, a.max_rel_error);
    it->max_abs_error = std::max(it->max_abs_error, a.max_abs_error);
    it->max_gradient = std::max(it->max_gradient, a.max_gradient);
  }
}

std::vector<GroupReport> gradcheck_suite(std::uint64_t seed, int problems, const GradcheckOptions& options) {
  std::vector<GroupReport> all;
  for (int i = 0; i < problems; ++i) {
    const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    GradcheckProblem pb = make_gradcheck_problem(s);
    merge_reports(all, gradcheck(pb, s, options));
  }
  return all;
}

}  // namespace aqsp
