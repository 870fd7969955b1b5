#include "aqsplat/training.hpp"

#include "aqsplat/checkpoint.hpp"
#include "aqsplat/errors.hpp"
#include "aqsplat/image_io.hpp"
#include "aqsplat/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <variant>

namespace aqsp {
namespace fs = std::filesystem;

namespace {

using FieldRef = std::variant<int*, double*, bool*, std::uint64_t*>;

std::vector<std::pair<std::string, FieldRef>> config_fields(TrainConfig& c) {
  return {
      {"iterations", &c.iterations},
      {"seed", &c.seed},
      {"sh_degree", &c.sh_degree},
      {"lambda1", &c.weights.lambda1},
      {"lambda2", &c.weights.lambda2},
      {"lambda3", &c.weights.lambda3},
      {"lambda4", &c.weights.lambda4},
      {"lambda5", &c.weights.lambda5},
      {"gamma_eps", &c.weights.gamma_eps},
      {"appearance", &c.appearance},
      {"medium", &c.medium},
      {"depth_loss", &c.depth_loss},
      {"scale_loss", &c.scale_loss},
      {"far", &c.far},
      {"lr_position_init", &c.lr_position_init},
      {"lr_position_final", &c.lr_position_final},
      {"lr_color", &c.lr_color},
      {"lr_color_rest_divisor", &c.lr_color_rest_divisor},
      {"lr_opacity", &c.lr_opacity},
      {"lr_scale", &c.lr_scale},
      {"lr_rotation", &c.lr_rotation},
      {"lr_network", &c.lr_network},
      {"medium_warmup_fraction", &c.medium_warmup_fraction},
      {"densify_every", &c.densify_every},
      {"densify_start_fraction", &c.densify_start_fraction},
      {"densify_stop_fraction", &c.densify_stop_fraction},
      {"densify_grad_threshold", &c.densify_grad_threshold},
      {"percent_dense", &c.percent_dense},
      {"prune_opacity", &c.prune_opacity},
      {"split_scale_divisor", &c.split_scale_divisor},
      {"split_children", &c.split_children},
      {"max_gaussians", &c.max_gaussians},
      {"log_every", &c.log_every},
      {"checkpoint_every", &c.checkpoint_every},
  };
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void parse_into(FieldRef ref, const std::string& key, const std::string& value) {
  std::istringstream in(value);
  bool ok = true;
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "1" || value == "true" || value == "on") {
            *p = true;
          } else if (value == "0" || value == "false" || value == "off") {
            *p = false;
          } else {
            ok = false;
          }
        } else {
          T v{};
          in >> v;
          ok = !in.fail() && (in >> std::ws).eof();
          if (ok) *p = v;
        }
      },
      ref);
  if (!ok) throw UsageError("config: bad value '" + value + "' for " + key);
}

}  // namespace

void TrainConfig::apply(const std::string& text) {
  auto fields = config_fields(*this);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    parse_into(it->second, key, value);
  }
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingFileError("missing config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  TrainConfig c;
  c.apply(ss.str());
  return c;
}

std::string TrainConfig::to_text() const {
  TrainConfig copy = *this;
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& [key, ref] : config_fields(copy)) {
    out << key << " = ";
    std::visit([&](auto* p) { out << *p; }, ref);
    out << '\n';
  }
  return out.str();
}

void DensifyStats::accumulate(const ModelGrads& grads) {
  for (std::size_t i = 0; i < grad_sum.size(); ++i) {
    if (grads.visible[i] == 0) continue;
    grad_sum[i] += grads.screen_grad[i];
    count[i] += 1;
  }
}

DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, const TrainConfig& config,
                                double scene_extent, std::mt19937_64& rng) {
  DensifyResult r;
  const std::size_t n = cloud.size();
  if (stats.grad_sum.size() != n) throw UsageError("densify: statistics do not match the cloud");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<bool> remove_parent(n, false);
  const double boundary = config.percent_dense * scene_extent;
  for (std::size_t i = 0; i < n; ++i) {
    if (stats.count[i] == 0) continue;
    if (cloud.size() >= config.max_gaussians) break;
    const double avg = stats.grad_sum[i] / stats.count[i];
    if (avg < config.densify_grad_threshold) continue;
    const GaussianPrimitive parent = cloud.primitive(i);
    const Vec3 scale = parent.log_scale.array().exp();
    if (scale.maxCoeff() <= boundary) {
      cloud.push_back(parent);
      ++r.cloned;
      ++r.appended;
      continue;
    }
    const Mat3 rot = quaternion_to_rotation(parent.rotation);
    for (int k = 0; k < config.split_children; ++k) {
      GaussianPrimitive child = parent;
      const Vec3 offset(normal(rng) * scale.x(), normal(rng) * scale.y(), normal(rng) * scale.z());
      child.position = parent.position + rot * offset;
      child.log_scale = parent.log_scale.array() - std::log(config.split_scale_divisor);
      child.appearance_feature = fourier_feature(child.position, cloud.normalization_bound);
      cloud.push_back(child);
      ++r.appended;
    }
    remove_parent[i] = true;
    ++r.split;
  }
  r.keep.assign(cloud.size(), true);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (i < n && remove_parent[i]) {
      r.keep[i] = false;
    } else if (cloud.opacity(i) < config.prune_opacity) {
      r.keep[i] = false;
      ++r.pruned;
    }
  }
  cloud.filter(r.keep);
  return r;
}

ModelOptimizer::ModelOptimizer(const Model& m)
    : positions(m.cloud.positions.size()),
      rotations(m.cloud.rotations.size()),
      log_scales(m.cloud.log_scales.size()),
      opacity_logits(m.cloud.opacity_logits.size()),
      base_colors(m.cloud.base_colors.size()),
      embedder(m.embedder.net.params().size()),
      color_net(m.color_net.net.params().size()),
      backscatter(m.medium.backscatter.net.params().size()),
      attenuation(m.medium.attenuation.net.params().size()) {}

void ModelOptimizer::apply(const DensifyResult& r, const GaussianCloud& cloud) {
  const auto stride = static_cast<std::size_t>(cloud.color_stride());
  auto fix = [&](Adam& a, std::size_t s) {
    a.append_rows(r.appended, s);
    a.filter_rows(r.keep, s);
  };
  fix(positions, 3);
  fix(rotations, 4);
  fix(log_scales, 3);
  fix(opacity_logits, 1);
  fix(base_colors, stride);
}

double position_learning_rate(const TrainConfig& c, int iteration, double scene_extent) {
  const double t = c.iterations > 0 ? std::clamp(static_cast<double>(iteration) / c.iterations, 0.0, 1.0) : 0.0;
  const double lr = std::exp((1.0 - t) * std::log(c.lr_position_init) + t * std::log(c.lr_position_final));
  return lr * scene_extent;
}

double camera_extent(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const Camera& c : cameras) mean += c.center();
  mean /= static_cast<double>(cameras.size());
  double radius = 0;
  for (const Camera& c : cameras) radius = std::max(radius, (c.center() - mean).norm());
  return 1.1 * std::max(radius, 1e-6);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "iteration,L_c,L_d,L_s,psnr_heldout\n";
  f << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.iteration << ',' << r.recon << ',' << r.depth << ',' << r.scale << ',' << r.psnr_heldout << '\n';
  }
}

namespace {

void dump_non_finite(const std::string& out_dir, const Model& model, const Camera& camera, const ImageBuffer& target,
                     int iteration, const LossBreakdown& loss) {
  const fs::path dir = fs::path(out_dir) / "nan_dump";
  fs::create_directories(dir);
  const ViewRender v = render_view(model, camera);
  write_f32((dir / "render.f32").string(), v.image);
  write_f32((dir / "object.f32").string(), v.raster.color);
  write_f32((dir / "depth.f32").string(), v.raster.depth);
  write_png((dir / "target.png").string(), target);
  save_checkpoint((dir / "model.aqsp").string(), model);
  std::ofstream info(dir / "info.txt");
  info << "iteration " << iteration << "\nL_c " << loss.recon << "\nL_d " << loss.depth << "\nL_s " << loss.scale
       << "\nwidth " << camera.width << "\nheight " << camera.height << '\n';
}

}  // namespace

TrainingRun train(const Dataset& dataset, const GaussianCloud& initial, const TrainConfig& config,
                  const std::string& out_dir, const TrainCallback& callback) {
  dataset.validate();
  if (initial.empty()) throw UsageError("train: initial cloud is empty");
  if (config.iterations < 0) throw UsageError("train: iterations must be non-negative");
  if (!out_dir.empty()) fs::create_directories(out_dir);

  TrainingRun run;
  Model& model = run.model;
  model.cloud = initial;
  model.cloud.renormalize_rotations();
  model.options.appearance = config.appearance;
  model.options.medium = config.medium;
  model.init_networks(config.seed);

  LossWeights weights = config.weights;
  if (!config.depth_loss || dataset.depth_maps.empty()) {
    weights.lambda2 = 0.0;
  }
  if (!config.depth_loss) {
    weights.lambda3 = 0.0;
    weights.lambda4 = 0.0;
  }
  if (!config.scale_loss) weights.lambda5 = 0.0;

  std::vector<std::size_t> train_views, held_out;
  for (std::size_t i = 0; i < dataset.size(); ++i) (Dataset::is_held_out(i) ? held_out : train_views).push_back(i);
  if (train_views.empty()) train_views = held_out;
  std::vector<ImageBuffer> pseudo;
  for (const auto& d : dataset.depth_maps) pseudo.push_back(pseudo_inverse_depth(d, config.far));

  const double extent = camera_extent(dataset.cameras);
  ModelOptimizer opt(model);
  ModelGrads grads = ModelGrads::zeros(model);
  DensifyStats stats;
  stats.reset(model.cloud.size());
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  const int densify_start = static_cast<int>(std::lround(config.densify_start_fraction * config.iterations));
  const int densify_stop = static_cast<int>(std::lround(config.densify_stop_fraction * config.iterations));
  std::vector<double> color_pattern(static_cast<std::size_t>(model.cloud.color_stride()),
                                    1.0 / config.lr_color_rest_divisor);
  std::fill_n(color_pattern.begin(), 3, 1.0);

  const int warmup_iters = static_cast<int>(std::lround(config.medium_warmup_fraction * config.iterations));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  auto checkpoint_to = [&](const std::string& name) {
    if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / name).string(), model);
  };

  for (int it = 1; it <= config.iterations; ++it) {
    if (cursor == order.size()) {
      order = train_views;
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t view = order[cursor++];
    const Camera& cam = dataset.cameras[view];
    const ImageBuffer* pseudo_view = pseudo.empty() ? nullptr : &pseudo[view];

    grads.set_zero();
    const LossBreakdown loss = view_loss(model, cam, dataset.images[view], pseudo_view, weights, &grads);
    if (!std::isfinite(loss.total())) {
      if (!out_dir.empty()) dump_non_finite(out_dir, model, cam, dataset.images[view], it, loss);
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (view " + std::to_string(view) +
                         ")");
    }

    const bool warmup = model.options.medium && it <= warmup_iters;
    opt.positions.step(model.cloud.positions, grads.gaussians.positions, position_learning_rate(config, it, extent));
    opt.rotations.step(model.cloud.rotations, grads.gaussians.rotations, config.lr_rotation);
    opt.log_scales.step(model.cloud.log_scales, grads.gaussians.log_scales, config.lr_scale);
    opt.opacity_logits.step(model.cloud.opacity_logits, grads.gaussians.opacity_logits, config.lr_opacity);
    if (!warmup) {
      opt.base_colors.step(model.cloud.base_colors, grads.gaussians.base_colors, config.lr_color, color_pattern);
    }
    if (model.options.appearance || model.options.medium) {
      opt.embedder.step(model.embedder.net.params(), grads.embedder, config.lr_network);
    }
    if (model.options.appearance && !warmup) {
      opt.color_net.step(model.color_net.net.params(), grads.color_net, config.lr_network);
    }
    if (model.options.medium) {
      opt.backscatter.step(model.medium.backscatter.net.params(), grads.backscatter, config.lr_network);
      opt.attenuation.step(model.medium.attenuation.net.params(), grads.attenuation, config.lr_network);
    }
    model.cloud.renormalize_rotations();
    stats.accumulate(grads);

    if (config.densify_every > 0 && it >= densify_start && it <= densify_stop && it % config.densify_every == 0) {
      const DensifyResult r = densify_and_prune(model.cloud, stats, config, extent, rng);
      opt.apply(r, model.cloud);
      grads = ModelGrads::zeros(model);
      stats.reset(model.cloud.size());
    }

    if (config.log_every > 0 && (it % config.log_every == 0 || it == config.iterations)) {
      MetricsRow row{it, loss.recon, loss.depth, loss.scale, 0.0};
      if (!held_out.empty()) {
        const std::size_t hv = held_out.front();
        row.psnr_heldout = psnr(render_view(model, dataset.cameras[hv]).image, dataset.images[hv]);
      }
      run.metrics.push_back(row);
    }
    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      checkpoint_to("checkpoint_" + std::to_string(it) + ".aqsp");
    }
    if (callback) callback(it, model);
  }

  if (!out_dir.empty()) {
    checkpoint_to("checkpoint.aqsp");
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), run.metrics);
    std::ofstream((fs::path(out_dir) / "config.txt")) << config.to_text();
  }
  return run;
}

}  // namespace aqsp
