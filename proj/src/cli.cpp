#include "aqsplat/cli.hpp"

#include "aqsplat/checkpoint.hpp"
#include "aqsplat/dataset.hpp"
#include "aqsplat/errors.hpp"
#include "aqsplat/evaluation.hpp"
#include "aqsplat/gradcheck.hpp"
#include "aqsplat/image_io.hpp"
#include "aqsplat/restoration.hpp"
#include "aqsplat/training.hpp"

#include "CLI11.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

namespace aqsp {
namespace {

Camera resolve_camera(const std::string& spec, const std::optional<Dataset>& dataset) {
  std::size_t idx = 0;
  const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), idx);
  if (ec == std::errc() && ptr == spec.data() + spec.size()) {
    if (!dataset) throw UsageError("--camera given as an index requires --data");
    if (idx >= dataset->size()) throw UsageError("camera index " + spec + " out of range");
    return dataset->cameras[idx];
  }
  return load_camera_file(spec);
}

SceneKind parse_kind(const std::string& s) {
  if (s == "sphere") return SceneKind::SphereField;
  if (s == "plane") return SceneKind::PlaneGrid;
  if (s == "box") return SceneKind::BoxRoom;
  throw UsageError("unknown scene kind '" + s + "' (expected sphere, plane or box)");
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Underwater Gaussian splatting: simulate, train, render and restore scenes seen through water"};
  app.require_subcommand(1);

  struct {
    std::string preset = "paper", out, kind, data, config, checkpoint, camera;
    std::uint64_t seed = 0;
    int iters = -1, gaussians = 0, bins = 8, scenes = 20;
    bool object = false, no_acs = false, held_out = false;
  } o;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic underwater dataset");
  sim->add_option("--preset", o.preset, "paper or toy")->capture_default_str();
  sim->add_option("--out", o.out, "Output directory")->required();
  sim->add_option("--seed", o.seed, "Random seed")->required();
  sim->add_option("--kind", o.kind, "Scene kind: sphere, plane or box");
  sim->add_option("--gaussians", o.gaussians, "Override the Gaussian count");

  auto* tr = app.add_subcommand("train", "Fit a scene to a dataset");
  tr->add_option("--data", o.data, "Dataset directory")->required();
  tr->add_option("--out", o.out, "Output directory")->required();
  tr->add_option("--seed", o.seed, "Random seed")->required();
  tr->add_option("--iters", o.iters, "Iteration count (overrides the config file)");
  tr->add_option("--config", o.config, "key = value configuration file");

  auto* rd = app.add_subcommand("render", "Render the composed underwater image of one camera");
  auto* rs = app.add_subcommand("restore", "Render the water-free image of one camera");
  for (auto* sc : {rd, rs}) {
    sc->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    sc->add_option("--camera", o.camera, "Camera index into --data, or a camera JSON file")->required();
    sc->add_option("--out", o.out, "Output PNG")->required();
    sc->add_option("--data", o.data, "Dataset directory");
  }
  rd->add_flag("--object", o.object, "Render the object colors without the medium");
  rs->add_flag("--no-acs", o.no_acs, "Skip the white balance");

  auto* ev = app.add_subcommand("eval", "Per-view PSNR/SSIM of renders and restorations");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", o.data, "Dataset directory")->required();
  ev->add_option("--out", o.out, "Output CSV")->required();
  ev->add_flag("--held-out", o.held_out, "Only views held out from training");

  auto* mr = app.add_subcommand("medium-report", "Binned fitted attenuation and backscatter per view");
  mr->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  mr->add_option("--data", o.data, "Dataset directory")->required();
  mr->add_option("--out", o.out, "Output CSV")->required();
  mr->add_option("--bins", o.bins, "Distance bins")->capture_default_str();
  mr->add_flag("--held-out", o.held_out, "Only views held out from training");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--seed", o.seed, "Random seed")->required();
  gc->add_option("--scenes", o.scenes, "Number of random scenes")->capture_default_str();

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*sim) {
      SyntheticSceneSpec spec = SyntheticSceneSpec::preset(o.preset, o.seed);
      if (!o.kind.empty()) spec.kind = parse_kind(o.kind);
      if (o.gaussians > 0) spec.gaussians = o.gaussians;
      const SyntheticScene scene = generate_scene(spec);
      save_dataset(o.out, scene.dataset, &scene.initial);
      out << "wrote " << scene.dataset.size() << " views, " << scene.initial.size() << " Gaussians to " << o.out
          << "\n";
    } else if (*tr) {
      TrainConfig config = o.config.empty() ? TrainConfig{} : TrainConfig::from_file(o.config);
      config.seed = o.seed;
      if (o.iters >= 0) config.iterations = o.iters;
      const Dataset ds = load_dataset(o.data);
      const GaussianCloud init = load_initial_cloud(o.data, config.sh_degree);
      const TrainingRun run = train(ds, init, config, o.out);
      out << "trained " << config.iterations << " iterations, " << run.model.cloud.size() << " Gaussians";
      if (!run.metrics.empty()) out << ", held-out PSNR " << run.metrics.back().psnr_heldout << " dB";
      out << "\n";
    } else if (*rd || *rs) {
      const Model model = load_checkpoint(o.checkpoint);
      std::optional<Dataset> ds;
      if (!o.data.empty()) ds = load_dataset(o.data);
      const Camera cam = resolve_camera(o.camera, ds);
      ImageBuffer img;
      if (*rd) {
        img = o.object ? restore_view(model, cam) : render_view(model, cam).image;
      } else {
        img = restore_view(model, cam);
        if (!o.no_acs) img = acs_white_balance(img);
      }
      write_png(o.out, img);
    } else if (*ev) {
      const Model model = load_checkpoint(o.checkpoint);
      const Dataset ds = load_dataset(o.data);
      const auto rows = evaluate_views(model, ds, o.held_out);
      write_eval_csv(o.out, rows);
      double mean = 0;
      for (const auto& r : rows) mean += r.psnr_render;
      if (!rows.empty()) out << "mean render PSNR " << mean / rows.size() << " dB over " << rows.size() << " views\n";
    } else if (*mr) {
      const Model model = load_checkpoint(o.checkpoint);
      const Dataset ds = load_dataset(o.data);
      write_medium_csv(o.out, medium_report(model, ds, o.bins, o.held_out));
    } else if (*gc) {
      const auto reports = gradcheck_suite(o.seed, o.scenes);
      bool ok = true;
      out << std::left << std::setw(18) << "group" << std::setw(10) << "checked" << std::setw(10) << "skipped"
          << "max_rel_error\n";
      for (const auto& r : reports) {
        out << std::setw(18) << r.group << std::setw(10) << r.checked << std::setw(10) << r.skipped
            << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat
            << (r.failures ? "  FAIL" : "") << "\n";
        ok = ok && r.failures == 0;
      }
      if (!ok) {
        err << "gradient check failed\n";
        return 2;
      }
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace aqsp
