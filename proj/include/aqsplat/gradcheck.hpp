#pragma once

#include "aqsplat/losses.hpp"
#include "aqsplat/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace aqsp {

/// A small random problem: one camera, one target, one pseudo-depth map.
struct GradcheckProblem {
  Model model;
  Camera camera;
  ImageBuffer target;
  ImageBuffer pseudo_inverse_depth;
  LossWeights weights;
};

struct GradcheckOptions {
  double step = 1e-5;
  double min_step = 1e-9;
  double rel_tolerance = 1e-4;
  double abs_tolerance = 1e-7;
  std::size_t samples_per_network = 40;
};

struct GroupReport {
  std::string group;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t skipped = 0;     ///< entries sitting exactly on a kink at every step size
  double max_rel_error = 0.0;  ///< over entries with |grad| >= 1e-5 or absolute error above abs_tolerance
  double max_abs_error = 0.0;
  double max_gradient = 0.0;   ///< largest |analytic| seen, to show the check is not vacuous
};

/// Random scene with up to max_gaussians Gaussians seen by a size x size camera.
/// Networks are fully randomized so no layer is a trivial zero.
GradcheckProblem make_gradcheck_problem(std::uint64_t seed, int max_gaussians = 32, int size = 16);

/// Central finite differences of view_loss against its analytic gradient. The
/// step is shrunk whenever the forward pass changes its discrete structure.
std::vector<GroupReport> gradcheck(GradcheckProblem& problem, std::uint64_t seed, const GradcheckOptions& options = {});

/// Merges per-group reports (worst case over problems).
void merge_reports(std::vector<GroupReport>& into, const std::vector<GroupReport>& add);

/// Runs `problems` seeded problems derived from seed.
std::vector<GroupReport> gradcheck_suite(std::uint64_t seed, int problems = 20, const GradcheckOptions& options = {});

}  // namespace aqsp
