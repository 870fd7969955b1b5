#include "aqsplat/dataset.hpp"

#include "aqsplat/checkpoint.hpp"
#include "aqsplat/errors.hpp"
#include "aqsplat/image_io.hpp"
#include "aqsplat/rasterizer.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace aqsp {
namespace fs = std::filesystem;
using nlohmann::json;

SyntheticSceneSpec SyntheticSceneSpec::preset(const std::string& name, std::uint64_t seed) {
  SyntheticSceneSpec s;
  s.seed = seed;
  if (name == "paper") return s;
  if (name == "toy") {
    s.gaussians = 150;
    s.cameras = 12;
    s.width = 32;
    s.height = 32;
    return s;
  }
  throw UsageError("unknown preset '" + name + "' (expected paper or toy)");
}

void SyntheticSceneSpec::validate() const {
  if (cameras < 4) throw ParameterDomainError("scene needs at least 4 cameras");
  if (gaussians < 16) throw ParameterDomainError("scene needs at least 16 Gaussians");
  if (width < 8 || height < 8) throw ParameterDomainError("image must be at least 8x8");
  if ((medium.beta_d.array() < 0).any() || (medium.beta_b.array() < 0).any() || (medium.b_inf.array() < 0).any()) {
    throw ParameterDomainError("medium coefficients must be non-negative");
  }
  if (!(fov_degrees > 0 && fov_degrees < 170)) throw ParameterDomainError("field of view out of range");
}

void Dataset::validate() const {
  const std::size_t n = cameras.size();
  if (n == 0) throw LoadError("dataset has no views");
  if (images.size() != n) throw SizeMismatchError("image count does not match camera count");
  if (!clean_images.empty() && clean_images.size() != n) throw SizeMismatchError("clean image count mismatch");
  if (!depth_maps.empty() && depth_maps.size() != n) throw SizeMismatchError("depth map count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const Camera& c = cameras[i];
    auto check = [&](const ImageBuffer& img, int channels, const char* what) {
      if (img.width != c.width || img.height != c.height || img.channels != channels) {
        throw SizeMismatchError("view " + std::to_string(i) + ": " + what + " is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + "x" + std::to_string(img.channels) + ", camera expects " +
                                std::to_string(c.width) + "x" + std::to_string(c.height));
      }
    };
    check(images[i], 3, "image");
    if (!clean_images.empty()) check(clean_images[i], 3, "clean image");
    if (!depth_maps.empty()) check(depth_maps[i], 1, "depth map");
  }
}

// ---------------------------------------------------------------------------
// Scene content

namespace {

struct SceneBuilder {
  GaussianCloud cloud;
  std::mt19937_64& rng;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

  // Flat disc with the given normal, in-plane radius and thickness.
  void disc(const Vec3& center, const Vec3& normal, double radius, double thickness, const Vec3& color,
            double opacity) {
    const Vec3 n = normal.normalized();
    const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 t1 = helper.cross(n).normalized();
    const Vec3 t2 = n.cross(t1);
    Mat3 r;
    r.col(0) = t1;
    r.col(1) = t2;
    r.col(2) = n;
    GaussianPrimitive g;
    g.position = center;
    g.rotation = rotation_to_quaternion(r);
    g.log_scale = Vec3(std::log(radius), std::log(radius), std::log(thickness));
    g.opacity_logit = logit(opacity);
    g.base_color.assign(static_cast<std::size_t>(cloud.color_stride()), 0.0);
    for (int c = 0; c < 3; ++c) g.base_color[c] = color[c];
    cloud.push_back(g);
  }

  // Jittered grid of discs over a rectangle in a plane spanned by u, v.
  void textured_patch(const Vec3& origin, const Vec3& u, const Vec3& v, double width, double height, int count,
                      double tile, bool round) {
    const int cols = std::max(1, static_cast<int>(std::lround(std::sqrt(count * width / height))));
    const int rows = std::max(1, (count + cols - 1) / cols);
    const double du = width / cols, dv = height / rows;
    const Vec3 normal = u.cross(v);
    int made = 0;
    for (int r = 0; r < rows && made < count; ++r) {
      for (int c = 0; c < cols && made < count; ++c, ++made) {
        const double a = (c + 0.5) * du - width / 2 + uniform(-0.15, 0.15) * du;
        const double b = (r + 0.5) * dv - height / 2 + uniform(-0.15, 0.15) * dv;
        if (round && a * a + b * b > width * width / 4) {
          // Fold corners of the square back inside the disc.
          const double k = (width / 2) / std::sqrt(a * a + b * b) * uniform(0.5, 0.98);
          const Vec3 p = origin + k * a * u + k * b * v;
          disc(p, normal, 0.75 * std::max(du, dv), 0.01, tile_color(a * k, b * k, tile), 0.95);
          continue;
        }
        disc(origin + a * u + b * v, normal, 0.75 * std::max(du, dv), 0.01, tile_color(a, b, tile), 0.95);
      }
    }
  }

  static Vec3 tile_color(double a, double b, double tile) {
    const int ia = static_cast<int>(std::floor(a / tile)), ib = static_cast<int>(std::floor(b / tile));
    return ((ia + ib) & 1) ? Vec3(0.82, 0.82, 0.82) : Vec3(0.12, 0.12, 0.12);
  }

  // Fibonacci-sphere surface of tangent discs.
  void sphere(const Vec3& center, double radius, int count, const Vec3& color) {
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    const double disc_radius = radius * 2.0 / std::sqrt(static_cast<double>(count));
    for (int i = 0; i < count; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / count;
      const double rr = std::sqrt(1.0 - y * y);
      const double th = golden * i;
      const Vec3 n(std::cos(th) * rr, std::sin(th) * rr, y);
      const Vec3 tint = (color + Vec3::Constant(uniform(-0.04, 0.04))).cwiseMax(0.0).cwiseMin(1.0);
      disc(center + radius * n, n, disc_radius, 0.01, tint, 0.95);
    }
  }
};

const std::array<Vec3, 6> kPalette = {Vec3(0.85, 0.15, 0.15), Vec3(0.15, 0.85, 0.15), Vec3(0.15, 0.15, 0.85),
                                      Vec3(0.85, 0.85, 0.15), Vec3(0.15, 0.85, 0.85), Vec3(0.85, 0.15, 0.85)};

GaussianCloud build_truth(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  SceneBuilder b{GaussianCloud(spec.sh_degree), rng};
  const int n = spec.gaussians;
  switch (spec.kind) {
    case SceneKind::PlaneGrid:
      b.textured_patch(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 3.2, 3.2, n, 0.4, false);
      break;
    case SceneKind::SphereField: {
      const int spheres = 6;
      const int per_sphere = std::max(8, n / 10);
      const int ground = n - spheres * per_sphere;
      b.textured_patch(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 3.2, 3.2, ground, 0.4, true);
      for (int s = 0; s < spheres; ++s) {
        const double ang = 2.0 * M_PI * s / spheres + b.uniform(-0.2, 0.2);
        const double rad = b.uniform(0.45, 0.9);
        const double r = b.uniform(0.2, 0.3);
        b.sphere(Vec3(rad * std::cos(ang), rad * std::sin(ang), r), r, per_sphere, kPalette[s]);
      }
      break;
    }
    case SceneKind::BoxRoom: {
      const int floor = n / 3;
      const int wall = (n - floor) / 4;
      const double h = 2.0;
      b.textured_patch(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 2 * h, 2 * h, floor, 0.5, false);
      const std::array<std::pair<Vec3, Vec3>, 4> walls = {
          std::pair{Vec3(h, 0, 1), Vec3::UnitY()}, std::pair{Vec3(-h, 0, 1), -Vec3::UnitY()},
          std::pair{Vec3(0, h, 1), -Vec3::UnitX()}, std::pair{Vec3(0, -h, 1), Vec3::UnitX()}};
      for (int k = 0; k < 4; ++k) {
        const int count = k == 3 ? n - floor - 3 * wall : wall;
        SceneBuilder wb{GaussianCloud(spec.sh_degree), rng};
        wb.textured_patch(walls[k].first, walls[k].second, Vec3::UnitZ(), 2 * h, 2.0, count, 0.5, false);
        for (std::size_t i = 0; i < wb.cloud.size(); ++i) {
          GaussianPrimitive g = wb.cloud.primitive(i);
          const Vec3 tint = kPalette[k] * 0.6 + Vec3::Constant(0.2);
          for (int c = 0; c < 3; ++c) g.base_color[c] = g.base_color[c] > 0.5 ? tint[c] : 0.5 * tint[c];
          b.cloud.push_back(g);
        }
      }
      break;
    }
  }
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < b.cloud.size(); ++i) pts.push_back(b.cloud.position(i));
  b.cloud.normalization_bound = quantile_bound(pts);
  b.cloud.refresh_features();
  return b.cloud;
}

}  // namespace

ImageBuffer apply_water(const ImageBuffer& clean, const ImageBuffer& z, const MediumTruth& m) {
  if (clean.width != z.width || clean.height != z.height || clean.channels != 3 || z.channels != 1) {
    throw UsageError("apply_water: shape mismatch");
  }
  ImageBuffer out(clean.width, clean.height, 3);
  for (std::size_t p = 0; p < z.data.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      out.data[3 * p + c] = clean.data[3 * p + c] * std::exp(-m.beta_d[c] * z.data[p]) +
                            m.b_inf[c] * (1.0 - std::exp(-m.beta_b[c] * z.data[p]));
    }
  }
  return out;
}

ImageBuffer remove_water(const ImageBuffer& degraded, const ImageBuffer& z, const MediumTruth& m) {
  if (degraded.width != z.width || degraded.height != z.height || degraded.channels != 3 || z.channels != 1) {
    throw UsageError("remove_water: shape mismatch");
  }
  ImageBuffer out(degraded.width, degraded.height, 3);
  for (std::size_t p = 0; p < z.data.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const double backscatter = m.b_inf[c] * (1.0 - std::exp(-m.beta_b[c] * z.data[p]));
      out.data[3 * p + c] = (degraded.data[3 * p + c] - backscatter) * std::exp(m.beta_d[c] * z.data[p]);
    }
  }
  return out;
}

SyntheticScene generate_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticScene out;
  out.truth = build_truth(spec, rng);

  const double fx = 0.5 * spec.width / std::tan(0.5 * spec.fov_degrees * M_PI / 180.0);
  const double fy = fx;
  Dataset& ds = out.dataset;
  ds.medium = spec.medium;
  for (int i = 0; i < spec.cameras; ++i) {
    const double ang = 2.0 * M_PI * i / spec.cameras;
    const Vec3 eye(spec.ring_radius * std::cos(ang), spec.ring_radius * std::sin(ang), spec.ring_height);
    const Camera cam = Camera::look_at(eye, spec.look_at, Vec3::UnitZ(), fx, fy, spec.width, spec.height);
    const RenderOutput r = render(out.truth, cam);
    ImageBuffer z(spec.width, spec.height, 1);
    for (std::size_t p = 0; p < z.data.size(); ++p) {
      const double alpha = r.alpha_acc.data[p];
      z.data[p] = alpha >= 0.5 ? r.depth.data[p] / alpha : spec.medium.far;
    }
    ds.cameras.push_back(cam);
    ds.clean_images.push_back(r.color);
    ds.depth_maps.push_back(z);
    ds.images.push_back(apply_water(r.color, z, spec.medium));
  }

  out.initial = out.truth;
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i = 0; i < out.truth.size(); ++i) centroid += out.truth.position(i);
  centroid /= static_cast<double>(out.truth.size());
  double extent = 0;
  for (std::size_t i = 0; i < out.truth.size(); ++i) extent = std::max(extent, (out.truth.position(i) - centroid).norm());
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto stride = static_cast<std::size_t>(out.initial.color_stride());
  for (std::size_t i = 0; i < out.initial.size(); ++i) {
    for (int k = 0; k < 3; ++k) out.initial.positions[3 * i + k] += spec.position_noise * extent * unit(rng);
    for (int c = 0; c < 3; ++c) out.initial.base_colors[stride * i + c] += spec.color_noise * unit(rng);
  }
  out.initial.refresh_features();
  return out;
}

// ---------------------------------------------------------------------------
// Storage

namespace {

std::string view_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw MalformedRecordError(what + ": expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingFileError("missing file: " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw MalformedRecordError(path.string() + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Camera camera_from_json(const json& c, const std::string& where) {
  try {
    Camera cam;
    const json& r = c.at("R");
    if (!r.is_array() || r.size() != 9) throw MalformedRecordError(where + ": R must have 9 entries");
    for (int k = 0; k < 9; ++k) cam.rotation(k / 3, k % 3) = r[k].get<double>();
    cam.translation = vec_from(c.at("t"), where + ": t");
    cam.fx = c.at("fx").get<double>();
    cam.fy = c.at("fy").get<double>();
    cam.cx = c.at("cx").get<double>();
    cam.cy = c.at("cy").get<double>();
    cam.width = c.at("width").get<int>();
    cam.height = c.at("height").get<int>();
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw MalformedRecordError(where + ": " + e.what());
  } catch (const ParameterDomainError& e) {
    throw MalformedRecordError(where + ": " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFileError("missing file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    for (std::streamsize k = 0; k < f.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void save_dataset(const std::string& dir, const Dataset& ds, const GaussianCloud* initial) {
  ds.validate();
  const fs::path root(dir);
  fs::create_directories(root / "images");
  if (!ds.clean_images.empty()) fs::create_directories(root / "clean");
  if (!ds.depth_maps.empty()) fs::create_directories(root / "depth");

  std::vector<std::string> files;
  json cams = json::array();
  for (const Camera& c : ds.cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(r, k));
    }
    cams.push_back({{"R", rot}, {"t", vec_json(c.translation)}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx},
                    {"cy", c.cy}, {"width", c.width}, {"height", c.height}});
  }
  write_text(root / "cameras.json", cams.dump(1) + "\n");
  files.push_back("cameras.json");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string name = view_name(i);
    write_png((root / "images" / (name + ".png")).string(), ds.images[i]);
    files.push_back("images/" + name + ".png");
    if (!ds.clean_images.empty()) {
      write_png((root / "clean" / (name + ".png")).string(), ds.clean_images[i]);
      files.push_back("clean/" + name + ".png");
    }
    if (!ds.depth_maps.empty()) {
      write_f32((root / "depth" / (name + ".f32")).string(), ds.depth_maps[i]);
      files.push_back("depth/" + name + ".f32");
    }
  }
  if (ds.medium) {
    const MediumTruth& m = *ds.medium;
    const json mj = {{"beta_d", vec_json(m.beta_d)}, {"beta_b", vec_json(m.beta_b)}, {"b_inf", vec_json(m.b_inf)},
                     {"far", m.far}};
    write_text(root / "medium.json", mj.dump(1) + "\n");
    files.push_back("medium.json");
  }
  if (initial) {
    Model m;
    m.cloud = *initial;
    save_checkpoint((root / "init.aqsp").string(), m);
    files.push_back("init.aqsp");
  }
  json manifest = {{"views", ds.size()}, {"checksums", json::object()}};
  for (const auto& f : files) manifest["checksums"][f] = hex64(fnv1a_file((root / f).string()));
  write_text(root / "manifest.json", manifest.dump(1) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw MissingFileError("dataset directory not found: " + dir);
  if (!fs::exists(root / "cameras.json")) throw MissingFileError("dataset has no cameras.json: " + dir);

  // Missing files are reported after the per-view pass, which names the view.
  std::vector<std::string> missing;
  if (fs::exists(root / "manifest.json")) {
    const json manifest = read_json(root / "manifest.json");
    if (!manifest.contains("checksums") || !manifest["checksums"].is_object()) {
      throw MalformedRecordError("manifest.json: missing checksums");
    }
    for (const auto& [name, value] : manifest["checksums"].items()) {
      const fs::path p = root / name;
      if (!fs::exists(p)) {
        missing.push_back(name);
        continue;
      }
      if (hex64(fnv1a_file(p.string())) != value.get<std::string>()) {
        throw ChecksumError("checksum mismatch for " + name);
      }
    }
  }

  Dataset ds;
  const json cams = read_json(root / "cameras.json");
  if (!cams.is_array() || cams.empty()) throw MalformedRecordError("cameras.json: expected a non-empty array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    ds.cameras.push_back(camera_from_json(cams[i], "cameras.json record " + std::to_string(i)));
  }

  const bool has_clean = fs::is_directory(root / "clean");
  const bool has_depth = fs::is_directory(root / "depth");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string name = view_name(i);
    const Camera& c = ds.cameras[i];
    auto need = [&](const fs::path& p, const char* what) {
      if (!fs::exists(p)) {
        throw MissingFileError("view " + std::to_string(i) + ": missing " + what + " file " + p.string());
      }
      return p.string();
    };
    ds.images.push_back(read_png(need(root / "images" / (name + ".png"), "image")));
    if (has_clean) ds.clean_images.push_back(read_png(need(root / "clean" / (name + ".png"), "clean image")));
    if (has_depth) {
      try {
        ds.depth_maps.push_back(read_f32(need(root / "depth" / (name + ".f32"), "depth"), c.width, c.height, 1));
      } catch (const SizeMismatchError& e) {
        throw SizeMismatchError("view " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  if (fs::exists(root / "medium.json")) {
    const json mj = read_json(root / "medium.json");
    try {
      MediumTruth m;
      m.beta_d = vec_from(mj.at("beta_d"), "medium.json beta_d");
      m.beta_b = vec_from(mj.at("beta_b"), "medium.json beta_b");
      m.b_inf = vec_from(mj.at("b_inf"), "medium.json b_inf");
      m.far = mj.value("far", 10.0);
      ds.medium = m;
    } catch (const json::exception& e) {
      throw MalformedRecordError(std::string("medium.json: ") + e.what());
    }
  }
  if (!missing.empty()) throw MissingFileError("missing file listed in manifest: " + missing.front());
  ds.validate();
  return ds;
}

GaussianCloud load_initial_cloud(const std::string& dir, int sh_degree) {
  const fs::path root(dir);
  if (fs::exists(root / "init.aqsp")) return load_checkpoint((root / "init.aqsp").string()).cloud;
  if (fs::exists(root / "points.ply")) return cloud_from_points(read_ascii_ply((root / "points.ply").string()), sh_degree);
  throw MissingFileError("dataset has neither init.aqsp nor points.ply: " + dir);
}

Camera load_camera_file(const std::string& path) {
  json j = read_json(path);
  if (j.is_array()) {
    if (j.size() != 1) throw MalformedRecordError(path + ": expected exactly one camera record");
    j = j[0];
  }
  return camera_from_json(j, path);
}

Dataset as_stored(const Dataset& ds) {
  Dataset out = ds;
  for (auto& img : out.images) img = quantize_8bit(img);
  for (auto& img : out.clean_images) img = quantize_8bit(img);
  for (auto& d : out.depth_maps) {
    for (double& v : d.data) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace aqsp
