#include "aqsplat/checkpoint.hpp"

#include "aqsplat/errors.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace aqsp {
namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void section(const std::string& name, const std::vector<double>& values) {
    put(static_cast<std::uint32_t>(name.size()));
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(static_cast<std::uint64_t>(values.size()));
    for (double v : values) put(static_cast<float>(v));
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw MissingFileError("missing checkpoint: " + path);
  }
  template <typename T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw MalformedRecordError("truncated checkpoint: " + path_);
    return v;
  }
  void get_doubles(double* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) throw MalformedRecordError("truncated checkpoint: " + path_);
  }
  std::string get_string(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw MalformedRecordError("truncated checkpoint: " + path_);
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

void assign_section(const std::map<std::string, std::vector<double>>& sections, const std::string& name,
                    std::vector<double>& params, const std::string& path) {
  auto it = sections.find(name);
  if (it == sections.end()) throw MalformedRecordError(path + ": missing section " + name);
  if (it->second.size() != params.size()) {
    throw SizeMismatchError(path + ": section " + name + " has " + std::to_string(it->second.size()) +
                            " values, expected " + std::to_string(params.size()));
  }
  params = it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  const GaussianCloud& c = model.cloud;
  Writer w(path);
  w.put('A');
  w.put('Q');
  w.put('S');
  w.put('P');
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint64_t>(c.size()));
  w.put(static_cast<std::uint32_t>(c.sh_degree()));
  w.put(c.normalization_bound);
  const auto stride = static_cast<std::size_t>(c.color_stride());
  for (std::size_t i = 0; i < c.size(); ++i) {
    w.put_doubles(&c.positions[3 * i], 3);
    w.put_doubles(&c.rotations[4 * i], 4);
    w.put_doubles(&c.log_scales[3 * i], 3);
    w.put_doubles(&c.opacity_logits[i], 1);
    w.put_doubles(&c.base_colors[stride * i], stride);
    w.put_doubles(&c.features[kFeatureDim * i], kFeatureDim);
  }
  w.put(std::uint32_t{5});
  w.section("options", {model.options.appearance ? 1.0 : 0.0, model.options.medium ? 1.0 : 0.0});
  w.section("pose_embedder", model.embedder.net.params());
  w.section("color_net", model.color_net.net.params());
  w.section("backscatter_head", model.medium.backscatter.net.params());
  w.section("attenuation_head", model.medium.attenuation.net.params());
  w.finish();
}

Model load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  for (char& ch : magic) ch = r.get<char>();
  if (std::memcmp(magic, "AQSP", 4) != 0) throw MalformedRecordError(path + ": bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw MalformedRecordError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint64_t>();
  const auto degree = r.get<std::uint32_t>();
  if (degree > 3) throw MalformedRecordError(path + ": invalid SH degree");
  Model model;
  model.cloud = GaussianCloud(static_cast<int>(degree));
  model.cloud.normalization_bound = r.get<double>();
  GaussianPrimitive g;
  g.base_color.resize(static_cast<std::size_t>(model.cloud.color_stride()));
  for (std::uint64_t i = 0; i < count; ++i) {
    r.get_doubles(g.position.data(), 3);
    r.get_doubles(g.rotation.data(), 4);
    r.get_doubles(g.log_scale.data(), 3);
    r.get_doubles(&g.opacity_logit, 1);
    r.get_doubles(g.base_color.data(), g.base_color.size());
    r.get_doubles(g.appearance_feature.data(), kFeatureDim);
    model.cloud.push_back(g);
  }
  const auto n_sections = r.get<std::uint32_t>();
  std::map<std::string, std::vector<double>> sections;
  for (std::uint32_t s = 0; s < n_sections; ++s) {
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > 256) throw MalformedRecordError(path + ": section name too long");
    const std::string name = r.get_string(name_len);
    const auto n = r.get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) throw MalformedRecordError(path + ": section too large");
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<float>();
    sections[name] = std::move(values);
  }
  std::vector<double> options(2);
  assign_section(sections, "options", options, path);
  model.options.appearance = options[0] != 0.0;
  model.options.medium = options[1] != 0.0;
  assign_section(sections, "pose_embedder", model.embedder.net.params(), path);
  assign_section(sections, "color_net", model.color_net.net.params(), path);
  assign_section(sections, "backscatter_head", model.medium.backscatter.net.params(), path);
  assign_section(sections, "attenuation_head", model.medium.attenuation.net.params(), path);
  return model;
}

}  // namespace aqsp
