// io.hpp - file formats: the PQAP binary descriptor file, the JSON corpus
// manifest, part model / solver report / ground truth serialization.
// Descriptor payloads are little-endian float32; round trips are bit-exact.
#pragma once

#include "encode.hpp"
#include "solvers.hpp"
#include "synth.hpp"
#include "types.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pqap {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::uint32_t kDescriptorFileVersion = 1;
inline const char kDescriptorMagic[4] = {'P', 'Q', 'A', 'P'};

namespace detail {
static_assert(sizeof(float) == 4, "float32 payload requires 4-byte float");

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const char* p) {
  return std::uint32_t(std::uint8_t(p[0])) |
         std::uint32_t(std::uint8_t(p[1])) << 8 |
         std::uint32_t(std::uint8_t(p[2])) << 16 |
         std::uint32_t(std::uint8_t(p[3])) << 24;
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline float get_f32(const char* p) {
  std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
}  // namespace detail

// header: magic, version, dim, count; payload: count*dim floats (one region
// per column, column-major), then count rects as (x, y, w, h) floats.
inline void write_descriptor_file(const fs::path& path,
                                  const Matrix& descriptors,
                                  const std::vector<RegionRect>& rects) {
  const int d = int(descriptors.rows());
  const int count = int(descriptors.cols());
  if (int(rects.size()) != count)
    throw std::invalid_argument("descriptor/rect count mismatch");
  std::string buf;
  buf.reserve(16 + size_t(count) * (size_t(d) + 4) * 4);
  buf.append(kDescriptorMagic, 4);
  detail::put_u32(buf, kDescriptorFileVersion);
  detail::put_u32(buf, std::uint32_t(d));
  detail::put_u32(buf, std::uint32_t(count));
  for (int r = 0; r < count; ++r)
    for (int k = 0; k < d; ++k)
      detail::put_f32(buf, float(descriptors(k, r)));
  for (const auto& rect : rects) {
    detail::put_f32(buf, float(rect.x));
    detail::put_f32(buf, float(rect.y));
    detail::put_f32(buf, float(rect.w));
    detail::put_f32(buf, float(rect.h));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct DescriptorFile {
  Matrix descriptors;
  std::vector<RegionRect> rects;
};

inline DescriptorFile read_descriptor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open descriptor file: " +
                                    path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 16)
    throw std::runtime_error("truncated descriptor file " + path.string() +
                             ": expected at least 16 bytes, got " +
                             std::to_string(buf.size()));
  if (std::memcmp(buf.data(), kDescriptorMagic, 4) != 0)
    throw std::runtime_error("bad magic in " + path.string() +
                             " (not a PQAP descriptor file)");
  std::uint32_t version = detail::get_u32(buf.data() + 4);
  if (version != kDescriptorFileVersion)
    throw std::runtime_error("unsupported descriptor file version " +
                             std::to_string(version) + " in " + path.string());
  std::uint32_t d = detail::get_u32(buf.data() + 8);
  std::uint32_t count = detail::get_u32(buf.data() + 12);
  size_t expected = 16 + size_t(count) * (size_t(d) + 4) * 4;
  if (buf.size() != expected)
    throw std::runtime_error("truncated descriptor file " + path.string() +
                             ": expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(buf.size()));
  DescriptorFile out;
  out.descriptors.resize(d, count);
  const char* p = buf.data() + 16;
  for (std::uint32_t r = 0; r < count; ++r)
    for (std::uint32_t k = 0; k < d; ++k, p += 4)
      out.descriptors(k, r) = double(detail::get_f32(p));
  out.rects.resize(count);
  for (std::uint32_t r = 0; r < count; ++r, p += 16) {
    out.rects[r] = {double(detail::get_f32(p)), double(detail::get_f32(p + 4)),
                    double(detail::get_f32(p + 8)),
                    double(detail::get_f32(p + 12))};
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

inline void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json(const fs::path& path) {
  return json::parse(read_text(path));
}

// Writes manifest.json plus one descriptor file per image under
// dir/descriptors/. Preprocessing flags record what the stored values
// already contain.
inline fs::path save_corpus(const TrainingCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "descriptors");
  json manifest;
  manifest["schema_version"] = 1;
  manifest["dim"] = corpus.dim;
  manifest["regions_per_image"] = corpus.regions_per_image;
  manifest["categories"] = corpus.category_names;
  manifest["preprocessing"] = {{"sqrt", corpus.sqrt_applied},
                               {"l2", corpus.l2_applied}};
  json images = json::array();
  for (const auto& im : corpus.images) {
    std::string file = "descriptors/" + im.image_id + ".pqapd";
    write_descriptor_file(dir / file, im.descriptors, im.rects);
    images.push_back({{"id", im.image_id},
                      {"label", im.label},
                      {"split", split_name(im.split)},
                      {"file", file}});
  }
  manifest["images"] = std::move(images);
  fs::path path = dir / "manifest.json";
  write_json(path, manifest);
  return path;
}

struct PreprocessFlags {
  bool sqrt = false;
  bool l2 = false;
};

inline void apply_preprocessing(Matrix& descriptors, PreprocessFlags flags) {
  if (flags.sqrt)
    descriptors = descriptors.unaryExpr([](double v) {
      return v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v);
    });
  if (flags.l2)
    for (Eigen::Index c = 0; c < descriptors.cols(); ++c) {
      double n = descriptors.col(c).norm();
      if (n > 0.0) descriptors.col(c) /= n;
    }
}

inline TrainingCorpus load_corpus(const fs::path& manifest_path,
                                  PreprocessFlags apply = {}) {
  if (!fs::exists(manifest_path))
    throw std::runtime_error("manifest not found: " + manifest_path.string());
  json manifest = read_json(manifest_path);
  if (manifest.at("schema_version").get<int>() != 1)
    throw std::runtime_error("unsupported manifest schema version in " +
                             manifest_path.string());
  TrainingCorpus corpus;
  corpus.dim = manifest.at("dim").get<int>();
  corpus.regions_per_image = manifest.at("regions_per_image").get<int>();
  corpus.category_names =
      manifest.at("categories").get<std::vector<std::string>>();
  corpus.category_count = int(corpus.category_names.size());
  corpus.sqrt_applied = manifest.at("preprocessing").at("sqrt").get<bool>();
  corpus.l2_applied = manifest.at("preprocessing").at("l2").get<bool>();
  fs::path base = manifest_path.parent_path();
  for (const auto& entry : manifest.at("images")) {
    ImageRecord im;
    im.image_id = entry.at("id").get<std::string>();
    im.label = entry.at("label").get<int>();
    im.split = entry.at("split").get<std::string>() == "train" ? Split::train
                                                               : Split::test;
    fs::path file = base / entry.at("file").get<std::string>();
    if (!fs::exists(file))
      throw std::runtime_error("manifest references missing file: " +
                               file.string());
    DescriptorFile df = read_descriptor_file(file);
    if (int(df.descriptors.rows()) != corpus.dim)
      throw std::runtime_error(
          "descriptor dimension mismatch in " + file.string() + ": expected " +
          std::to_string(corpus.dim) + ", got " +
          std::to_string(df.descriptors.rows()));
    if (int(df.descriptors.cols()) != corpus.regions_per_image)
      throw std::runtime_error(
          "region count mismatch in " + file.string() + ": expected " +
          std::to_string(corpus.regions_per_image) + ", got " +
          std::to_string(df.descriptors.cols()));
    im.descriptors = std::move(df.descriptors);
    im.rects = std::move(df.rects);
    corpus.images.push_back(std::move(im));
  }
  if (apply.sqrt || apply.l2) {
    for (auto& im : corpus.images) apply_preprocessing(im.descriptors, apply);
    corpus.sqrt_applied = corpus.sqrt_applied || apply.sqrt;
    corpus.l2_applied = corpus.l2_applied || apply.l2;
  }
  return corpus;
}

inline json part_model_to_json(const PartModel& pm) {
  json j;
  j["category"] = pm.category;
  j["dim"] = pm.dim();
  j["parts"] = pm.parts();
  std::vector<double> w(pm.weights.data(),
                        pm.weights.data() + pm.weights.size());
  j["weights"] = std::move(w);  // column-major
  return j;
}

inline PartModel part_model_from_json(const json& j) {
  PartModel pm;
  pm.category = j.at("category").get<int>();
  int d = j.at("dim").get<int>(), p = j.at("parts").get<int>();
  std::vector<double> w = j.at("weights").get<std::vector<double>>();
  if (int(w.size()) != d * p)
    throw std::runtime_error("part model weight count mismatch");
  pm.weights = Eigen::Map<Matrix>(w.data(), d, p);
  return pm;
}

inline json solver_report_to_json(const SolverReport& r,
                                  bool include_timing = true) {
  json j;
  j["solver"] = r.solver;
  j["iterations"] = r.iterations;
  j["stop_reason"] = stop_reason_name(r.stop_reason);
  j["objective_trace"] = r.objective_trace;
  j["constraint_residuals"] = r.constraint_residuals;
  if (include_timing) j["wall_time_sec"] = r.wall_time_sec;
  return j;
}

inline json ground_truth_to_json(const GroundTruth& t) {
  json cats = json::array();
  for (size_t c = 0; c < t.planted.size(); ++c) {
    json planted;
    for (const auto& [id, slots] : t.planted[c]) planted[id] = slots;
    const Matrix& proto = t.prototypes[c];
    std::vector<double> p(proto.data(), proto.data() + proto.size());
    cats.push_back({{"planted", std::move(planted)},
                    {"prototype_dim", proto.rows()},
                    {"prototype_count", proto.cols()},
                    {"prototypes", std::move(p)}});
  }
  return json{{"schema_version", 1}, {"categories", std::move(cats)}};
}

inline GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth t;
  for (const auto& cat : j.at("categories")) {
    std::map<std::string, std::vector<int>> planted;
    for (const auto& [id, slots] : cat.at("planted").items())
      planted[id] = slots.get<std::vector<int>>();
    t.planted.push_back(std::move(planted));
    int d = cat.at("prototype_dim").get<int>();
    int p = cat.at("prototype_count").get<int>();
    std::vector<double> v = cat.at("prototypes").get<std::vector<double>>();
    t.prototypes.push_back(Eigen::Map<Matrix>(v.data(), d, p));
  }
  return t;
}

inline json pca_model_to_json(const PcaModel& m) {
  std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
  std::vector<double> comp(m.components.data(),
                           m.components.data() + m.components.size());
  return json{{"mean", std::move(mean)},
              {"dim", m.mean.size()},
              {"retained", m.retained},
              {"components", std::move(comp)}};
}

inline PcaModel pca_model_from_json(const json& j) {
  PcaModel m;
  std::vector<double> mean = j.at("mean").get<std::vector<double>>();
  m.mean = Eigen::Map<Vector>(mean.data(), Eigen::Index(mean.size()));
  m.retained = j.at("retained").get<int>();
  int dim = j.at("dim").get<int>();
  std::vector<double> comp = j.at("components").get<std::vector<double>>();
  m.components = Eigen::Map<Matrix>(comp.data(), dim, m.retained);
  return m;
}

inline json svm_model_to_json(const SvmModel& m) {
  std::vector<double> w(m.weights.data(), m.weights.data() + m.weights.size());
  std::vector<double> b(m.bias.data(), m.bias.data() + m.bias.size());
  return json{{"dim", m.weights.rows()},
              {"classes", m.weights.cols()},
              {"regularization", m.regularization},
              {"weights", std::move(w)},
              {"bias", std::move(b)}};
}

inline SvmModel svm_model_from_json(const json& j) {
  SvmModel m;
  int d = j.at("dim").get<int>(), c = j.at("classes").get<int>();
  std::vector<double> w = j.at("weights").get<std::vector<double>>();
  std::vector<double> b = j.at("bias").get<std::vector<double>>();
  m.weights = Eigen::Map<Matrix>(w.data(), d, c);
  m.bias = Eigen::Map<Vector>(b.data(), c);
  m.regularization = j.at("regularization").get<double>();
  return m;
}

}  // namespace pqap
