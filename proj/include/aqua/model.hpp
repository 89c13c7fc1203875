#pragma once

// A trained model (field + renderer settings), full-frame rendering and
// checkpoint files.
//
// Binary checkpoint layout (little-endian):
//   "AQCK" | u32 version | u64 header_len | header JSON | f64 params[4V] | u64 FNV-1a of all prior bytes
// The JSON checkpoint holds the same header plus a "params" array.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"
#include "aqua/image.hpp"
#include "aqua/json_util.hpp"
#include "aqua/parallel.hpp"
#include "aqua/radiance_field.hpp"
#include "aqua/renderer.hpp"

namespace aqua {

struct SamplingConfig {
  std::size_t coarse = 64;
  std::size_t fine = 64;
  double near = 0.05;
  double far = 10.0;
};

struct Model {
  VoxelField field;
  RendererConfig renderer;
  SamplingConfig sampling;
  int iteration = 0;
  double validation_psnr = 0.0;

  RayRange ray_range() const { return RayRange{sampling.near, sampling.far, field.bounds()}; }
};

struct RenderedBatch {
  SampleSet samples;
  FieldOutputs field;
  WeightProfile profile;
  RenderOutput output;
};

/// Coarse stratified pass with the compositing weights, one importance
/// resampling round, then the configured renderer on the merged samples.
inline RenderedBatch render_rays(const Model& model, const RayBatch& rays, bool jitter, std::uint64_t seed,
                                 int threads = 1) {
  RenderedBatch b;
  const SampleSet coarse = stratified_samples(rays, model.sampling.coarse, jitter, derive_seed(seed, 11));
  FieldOutputs coarse_out;
  coarse_out.resize(coarse.size());
  std::vector<double> coarse_w(coarse.size());
  parallel_chunks(coarse.ray_count(), threads, [&](std::size_t r0, std::size_t r1, int) {
    const std::size_t n = coarse.per_ray;
    model.field.query_range(coarse.positions, r0 * n, r1 * n, coarse_out);
    std::vector<double> omega(n);
    for (std::size_t r = r0; r < r1; ++r)
      compute_weights(coarse.ray_delta(r), std::span<const double>(coarse_out.sigma.data() + r * n, n),
                      std::span<double>(coarse_w.data() + r * n, n), omega);
  });
  b.samples = importance_resample(coarse, coarse_w, model.sampling.fine, derive_seed(seed, 12));
  b.field.resize(b.samples.size());
  b.profile.resize(b.samples.ray_count(), b.samples.per_ray);
  b.output.resize(b.samples.ray_count());
  parallel_chunks(b.samples.ray_count(), threads, [&](std::size_t r0, std::size_t r1, int) {
    const std::size_t n = b.samples.per_ray;
    model.field.query_range(b.samples.positions, r0 * n, r1 * n, b.field);
    for (std::size_t r = r0; r < r1; ++r) render_ray(r, b.samples, b.field, model.renderer, b.profile, b.output);
  });
  return b;
}

/// Full-frame render through pixel centers.
inline Image render_image(const Model& model, const Camera& camera, int threads = 1, std::uint64_t seed = 0) {
  const RayBatch rays = generate_rays(camera, FullImage{}, std::nullopt, model.ray_range());
  const RenderedBatch b = render_rays(model, rays, false, seed, threads);
  Image img(camera.width, camera.height);
  for (std::size_t i = 0; i < rays.size(); ++i) img.pixels[i] = b.output.rgb[i];
  return img;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Json model_header(const Model& m) {
  const auto& f = m.field;
  return Json{{"format", "aquanerf-checkpoint"},
              {"resolution", {f.resolution().nx, f.resolution().ny, f.resolution().nz}},
              {"bounds_min", json_util::to_json(f.bounds().lo)},
              {"bounds_max", json_util::to_json(f.bounds().hi)},
              {"medium_color", json_util::to_json(f.medium_color())},
              {"renderer",
               {{"type", std::string(to_string(m.renderer.kind))},
                {"eta", m.renderer.eta},
                {"base", m.renderer.base},
                {"normalize_weights", m.renderer.normalize_weights}}},
              {"sampling",
               {{"coarse", m.sampling.coarse},
                {"fine", m.sampling.fine},
                {"near", m.sampling.near},
                {"far", m.sampling.far}}},
              {"iteration", m.iteration},
              {"validation_psnr", std::isfinite(m.validation_psnr) ? Json(m.validation_psnr) : Json(nullptr)}};
}

inline Model model_from_header(const Json& h) {
  const auto& res = h.at("resolution");
  const GridResolution g{res.at(0).get<int>(), res.at(1).get<int>(), res.at(2).get<int>()};
  const Aabb box{json_util::vec3(h.at("bounds_min"), "/bounds_min"), json_util::vec3(h.at("bounds_max"), "/bounds_max")};
  Model m{VoxelField(g, box, json_util::vec3(h.at("medium_color"), "/medium_color")), {}, {}, 0, 0.0};
  const auto& r = h.at("renderer");
  m.renderer.kind = renderer_from_string(r.at("type").get<std::string>());
  m.renderer.eta = r.at("eta").get<double>();
  m.renderer.base = r.at("base").get<double>();
  m.renderer.normalize_weights = r.at("normalize_weights").get<bool>();
  const auto& s = h.at("sampling");
  m.sampling.coarse = s.at("coarse").get<std::size_t>();
  m.sampling.fine = s.at("fine").get<std::size_t>();
  m.sampling.near = s.at("near").get<double>();
  m.sampling.far = s.at("far").get<double>();
  m.iteration = h.at("iteration").get<int>();
  const auto& v = h.at("validation_psnr");
  m.validation_psnr = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
  return m;
}

template <typename T>
void append_raw(std::vector<std::uint8_t>& buf, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

}  // namespace detail

inline void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf = {'A', 'Q', 'C', 'K'};
  detail::append_raw(buf, std::uint32_t{1});
  const std::string header = detail::model_header(m).dump();
  detail::append_raw(buf, static_cast<std::uint64_t>(header.size()));
  buf.insert(buf.end(), header.begin(), header.end());
  const auto& p = m.field.params();
  const auto* raw = reinterpret_cast<const std::uint8_t*>(p.data());
  buf.insert(buf.end(), raw, raw + p.size() * sizeof(double));
  detail::append_raw(buf, detail::fnv1a(buf.data(), buf.size()));
  auto os = detail::open_out(path);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw Error("failed writing checkpoint '" + path.string() + "'");
}

inline void save_checkpoint_json(const Model& m, const std::filesystem::path& path) {
  Json j = detail::model_header(m);
  j["params"] = m.field.params();
  auto os = detail::open_out(path);
  os << j.dump() << '\n';
}

/// Loads either checkpoint format, detected from the leading bytes.
inline Model load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("checkpoint not found: '" + path.string() + "'");
  std::ifstream is(path, std::ios::binary);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint '" + path.string() + "'";
  try {
    if (buf.size() >= 4 && std::memcmp(buf.data(), "AQCK", 4) == 0) {
      constexpr std::size_t kFixed = 4 + 4 + 8;
      if (buf.size() < kFixed + 8) throw CorruptArtifact(where + " is truncated");
      std::uint64_t stored = 0;
      std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
      if (stored != detail::fnv1a(buf.data(), buf.size() - 8)) throw CorruptArtifact(where + " failed checksum");
      std::uint32_t version = 0;
      std::memcpy(&version, buf.data() + 4, 4);
      if (version != 1) throw CorruptArtifact(where + " has unsupported version " + std::to_string(version));
      std::uint64_t header_len = 0;
      std::memcpy(&header_len, buf.data() + 8, 8);
      if (kFixed + header_len + 8 > buf.size()) throw CorruptArtifact(where + " is truncated");
      const std::string header(reinterpret_cast<const char*>(buf.data() + kFixed), header_len);
      Model m = detail::model_from_header(Json::parse(header));
      auto& p = m.field.params();
      const std::size_t bytes = p.size() * sizeof(double);
      if (kFixed + header_len + bytes + 8 != buf.size()) throw CorruptArtifact(where + " has the wrong payload size");
      std::memcpy(p.data(), buf.data() + kFixed + header_len, bytes);
      return m;
    }
    const Json j = Json::parse(buf.begin(), buf.end());
    Model m = detail::model_from_header(j);
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.field.params().size()) throw CorruptArtifact(where + " has the wrong parameter count");
    m.field.params() = params;
    return m;
  } catch (const Json::exception& e) {
    throw CorruptArtifact(where + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptArtifact(where + ": " + e.what());
  }
}

}  // namespace aqua
