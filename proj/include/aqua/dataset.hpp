#pragma once

// Posed image datasets rendered from a SceneSpec, with train/val/test
// splits and on-disk layout:
//
//   manifest.json             scene, seed, per-frame camera/split/paths
//   images/frame_NNN.ppm      observed frame (with distractors)
//   static/frame_NNN.ppm      same view without distractors
//   masks/frame_NNN.pgm       255 where the pixel is distractor-free
//   depth/frame_NNN.pfm       oracle depth through the pixel center

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/image.hpp"
#include "aqua/json_util.hpp"
#include "aqua/scene.hpp"

namespace aqua {

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw CorruptArtifact("unknown split '" + s + "'");
}

/// 80:10:10 interleaved by frame: within every run of ten consecutive
/// frames, offset 4 validates and offset 9 tests. Held-out views therefore
/// always sit between two training views on the orbit.
inline Split split_for_frame(int index) {
  const int r = index % 10;
  if (r == 4) return Split::kVal;
  if (r == 9) return Split::kTest;
  return Split::kTrain;
}

struct Frame {
  int index = 0;
  Split split = Split::kTrain;
  Camera camera;
  Image image;
  Image static_image;
  std::vector<std::uint8_t> static_mask;  // 1 = no distractor in this pixel
  std::vector<double> depth;
};

struct Dataset {
  SceneSpec scene;
  std::uint64_t seed = 0;
  std::vector<Frame> frames;

  std::vector<int> indices(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < frames.size(); ++i)
      if (frames[i].split == s) out.push_back(static_cast<int>(i));
    return out;
  }
};

/// Renders every frame of the orbit. Images are snapped to 8-bit levels so
/// the in-memory dataset equals what load_dataset reads back.
inline Dataset generate_dataset(const SceneSpec& scene, std::uint64_t rng_seed) {
  scene.validate();
  Dataset ds;
  ds.scene = scene;
  ds.seed = rng_seed;
  // Floater draws depend on the dataset seed as well as the scene's own.
  for (auto& d : ds.scene.distractors)
    if (auto* f = std::get_if<FloaterSpec>(&d)) f->seed = derive_seed(f->seed, rng_seed);
  for (int f = 0; f < scene.cameras.frames; ++f) {
    Frame fr;
    fr.index = f;
    fr.split = split_for_frame(f);
    fr.camera = ds.scene.camera(f);
    OracleFrame full = oracle_render(ds.scene, fr.camera, f, true);
    OracleFrame clean = oracle_render(ds.scene, fr.camera, f, false);
    fr.image = quantize8(full.image);
    fr.static_image = quantize8(clean.image);
    fr.static_mask.resize(full.distractor_mask.size());
    for (std::size_t i = 0; i < fr.static_mask.size(); ++i) fr.static_mask[i] = full.distractor_mask[i] ? 0 : 1;
    fr.depth = std::move(full.depth);
    ds.frames.push_back(std::move(fr));
  }
  // Restore the scene's declared floater seeds for serialization.
  ds.scene = scene;
  return ds;
}

namespace detail {
inline std::string frame_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03d.%s", index, ext);
  return buf;
}
}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Json frames = Json::array();
  for (const auto& f : ds.frames) {
    const std::string img = "images/" + detail::frame_name(f.index, "ppm");
    const std::string stat = "static/" + detail::frame_name(f.index, "ppm");
    const std::string mask = "masks/" + detail::frame_name(f.index, "pgm");
    const std::string depth = "depth/" + detail::frame_name(f.index, "pfm");
    write_ppm(dir / img, f.image);
    write_ppm(dir / stat, f.static_image);
    write_pgm(dir / mask, f.image.width, f.image.height, f.static_mask);
    write_pfm(dir / depth, f.image.width, f.image.height, f.depth);
    frames.push_back({{"index", f.index},
                      {"split", to_string(f.split)},
                      {"image", img},
                      {"static_image", stat},
                      {"mask", mask},
                      {"depth", depth},
                      {"camera", camera_to_json(f.camera)}});
  }
  const Json manifest{{"format", "aquanerf-dataset"},
                      {"version", 1},
                      {"seed", ds.seed},
                      {"scene", scene_to_json(ds.scene)},
                      {"frames", frames}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw Error("cannot write '" + (dir / "manifest.json").string() + "'");
  os << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw MissingInput("dataset manifest not found: '" + manifest_path.string() + "'");
  Json m;
  try {
    std::ifstream is(manifest_path);
    m = Json::parse(is);
  } catch (const Json::exception& e) {
    throw CorruptArtifact("'" + manifest_path.string() + "': " + e.what());
  }
  Dataset ds;
  try {
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.scene = scene_from_json(m.at("scene"));
    for (const auto& fj : m.at("frames")) {
      Frame f;
      f.index = fj.at("index").get<int>();
      f.split = split_from_string(fj.at("split").get<std::string>());
      f.camera = camera_from_json(fj.at("camera"), "/frames/" + std::to_string(f.index) + "/camera");
      f.image = read_ppm(dir / fj.at("image").get<std::string>());
      f.static_image = read_ppm(dir / fj.at("static_image").get<std::string>());
      int w = 0, h = 0;
      f.static_mask = read_pgm(dir / fj.at("mask").get<std::string>(), w, h);
      if (w != f.image.width || h != f.image.height || f.image.width != f.camera.width ||
          f.image.height != f.camera.height)
        throw CorruptArtifact("frame " + std::to_string(f.index) + ": image, mask and camera sizes disagree");
      ds.frames.push_back(std::move(f));
    }
  } catch (const Json::exception& e) {
    throw CorruptArtifact("'" + manifest_path.string() + "': " + e.what());
  } catch (const SchemaError& e) {
    throw CorruptArtifact("'" + manifest_path.string() + "': " + e.what());
  }
  return ds;
}

}  // namespace aqua
