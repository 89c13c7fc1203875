#pragma once

// The aquanerf command line: generate, train, render, eval, ablate.
//
// Exit codes: 0 ok, 1 usage or invalid configuration, 2 missing input,
// 3 corrupt artifact, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "aqua/config.hpp"
#include "aqua/dataset.hpp"
#include "aqua/error.hpp"
#include "aqua/metrics.hpp"
#include "aqua/model.hpp"
#include "aqua/trainer.hpp"

#ifndef AQUA_PRESET_DIR
#define AQUA_PRESET_DIR "presets"
#endif

namespace aqua::cli {

namespace fs = std::filesystem;

inline fs::path preset_dir() {
  if (const char* env = std::getenv("AQUA_PRESET_DIR")) return env;
  return AQUA_PRESET_DIR;
}

/// A scene argument is a path, or the name of a bundled preset.
inline fs::path resolve_scene(const std::string& arg) {
  const fs::path p(arg);
  if (fs::exists(p)) return p;
  const fs::path preset = preset_dir() / (arg + ".json");
  if (!p.has_extension() && fs::exists(preset)) return preset;
  throw MissingInput("scene file not found: '" + arg + "'");
}

inline SceneSpec load_scene(const fs::path& path) {
  std::ifstream is(path);
  try {
    return scene_from_json(Json::parse(is));
  } catch (const Json::exception& e) {
    throw InvalidArgument("scene '" + path.string() + "': " + e.what());
  } catch (const SchemaError& e) {
    throw InvalidArgument("scene '" + path.string() + "': " + e.what());
  }
}

/// A checkpoint argument is a file, or a run directory holding model.ckpt
/// or model.json.
inline fs::path resolve_checkpoint(const std::string& arg) {
  const fs::path p(arg);
  if (fs::is_directory(p)) {
    for (const char* name : {"model.ckpt", "model.json"})
      if (fs::exists(p / name)) return p / name;
    throw MissingInput("no checkpoint in directory '" + arg + "'");
  }
  return p;
}

inline void write_json(const fs::path& path, const Json& j) {
  auto os = detail::open_out(path);
  os << j.dump(2) << '\n';
}

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string config;
};

struct TrainFlags {
  std::optional<std::string> renderer;
  std::optional<double> eta, base, lr;
  std::optional<bool> normalize, robust, dgs;
  std::optional<int> iterations, interval;
  std::optional<long long> batch;
  std::vector<std::string> set;
  std::string format;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--renderer", renderer, "baseline | single_surface")
        ->check(CLI::IsMember({"baseline", "single_surface"}));
    cmd->add_option("--eta", eta, "Gaussian standard deviation of the single-surface renderer");
    cmd->add_option("--base", base, "constant weight offset of the single-surface renderer");
    cmd->add_option("--normalize-weights", normalize, "divide single-surface weights by their sum");
    cmd->add_option("--robust", robust, "patch-based robust loss");
    cmd->add_option("--dgs", dgs, "depth-based gradient scaling");
    cmd->add_option("--iterations", iterations, "maximum training iterations");
    cmd->add_option("--batch", batch, "rays per batch");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--early-stop-interval", interval, "iterations between validation checks");
    cmd->add_option("--set", set, "override any config key, KEY=VALUE (VALUE parsed as JSON)");
    cmd->add_option("--checkpoint-format", format, "binary | json")->check(CLI::IsMember({"binary", "json"}));
  }

  void apply(RunConfig& cfg) const {
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw InvalidArgument("--set expects KEY=VALUE, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
      Json value = Json::parse(text, nullptr, false);
      if (value.is_discarded()) value = text;
      cfg.set(key, value, "--set ");
    }
    if (renderer) cfg.set("renderer.type", *renderer);
    if (eta) cfg.set("renderer.eta", *eta);
    if (base) cfg.set("renderer.base", *base);
    if (normalize) cfg.set("renderer.normalize_weights", *normalize);
    if (robust) cfg.set("robust.enabled", *robust);
    if (dgs) cfg.set("dgs.enabled", *dgs);
    if (iterations) cfg.set("train.iterations", *iterations);
    if (batch) cfg.set("train.batch", *batch);
    if (lr) cfg.set("optim.lr", *lr);
    if (interval) cfg.set("early_stop.interval", *interval);
    if (!format.empty()) cfg.set("checkpoint.format", format);
  }
};

inline RunConfig resolve_config(const GlobalOptions& g, const TrainFlags& flags) {
  RunConfig cfg;
  if (!g.config.empty()) cfg.merge_file(g.config);
  flags.apply(cfg);
  if (g.seed) cfg.set("seed", static_cast<long long>(*g.seed));
  if (g.threads) cfg.set("threads", *g.threads);
  return cfg;
}

inline fs::path save_model(const Model& m, const fs::path& dir, const std::string& format) {
  const fs::path path = dir / (format == "json" ? "model.json" : "model.ckpt");
  if (format == "json") save_checkpoint_json(m, path);
  else save_checkpoint(m, path);
  return path;
}

/// Trains one configuration into `dir`: model, train_log.csv, config.json.
inline TrainResult train_run(const RunConfig& cfg, const Dataset& ds, const fs::path& dir, std::ostream& out) {
  const TrainConfig tc = cfg.train_config();
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg.resolved());
  out << "resolved config: " << cfg.resolved().dump() << '\n';
  TrainHooks hooks;
  hooks.progress = &out;
  TrainResult res = train(tc, ds, hooks);
  const fs::path ckpt = save_model(res.model, dir, cfg.get("checkpoint.format").get<std::string>());
  auto log = detail::open_out(dir / "train_log.csv");
  res.log.write_csv(log);
  out << "iterations " << res.iterations_run << (res.halted ? " (early stop)" : "") << ", best iteration "
      << res.best_iteration << ", validation psnr " << format_metric(res.model.validation_psnr) << " dB\n";
  out << "checkpoint " << ckpt.string() << '\n';
  return res;
}

inline void write_renders(const MetricReport& rep, const Dataset& ds, const fs::path& dir) {
  const auto test = ds.indices(Split::kTest);
  for (std::size_t i = 0; i < rep.renders.size(); ++i)
    write_ppm(dir / detail::frame_name(ds.frames[test[i]].index, "ppm"), rep.renders[i]);
}

// ---------------------------------------------------------------------------

inline int cmd_generate(const GlobalOptions& g, const std::string& scene_arg, const fs::path& out_dir,
                        std::ostream& out) {
  const fs::path scene_path = resolve_scene(scene_arg);
  const SceneSpec scene = load_scene(scene_path);
  const std::uint64_t seed = g.seed.value_or(0);
  const Dataset ds = generate_dataset(scene, seed);
  write_dataset(ds, out_dir);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& f : ds.frames) ++counts[static_cast<int>(f.split)];
  out << "generated " << ds.frames.size() << " frames of '" << scene.name << "' (seed " << seed << ") into "
      << out_dir.string() << ": " << counts[0] << " train, " << counts[1] << " val, " << counts[2] << " test\n";
  return kExitOk;
}

inline int cmd_train(const GlobalOptions& g, const TrainFlags& flags, const fs::path& data, const fs::path& out_dir,
                     std::ostream& out) {
  const RunConfig cfg = resolve_config(g, flags);
  cfg.train_config();  // reject bad values before loading data
  const Dataset ds = load_dataset(data);
  train_run(cfg, ds, out_dir, out);
  return kExitOk;
}

struct RenderOptions {
  std::string checkpoint;
  fs::path out;
  std::string camera;
  std::string data;
  std::optional<int> frame;
  std::optional<double> azimuth;
  std::optional<int> width, height;
  std::string depth;
};

inline int cmd_render(const GlobalOptions& g, const RenderOptions& o, std::ostream& out, std::ostream& err) {
  const Model model = load_checkpoint(resolve_checkpoint(o.checkpoint));
  Camera cam;
  std::optional<Dataset> ds;
  if (!o.data.empty()) ds = load_dataset(o.data);
  if (!o.camera.empty()) {
    if (!fs::exists(o.camera)) throw MissingInput("camera file not found: '" + o.camera + "'");
    std::ifstream is(o.camera);
    try {
      cam = camera_from_json(Json::parse(is));
    } catch (const Json::exception& e) {
      throw InvalidArgument("camera '" + o.camera + "': " + e.what());
    }
  } else if (ds && o.frame) {
    if (*o.frame < 0 || *o.frame >= static_cast<int>(ds->frames.size()))
      throw InvalidArgument("frame " + std::to_string(*o.frame) + " is not in the dataset");
    cam = ds->frames[*o.frame].camera;
  } else if (ds && o.azimuth) {
    SceneSpec s = ds->scene;
    s.cameras.azimuth_offset_deg += *o.azimuth;
    cam = s.camera(0);
  } else {
    throw InvalidArgument("render needs --camera FILE, or --data DIR with --frame N or --azimuth DEG");
  }

  const int w = o.width.value_or(cam.width), h = o.height.value_or(cam.height);
  if (w < 1 || h < 1) throw InvalidArgument("render size must be positive");
  if (w != cam.width || h != cam.height) {
    err << "warning: rendering at " << w << "x" << h << " instead of the camera's " << cam.width << "x"
        << cam.height << "; intrinsics rescaled\n";
    const double sx = static_cast<double>(w) / cam.width, sy = static_cast<double>(h) / cam.height;
    cam.intrinsics = {cam.intrinsics.fx * sx, cam.intrinsics.fy * sy, cam.intrinsics.cx * sx, cam.intrinsics.cy * sy};
    cam.width = w;
    cam.height = h;
  }

  const int threads = resolve_threads(g.threads.value_or(0));
  const RayBatch rays = generate_rays(cam, FullImage{}, std::nullopt, model.ray_range());
  const RenderedBatch b = render_rays(model, rays, false, g.seed.value_or(0), threads);
  Image img(cam.width, cam.height);
  std::vector<double> depth(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!b.output.rgb[i].allFinite()) throw NumericalFailure("non-finite color at pixel " + std::to_string(i));
    img.pixels[i] = b.output.rgb[i];
    depth[i] = b.output.depth[i];
  }
  write_ppm(o.out, img);
  if (!o.depth.empty()) write_pfm(o.depth, cam.width, cam.height, depth);
  out << "rendered " << cam.width << "x" << cam.height << " with " << to_string(model.renderer.kind) << " to "
      << o.out.string() << '\n';
  if (ds && o.frame && !o.camera.size() && w == ds->frames[*o.frame].image.width &&
      h == ds->frames[*o.frame].image.height) {
    const Frame& f = ds->frames[*o.frame];
    out << "psnr vs frame " << f.index << ": " << format_metric(psnr(quantize8(img), f.image)) << " dB (static "
        << format_metric(psnr(quantize8(img), f.static_image)) << " dB)\n";
  }
  return kExitOk;
}

inline int cmd_eval(const GlobalOptions& g, const std::string& checkpoint, const fs::path& data,
                    const fs::path& out_dir, const std::optional<std::string>& renderer, std::ostream& out) {
  const fs::path ckpt = resolve_checkpoint(checkpoint);
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  RendererConfig rc = model.renderer;
  if (renderer) rc.kind = renderer_from_string(*renderer);
  const MetricReport rep = evaluate_run(model, ds, rc, resolve_threads(g.threads.value_or(0)));
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", Json{{"checkpoint", fs::absolute(ckpt).string()},
                                           {"dataset", fs::absolute(data).string()},
                                           {"renderer", std::string(to_string(rc.kind))},
                                           {"eta", rc.eta},
                                           {"base", rc.base},
                                           {"normalize_weights", rc.normalize_weights}});
  {
    auto os = detail::open_out(out_dir / "metrics.csv");
    write_report_csv(os, rep);
  }
  write_renders(rep, ds, out_dir / "renders");
  write_report_csv(out, rep);
  return kExitOk;
}

struct Variant {
  const char* name;
  const char* dir;
  const char* renderer;
  bool robust;
  bool dgs;
};

inline constexpr Variant kAblationVariants[] = {
    {"aquanerf", "aquanerf", "single_surface", false, false},
    {"+rl", "rl", "single_surface", true, false},
    {"+dgs", "dgs", "single_surface", false, true},
    {"+rl+dgs", "rl_dgs", "single_surface", true, true},
    {"baseline", "baseline", "baseline", false, false},
};

inline int cmd_ablate(const GlobalOptions& g, const TrainFlags& flags, const fs::path& data, const fs::path& out_dir,
                      std::ostream& out, std::ostream& err) {
  const RunConfig base = resolve_config(g, flags);
  base.train_config();
  const Dataset ds = load_dataset(data);
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", base.resolved());

  std::ostringstream summary, frames, errors;
  write_report_header(summary, true);
  write_report_header(frames, true);
  int status = kExitOk;
  std::vector<std::pair<double, std::string>> ranking;
  for (const Variant& v : kAblationVariants) {
    out << "== variant " << v.name << '\n';
    try {
      RunConfig cfg = base;
      cfg.set("renderer.type", v.renderer);
      cfg.set("robust.enabled", v.robust);
      cfg.set("dgs.enabled", v.dgs);
      const TrainResult res = train_run(cfg, ds, out_dir / v.dir, out);
      const MetricReport rep =
          evaluate_run(res.model, ds, res.model.renderer, resolve_threads(cfg.train_config().threads));
      write_renders(rep, ds, out_dir / v.dir / "renders");
      for (const auto& f : rep.frames) write_report_row(frames, rep.renderer, f, v.name);
      write_report_row(summary, rep.renderer, rep.mean, v.name);
      ranking.emplace_back(rep.mean.psnr_static, v.name);
    } catch (const Error& e) {
      err << "variant " << v.name << " failed: " << e.what() << '\n';
      errors << v.name << ": " << e.what() << '\n';
      FrameMetrics nan;
      nan.frame_id = "mean";
      nan.psnr_full = nan.psnr_static = nan.ssim_full = nan.ssim_static = std::numeric_limits<double>::quiet_NaN();
      write_report_row(summary, v.renderer, nan, v.name);
      if (status == kExitOk)
        status = dynamic_cast<const MissingInput*>(&e)      ? kExitMissingInput
                 : dynamic_cast<const CorruptArtifact*>(&e)  ? kExitCorruptArtifact
                 : dynamic_cast<const NumericalFailure*>(&e) ? kExitNumericalFailure
                                                             : kExitUsage;
    }
  }
  {
    auto os = detail::open_out(out_dir / "ablation.csv");
    os << summary.str();
    auto fr = detail::open_out(out_dir / "ablation_frames.csv");
    fr << frames.str();
    if (!errors.str().empty()) {
      auto er = detail::open_out(out_dir / "errors.txt");
      er << errors.str();
    }
  }
  std::stable_sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  out << summary.str() << "ranking by masked-static psnr:";
  for (std::size_t i = 0; i < ranking.size(); ++i) out << ' ' << i + 1 << '.' << ranking[i].second;
  out << '\n';
  return status;
}

// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingInput*>(&e)) return kExitMissingInput;
  if (dynamic_cast<const CorruptArtifact*>(&e)) return kExitCorruptArtifact;
  if (dynamic_cast<const NumericalFailure*>(&e)) return kExitNumericalFailure;
  return kExitUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"aquanerf: single-surface volume rendering on synthetic underwater scenes"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "base random seed");
  app.add_option("--threads", g.threads, "worker threads (falls back to AQUA_THREADS, then 1)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "flat JSON run configuration");

  auto* gen = app.add_subcommand("generate", "render a posed dataset from a scene file or preset");
  std::string scene_arg;
  fs::path gen_out;
  gen->add_option("scene", scene_arg, "scene JSON file or preset name")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train a model on a dataset");
  TrainFlags train_flags;
  fs::path train_data, train_out;
  trn->add_option("--data", train_data, "dataset directory")->required();
  trn->add_option("--out", train_out, "run directory")->required();
  train_flags.add_to(trn);

  auto* ren = app.add_subcommand("render", "render a full frame from a checkpoint");
  RenderOptions ro;
  ren->add_option("--checkpoint", ro.checkpoint, "checkpoint file or run directory")->required();
  ren->add_option("--out", ro.out, "output PPM image")->required();
  ren->add_option("--camera", ro.camera, "camera JSON file");
  ren->add_option("--data", ro.data, "dataset directory supplying cameras");
  ren->add_option("--frame", ro.frame, "dataset frame index");
  ren->add_option("--azimuth", ro.azimuth, "orbit azimuth offset in degrees (with --data)");
  ren->add_option("--width", ro.width, "output width");
  ren->add_option("--height", ro.height, "output height");
  ren->add_option("--depth", ro.depth, "also write a depth map (PFM)");

  auto* evl = app.add_subcommand("eval", "score a checkpoint on the test frames");
  std::string eval_ckpt;
  fs::path eval_data, eval_out;
  std::optional<std::string> eval_renderer;
  evl->add_option("--checkpoint", eval_ckpt, "checkpoint file or run directory")->required();
  evl->add_option("--data", eval_data, "dataset directory")->required();
  evl->add_option("--out", eval_out, "output directory")->required();
  evl->add_option("--renderer", eval_renderer, "override the checkpoint's renderer")
      ->check(CLI::IsMember({"baseline", "single_surface"}));

  auto* abl = app.add_subcommand("ablate", "train and score the ablation variants");
  TrainFlags ablate_flags;
  fs::path ablate_data, ablate_out;
  abl->add_option("--data", ablate_data, "dataset directory")->required();
  abl->add_option("--out", ablate_out, "output directory")->required();
  ablate_flags.add_to(abl);

  for (auto* sub : {gen, trn, ren, evl, abl}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(g, scene_arg, gen_out, out);
    if (*trn) return cmd_train(g, train_flags, train_data, train_out, out);
    if (*ren) return cmd_render(g, ro, out, err);
    if (*evl) return cmd_eval(g, eval_ckpt, eval_data, eval_out, eval_renderer, out);
    if (*abl) return cmd_ablate(g, ablate_flags, ablate_data, ablate_out, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}

}  // namespace aqua::cli
