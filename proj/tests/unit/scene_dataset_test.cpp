#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "aqua/dataset.hpp"
#include "aqua/scene.hpp"
#include "test_util.hpp"

using namespace aqua;

namespace {

SceneSpec tiny_scene(bool distractors) {
  SceneSpec s;
  s.name = "tiny";
  s.image = {16, 12, 40.0, 1};
  s.primitives.push_back({Sphere{Vec3(0, -0.3, 0), 0.5}, Vec3(0.6, 0.4, 0.3)});
  s.primitives.push_back({Box{Vec3(-1, -1, -1), Vec3(1, -0.8, 1)}, Vec3(0.5, 0.5, 0.4)});
  if (distractors) {
    FloaterSpec f;
    f.count = 6;
    f.radius = 0.1;
    f.near = 1.5;
    f.far = 2.0;
    s.distractors.push_back(f);
  }
  s.cameras.target = Vec3(0, -0.3, 0);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

SceneSpec load_preset(const std::string& name) {
  std::ifstream is(std::filesystem::path(AQUA_PRESET_DIR) / (name + ".json"));
  return scene_from_json(Json::parse(is));
}

}  // namespace

TEST(Medium, SpecExamples) {
  MediumSpec vacuum{0.0, Vec3(0.05, 0.15, 0.2)};
  EXPECT_EQ(attenuate(vacuum, Vec3(0.7, 0.2, 0.1), 3.0), Vec3(0.7, 0.2, 0.1));
  MediumSpec ln2{std::log(2.0), Vec3(0.0, 0.2, 0.4)};
  EXPECT_NEAR((attenuate(ln2, Vec3(1, 1, 1), 1.0) - Vec3(0.5, 0.6, 0.7)).norm(), 0.0, 1e-12);
}

TEST(Medium, TransmittanceIsMultiplicative) {
  for (double s : {0.0, 0.05, 0.7, 3.0})
    for (double a : {0.1, 1.0, 4.5})
      for (double b : {0.0, 0.3, 2.0})
        EXPECT_NEAR(medium_transmittance(s, a + b), medium_transmittance(s, a) * medium_transmittance(s, b), 1e-12);
}

TEST(Oracle, MissShowsMediumColorAndHitMatchesAnalytic) {
  SceneSpec s;
  s.image = {5, 5, 30.0, 1};
  s.primitives.push_back({Sphere{Vec3::Zero(), 0.5}, Vec3(0.9, 0.1, 0.1)});
  const Camera cam = Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3::UnitY(), 30.0, 5, 5);
  const OracleFrame f = oracle_render(s, cam, 0);
  // Center pixel: sphere front at distance 2.5.
  EXPECT_NEAR(f.depth[12], 2.5, 1e-12);
  EXPECT_NEAR((f.image.pixels[12] - attenuate(s.medium, Vec3(0.9, 0.1, 0.1), 2.5)).norm(), 0.0, 1e-12);
  EXPECT_FALSE(std::isfinite(f.depth[0]));
  EXPECT_EQ(f.image.pixels[0], s.medium.color);
}

TEST(Oracle, SupersamplingAveragesSubRays) {
  SceneSpec s = tiny_scene(false);
  s.image.supersample = 2;
  const Camera cam = s.camera(0);
  const OracleFrame f = oracle_render(s, cam, 0);
  const int r = 5, c = 7;
  Vec3 expect = Vec3::Zero();
  for (double dy : {0.25, 0.75})
    for (double dx : {0.25, 0.75}) {
      const SceneHit h = trace(s.primitives, {}, cam.position, cam.direction_at(c + dx, r + dy));
      expect += h.found() ? attenuate(s.medium, h.albedo, h.t) : s.medium.color;
    }
  EXPECT_NEAR((f.image.at(r, c) - expect / 4.0).norm(), 0.0, 1e-12);
}

TEST(Dataset, InterleavedSplitOfTwentyFrames) {
  const Dataset ds = generate_dataset(tiny_scene(false), 0);
  ASSERT_EQ(ds.frames.size(), 20u);
  EXPECT_EQ(ds.indices(Split::kTrain).size(), 16u);
  EXPECT_EQ(ds.indices(Split::kVal), (std::vector<int>{4, 14}));
  EXPECT_EQ(ds.indices(Split::kTest), (std::vector<int>{9, 19}));
}

TEST(Dataset, StaticMaskMarksDistractorFreePixels) {
  const Dataset ds = generate_dataset(tiny_scene(true), 3);
  std::size_t masked = 0;
  for (const auto& f : ds.frames) {
    for (std::size_t i = 0; i < f.static_mask.size(); ++i) {
      if (f.static_mask[i]) EXPECT_EQ(f.image.pixels[i], f.static_image.pixels[i]);
      else ++masked;
    }
  }
  EXPECT_GT(masked, 0u);
}

TEST(Dataset, WriteIsByteIdenticalAndRoundTrips) {
  const Dataset ds = generate_dataset(tiny_scene(true), 11);
  const auto a = aqua::testing::temp_dir("ds_a"), b = aqua::testing::temp_dir("ds_b");
  write_dataset(ds, a);
  write_dataset(generate_dataset(tiny_scene(true), 11), b);
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  const Dataset back = load_dataset(a);
  ASSERT_EQ(back.frames.size(), ds.frames.size());
  EXPECT_EQ(back.seed, 11u);
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    EXPECT_EQ(back.frames[i].split, ds.frames[i].split);
    EXPECT_EQ(back.frames[i].image.pixels, ds.frames[i].image.pixels);
    EXPECT_EQ(back.frames[i].static_image.pixels, ds.frames[i].static_image.pixels);
    EXPECT_EQ(back.frames[i].static_mask, ds.frames[i].static_mask);
    EXPECT_NEAR((back.frames[i].camera.position - ds.frames[i].camera.position).norm(), 0.0, 1e-12);
  }
  // Different seeds move the floaters.
  EXPECT_NE(generate_dataset(tiny_scene(true), 12).frames[0].image.pixels, ds.frames[0].image.pixels);
}

TEST(Dataset, MissingAndCorruptInputs) {
  const auto dir = aqua::testing::temp_dir("ds_bad");
  EXPECT_THROW(load_dataset(dir), MissingInput);
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(load_dataset(dir), CorruptArtifact);
}

TEST(SceneJson, SchemaErrorsNameTheField) {
  Json j = scene_to_json(tiny_scene(false));
  j["primitives"][0]["radius"] = "big";
  try {
    scene_from_json(j);
    FAIL() << "expected schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "/primitives/0/radius") << e.what();
  }
  Json k = scene_to_json(tiny_scene(false));
  k["medium"]["colour"] = {0, 0, 0};
  EXPECT_THROW(scene_from_json(k), SchemaError);
  Json out = scene_to_json(tiny_scene(false));
  out["primitives"][0]["center"] = {0.0, 0.0, 0.9};
  EXPECT_THROW(scene_from_json(out), SchemaError);
}

TEST(SceneJson, RoundTripsEveryField) {
  const SceneSpec s = tiny_scene(true);
  const Json once = scene_to_json(s);
  EXPECT_EQ(scene_to_json(scene_from_json(once)), once);
}

TEST(Presets, LoadAndStayInsideTheUnitCube) {
  for (const char* name : {"coral_static", "coral_floaters"}) {
    const SceneSpec s = load_preset(name);
    EXPECT_NO_THROW(s.validate()) << name;
    EXPECT_EQ(s.cameras.frames, 20) << name;
  }
  EXPECT_TRUE(load_preset("coral_static").distractors.empty());
  EXPECT_FALSE(load_preset("coral_floaters").distractors.empty());
}
