#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "aqua/metrics.hpp"
#include "aqua/trainer.hpp"

using namespace aqua;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (auto& p : img.pixels) p = Vec3(u(rng), u(rng), u(rng));
  return img;
}

// Smooth test pattern so a one-pixel shift stays structurally similar.
Image smooth_image(int w, int h, double phase = 0.0) {
  Image img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double x = 0.5 + 0.4 * std::sin(0.3 * (c + phase)) * std::cos(0.25 * r);
      img.at(r, c) = Vec3(x, 0.8 * x + 0.1, 1.0 - x);
    }
  return img;
}

}  // namespace

TEST(Psnr, SpecExamples) {
  const Image a = random_image(8, 8, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Image b = a;
  for (auto& p : b.pixels) p += Vec3::Constant(0.1);
  EXPECT_NEAR(psnr(b, a), 20.0, 1e-9);
  // Differences confined to masked-out pixels give an exact masked match.
  Image c = a;
  c.pixels[0] = Vec3::Zero();
  Mask m(a.size(), 1);
  m[0] = 0;
  EXPECT_TRUE(std::isinf(psnr(c, a, &m)));
  EXPECT_FALSE(std::isinf(psnr(c, a)));
}

TEST(Psnr, RejectsMismatchedShapes) {
  EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), InvalidArgument);
  const Mask none(16, 0);
  EXPECT_THROW(psnr(Image(4, 4), Image(4, 4), &none), InvalidArgument);
}

TEST(Ssim, IdentityInversionAndStructure) {
  const Image a = random_image(32, 24, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  Image inv = a;
  for (auto& p : inv.pixels) p = Vec3::Ones() - p;
  EXPECT_LT(ssim(inv, a), 0.1);

  const Image s = smooth_image(40, 30);
  const Image shifted = smooth_image(40, 30, 1.0);
  Image shuffled = s;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.pixels.begin(), shuffled.pixels.end(), rng);
  EXPECT_GT(ssim(shifted, s), ssim(shuffled, s));
  EXPECT_GT(ssim(shifted, s), 0.8);
}

TEST(Ssim, SymmetricAndFullMaskMatchesUnmasked) {
  const Image a = random_image(20, 16, 4), b = random_image(20, 16, 5);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  const Mask all(a.size(), 1);
  EXPECT_EQ(ssim(a, b, &all), ssim(a, b));
  EXPECT_EQ(psnr(a, b, &all), psnr(a, b));
  EXPECT_THROW(ssim(Image(8, 8), Image(8, 8)), InvalidArgument);
}

TEST(DifferenceCluster, FindsLargestConnectedBlob) {
  Image a(10, 10), b(10, 10);
  for (int r = 2; r < 5; ++r)
    for (int c = 2; c < 6; ++c) b.at(r, c) = Vec3::Ones();
  b.at(8, 8) = Vec3::Ones();
  EXPECT_EQ(largest_difference_cluster(a, b, 0.5), 12u);
  EXPECT_EQ(largest_difference_cluster(a, a, 0.0), 0u);
}

TEST(Report, OneRowPerTestFramePlusMean) {
  SceneSpec s;
  s.image = {16, 12, 40.0, 1};
  s.primitives.push_back({Sphere{Vec3::Zero(), 0.5}, Vec3(0.6, 0.4, 0.3)});
  const Dataset ds = generate_dataset(s, 0);
  TrainConfig cfg;
  cfg.grid = {8, 8, 8};
  const Model m = initial_model(cfg);
  const MetricReport rep = evaluate_run(m, ds, RendererConfig{});
  EXPECT_EQ(rep.frames.size(), ds.indices(Split::kTest).size());
  EXPECT_EQ(rep.renders.size(), rep.frames.size());
  std::ostringstream os;
  write_report_csv(os, rep);
  const std::string csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(rep.frames.size()) + 2);
  EXPECT_NE(csv.find("\nmean,single_surface,"), std::string::npos) << csv;
}

TEST(Report, OracleAgainstItselfIsExact) {
  SceneSpec s;
  s.image = {16, 12, 40.0, 1};
  s.primitives.push_back({Sphere{Vec3::Zero(), 0.5}, Vec3(0.6, 0.4, 0.3)});
  const Dataset ds = generate_dataset(s, 0);
  for (int i : ds.indices(Split::kTest)) {
    const Frame& f = ds.frames[i];
    const FrameMetrics m = frame_metrics("x", f.static_image, f);
    EXPECT_TRUE(std::isinf(m.psnr_full));
    EXPECT_TRUE(std::isinf(m.psnr_static));
    EXPECT_NEAR(m.ssim_full, 1.0, 1e-12);
  }
  EXPECT_EQ(format_metric(std::numeric_limits<double>::infinity()), "inf");
}
