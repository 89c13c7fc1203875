#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "aqua/geometry.hpp"

using namespace aqua;

namespace {

Camera identity_camera(int w, int h, double f = 10.0) {
  Camera cam;
  cam.intrinsics = {f, f, 0.5 * w, 0.5 * h};
  cam.width = w;
  cam.height = h;
  return cam;
}

RayBatch unit_rays(std::size_t n, double near = 0.0, double far = 1.0) {
  RayBatch rays;
  for (std::size_t i = 0; i < n; ++i)
    rays.push_back(Vec3::Zero(), Vec3::UnitZ(), near, far, {0, 0, static_cast<int>(i)});
  return rays;
}

}  // namespace

TEST(Camera, PrincipalPointLooksDownOpticalAxis) {
  const Camera cam = identity_camera(4, 4);
  // Pixel (2,2) spans [2,3]; its center is off-axis, so query the principal point directly.
  EXPECT_NEAR((cam.direction_at(2.0, 2.0) - Vec3::UnitZ()).norm(), 0.0, 1e-12);

  const Camera odd = identity_camera(3, 3);
  const RayBatch rays = generate_rays(odd, PixelList{{{0, 1, 1}}}, std::nullopt);
  EXPECT_NEAR((rays.directions[0] - Vec3::UnitZ()).norm(), 0.0, 1e-12);
}

TEST(Camera, LookAtIsOrthonormalAndAimsAtTarget) {
  const Vec3 eye(2.0, 1.5, -3.0), target(0.1, -0.2, 0.3);
  const Camera cam = Camera::look_at(eye, target, Vec3::UnitY(), 40.0, 64, 48);
  EXPECT_NO_THROW(cam.validate());
  EXPECT_NEAR((cam.rotation.col(2) - (target - eye).normalized()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((cam.direction_at(32.0, 24.0) - (target - eye).normalized()).norm(), 0.0, 1e-12);
  // Image rows grow downward in the world.
  EXPECT_LT(cam.direction_at(32.0, 47.0).y(), cam.direction_at(32.0, 0.0).y());
}

TEST(Camera, ValidateRejectsBadCameras) {
  Camera cam = identity_camera(2, 2);
  cam.rotation(0, 0) = 1.1;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = identity_camera(2, 2);
  cam.intrinsics.fx = 0.0;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = identity_camera(2, 2);
  cam.width = 0;
  EXPECT_THROW(cam.validate(), InvalidArgument);
}

TEST(GenerateRays, FullSelectionOfTwoByTwo) {
  const RayBatch rays = generate_rays(identity_camera(2, 2), FullImage{}, std::nullopt);
  ASSERT_EQ(rays.size(), 4u);
  std::set<PixelId> ids(rays.pixels.begin(), rays.pixels.end());
  EXPECT_EQ(ids.size(), 4u);
}

TEST(GenerateRays, SameSeedSameJitter) {
  const Camera cam = identity_camera(8, 6);
  const RayBatch a = generate_rays(cam, FullImage{}, 42);
  const RayBatch b = generate_rays(cam, FullImage{}, 42);
  const RayBatch c = generate_rays(cam, FullImage{}, 43);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.directions[i], b.directions[i]);
    differs = differs || a.directions[i] != c.directions[i];
  }
  EXPECT_TRUE(differs);
}

TEST(GenerateRays, OutOfBoundsPixelNamesIndex) {
  const Camera cam = identity_camera(4, 4);
  try {
    generate_rays(cam, PixelList{{{0, 0, 0}, {0, 1, 1}, {0, 4, 0}}}, std::nullopt);
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(generate_rays(cam, PatchList{{{0, 0, 0}}, 5}, std::nullopt), InvalidArgument);
}

TEST(GenerateRays, PatchesAndRandomSets) {
  const Camera cam = identity_camera(32, 32);
  const RayBatch patch = generate_rays(cam, PatchList{{{0, 16, 8}}, 16}, std::nullopt);
  ASSERT_EQ(patch.size(), 256u);
  EXPECT_EQ(patch.pixels.front(), (PixelId{0, 16, 8}));
  EXPECT_EQ(patch.pixels.back(), (PixelId{0, 31, 23}));

  const RayBatch r1 = generate_rays(cam, RandomSet{100}, 5);
  const RayBatch r2 = generate_rays(cam, RandomSet{100}, 5);
  EXPECT_EQ(r1.pixels, r2.pixels);
}

TEST(GenerateRays, DirectionsAreUnitForRandomIntrinsics) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> focal(0.5, 500.0), pp(-20.0, 60.0), angle(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Camera cam = identity_camera(9, 7);
    cam.intrinsics = {focal(rng), focal(rng), pp(rng), pp(rng)};
    cam.rotation = Eigen::AngleAxisd(angle(rng), Vec3(angle(rng), angle(rng), 1.0).normalized()).toRotationMatrix();
    const RayBatch rays = generate_rays(cam, FullImage{}, static_cast<std::uint64_t>(trial));
    for (const auto& d : rays.directions) EXPECT_NEAR(d.norm(), 1.0, 1e-9);
  }
}

TEST(GenerateRays, RangeClipsToBoxAndRejectsBadBounds) {
  const Camera cam = identity_camera(1, 1);
  const RayRange range{0.0, 10.0, Aabb{Vec3(-1, -1, 2), Vec3(1, 1, 4)}};
  const RayBatch rays = generate_rays(cam, FullImage{}, std::nullopt, range);
  EXPECT_NEAR(rays.t_near[0], 2.0, 1e-12);
  EXPECT_NEAR(rays.t_far[0], 4.0, 1e-12);
  EXPECT_THROW(generate_rays(cam, FullImage{}, std::nullopt, RayRange{1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(generate_rays(cam, FullImage{}, std::nullopt, RayRange{-1.0, 1.0}), InvalidArgument);
}

TEST(StratifiedSamples, MidpointsWithoutJitter) {
  const SampleSet s = stratified_samples(unit_rays(1), 4, false, 0);
  ASSERT_EQ(s.per_ray, 4u);
  const double expect[] = {0.125, 0.375, 0.625, 0.875};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(s.t[i], expect[i]);
    EXPECT_DOUBLE_EQ(s.delta[i], 0.25);
    EXPECT_NEAR((s.positions[i] - expect[i] * Vec3::UnitZ()).norm(), 0.0, 1e-12);
  }
}

TEST(StratifiedSamples, JitterIsReproducibleAndStaysInBins) {
  const RayBatch rays = unit_rays(3, 0.5, 2.5);
  const SampleSet a = stratified_samples(rays, 16, true, 9);
  const SampleSet b = stratified_samples(rays, 16, true, 9);
  EXPECT_EQ(a.t, b.t);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto t = a.ray_t(r);
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_GE(t[i], 0.5 + i * 0.125);
      EXPECT_LE(t[i], 0.5 + (i + 1) * 0.125);
    }
  }
}

TEST(StratifiedSamples, RejectsDegenerateInputs) {
  EXPECT_THROW(stratified_samples(unit_rays(1), 1, false, 0), InvalidArgument);
  EXPECT_THROW(stratified_samples(unit_rays(1, 1.0, 1.0), 4, false, 0), InvalidArgument);
}

TEST(ImportanceResample, ZeroFineSamplesIsIdentity) {
  const SampleSet coarse = stratified_samples(unit_rays(2), 8, true, 3);
  const std::vector<double> w(coarse.size(), 0.1);
  const SampleSet out = importance_resample(coarse, w, 0, 1);
  EXPECT_EQ(out.t, coarse.t);
  EXPECT_EQ(out.delta, coarse.delta);
}

TEST(ImportanceResample, UnionIsSortedContainsCoarseAndCoversRange) {
  const RayBatch rays = unit_rays(4, 0.2, 3.0);
  const SampleSet coarse = stratified_samples(rays, 16, true, 11);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(coarse.size());
  for (auto& x : w) x = u(rng) < 0.3 ? u(rng) : 0.0;
  const SampleSet out = importance_resample(coarse, w, 24, 5);
  ASSERT_EQ(out.per_ray, 40u);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto t = out.ray_t(r);
    const auto d = out.ray_delta(r);
    double sum = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i > 0) EXPECT_GT(t[i], t[i - 1]);
      EXPECT_GT(d[i], 0.0);
      sum += d[i];
    }
    EXPECT_NEAR(sum, 2.8, 1e-6);
    for (double tc : coarse.ray_t(r)) EXPECT_TRUE(std::binary_search(t.begin(), t.end(), tc));
  }
}

TEST(ImportanceResample, ConcentratedWeightsPullSamplesIntoThatBin) {
  const SampleSet coarse = stratified_samples(unit_rays(1), 10, false, 0);
  std::vector<double> w(10, 0.0);
  w[6] = 1.0;
  const SampleSet out = importance_resample(coarse, w, 1000, 17);
  // Bin 6 of the midpoint-edge partition spans [0.6, 0.7].
  int inside = 0, fine = 0;
  for (double t : out.ray_t(0)) {
    const bool is_coarse = std::abs(std::fmod(t * 20.0, 2.0) - 1.0) < 1e-12;
    if (is_coarse) continue;
    ++fine;
    inside += t >= 0.6 && t <= 0.7;
  }
  ASSERT_EQ(fine, 1000);
  EXPECT_GE(inside, 900);
}

TEST(ImportanceResample, UniformWeightsGiveUniformDraws) {
  const SampleSet coarse = stratified_samples(unit_rays(1), 8, false, 0);
  for (const auto& weights : {std::vector<double>(8, 0.25), std::vector<double>(8, 0.0)}) {
    const SampleSet out = importance_resample(coarse, weights, 1000, 23);
    std::vector<double> counts(8, 0.0);
    std::vector<double> coarse_t(coarse.t.begin(), coarse.t.end());
    for (double t : out.ray_t(0)) {
      if (std::binary_search(coarse_t.begin(), coarse_t.end(), t)) continue;
      counts[std::min(7, static_cast<int>(t * 8.0))] += 1.0;
    }
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - 125.0) * (c - 125.0) / 125.0;
    const boost::math::chi_squared dist(7.0);
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << "chi2 = " << chi2;
  }
}

TEST(ImportanceResample, RejectsMismatchedWeights) {
  const SampleSet coarse = stratified_samples(unit_rays(1), 4, false, 0);
  EXPECT_THROW(importance_resample(coarse, std::vector<double>(3, 1.0), 4, 0), InvalidArgument);
}
