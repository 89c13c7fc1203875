#include <gtest/gtest.h>

#include <sstream>

#include "aqua/trainer.hpp"

using namespace aqua;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    SceneSpec s;
    s.image = {16, 16, 40.0, 1};
    s.primitives.push_back({Sphere{Vec3(0, -0.2, 0), 0.5}, Vec3(0.7, 0.4, 0.3)});
    s.cameras.target = Vec3(0, -0.2, 0);
    return generate_dataset(s, 0);
  }();
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.grid = {8, 8, 8};
  cfg.sampling = {16, 16, 0.05, 10.0};
  cfg.batch = 256;
  cfg.iterations = 10;
  cfg.seed = 5;
  cfg.early_stop_interval = 1000;
  return cfg;
}

TrainHooks constant_validation() {
  TrainHooks h;
  h.validate = [](const Model&, int) { return 10.0; };
  return h;
}

}  // namespace

TEST(Train, ZeroIterationsReturnsInitialModel) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 0;
  const TrainResult r = train(cfg, tiny_dataset());
  EXPECT_EQ(r.model.field.params(), initial_model(cfg).field.params());
  EXPECT_EQ(r.iterations_run, 0);
  EXPECT_TRUE(r.log.iterations.empty());
}

TEST(Train, SameSeedSameLogAndParameters) {
  const TrainConfig cfg = tiny_config();
  const TrainResult a = train(cfg, tiny_dataset(), constant_validation());
  const TrainResult b = train(cfg, tiny_dataset(), constant_validation());
  EXPECT_EQ(a.log.loss, b.log.loss);
  EXPECT_EQ(a.model.field.params(), b.model.field.params());
  TrainConfig other = cfg;
  other.seed = 6;
  EXPECT_NE(train(other, tiny_dataset(), constant_validation()).log.loss, a.log.loss);
}

TEST(Train, FirstStepMatchesDirectComposition) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 1;
  const TrainResult r = train(cfg, tiny_dataset(), constant_validation());

  // Same step assembled from the public building blocks.
  const Dataset& ds = tiny_dataset();
  Model m = initial_model(cfg);
  const std::uint64_t iter_seed = derive_seed(cfg.seed, 1);
  TrainingBatch batch = sample_batch(ds, ds.indices(Split::kTrain), cfg, m.ray_range(), derive_seed(iter_seed, 1));
  const RenderedBatch rb = render_rays(m, batch.rays, true, derive_seed(iter_seed, 2));
  const LossResult loss = l2_loss(rb.output.rgb, batch.target);
  const SampleGradients sg = renderer_backward(rb.samples, rb.field, rb.profile, rb.output, loss.d_rgb, m.renderer);
  GradientBuffer g(m.field.vertex_count());
  m.field.backward(rb.samples, sg.d_sigma, sg.d_rgb, g);
  RAdamState opt{cfg.optim, 0, {}, {}};
  const ParamBlock blocks[2] = {{"density", m.field.density_params(), g.d_density()},
                                {"color", m.field.color_params(), g.d_color()}};
  radam_step(opt, blocks);

  EXPECT_EQ(r.log.loss[0], loss.loss);
  EXPECT_EQ(r.model.field.params(), m.field.params());
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  TrainConfig cfg = tiny_config();
  cfg.threads = 1;
  const TrainResult one = train(cfg, tiny_dataset(), constant_validation());
  cfg.threads = 3;
  const TrainResult three = train(cfg, tiny_dataset(), constant_validation());
  ASSERT_EQ(one.model.field.params().size(), three.model.field.params().size());
  for (std::size_t i = 0; i < one.model.field.params().size(); ++i)
    EXPECT_NEAR(one.model.field.params()[i], three.model.field.params()[i], 1e-6);
  for (std::size_t i = 0; i < one.log.loss.size(); ++i) EXPECT_NEAR(one.log.loss[i], three.log.loss[i], 1e-6);
}

TEST(Train, HaltRestoresBestCheckpoint) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 12;
  cfg.early_stop_interval = 2;
  const std::vector<double> scores{20.0, 22.0, 21.5};
  std::vector<std::vector<double>> snapshots;
  TrainHooks hooks;
  hooks.validate = [&](const Model& m, int) {
    snapshots.push_back(m.field.params());
    return scores[snapshots.size() - 1];
  };
  const TrainResult r = train(cfg, tiny_dataset(), hooks);
  EXPECT_TRUE(r.halted);
  EXPECT_EQ(r.iterations_run, 6);
  EXPECT_EQ(r.best_iteration, 4);
  EXPECT_EQ(r.model.iteration, 4);
  EXPECT_EQ(r.model.validation_psnr, 22.0);
  ASSERT_EQ(snapshots.size(), 3u);
  EXPECT_EQ(r.model.field.params(), snapshots[1]);
}

TEST(Train, RobustAndScaledVariantsRun) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 3;
  cfg.robust.enabled = true;
  cfg.dgs.enabled = true;
  const TrainResult r = train(cfg, tiny_dataset(), constant_validation());
  EXPECT_EQ(r.log.loss.size(), 3u);
  for (double l : r.log.loss) EXPECT_TRUE(std::isfinite(l));
  cfg.batch = 100;
  EXPECT_THROW(train(cfg, tiny_dataset(), constant_validation()), InvalidArgument);
}

TEST(Train, NonFiniteLossNamesIteration) {
  Dataset ds = tiny_dataset();
  for (auto& f : ds.frames) f.image.pixels.assign(f.image.size(), Vec3::Constant(std::nan("")));
  try {
    train(tiny_config(), ds, constant_validation());
    FAIL() << "expected numerical failure";
  } catch (const NumericalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(TrainLog, CsvHasOneRowPerIteration) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 4;
  const TrainResult r = train(cfg, tiny_dataset(), constant_validation());
  std::ostringstream os;
  r.log.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("iteration,loss,validation_psnr,seconds_per_100\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\n4,"), std::string::npos);
}
