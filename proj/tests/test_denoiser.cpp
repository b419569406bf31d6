#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "vesselgen/synthvessel.hpp"
#include "vesselgen/train.hpp"

using namespace vesselgen;

namespace {

DenoiserConfig small_config() {
  DenoiserConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 2;
  cfg.time_embed_dim = 16;
  cfg.norm_groups = 4;
  return cfg;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

TEST(Denoiser, InitIsSeededAndStructured) {
  const auto cfg = small_config();
  Rng a(4), b(4), c(5);
  const auto p = init_params(a, cfg);
  EXPECT_EQ(p, init_params(b, cfg));
  EXPECT_NE(p, init_params(c, cfg));
  for (const auto& [name, t] : p) {
    if (ends_with(name, ".b") || ends_with(name, ".offset")) {
      EXPECT_EQ(t, Tensor::zeros(t.shape())) << name;
    }
    if (ends_with(name, ".gain")) {
      EXPECT_EQ(t, Tensor::ones(t.shape())) << name;
    }
  }
}

TEST(Denoiser, KaimingVariance) {
  DenoiserConfig cfg;  // default widths give weight tensors with thousands of entries
  Rng rng(8);
  const auto p = init_params(rng, cfg);
  for (const auto& [name, t] : p) {
    if (!ends_with(name, ".w") || t.size() < 2000) continue;
    const std::size_t fan_in = t.size() / t.dim(0);
    double sq = 0.0;
    for (auto v : t.values()) sq += double(v) * double(v);
    const double var = sq / double(t.size());
    EXPECT_NEAR(var / (2.0 / double(fan_in)), 1.0, 0.2) << name;
  }
}

TEST(Denoiser, ConfigValidation) {
  auto cfg = small_config();
  cfg.norm_groups = 3;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = small_config();
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = small_config();
  cfg.time_embed_dim = 7;
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_THROW(small_config().check_input({1, 2, 6, 6}), ShapeError);
  EXPECT_THROW(small_config().check_input({1, 3, 8, 8}), ShapeError);
}

TEST(Denoiser, OutputShapeAndTimeDependence) {
  const auto cfg = small_config();
  Rng rng(1);
  const auto p = init_params(rng, cfg);
  const auto x = standard_normal<float>({2, 2, 8, 8}, rng);
  const auto y0 = predict_noise(cfg, p, x, {0, 0});
  const auto y1 = predict_noise(cfg, p, x, {0, 50});
  EXPECT_EQ(y0.shape(), x.shape());
  EXPECT_TRUE(y0.all_finite());
  const std::size_t half = x.size() / 2;
  bool first_same = true, second_same = true;
  for (std::size_t i = 0; i < half; ++i) first_same = first_same && y0[i] == y1[i];
  for (std::size_t i = half; i < x.size(); ++i) second_same = second_same && y0[i] == y1[i];
  EXPECT_TRUE(first_same);
  EXPECT_FALSE(second_same);
}

TEST(Denoiser, MissingParameterIsReported) {
  const auto cfg = small_config();
  Rng rng(1);
  auto p = init_params(rng, cfg);
  p.erase("mid.conv2.w");
  try {
    predict_noise(cfg, p, Tensor::zeros({1, 2, 8, 8}), {0});
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("mid.conv2.w"), std::string::npos);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  DenoiserParams p{{"w", Tensor({3}, {1, -2, 3})}};
  auto st = OptimizerState::for_params(p);
  const DenoiserParams g{{"w", Tensor::zeros({3})}};
  const auto before = p;
  adam_step(p, g, st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  DenoiserParams p{{"w", Tensor({2}, {0, 0})}};
  AdamHyper h;
  h.learning_rate = 0.01;
  auto st = OptimizerState::for_params(p, h);
  const DenoiserParams g{{"w", Tensor({2}, {0.5f, -3.0f})}};
  for (int k = 1; k <= 20; ++k) {
    const auto before = p.at("w");
    adam_step(p, g, st);
    EXPECT_EQ(st.step, std::uint64_t(k));
    EXPECT_NEAR(before[0] - p.at("w")[0], 0.01, 1e-6);
    EXPECT_NEAR(p.at("w")[1] - before[1], 0.01, 1e-6);
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  DenoiserParams p{{"a", Tensor({1}, {1})}, {"b", Tensor({1}, {1})}};
  auto st = OptimizerState::for_params(p);
  const DenoiserParams g{{"a", Tensor({1}, {0.1f})}, {"b", Tensor({1}, {std::nanf("")})}};
  const auto before = p;
  try {
    adam_step(p, g, st);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, GlobalNormClipping) {
  DenoiserParams g{{"a", Tensor({2}, {3, 0})}, {"b", Tensor({1}, {4})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.at("a")[0], 0.6, 1e-7);
  EXPECT_NEAR(g.at("b")[0], 0.8, 1e-7);
  DenoiserParams small{{"a", Tensor({1}, {0.5f})}};
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small.at("a")[0], 0.5f);
}

TEST(Train, HistoryLengthAndDeterminism) {
  const auto cfg = small_config();
  const auto v = VesselTreeConfig::for_resolution(16);
  Rng data_rng(3);
  const auto data = generate_dataset(6, v, data_rng).masks;
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  const auto a = train(data, cfg, {}, linear_schedule(20), Rng(5), tc);
  const auto b = train(data, cfg, {}, linear_schedule(20), Rng(5), tc);
  EXPECT_EQ(a.loss_history.size(), 3u);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Train, SplitRunEqualsContinuousRun) {
  const auto cfg = small_config();
  const auto v = VesselTreeConfig::for_resolution(16);
  Rng data_rng(3);
  const auto data = generate_dataset(5, v, data_rng).masks;
  TrainConfig tc;
  tc.batch_size = 2;
  const auto sched = linear_schedule(20);
  Trainer whole(data, cfg, {}, sched, tc, Trainer::initial_state(cfg, tc.adam, Rng(9)));
  Trainer first(data, cfg, {}, sched, tc, Trainer::initial_state(cfg, tc.adam, Rng(9)));
  for (int e = 0; e < 3; ++e) whole.run_epoch();
  first.run_epoch();
  Trainer second(data, cfg, {}, sched, tc, first.state());
  second.run_epoch();
  second.run_epoch();
  EXPECT_EQ(whole.state().params, second.state().params);
  EXPECT_EQ(whole.state().optimizer, second.state().optimizer);
  EXPECT_EQ(whole.state().loss_history, second.state().loss_history);
}

TEST(Train, SingleImageLossHalvesWithin200Epochs) {
  DenoiserConfig cfg;
  cfg.base_channels = 16;
  VesselTreeConfig v;
  v.seed = 12;
  const std::vector<AVMask> data{generate_mask(v)};
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1;
  const auto r = train(data, cfg, {LossVariant::simple, 0.0}, linear_schedule(100), Rng(1), tc);
  ASSERT_EQ(r.loss_history.size(), 200u);
  // Single-sample epochs are noisy; compare 10-epoch averages.
  const auto avg = [&](std::size_t from) {
    return std::accumulate(r.loss_history.begin() + long(from), r.loss_history.begin() + long(from + 10), 0.0) / 10.0;
  };
  EXPECT_LT(avg(190), 0.5 * avg(0));
}

TEST(Train, RejectsEmptyDataset) {
  EXPECT_THROW(Trainer({}, small_config(), {}, linear_schedule(5), {}, {}), ParameterError);
}
