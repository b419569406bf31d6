#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "vesselgen/diffusion.hpp"

using namespace vesselgen;

namespace {

template <typename Real>
Var zero_predictor(BasicRecord<Real>& rec, Var x, const std::vector<std::size_t>&) {
  return rec.input(BasicTensor<Real>::zeros(rec.value(x).shape()));
}

BasicDiffusionBatch<double> random_batch(Rng& rng, std::size_t n, std::size_t size, double density) {
  std::bernoulli_distribution on(density);
  std::vector<double> raw(n * 2 * size * size);
  for (auto& v : raw) v = on(rng) ? 1.0 : 0.0;
  return make_batch<double>(BasicTensor<double>({n, 2, size, size}, raw), linear_schedule(20), rng);
}

}  // namespace

TEST(ForwardDiffuse, ZeroNoiseScalesSignal) {
  const auto s = linear_schedule(10);
  const BasicTensor<double> x0({2, 1, 1, 2}, {1, -1, 0.5, -0.25});
  const auto xt = forward_diffuse(x0, {3, 9}, BasicTensor<double>::zeros(x0.shape()), s);
  EXPECT_DOUBLE_EQ(xt[0], std::sqrt(s.alpha_bar(3)));
  EXPECT_DOUBLE_EQ(xt[1], -std::sqrt(s.alpha_bar(3)));
  EXPECT_DOUBLE_EQ(xt[2], 0.5 * std::sqrt(s.alpha_bar(9)));
}

TEST(ForwardDiffuse, ShapeChecks) {
  const auto s = linear_schedule(10);
  const auto x0 = BasicTensor<double>::zeros({2, 2, 2, 2});
  EXPECT_THROW(forward_diffuse(x0, {1}, x0, s), ShapeError);
  EXPECT_THROW(forward_diffuse(x0, {1, 2}, BasicTensor<double>::zeros({2, 2, 2, 1}), s), ShapeError);
  EXPECT_THROW(forward_diffuse(x0, {1, 10}, x0, s), IndexError);
}

TEST(MakeBatch, SignalAndTimestepRange) {
  Rng rng(1);
  const auto b = random_batch(rng, 64, 4, 0.3);
  for (std::size_t i = 0; i < b.x0.size(); ++i) EXPECT_EQ(b.x0[i], 2.0 * b.raw_mask[i] - 1.0);
  for (auto t : b.t) EXPECT_LT(t, 20u);
  EXPECT_EQ(b.eps.shape(), b.x0.shape());
}

TEST(LossSimple, PerfectAndZeroPredictor) {
  Rng rng(2);
  const auto s = linear_schedule(20);
  const auto batch = random_batch(rng, 16, 16, 0.2);
  {
    BasicRecord<double> rec;
    auto perfect = [&](BasicRecord<double>& r, Var, const std::vector<std::size_t>&) { return r.input(batch.eps); };
    EXPECT_EQ(rec.value(loss_simple(rec, perfect, batch, s)).item(), 0.0);
  }
  BasicRecord<double> rec;
  // mean of eps^2 over 8192 standard normals
  EXPECT_NEAR(rec.value(loss_simple(rec, zero_predictor<double>, batch, s)).item(), 1.0, 0.05);
}

TEST(LossVessel, SingleForegroundPixelWeighsDouble) {
  const auto s = linear_schedule(4);
  std::vector<double> raw(8, 0.0), eps(8, 0.0);
  raw[5] = 1.0;
  const double e = 0.37;
  eps[5] = std::sqrt(e);  // squared error e at the vessel pixel, 0 elsewhere
  const BasicTensor<double> mask({1, 2, 2, 2}, raw);
  const BasicDiffusionBatch<double> batch{mask_to_signal(mask), mask, {2}, BasicTensor<double>({1, 2, 2, 2}, eps)};
  BasicRecord<double> rec;
  const double v = rec.value(loss_vessel(rec, zero_predictor<double>, batch, s, std::numbers::ln2)).item();
  EXPECT_NEAR(v * 8.0, 2.0 * e, 1e-15);
}

TEST(LossVessel, BackgroundOnlyEqualsSimple) {
  Rng rng(3);
  const auto s = linear_schedule(20);
  const auto batch = random_batch(rng, 4, 8, 0.0);
  BasicRecord<double> rec;
  const double simple = rec.value(loss_simple(rec, zero_predictor<double>, batch, s)).item();
  for (double c : {0.0, 0.5, 2.0, 7.0}) {
    BasicRecord<double> r;
    EXPECT_DOUBLE_EQ(r.value(loss_vessel(r, zero_predictor<double>, batch, s, c)).item(), simple);
  }
}

TEST(LossVessel, MonotoneInC) {
  Rng rng(4);
  const auto s = linear_schedule(20);
  const auto batch = random_batch(rng, 4, 8, 0.15);
  double prev = -1.0;
  for (double c : {0.0, 0.25, 1.0, 2.0, 4.0}) {
    BasicRecord<double> r;
    const double v = r.value(loss_vessel(r, zero_predictor<double>, batch, s, c)).item();
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(LossVessel, NegativeCIsRejected) {
  Rng rng(5);
  const auto batch = random_batch(rng, 1, 4, 0.5);
  BasicRecord<double> r;
  EXPECT_THROW(loss_vessel(r, zero_predictor<double>, batch, linear_schedule(20), -0.1), ParameterError);
  EXPECT_THROW(parse_loss_variant("weighted"), ParameterError);
}

TEST(Sampler, SingleStepZeroPredictor) {
  const auto s = NoiseSchedule::from_betas({0.3});
  Rng rng(9), copy(9);
  const Shape shape{2, 2, 3, 3};
  const auto out = ddpm_sample<double>(zero_predictor<double>, s, rng, shape);
  const auto x1 = standard_normal<double>(shape, copy);
  for (std::size_t i = 0; i < out.size(); ++i)
    EXPECT_DOUBLE_EQ(out[i], std::clamp(x1[i] / std::sqrt(0.7), -1.0, 1.0));
}

TEST(Sampler, BoundedAndDeterministic) {
  const auto s = linear_schedule(15);
  auto noisy = [](BasicRecord<double>& r, Var x, const std::vector<std::size_t>&) {
    return r.mul(x, r.input(BasicTensor<double>::scalar(0.5)));
  };
  Rng a(21), b(21);
  const auto x = ddpm_sample<double>(noisy, s, a, {3, 2, 4, 4});
  const auto y = ddpm_sample<double>(noisy, s, b, {3, 2, 4, 4});
  EXPECT_EQ(x, y);
  for (auto v : x.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(ddpm_sample<double>(noisy, s, a, {3, 1, 4, 4}), ShapeError);
}

TEST(Binarize, StrictThreshold) {
  const Tensor x({1, 2, 1, 3}, {0.0f, 0.25f, -0.5f, 1.0f, 0.0f, -1.0f});
  const auto m = binarize(x, 0.0)[0];
  EXPECT_FALSE(m.get(Channel::artery, 0, 0));
  EXPECT_TRUE(m.get(Channel::artery, 1, 0));
  EXPECT_FALSE(m.get(Channel::artery, 2, 0));
  EXPECT_TRUE(m.get(Channel::vein, 0, 0));
  EXPECT_FALSE(m.get(Channel::vein, 1, 0));
  EXPECT_FALSE(binarize(x, 0.25)[0].get(Channel::artery, 1, 0));
}
