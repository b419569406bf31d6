#include <set>

#include <gtest/gtest.h>

#include "vesselgen/structmetrics.hpp"
#include "vesselgen/synthvessel.hpp"

using namespace vesselgen;

TEST(GenerateMask, NoTreesIsEmpty) {
  VesselTreeConfig cfg;
  cfg.trees_per_channel = 0;
  const auto m = generate_mask(cfg);
  EXPECT_EQ(m.foreground_fraction(), 0.0);
  EXPECT_EQ(m.width(), 32u);
}

TEST(GenerateMask, SameSeedSameMask) {
  VesselTreeConfig cfg;
  cfg.seed = 77;
  EXPECT_EQ(generate_mask(cfg), generate_mask(cfg));
  auto other = cfg;
  other.seed = 78;
  EXPECT_NE(generate_mask(cfg), generate_mask(other));
}

TEST(GenerateMask, UnbranchedTreesAreSeparateLoopFreeStrokes) {
  VesselTreeConfig cfg;
  cfg.max_depth = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    const auto r = struct_report(generate_mask(cfg));
    EXPECT_EQ(r.artery.component_count, cfg.trees_per_channel) << "seed " << seed;
    EXPECT_EQ(r.vein.component_count, cfg.trees_per_channel) << "seed " << seed;
    EXPECT_EQ(r.artery.loop_count + r.vein.loop_count, 0u) << "seed " << seed;
  }
}

TEST(GenerateMask, CertainBifurcationBranches) {
  VesselTreeConfig cfg;
  cfg.bifurcation_prob = 1.0;
  cfg.max_depth = 1;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    const auto r = struct_report(generate_mask(cfg));
    EXPECT_GE(r.artery.branch_point_count + r.vein.branch_point_count, 1u) << "seed " << seed;
  }
}

TEST(GenerateMask, ConfigValidation) {
  auto bad = [](auto edit) {
    VesselTreeConfig c;
    edit(c);
    return c;
  };
  EXPECT_THROW(generate_mask(bad([](auto& c) { c.width_decay = 1.0; })), ConfigError);
  EXPECT_THROW(generate_mask(bad([](auto& c) { c.bifurcation_prob = 1.5; })), ConfigError);
  EXPECT_THROW(generate_mask(bad([](auto& c) { c.branch_angle_max = 90.0; })), ConfigError);
  EXPECT_THROW(generate_mask(bad([](auto& c) { c.branch_angle_min = 0.0; })), ConfigError);
  EXPECT_THROW(generate_mask(bad([](auto& c) { c.step_length = 2.0; })), ConfigError);
}

TEST(GenerateDataset, EmptyRequest) {
  std::mt19937_64 rng(1);
  EXPECT_TRUE(generate_dataset(0, {}, rng).masks.empty());
}

TEST(GenerateDataset, DeskDefaultsAreSparse) {
  std::mt19937_64 rng(2);
  const auto ds = generate_dataset(100, {}, rng);
  ASSERT_EQ(ds.masks.size(), 100u);
  double mean = 0.0;
  std::size_t crossings = 0;
  for (const auto& m : ds.masks) {
    const double f = m.foreground_fraction();
    EXPECT_GE(f, 0.01);
    EXPECT_LE(f, 0.20);
    mean += f;
    crossings += struct_report(m).crossing_pixel_count;
  }
  mean /= 100.0;
  EXPECT_GE(mean, 0.02);
  EXPECT_LE(mean, 0.15);
  EXPECT_GT(crossings, 0u);  // interleaved roots make the channels cross
  EXPECT_EQ(std::set<std::uint64_t>(ds.seeds.begin(), ds.seeds.end()).size(), 100u);
}

TEST(GenerateDataset, SeedsReproduceMasks) {
  std::mt19937_64 rng(3);
  const auto ds = generate_dataset(10, {}, rng);
  for (std::size_t i = 0; i < 10; ++i) {
    VesselTreeConfig c;
    c.seed = ds.seeds[i];
    EXPECT_EQ(generate_mask(c), ds.masks[i]);
  }
}

TEST(GenerateDataset, UnreachableBandIsAConfigError) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(generate_dataset(3, {}, rng, {0.5, 0.6, 10}), ConfigError);
}

TEST(GenerateMask, FullScaleProfile) {
  auto cfg = VesselTreeConfig::full_scale_profile();
  cfg.seed = 5;
  const auto m = generate_mask(cfg);
  EXPECT_EQ(m.width(), 256u);
  EXPECT_GT(m.foreground_fraction(), 0.0);
  EXPECT_LT(m.foreground_fraction(), 0.5);
}
