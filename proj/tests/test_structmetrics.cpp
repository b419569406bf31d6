#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vesselgen/structmetrics.hpp"

using namespace vesselgen;
using namespace fixtures;

namespace {

BinaryImage random_blobs(std::mt19937_64& rng, std::size_t size, int discs) {
  BinaryImage img(size, size);
  std::uniform_real_distribution<double> pos(0.0, double(size)), rad(0.5, 4.0);
  for (int k = 0; k < discs; ++k) {
    const double cx = pos(rng), cy = pos(rng), r = rad(rng);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (std::hypot(double(x) + 0.5 - cx, double(y) + 0.5 - cy) <= r) img.set(x, y);
  }
  return img;
}

bool has_solid_2x2(const BinaryImage& img) {
  for (long y = 0; y + 1 < long(img.height); ++y)
    for (long x = 0; x + 1 < long(img.width); ++x)
      if (img.at(x, y) && img.at(x + 1, y) && img.at(x, y + 1) && img.at(x + 1, y + 1)) return true;
  return false;
}

}  // namespace

TEST(Skeletonize, TrivialInputs) {
  EXPECT_EQ(skeletonize(blank()), blank());
  auto dot = blank();
  dot.set(3, 4);
  EXPECT_EQ(skeletonize(dot), dot);
}

TEST(Skeletonize, BarBecomesThinLine) {
  const auto bar = from_rows({"             ",
                              " ########### ",
                              " ########### ",
                              " ########### ",
                              "             "});
  const auto s = skeletonize(bar);
  EXPECT_EQ(components8(s), 1u);
  EXPECT_EQ(holes4(s), 0u);
  EXPECT_FALSE(has_solid_2x2(s));
  EXPECT_GE(s.count(), 9u);  // the line spans most of the bar
  for (std::size_t i = 0; i < s.pixels.size(); ++i)
    if (s.pixels[i]) EXPECT_TRUE(bar.pixels[i]);
}

TEST(Skeletonize, AlreadyThinShapesAreFixed) {
  for (const auto& img : {line10(), y_junction(), ring(), two_strokes()}) EXPECT_EQ(skeletonize(img), img);
}

TEST(Skeletonize, PreservesTopologyOnRandomBlobs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const auto img = random_blobs(rng, 24, 1 + trial % 8);
    const auto s = skeletonize(img);
    ASSERT_EQ(components8(s), components8(img)) << "trial " << trial;
    ASSERT_EQ(holes4(s), holes4(img)) << "trial " << trial;
    ASSERT_FALSE(has_solid_2x2(s)) << "trial " << trial;
    ASSERT_EQ(skeletonize(s), s) << "trial " << trial;
  }
}

TEST(VesselGraph, PairsAndWindow) {
  auto img = blank();
  img.set(2, 2);
  img.set(3, 3);
  EXPECT_EQ(build_vessel_graph(img, 1).edges.size(), 1u);
  auto far = blank();
  far.set(2, 2);
  far.set(5, 2);
  EXPECT_EQ(build_vessel_graph(far, 1).edges.size(), 0u);
  EXPECT_EQ(build_vessel_graph(far, 3).edges.size(), 1u);
  EXPECT_THROW(build_vessel_graph(far, 0), ParameterError);
}

TEST(VesselGraph, StraightLine) {
  const auto g = build_vessel_graph(line10(), 1);
  EXPECT_EQ(g.vertices.size(), 10u);
  EXPECT_EQ(g.edges.size(), 9u);
  EXPECT_EQ(std::count(g.degree.begin(), g.degree.end(), 1u), 2);
  EXPECT_EQ(std::count(g.degree.begin(), g.degree.end(), 2u), 8);
  for (const auto& [a, b] : g.edges) EXPECT_LT(a, b);
}

TEST(StructReport, EmptyMask) {
  const auto r = struct_report(AVMask(16, 16));
  EXPECT_EQ(r.artery, ChannelReport{});
  EXPECT_EQ(r.vein, ChannelReport{});
  EXPECT_EQ(r.crossing_pixel_count, 0u);
  EXPECT_TRUE(r.empty_flag);
}

TEST(StructReport, HandBuiltFixtures) {
  const auto y = channel_report(y_junction(), 1);
  EXPECT_EQ(y.component_count, 1u);
  EXPECT_EQ(y.branch_point_count, 1u);
  EXPECT_EQ(y.trifurcation_count, 0u);
  EXPECT_EQ(y.loop_count, 0u);

  const auto o = channel_report(ring(), 1);
  EXPECT_EQ(o.component_count, 1u);
  EXPECT_EQ(o.branch_point_count, 0u);
  EXPECT_EQ(o.loop_count, 1u);

  const auto two = channel_report(two_strokes(), 1);
  EXPECT_EQ(two.component_count, 2u);
  EXPECT_EQ(two.loop_count, 0u);

  const auto cross = struct_report(crossing_pair());
  EXPECT_EQ(cross.crossing_pixel_count, 1u);
  EXPECT_EQ(cross.artery.component_count, 1u);
  EXPECT_EQ(cross.vein.component_count, 1u);
  EXPECT_EQ(cross.artery.branch_point_count + cross.vein.branch_point_count, 0u);
  EXPECT_FALSE(cross.empty_flag);
}

TEST(StructReport, FourWayJunctionIsATrifurcation) {
  auto x = blank();
  x.set(10, 10);
  for (std::size_t k = 1; k <= 5; ++k) {
    x.set(10 - k, 10 - k);
    x.set(10 + k, 10 - k);
    x.set(10 - k, 10 + k);
    x.set(10 + k, 10 + k);
  }
  const auto r = channel_report(x, 1);
  EXPECT_EQ(r.branch_point_count, 1u);
  EXPECT_EQ(r.trifurcation_count, 1u);
  EXPECT_EQ(r.loop_count, 0u);
}

// An axis-aligned '+' cannot be thinned further, and its four inner pixels
// are pairwise diagonal neighbours, so the window graph holds four
// triangles around the centre. They count as cycles.
TEST(StructReport, AxisAlignedCrossCountsCornerTriangles) {
  auto plus = blank();
  for (std::size_t k = 5; k <= 15; ++k) {
    plus.set(k, 10);
    plus.set(10, k);
  }
  EXPECT_EQ(skeletonize(plus), plus);
  const auto r = channel_report(plus, 1);
  EXPECT_EQ(r.component_count, 1u);
  EXPECT_EQ(r.loop_count, 4u);
}

TEST(StructReport, CycleRankMatchesBruteForce) {
  std::mt19937_64 rng(23);
  std::bernoulli_distribution on(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryImage img(12, 12);
    for (auto& p : img.pixels) p = on(rng) ? 1 : 0;
    const long radius = 1 + trial % 2;
    const auto g = build_vessel_graph(img, std::size_t(radius));
    ASSERT_EQ(long(g.cycle_rank()), brute_cycle_rank(img, radius));
    ASSERT_EQ(g.component_count(), radius == 1 ? components8(img) : g.component_count());
  }
}

TEST(StructReport, TranslationInvariant) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = random_blobs(rng, 16, 3), v = random_blobs(rng, 16, 2);
    AVMask small = mask_from(a, v), big(28, 28);
    const std::size_t ox = 3 + trial % 7, oy = 2 + trial % 5;
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        for (auto c : {Channel::artery, Channel::vein})
          if (small.get(c, x, y)) big.set(c, x + ox, y + oy);
    const auto r1 = struct_report(small, 1, 0.0), r2 = struct_report(big, 1, 0.0);
    EXPECT_EQ(r1.artery.component_count, r2.artery.component_count);
    EXPECT_EQ(r1.artery.branch_point_count, r2.artery.branch_point_count);
    EXPECT_EQ(r1.artery.loop_count, r2.artery.loop_count);
    EXPECT_EQ(r1.vein.loop_count, r2.vein.loop_count);
    EXPECT_EQ(r1.crossing_pixel_count, r2.crossing_pixel_count);
  }
}

TEST(PixelMetrics, PerfectPrediction) {
  const std::vector<int> gt{0, 1, 1, 0, 0};
  const auto m = pixel_metrics(gt, gt);
  EXPECT_EQ(*m.accuracy, 1.0);
  EXPECT_EQ(*m.sensitivity, 1.0);
  EXPECT_EQ(*m.specificity, 1.0);
}

TEST(PixelMetrics, AllZeroPrediction) {
  const std::vector<int> gt{0, 1, 1, 0, 0, 0, 1, 0}, pred(8, 0);
  const auto m = pixel_metrics(pred, gt);
  EXPECT_EQ(*m.sensitivity, 0.0);
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_DOUBLE_EQ(*m.accuracy, 5.0 / 8.0);
  EXPECT_EQ(m.fn, 3u);
}

TEST(PixelMetrics, UndefinedRatesAreAbsent) {
  const std::vector<int> gt(6, 0), pred{0, 1, 0, 0, 0, 0};
  const auto m = pixel_metrics(pred, gt);
  EXPECT_FALSE(m.sensitivity.has_value());
  EXPECT_TRUE(m.specificity.has_value());
  EXPECT_THROW(pixel_metrics(std::vector<int>(3), gt), ShapeError);
  EXPECT_THROW(pixel_metrics(BinaryImage(3, 2), BinaryImage(2, 3)), ShapeError);
}

TEST(Auc, Basics) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}), 0.5);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ParameterError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ShapeError);
}

TEST(Auc, MatchesPairwiseAndIgnoresMonotoneMaps) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 7) / 7.0;  // coarse grid forces ties
      l[i] = int(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    const double a = auc(s, l);
    EXPECT_NEAR(a, brute_auc(s, l), 1e-12);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 2.0;
    EXPECT_NEAR(auc(t, l), a, 1e-12);
  }
}

TEST(EmptySampleRate, Counts) {
  std::vector<AVMask> masks(10, AVMask(10, 10));
  for (std::size_t i = 3; i < 10; ++i) masks[i].set(Channel::vein, 1, 1);
  EXPECT_DOUBLE_EQ(empty_sample_rate(masks, 0.005), 0.3);
  EXPECT_DOUBLE_EQ(empty_sample_rate(std::vector<AVMask>(4, AVMask(10, 10))), 1.0);
  EXPECT_THROW(empty_sample_rate({}), ParameterError);
}
