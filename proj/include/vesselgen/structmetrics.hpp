#pragma once

// Structural realism metrics on binary vessel masks (components, branch
// points, loops, crossings) computed on a thinned skeleton graph, plus
// pixel-wise confusion metrics and ROC AUC.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "vesselgen/error.hpp"
#include "vesselgen/mask.hpp"

namespace vesselgen {

/// Binary raster, row-major, one byte per pixel (0 or 1).
struct BinaryImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  BinaryImage() = default;
  BinaryImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}
  BinaryImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px)
      : width(w), height(h), pixels(std::move(px)) {
    if (pixels.size() != w * h) throw ShapeError("binary image size does not match dimensions");
  }

  bool at(long x, long y) const {
    return x >= 0 && y >= 0 && x < long(width) && y < long(height) &&
           pixels[std::size_t(y) * width + std::size_t(x)] != 0;
  }
  void set(std::size_t x, std::size_t y, bool on = true) { pixels[y * width + x] = on ? 1 : 0; }
  std::size_t count() const { return std::size_t(std::count_if(pixels.begin(), pixels.end(), [](auto p) { return p != 0; })); }

  friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

inline BinaryImage channel_image(const AVMask& m, Channel c) {
  return BinaryImage(m.width(), m.height(), m.channel(c));
}

namespace detail {

// Neighbour offsets in the order E, NE, N, NW, W, SW, S, SE (y grows down).
inline constexpr std::array<std::pair<int, int>, 8> ring8{{
    {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

inline std::array<int, 8> neighbourhood(const BinaryImage& img, long x, long y) {
  std::array<int, 8> n{};
  for (std::size_t k = 0; k < 8; ++k) n[k] = img.at(x + ring8[k].first, y + ring8[k].second) ? 1 : 0;
  return n;
}

/// Yokoi connectivity number for 8-connected foreground. A foreground pixel
/// is simple (deletable without changing topology) iff this equals 1.
inline int yokoi8(const std::array<int, 8>& n) {
  int sum = 0;
  for (std::size_t k = 0; k < 8; k += 2) {
    const int a = 1 - n[k], b = 1 - n[(k + 1) % 8], c = 1 - n[(k + 2) % 8];
    sum += a - a * b * c;
  }
  return sum;
}

}  // namespace detail

/// Topology-preserving thinning. Repeated directional sweeps (N, S, E, W
/// borders) delete simple pixels that are not line ends; each deletion is
/// checked against the current image, so components and holes are kept.
inline BinaryImage skeletonize(const BinaryImage& input) {
  BinaryImage img = input;
  constexpr std::array<std::pair<int, int>, 4> sides{{{0, -1}, {0, 1}, {1, 0}, {-1, 0}}};
  bool changed = true;
  std::vector<std::pair<long, long>> candidates;
  while (changed) {
    changed = false;
    for (const auto& [dx, dy] : sides) {
      candidates.clear();
      for (long y = 0; y < long(img.height); ++y)
        for (long x = 0; x < long(img.width); ++x)
          if (img.at(x, y) && !img.at(x + dx, y + dy)) candidates.emplace_back(x, y);
      for (const auto& [x, y] : candidates) {
        const auto n = detail::neighbourhood(img, x, y);
        const int degree = std::accumulate(n.begin(), n.end(), 0);
        if (degree >= 2 && detail::yokoi8(n) == 1) {
          img.set(std::size_t(x), std::size_t(y), false);
          changed = true;
        }
      }
    }
  }
  return img;
}

struct Pixel {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct VesselGraph {
  std::vector<Pixel> vertices;                             // raster order
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // first < second
  std::vector<std::size_t> degree;

  std::size_t component_count() const {
    std::vector<std::size_t> parent(vertices.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    std::size_t comps = vertices.size();
    for (const auto& [a, b] : edges) {
      const auto ra = find(a), rb = find(b);
      if (ra != rb) {
        parent[ra] = rb;
        --comps;
      }
    }
    return comps;
  }

  /// Number of independent cycles, |E| - |V| + C.
  std::size_t cycle_rank() const { return edges.size() + component_count() - vertices.size(); }
};

/// One vertex per foreground pixel; an edge joins every pair of pixels at
/// Chebyshev distance <= window_radius.
inline VesselGraph build_vessel_graph(const BinaryImage& skeleton, std::size_t window_radius = 1) {
  if (window_radius < 1) throw ParameterError("window_radius must be >= 1");
  VesselGraph g;
  constexpr std::size_t none = ~std::size_t{0};
  std::vector<std::size_t> index(skeleton.pixels.size(), none);
  for (std::size_t y = 0; y < skeleton.height; ++y)
    for (std::size_t x = 0; x < skeleton.width; ++x)
      if (skeleton.pixels[y * skeleton.width + x]) {
        index[y * skeleton.width + x] = g.vertices.size();
        g.vertices.push_back({x, y});
      }
  g.degree.assign(g.vertices.size(), 0);
  const long r = long(window_radius);
  for (std::size_t v = 0; v < g.vertices.size(); ++v) {
    const long x = long(g.vertices[v].x), y = long(g.vertices[v].y);
    for (long yy = y - r; yy <= y + r; ++yy) {
      for (long xx = x - r; xx <= x + r; ++xx) {
        if (!skeleton.at(xx, yy)) continue;
        const std::size_t u = index[std::size_t(yy) * skeleton.width + std::size_t(xx)];
        if (u <= v) continue;
        g.edges.emplace_back(v, u);
        ++g.degree[v];
        ++g.degree[u];
      }
    }
  }
  return g;
}

struct ChannelReport {
  std::size_t component_count = 0;
  std::size_t branch_point_count = 0;   // skeleton vertices of degree >= 3
  std::size_t trifurcation_count = 0;   // skeleton vertices of degree >= 4
  std::size_t loop_count = 0;
  double foreground_fraction = 0.0;

  friend bool operator==(const ChannelReport&, const ChannelReport&) = default;
};

struct StructReport {
  ChannelReport artery;
  ChannelReport vein;
  std::size_t crossing_pixel_count = 0;
  bool empty_flag = false;

  friend bool operator==(const StructReport&, const StructReport&) = default;
};

inline constexpr double default_empty_threshold = 0.005;

inline ChannelReport channel_report(const BinaryImage& channel, std::size_t window_radius) {
  const auto graph = build_vessel_graph(skeletonize(channel), window_radius);
  ChannelReport r;
  r.component_count = graph.component_count();
  r.loop_count = graph.edges.size() + r.component_count - graph.vertices.size();
  for (auto d : graph.degree) {
    if (d >= 3) ++r.branch_point_count;
    if (d >= 4) ++r.trifurcation_count;
  }
  r.foreground_fraction =
      channel.pixels.empty() ? 0.0 : double(channel.count()) / double(channel.pixels.size());
  return r;
}

inline StructReport struct_report(const AVMask& mask, std::size_t window_radius = 1,
                                  double empty_threshold = default_empty_threshold) {
  StructReport r;
  r.artery = channel_report(channel_image(mask, Channel::artery), window_radius);
  r.vein = channel_report(channel_image(mask, Channel::vein), window_radius);
  for (std::size_t i = 0; i < mask.pixels(); ++i)
    if (mask.artery()[i] && mask.vein()[i]) ++r.crossing_pixel_count;
  r.empty_flag = mask.foreground_fraction() < empty_threshold;
  return r;
}

/// Fraction of masks whose combined foreground fraction is below threshold.
inline double empty_sample_rate(const std::vector<AVMask>& masks,
                                double threshold = default_empty_threshold) {
  if (masks.empty()) throw ParameterError("empty_sample_rate of an empty mask list");
  const auto empty = std::count_if(masks.begin(), masks.end(), [&](const AVMask& m) {
    return m.foreground_fraction() < threshold;
  });
  return double(empty) / double(masks.size());
}

struct PixelMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;  // absent when the ground truth has no positives
  std::optional<double> specificity;  // absent when the ground truth has no negatives
  std::optional<double> auc;
};

template <typename Pred, typename Truth>
PixelMetrics pixel_metrics(const std::vector<Pred>& pred, const std::vector<Truth>& gt) {
  if (pred.size() != gt.size())
    throw ShapeError("pixel_metrics: prediction has " + std::to_string(pred.size()) +
                     " pixels, ground truth " + std::to_string(gt.size()));
  PixelMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != Pred(0), t = gt[i] != Truth(0);
    if (p && t) ++m.tp;
    else if (p) ++m.fp;
    else if (t) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return double(num) / double(den);
  };
  m.accuracy = ratio(m.tp + m.tn, pred.size());
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  return m;
}

inline PixelMetrics pixel_metrics(const BinaryImage& pred, const BinaryImage& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw ShapeError("pixel_metrics: image sizes differ");
  return pixel_metrics(pred.pixels, gt.pixels);
}

/// ROC AUC via the Mann-Whitney statistic with mid-ranks for ties: the
/// fraction of positive/negative pairs ranked correctly, ties counting 1/2.
template <typename Label>
double auc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = double(i + 1 + j) / 2.0;  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != Label(0)) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw ParameterError("auc needs both classes present");
  const double u = positive_rank_sum - double(positives) * double(positives + 1) / 2.0;
  return u / (double(positives) * double(negatives));
}

}  // namespace vesselgen
