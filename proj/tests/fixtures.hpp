#pragma once

// Hand-built masks and brute-force reference computations shared by the
// unit tests and the acceptance runner.

#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "vesselgen/structmetrics.hpp"

namespace fixtures {

using vesselgen::AVMask;
using vesselgen::BinaryImage;
using vesselgen::Channel;

/// '#' is foreground; all rows must have equal length.
inline BinaryImage from_rows(const std::vector<std::string>& rows) {
  BinaryImage img(rows.at(0).size(), rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x)
      if (rows[y][x] == '#') img.set(x, y);
  return img;
}

inline AVMask mask_from(const BinaryImage& artery, const BinaryImage& vein) {
  AVMask m(artery.width, artery.height);
  m.artery() = artery.pixels;
  m.vein() = vein.pixels;
  return m;
}

inline BinaryImage blank(std::size_t w = 20, std::size_t h = 20) { return BinaryImage(w, h); }

inline BinaryImage line10() {
  auto img = blank();
  for (std::size_t x = 5; x < 15; ++x) img.set(x, 10);
  return img;
}

// Three 5-pixel arms (north, south-west, south-east) meeting at (10, 10).
inline BinaryImage y_junction() {
  auto img = blank();
  img.set(10, 10);
  for (std::size_t k = 1; k <= 5; ++k) {
    img.set(10, 10 - k);
    img.set(10 - k, 10 + k);
    img.set(10 + k, 10 + k);
  }
  return img;
}

// Diamond |dx| + |dy| = 4 around (10, 10): 16 pixels, each with exactly two
// 8-neighbours on the ring.
inline BinaryImage ring() {
  auto img = blank();
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -4; dx <= 4; ++dx)
      if (std::abs(dx) + std::abs(dy) == 4) img.set(std::size_t(10 + dx), std::size_t(10 + dy));
  return img;
}

inline BinaryImage two_strokes() {
  auto img = blank();
  for (std::size_t x = 2; x < 9; ++x) img.set(x, 4);
  for (std::size_t y = 8; y < 17; ++y) img.set(14, y);
  return img;
}

// Artery runs horizontally along row 10, vein vertically along column 7;
// they share exactly one pixel.
inline AVMask crossing_pair() {
  auto a = blank(), v = blank();
  for (std::size_t x = 2; x < 18; ++x) a.set(x, 10);
  for (std::size_t y = 3; y < 17; ++y) v.set(7, y);
  return mask_from(a, v);
}

/// 8-connected foreground components.
inline std::size_t components8(const BinaryImage& img) {
  std::vector<char> seen(img.pixels.size(), 0);
  std::size_t n = 0;
  for (std::size_t s = 0; s < img.pixels.size(); ++s) {
    if (!img.pixels[s] || seen[s]) continue;
    ++n;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const auto p = q.front();
      q.pop();
      const long x = long(p % img.width), y = long(p / img.width);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if (!img.at(x + dx, y + dy)) continue;
          const auto k = std::size_t(y + dy) * img.width + std::size_t(x + dx);
          if (!seen[k]) {
            seen[k] = 1;
            q.push(k);
          }
        }
    }
  }
  return n;
}

/// 4-connected background regions that do not touch the image border.
inline std::size_t holes4(const BinaryImage& img) {
  std::vector<char> seen(img.pixels.size(), 0);
  std::size_t n = 0;
  const long w = long(img.width), h = long(img.height);
  for (std::size_t s = 0; s < img.pixels.size(); ++s) {
    if (img.pixels[s] || seen[s]) continue;
    bool border = false;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const auto p = q.front();
      q.pop();
      const long x = long(p % img.width), y = long(p / img.width);
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) border = true;
      const long nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nb) {
        const long xx = x + d[0], yy = y + d[1];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const auto k = std::size_t(yy) * img.width + std::size_t(xx);
        if (!img.pixels[k] && !seen[k]) {
          seen[k] = 1;
          q.push(k);
        }
      }
    }
    if (!border) ++n;
  }
  return n;
}

/// |E| - |V| + C for the window graph, from an all-pairs edge count and a
/// separate flood fill over the same adjacency.
inline long brute_cycle_rank(const BinaryImage& img, long radius) {
  std::vector<std::pair<long, long>> v;
  for (long y = 0; y < long(img.height); ++y)
    for (long x = 0; x < long(img.width); ++x)
      if (img.at(x, y)) v.emplace_back(x, y);
  auto adjacent = [&](std::size_t i, std::size_t j) {
    return std::max(std::abs(v[i].first - v[j].first), std::abs(v[i].second - v[j].second)) <= radius;
  };
  long edges = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) edges += adjacent(i, j) ? 1 : 0;
  std::vector<char> seen(v.size(), 0);
  long comps = 0;
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (seen[s]) continue;
    ++comps;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < v.size(); ++j)
        if (!seen[j] && adjacent(i, j)) {
          seen[j] = 1;
          stack.push_back(j);
        }
    }
  }
  return edges - long(v.size()) + comps;
}

/// Pairwise AUC: positive ranked above negative counts 1, a tie 1/2.
inline double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace fixtures
