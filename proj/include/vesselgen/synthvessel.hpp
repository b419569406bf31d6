#pragma once

// Procedural artery/vein masks. Each channel grows a few random binary trees
// outward from the rim of a disc (the optic disc stand-in). A branch is a
// random walk with Gaussian heading noise; at every step it may split into
// two children whose widths shrink by a constant ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vesselgen/error.hpp"
#include "vesselgen/mask.hpp"

namespace vesselgen {

struct VesselTreeConfig {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t trees_per_channel = 2;
  double disc_center_x = 0.5;  // normalized image coordinates
  double disc_center_y = 0.5;
  double disc_radius = 0.08;   // fraction of min(width, height)
  double root_width = 2.0;     // pixels
  double width_decay = 0.7;
  double bifurcation_prob = 0.1;
  double branch_angle_min = 20.0;  // degrees, each child deviates by this much
  double branch_angle_max = 45.0;
  std::size_t max_depth = 3;
  double step_length = 1.0;        // pixels per walk step
  double curvature_noise = 10.0;   // degrees, std-dev of heading change per step
  std::size_t min_branch_steps = 4;  // steps before a branch may split
  std::size_t max_branch_steps = 10;
  std::uint64_t seed = 0;

  static VesselTreeConfig desk_profile() { return {}; }

  static VesselTreeConfig full_scale_profile() {
    VesselTreeConfig c;
    c.width = c.height = 256;
    c.trees_per_channel = 3;
    c.root_width = 6.0;
    c.width_decay = 0.8;
    c.bifurcation_prob = 0.04;
    c.max_depth = 5;
    c.curvature_noise = 6.0;
    c.min_branch_steps = 16;
    c.max_branch_steps = 400;
    return c;
  }

  /// Profile for a square image of side `size`: the full-scale profile from 128
  /// pixels up, otherwise the desk profile with stroke length scaled to the
  /// image and thinner roots below 32 pixels so masks stay sparse.
  static VesselTreeConfig for_resolution(std::size_t size) {
    VesselTreeConfig c = size >= 128 ? full_scale_profile() : desk_profile();
    if (size < 128) {
      c.max_branch_steps = std::max<std::size_t>(3, (c.max_branch_steps * size + 16) / 32);
      if (size < 32) c.root_width = 1.5;
    }
    c.width = c.height = size;
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid vessel config: " + what); };
    if (width < 1 || height < 1) fail("image size must be positive");
    if (!(width_decay > 0.0 && width_decay < 1.0)) fail("width_decay must be in (0,1), got " + std::to_string(width_decay));
    if (!(bifurcation_prob >= 0.0 && bifurcation_prob <= 1.0))
      fail("bifurcation_prob must be in [0,1], got " + std::to_string(bifurcation_prob));
    if (!(branch_angle_min > 0.0 && branch_angle_max < 90.0 && branch_angle_min <= branch_angle_max))
      fail("branch angles must satisfy 0 < min <= max < 90");
    if (!(root_width > 0.0)) fail("root_width must be positive");
    if (!(step_length > 0.0 && step_length <= 1.0)) fail("step_length must be in (0,1] to keep strokes connected");
    if (!(disc_radius >= 0.0 && disc_radius < 0.5)) fail("disc_radius must be in [0,0.5)");
    if (!(curvature_noise >= 0.0)) fail("curvature_noise must be >= 0");
  }
};

namespace detail {

/// Sets every pixel whose centre lies within `radius` of (x, y), plus the
/// pixel containing the point itself.
inline void stamp_disc(std::vector<std::uint8_t>& ch, std::size_t w, std::size_t h, double x,
                       double y, double radius) {
  const long px = long(std::floor(x)), py = long(std::floor(y));
  if (px >= 0 && py >= 0 && px < long(w) && py < long(h)) ch[std::size_t(py) * w + std::size_t(px)] = 1;
  const long r = long(std::ceil(radius)) + 1;
  for (long yy = py - r; yy <= py + r; ++yy) {
    for (long xx = px - r; xx <= px + r; ++xx) {
      if (xx < 0 || yy < 0 || xx >= long(w) || yy >= long(h)) continue;
      const double dx = double(xx) + 0.5 - x, dy = double(yy) + 0.5 - y;
      if (dx * dx + dy * dy <= radius * radius) ch[std::size_t(yy) * w + std::size_t(xx)] = 1;
    }
  }
}

class TreeGrower {
 public:
  TreeGrower(const VesselTreeConfig& cfg, std::vector<std::uint8_t>& channel, std::mt19937_64& rng)
      : cfg_(cfg), ch_(channel), rng_(rng) {}

  void grow(double x, double y, double heading, double width, std::size_t depth) {
    constexpr double deg = std::numbers::pi / 180.0;
    std::normal_distribution<double> turn(0.0, cfg_.curvature_noise * deg);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> spread(cfg_.branch_angle_min * deg, cfg_.branch_angle_max * deg);
    for (std::size_t step = 0; step < cfg_.max_branch_steps; ++step) {
      if (!inside(x, y)) return;
      stamp_disc(ch_, cfg_.width, cfg_.height, x, y, width / 2.0);
      if (depth < cfg_.max_depth && step >= cfg_.min_branch_steps &&
          unit(rng_) < cfg_.bifurcation_prob) {
        const double child = width * cfg_.width_decay;
        const double left = spread(rng_), right = spread(rng_);
        if (child >= 1.0) {
          grow(x, y, heading + left, child, depth + 1);
          grow(x, y, heading - right, child, depth + 1);
        }
        return;
      }
      x += cfg_.step_length * std::cos(heading);
      y += cfg_.step_length * std::sin(heading);
      heading += turn(rng_);
    }
  }

 private:
  bool inside(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x < double(cfg_.width) && y < double(cfg_.height);
  }

  const VesselTreeConfig& cfg_;
  std::vector<std::uint8_t>& ch_;
  std::mt19937_64& rng_;
};

}  // namespace detail

/// One mask from cfg.seed. Artery roots sit at evenly spaced angles on the
/// disc rim; vein roots are offset by half a spacing so the channels
/// interleave and cross.
inline AVMask generate_mask(const VesselTreeConfig& cfg) {
  cfg.validate();
  AVMask mask(cfg.width, cfg.height);
  if (cfg.trees_per_channel == 0) return mask;
  std::mt19937_64 rng(cfg.seed);
  const double cx = cfg.disc_center_x * double(cfg.width);
  const double cy = cfg.disc_center_y * double(cfg.height);
  const double radius = cfg.disc_radius * double(std::min(cfg.width, cfg.height));
  const double spacing = 2.0 * std::numbers::pi / double(cfg.trees_per_channel);
  std::uniform_real_distribution<double> jitter(-0.15 * spacing, 0.15 * spacing);
  const double phase = std::uniform_real_distribution<double>(0.0, spacing)(rng);
  for (auto c : {Channel::artery, Channel::vein}) {
    const double offset = c == Channel::vein ? spacing / 2.0 : 0.0;
    detail::TreeGrower grower(cfg, mask.channel(c), rng);
    for (std::size_t k = 0; k < cfg.trees_per_channel; ++k) {
      const double angle = phase + offset + spacing * double(k) + jitter(rng);
      grower.grow(cx + radius * std::cos(angle), cy + radius * std::sin(angle), angle,
                  cfg.root_width, 0);
    }
  }
  return mask;
}

struct SyntheticDataset {
  std::vector<AVMask> masks;
  std::vector<std::uint64_t> seeds;  // the seed that produced each mask
};

struct SparsityBand {
  double min_fraction = 0.01;
  double max_fraction = 0.20;
  std::size_t max_attempts = 10;
};

/// n masks whose foreground fraction lies in the band. Every attempt uses a
/// fresh seed drawn from `rng`; a mask that stays out of band after
/// max_attempts draws is a configuration error.
inline SyntheticDataset generate_dataset(std::size_t n, const VesselTreeConfig& cfg,
                                         std::mt19937_64& rng, const SparsityBand& band = {}) {
  cfg.validate();
  SyntheticDataset out;
  out.masks.reserve(n);
  out.seeds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool accepted = false;
    double last = 0.0;
    for (std::size_t attempt = 0; attempt < band.max_attempts && !accepted; ++attempt) {
      VesselTreeConfig c = cfg;
      c.seed = rng();
      auto mask = generate_mask(c);
      last = mask.foreground_fraction();
      if (last >= band.min_fraction && last <= band.max_fraction) {
        out.masks.push_back(std::move(mask));
        out.seeds.push_back(c.seed);
        accepted = true;
      }
    }
    if (!accepted) {
      throw ConfigError("mask " + std::to_string(i) + " stayed outside the foreground band [" +
                        std::to_string(band.min_fraction) + ", " + std::to_string(band.max_fraction) +
                        "] after " + std::to_string(band.max_attempts) + " attempts (last " +
                        std::to_string(last) +
                        "); adjust trees_per_channel, root_width or bifurcation_prob");
    }
  }
  return out;
}

}  // namespace vesselgen
