#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vesselgen/error.hpp"
#include "vesselgen/numerics/tensor.hpp"

namespace vesselgen {

enum class Channel : std::size_t { artery = 0, vein = 1 };

/// Two-channel binary raster: channel 0 artery, channel 1 vein. The
/// channels are independent, so a pixel may be set in both (a crossing).
class AVMask {
 public:
  AVMask() = default;
  AVMask(std::size_t width, std::size_t height)
      : width_(width), height_(height), artery_(width * height, 0), vein_(width * height, 0) {}

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixels() const { return width_ * height_; }

  std::vector<std::uint8_t>& channel(Channel c) { return c == Channel::artery ? artery_ : vein_; }
  const std::vector<std::uint8_t>& channel(Channel c) const {
    return c == Channel::artery ? artery_ : vein_;
  }
  std::vector<std::uint8_t>& artery() { return artery_; }
  std::vector<std::uint8_t>& vein() { return vein_; }
  const std::vector<std::uint8_t>& artery() const { return artery_; }
  const std::vector<std::uint8_t>& vein() const { return vein_; }

  bool get(Channel c, std::size_t x, std::size_t y) const { return channel(c)[y * width_ + x] != 0; }
  void set(Channel c, std::size_t x, std::size_t y, bool on = true) {
    channel(c)[y * width_ + x] = on ? 1 : 0;
  }

  /// Fraction of pixels set in either channel.
  double foreground_fraction() const {
    if (pixels() == 0) return 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pixels(); ++i) n += (artery_[i] | vein_[i]) ? 1 : 0;
    return double(n) / double(pixels());
  }

  friend bool operator==(const AVMask&, const AVMask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> artery_;
  std::vector<std::uint8_t> vein_;
};

/// Stacks masks into a B x 2 x H x W tensor of {0,1} values.
template <typename Real = float>
BasicTensor<Real> masks_to_tensor(const std::vector<AVMask>& masks) {
  if (masks.empty()) throw ParameterError("cannot stack an empty mask list");
  const std::size_t w = masks[0].width(), h = masks[0].height();
  std::vector<Real> v;
  v.reserve(masks.size() * 2 * w * h);
  for (const auto& m : masks) {
    if (m.width() != w || m.height() != h) throw ShapeError("masks differ in resolution");
    for (auto c : {Channel::artery, Channel::vein})
      for (auto p : m.channel(c)) v.push_back(p ? Real(1) : Real(0));
  }
  return BasicTensor<Real>({masks.size(), 2, h, w}, std::move(v));
}

}  // namespace vesselgen
