#pragma once

// Forward noising, the two noise-prediction losses and the ancestral
// sampler. A noise predictor is any callable
//
//   Var predictor(BasicRecord<Real>& rec, Var x_t, const std::vector<std::size_t>& t)
//
// that appends its computation to `rec` and returns a node with the shape of
// x_t. Parameters registered by the predictor receive gradients from
// BasicRecord::backward on the returned loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vesselgen/mask.hpp"
#include "vesselgen/numerics/record.hpp"
#include "vesselgen/schedule.hpp"

namespace vesselgen {

using Rng = std::mt19937_64;

enum class LossVariant { simple, vessel };

inline const char* to_string(LossVariant v) { return v == LossVariant::simple ? "simple" : "vessel"; }

inline LossVariant parse_loss_variant(const std::string& s) {
  if (s == "simple") return LossVariant::simple;
  if (s == "vessel") return LossVariant::vessel;
  throw ParameterError("unknown loss variant '" + s + "' (expected simple or vessel)");
}

struct LossConfig {
  LossVariant variant = LossVariant::vessel;
  double c = 2.0;  // ignored for the simple variant
};

template <typename Real>
struct BasicDiffusionBatch {
  BasicTensor<Real> x0;        // 2 * raw_mask - 1
  BasicTensor<Real> raw_mask;  // {0,1}
  std::vector<std::size_t> t;
  BasicTensor<Real> eps;
};

using DiffusionBatch = BasicDiffusionBatch<float>;

template <typename Real>
BasicTensor<Real> standard_normal(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = Real(normal(rng));
  return BasicTensor<Real>(shape, std::move(v));
}

/// Maps a {0,1} mask tensor to the [-1,1] diffusion domain.
template <typename Real>
BasicTensor<Real> mask_to_signal(const BasicTensor<Real>& raw_mask) {
  std::vector<Real> v(raw_mask.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = Real(2) * raw_mask[i] - Real(1);
  return BasicTensor<Real>(raw_mask.shape(), std::move(v));
}

/// Builds a batch from {0,1} masks: timesteps uniform on [0, T), then
/// standard-normal noise, both drawn from `rng` in that order.
template <typename Real = float>
BasicDiffusionBatch<Real> make_batch(const BasicTensor<Real>& raw_mask, const NoiseSchedule& s,
                                     Rng& rng) {
  if (raw_mask.rank() != 4 || raw_mask.dim(1) != 2)
    throw ShapeError("batch masks must be Bx2xHxW, got " + shape_string(raw_mask.shape()));
  std::uniform_int_distribution<std::size_t> pick(0, s.num_steps() - 1);
  std::vector<std::size_t> t(raw_mask.dim(0));
  for (auto& ti : t) ti = pick(rng);
  auto eps = standard_normal<Real>(raw_mask.shape(), rng);
  return {mask_to_signal(raw_mask), raw_mask, std::move(t), std::move(eps)};
}

/// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, with abar_t taken per
/// batch element.
template <typename Real>
BasicTensor<Real> forward_diffuse(const BasicTensor<Real>& x0, const std::vector<std::size_t>& t,
                                  const BasicTensor<Real>& eps, const NoiseSchedule& s) {
  if (x0.shape() != eps.shape())
    throw ShapeError("forward_diffuse: x0 " + shape_string(x0.shape()) + " vs eps " +
                     shape_string(eps.shape()));
  if (t.size() != x0.dim(0))
    throw ShapeError("forward_diffuse: " + std::to_string(t.size()) + " timesteps for batch of " +
                     std::to_string(x0.dim(0)));
  const std::size_t per = x0.size() / x0.dim(0);
  std::vector<Real> out(x0.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const double ab = s.alpha_bar(t[b]);
    const double signal = std::sqrt(ab), noise = std::sqrt(1.0 - ab);
    for (std::size_t i = b * per; i < (b + 1) * per; ++i)
      out[i] = Real(signal * x0[i] + noise * eps[i]);
  }
  return BasicTensor<Real>(x0.shape(), std::move(out));
}

namespace detail {

template <typename Real, typename Predictor>
Var squared_noise_error(BasicRecord<Real>& rec, Predictor&& predictor,
                        const BasicDiffusionBatch<Real>& batch, const NoiseSchedule& s) {
  const Var x_t = rec.input(forward_diffuse(batch.x0, batch.t, batch.eps, s));
  const Var predicted = predictor(rec, x_t, batch.t);
  if (rec.value(predicted).shape() != batch.eps.shape())
    throw ShapeError("noise predictor returned " + shape_string(rec.value(predicted).shape()) +
                     " for input " + shape_string(batch.eps.shape()));
  const Var diff = rec.sub(rec.input(batch.eps), predicted);
  return rec.mul(diff, diff);
}

}  // namespace detail

/// mean over batch, channels and pixels of (eps - eps_theta(x_t, t))^2.
template <typename Real, typename Predictor>
Var loss_simple(BasicRecord<Real>& rec, Predictor&& predictor,
                const BasicDiffusionBatch<Real>& batch, const NoiseSchedule& s) {
  return rec.mean(detail::squared_noise_error(rec, predictor, batch, s));
}

/// Same as loss_simple with each squared error weighted by exp(c * m), where
/// m is the {0,1} mask: weight 1 on background and e^c on vessel pixels.
template <typename Real, typename Predictor>
Var loss_vessel(BasicRecord<Real>& rec, Predictor&& predictor,
                const BasicDiffusionBatch<Real>& batch, const NoiseSchedule& s, double c) {
  if (!(c >= 0.0)) throw ParameterError("vessel loss weight c must be >= 0, got " + std::to_string(c));
  const auto scaled = elementwise(Elementwise::mul, batch.raw_mask,
                                  BasicTensor<Real>::scalar(Real(c)));
  const Var weight = rec.input(elementwise(Elementwise::exp, scaled));
  return rec.mean(rec.mul(weight, detail::squared_noise_error(rec, predictor, batch, s)));
}

template <typename Real, typename Predictor>
Var diffusion_loss(BasicRecord<Real>& rec, Predictor&& predictor,
                   const BasicDiffusionBatch<Real>& batch, const NoiseSchedule& s,
                   const LossConfig& cfg) {
  return cfg.variant == LossVariant::simple ? loss_simple(rec, predictor, batch, s)
                                            : loss_vessel(rec, predictor, batch, s, cfg.c);
}

/// Ancestral sampling. Draws x_T ~ N(0, I) first, then one N(0, I) tensor per
/// step t > 0, all from `rng`. Returns the final estimate clamped to [-1, 1].
template <typename Real, typename Predictor>
BasicTensor<Real> ddpm_sample(Predictor&& predictor, const NoiseSchedule& s, Rng& rng,
                              const Shape& shape) {
  if (shape.size() != 4 || shape[1] != 2)
    throw ShapeError("sample shape must be Bx2xHxW, got " + shape_string(shape));
  auto x = standard_normal<Real>(shape, rng);
  for (std::size_t step = s.num_steps(); step-- > 0;) {
    BasicRecord<Real> rec;
    const std::vector<std::size_t> t(shape[0], step);
    const Var eps_node = predictor(rec, rec.input(x), t);
    const auto& eps = rec.value(eps_node);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(step));
    const double eps_coef = s.beta(step) / std::sqrt(1.0 - s.alpha_bar(step));
    std::vector<Real> next(x.size());
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = Real(inv_sqrt_alpha * (double(x[i]) - eps_coef * double(eps[i])));
    if (step > 0) {
      const double sigma = std::sqrt(s.posterior_variance(step));
      const auto z = standard_normal<Real>(shape, rng);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = Real(next[i] + sigma * z[i]);
    }
    x = BasicTensor<Real>(shape, std::move(next));
  }
  std::vector<Real> clamped(x.values().begin(), x.values().end());
  for (auto& v : clamped) v = std::clamp(v, Real(-1), Real(1));
  return BasicTensor<Real>(shape, std::move(clamped));
}

/// Per channel, pixel = 1 iff value > threshold.
template <typename Real>
std::vector<AVMask> binarize(const BasicTensor<Real>& sampled, double threshold = 0.0) {
  if (sampled.rank() != 4 || sampled.dim(1) != 2)
    throw ShapeError("binarize expects Bx2xHxW, got " + shape_string(sampled.shape()));
  const std::size_t h = sampled.dim(2), w = sampled.dim(3);
  std::vector<AVMask> out;
  out.reserve(sampled.dim(0));
  for (std::size_t b = 0; b < sampled.dim(0); ++b) {
    AVMask m(w, h);
    for (auto c : {Channel::artery, Channel::vein}) {
      auto& ch = m.channel(c);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          ch[y * w + x] = double(sampled.at(b, std::size_t(c), y, x)) > threshold ? 1 : 0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace vesselgen
