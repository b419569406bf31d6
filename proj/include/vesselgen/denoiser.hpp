#pragma once

// Small U-Net noise predictor. Layout for depth D and base width C:
//
//   x --conv--> [res(C_0)] --down--> [res(C_1)] ... --down--> res(C_D)   (middle)
//                  |skip                  |skip
//   out <--conv-- [res(C_0)] <--up+add-- [res(C_1)] ... <--up+add--
//
// with C_l = C * 2^l. Every residual block adds a projection of the timestep
// embedding after its first convolution.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vesselgen/diffusion.hpp"
#include "vesselgen/numerics/record.hpp"

namespace vesselgen {

struct DenoiserConfig {
  std::size_t base_channels = 32;
  std::size_t depth = 2;
  std::size_t time_embed_dim = 64;
  std::size_t norm_groups = 8;

  static constexpr std::size_t io_channels = 2;

  std::size_t channels(std::size_t level) const { return base_channels << level; }

  void validate() const {
    if (depth < 1) throw ParameterError("denoiser depth must be >= 1");
    if (base_channels < 1) throw ParameterError("denoiser base_channels must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2)
      throw ParameterError("time_embed_dim must be even and >= 2, got " + std::to_string(time_embed_dim));
    if (norm_groups < 1 || base_channels % norm_groups)
      throw ParameterError("base_channels " + std::to_string(base_channels) +
                           " not divisible by norm_groups " + std::to_string(norm_groups));
  }

  void check_input(const Shape& x) const {
    if (x.size() != 4 || x[1] != io_channels)
      throw ShapeError("denoiser input must be Bx2xHxW, got " + shape_string(x));
    const std::size_t div = std::size_t{1} << depth;
    if (x[2] % div || x[3] % div)
      throw ShapeError("input spatial dims " + shape_string(x) + " not divisible by 2^depth = " +
                       std::to_string(div));
  }
};

template <typename Real>
using BasicParams = std::map<std::string, BasicTensor<Real>>;
using DenoiserParams = BasicParams<float>;

/// Shape of every named parameter for a config.
inline std::map<std::string, Shape> parameter_shapes(const DenoiserConfig& cfg) {
  cfg.validate();
  std::map<std::string, Shape> shapes;
  const std::size_t e = cfg.time_embed_dim;
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out) {
    shapes[name + ".w"] = {out, in, 3, 3};
    shapes[name + ".b"] = {out};
  };
  auto norm = [&](const std::string& name, std::size_t ch) {
    shapes[name + ".gain"] = {ch};
    shapes[name + ".offset"] = {ch};
  };
  auto block = [&](const std::string& name, std::size_t ch) {
    conv(name + ".conv1", ch, ch);
    shapes[name + ".temb.w"] = {ch, e};
    shapes[name + ".temb.b"] = {ch};
    norm(name + ".norm1", ch);
    conv(name + ".conv2", ch, ch);
    norm(name + ".norm2", ch);
  };
  shapes["time.dense1.w"] = {e, e};
  shapes["time.dense1.b"] = {e};
  shapes["time.dense2.w"] = {e, e};
  shapes["time.dense2.b"] = {e};
  conv("stem", DenoiserConfig::io_channels, cfg.channels(0));
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto lvl = std::to_string(l);
    block("down" + lvl, cfg.channels(l));
    conv("downsample" + lvl, cfg.channels(l), cfg.channels(l + 1));
    conv("upsample" + lvl, cfg.channels(l + 1), cfg.channels(l));
    block("up" + lvl, cfg.channels(l));
  }
  block("mid", cfg.channels(cfg.depth));
  norm("head.norm", cfg.channels(0));
  conv("head.conv", cfg.channels(0), DenoiserConfig::io_channels);
  return shapes;
}

/// Kaiming-normal weights (variance 2 / fan_in), zero biases and offsets,
/// unit normalization gains. Parameters are filled in name order.
inline DenoiserParams init_params(Rng& rng, const DenoiserConfig& cfg) {
  DenoiserParams params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    const auto suffix = name.substr(name.rfind('.') + 1);
    if (suffix == "w") {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(fan_in)));
      std::vector<float> v(shape_size(shape));
      for (auto& x : v) x = float(normal(rng));
      params.emplace(name, Tensor(shape, std::move(v)));
    } else if (suffix == "gain") {
      params.emplace(name, Tensor::ones(shape));
    } else {
      params.emplace(name, Tensor::zeros(shape));
    }
  }
  return params;
}

/// Sinusoidal timestep features: sin(t f_i) for the first half, cos(t f_i)
/// for the second, f_i = 10000^(-i / half).
template <typename Real>
BasicTensor<Real> timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<Real> v(t.size() * dim);
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
      v[b * dim + i] = Real(std::sin(double(t[b]) * freq));
      v[b * dim + half + i] = Real(std::cos(double(t[b]) * freq));
    }
  }
  return BasicTensor<Real>({t.size(), dim}, std::move(v));
}

/// Registers parameters into a record on first use.
template <typename Real>
class ParamBinder {
 public:
  ParamBinder(BasicRecord<Real>& rec, const BasicParams<Real>& params) : rec_(rec), params_(params) {}

  Var operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    auto it = params_.find(name);
    if (it == params_.end()) throw ParameterError("missing denoiser parameter " + name);
    return bound_.emplace(name, rec_.parameter(name, it->second)).first->second;
  }

 private:
  BasicRecord<Real>& rec_;
  const BasicParams<Real>& params_;
  std::map<std::string, Var> bound_;
};

/// Appends the network evaluation to `rec`. Usable directly as the
/// predictor argument of the diffusion losses and the sampler.
template <typename Real>
class UNet {
 public:
  UNet(DenoiserConfig cfg, const BasicParams<Real>& params) : cfg_(cfg), params_(params) {
    cfg_.validate();
  }

  const DenoiserConfig& config() const { return cfg_; }

  Var operator()(BasicRecord<Real>& rec, Var x, const std::vector<std::size_t>& t) const {
    cfg_.check_input(rec.value(x).shape());
    if (t.size() != rec.value(x).dim(0))
      throw ShapeError("got " + std::to_string(t.size()) + " timesteps for batch of " +
                       std::to_string(rec.value(x).dim(0)));
    ParamBinder<Real> p(rec, params_);
    auto conv = [&](const std::string& name, Var in, std::size_t stride = 1) {
      return rec.conv2d(in, p(name + ".w"), p(name + ".b"), stride, 1);
    };
    auto norm_act = [&](const std::string& name, Var in) {
      return rec.silu(rec.group_norm(in, p(name + ".gain"), p(name + ".offset"), cfg_.norm_groups));
    };

    Var temb = rec.input(timestep_embedding<Real>(t, cfg_.time_embed_dim));
    temb = rec.silu(rec.dense(temb, p("time.dense1.w"), p("time.dense1.b")));
    temb = rec.silu(rec.dense(temb, p("time.dense2.w"), p("time.dense2.b")));

    auto block = [&](const std::string& name, Var in) {
      Var h = conv(name + ".conv1", in);
      h = rec.add_channelwise(h, rec.dense(temb, p(name + ".temb.w"), p(name + ".temb.b")));
      h = norm_act(name + ".norm1", h);
      h = norm_act(name + ".norm2", conv(name + ".conv2", h));
      return rec.add(in, h);
    };

    Var h = conv("stem", x);
    std::vector<Var> skips;
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      h = block("down" + std::to_string(l), h);
      skips.push_back(h);
      h = conv("downsample" + std::to_string(l), h, 2);
    }
    h = block("mid", h);
    for (std::size_t l = cfg_.depth; l-- > 0;) {
      h = conv("upsample" + std::to_string(l), rec.upsample2x(h));
      h = block("up" + std::to_string(l), rec.add(h, skips[l]));
    }
    return conv("head.conv", norm_act("head.norm", h));
  }

 private:
  DenoiserConfig cfg_;
  const BasicParams<Real>& params_;
};

/// Network output for a concrete input, without keeping the record.
template <typename Real>
BasicTensor<Real> predict_noise(const DenoiserConfig& cfg, const BasicParams<Real>& params,
                                const BasicTensor<Real>& x_t, const std::vector<std::size_t>& t) {
  BasicRecord<Real> rec;
  const Var out = UNet<Real>(cfg, params)(rec, rec.input(x_t), t);
  return rec.value(out);
}

template <typename Real>
BasicParams<Real> cast_params(const DenoiserParams& params) {
  BasicParams<Real> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<Real>());
  return out;
}

}  // namespace vesselgen
