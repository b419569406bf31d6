#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "vesselgen/denoiser.hpp"

namespace vesselgen {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct OptimizerState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  DenoiserParams first_moment;   // same names and shapes as the parameters
  DenoiserParams second_moment;

  static OptimizerState for_params(const DenoiserParams& params, AdamHyper hyper = {}) {
    OptimizerState st;
    st.hyper = hyper;
    for (const auto& [name, t] : params) {
      st.first_moment.emplace(name, Tensor::zeros(t.shape()));
      st.second_moment.emplace(name, Tensor::zeros(t.shape()));
    }
    return st;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(DenoiserParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (auto v : g.values()) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
      std::vector<float> v(g.values().begin(), g.values().end());
      for (auto& x : v) x = float(x * scale);
      g = Tensor(g.shape(), std::move(v));
    }
  }
  return norm;
}

/// One bias-corrected Adam update. Throws NumericalError naming the first
/// parameter whose gradient is not finite; nothing is modified in that case.
inline void adam_step(DenoiserParams& params, const DenoiserParams& grads, OptimizerState& st) {
  for (const auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ParameterError("no gradient for parameter " + name);
    if (it->second.shape() != p.shape())
      throw ShapeError("gradient shape " + shape_string(it->second.shape()) + " for parameter " +
                       name + " of shape " + shape_string(p.shape()));
    if (!it->second.all_finite()) throw NumericalError("non-finite gradient in parameter " + name);
  }
  const auto& h = st.hyper;
  ++st.step;
  const double c1 = 1.0 - std::pow(h.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(h.beta2, double(st.step));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m_t = st.first_moment.at(name);
    auto& v_t = st.second_moment.at(name);
    std::vector<float> pv(p.values().begin(), p.values().end());
    std::vector<float> mv(m_t.values().begin(), m_t.values().end());
    std::vector<float> vv(v_t.values().begin(), v_t.values().end());
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double gi = g[i];
      const double m = h.beta1 * mv[i] + (1.0 - h.beta1) * gi;
      const double v = h.beta2 * vv[i] + (1.0 - h.beta2) * gi * gi;
      mv[i] = float(m);
      vv[i] = float(v);
      pv[i] = float(pv[i] - h.learning_rate * (m / c1) / (std::sqrt(v / c2) + h.epsilon));
    }
    p = Tensor(p.shape(), std::move(pv));
    m_t = Tensor(m_t.shape(), std::move(mv));
    v_t = Tensor(v_t.shape(), std::move(vv));
  }
}

}  // namespace vesselgen
