#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vesselgen/numerics/record.hpp"

namespace vesselgen {

/// Central-difference gradient (f(p+h) - f(p-h)) / 2h for every coordinate of
/// every named parameter. Used as an oracle against BasicRecord::backward.
template <typename Real, typename Fn>
GradientMap<Real> finite_diff_grad(Fn&& f, const GradientMap<Real>& params, Real h) {
  if (!(h > Real(0))) throw ParameterError("finite difference step must be positive");
  GradientMap<Real> probe = params;
  GradientMap<Real> grads;
  for (const auto& [name, tensor] : params) {
    std::vector<Real> g(tensor.size());
    std::vector<Real> base(tensor.values().begin(), tensor.values().end());
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto shifted = base;
      shifted[i] = base[i] + h;
      probe.insert_or_assign(name, BasicTensor<Real>(tensor.shape(), shifted));
      const double up = double(f(probe));
      shifted[i] = base[i] - h;
      probe.insert_or_assign(name, BasicTensor<Real>(tensor.shape(), shifted));
      const double down = double(f(probe));
      g[i] = Real((up - down) / (2.0 * double(h)));
    }
    probe.insert_or_assign(name, tensor);
    grads.emplace(name, BasicTensor<Real>(tensor.shape(), std::move(g)));
  }
  return grads;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from dominating the statistics.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckSummary {
  std::size_t coordinates = 0;
  std::size_t within_tight = 0;  // rel. err below the tight tolerance
  double max_rel_error = 0.0;
  std::string worst;             // "name[index]"

  double fraction_tight() const {
    return coordinates ? double(within_tight) / double(coordinates) : 1.0;
  }
};

template <typename Real>
GradCheckSummary compare_gradients(const GradientMap<Real>& analytic,
                                   const GradientMap<Real>& numeric, double tight,
                                   double floor = 1e-8) {
  GradCheckSummary s;
  for (const auto& [name, a] : analytic) {
    const auto it = numeric.find(name);
    if (it == numeric.end() || it->second.size() != a.size())
      throw ShapeError("gradient maps disagree on parameter " + name);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = relative_error(a[i], it->second[i], floor);
      ++s.coordinates;
      if (e < tight) ++s.within_tight;
      if (e > s.max_rel_error) {
        s.max_rel_error = e;
        s.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return s;
}

}  // namespace vesselgen
