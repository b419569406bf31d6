#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vesselgen/error.hpp"

namespace vesselgen {

/// Per-timestep noise variances and their derived products. Timesteps are
/// zero-based: index t covers the step from t to t+1 of the forward chain.
class NoiseSchedule {
 public:
  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ParameterError("noise schedule needs at least one step");
    NoiseSchedule s;
    s.alphas_.reserve(betas.size());
    s.alpha_bars_.reserve(betas.size());
    double running = 1.0;
    for (std::size_t t = 0; t < betas.size(); ++t) {
      const double b = betas[t];
      if (!(b > 0.0 && b < 1.0)) {
        throw ParameterError("beta[" + std::to_string(t) + "] = " + std::to_string(b) +
                             " outside (0, 1)");
      }
      s.alphas_.push_back(1.0 - b);
      running *= s.alphas_.back();
      s.alpha_bars_.push_back(running);
    }
    s.betas_ = std::move(betas);
    return s;
  }

  std::size_t num_steps() const { return betas_.size(); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  double beta(std::size_t t) const { return betas_.at(check(t)); }
  double alpha(std::size_t t) const { return alphas_.at(check(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(check(t)); }

  /// Variance of the reverse step at t: (1 - abar[t-1]) / (1 - abar[t]) * beta[t],
  /// with abar[-1] = 1 so the final step is noiseless.
  double posterior_variance(std::size_t t) const {
    check(t);
    const double prev = t == 0 ? 1.0 : alpha_bars_[t - 1];
    return (1.0 - prev) / (1.0 - alpha_bars_[t]) * betas_[t];
  }

 private:
  NoiseSchedule() = default;

  std::size_t check(std::size_t t) const {
    if (t >= betas_.size()) {
      throw IndexError("timestep " + std::to_string(t) + " out of range [0, " +
                       std::to_string(betas_.size()) + ")");
    }
    return t;
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// Betas spaced linearly from beta_start to beta_end, both inclusive.
inline NoiseSchedule linear_schedule(std::size_t steps, double beta_start = 1e-4,
                                     double beta_end = 0.02) {
  if (steps < 1) throw ParameterError("schedule length must be >= 1, got 0");
  if (!(beta_start > 0.0)) throw ParameterError("beta_start must be > 0, got " + std::to_string(beta_start));
  if (!(beta_end < 1.0)) throw ParameterError("beta_end must be < 1, got " + std::to_string(beta_end));
  if (!(beta_start <= beta_end)) {
    throw ParameterError("beta_start " + std::to_string(beta_start) + " exceeds beta_end " +
                         std::to_string(beta_end));
  }
  std::vector<double> betas(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    betas[t] = steps == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * double(t) / double(steps - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

}  // namespace vesselgen
