#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "vesselgen/denoiser.hpp"
#include "vesselgen/optimizer.hpp"

namespace vesselgen {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double grad_clip = 1.0;
  AdamHyper adam;
};

/// Everything needed to continue training bit-identically.
struct TrainState {
  DenoiserParams params;
  OptimizerState optimizer;
  std::vector<double> loss_history;  // one mean loss per completed epoch
  Rng rng;
};

/// Minibatch trainer over a fixed mask set. Each epoch shuffles the
/// dataset, then per batch draws timesteps and noise, evaluates the
/// configured loss, clips the gradient and applies Adam.
class Trainer {
 public:
  Trainer(const std::vector<AVMask>& dataset, DenoiserConfig cfg, LossConfig loss,
          NoiseSchedule schedule, TrainConfig train_cfg, TrainState state)
      : cfg_(cfg), loss_(loss), schedule_(std::move(schedule)), train_(train_cfg),
        state_(std::move(state)) {
    if (dataset.empty()) throw ParameterError("training dataset is empty");
    if (train_.batch_size < 1) throw ParameterError("batch_size must be >= 1");
    cfg_.validate();
    data_ = masks_to_tensor<float>(dataset);
    cfg_.check_input(data_.shape());
  }

  /// Fresh parameters and optimizer drawn from `rng`.
  static TrainState initial_state(const DenoiserConfig& cfg, const AdamHyper& hyper, Rng rng) {
    auto params = init_params(rng, cfg);
    auto opt = OptimizerState::for_params(params, hyper);
    return TrainState{std::move(params), std::move(opt), {}, rng};
  }

  const TrainState& state() const { return state_; }
  TrainState release() && { return std::move(state_); }

  /// Runs one epoch and returns its mean loss. Throws NumericalError if a
  /// batch loss is not finite; the state then still holds the parameters
  /// from before that batch.
  double run_epoch() {
    const std::size_t n = data_.dim(0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state_.rng);
    const std::size_t per = data_.size() / n;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += train_.batch_size) {
      const std::size_t count = std::min(train_.batch_size, n - start);
      std::vector<float> raw;
      raw.reserve(count * per);
      for (std::size_t k = 0; k < count; ++k) {
        const float* src = data_.data() + order[start + k] * per;
        raw.insert(raw.end(), src, src + per);
      }
      Shape shape = data_.shape();
      shape[0] = count;
      const auto batch = make_batch<float>(Tensor(shape, std::move(raw)), schedule_, state_.rng);
      total += step(batch);
      ++batches;
    }
    const double mean = total / double(batches);
    state_.loss_history.push_back(mean);
    return mean;
  }

  /// One optimizer update on a prepared batch; returns the batch loss.
  double step(const DiffusionBatch& batch) {
    Record rec;
    const UNet<float> net(cfg_, state_.params);
    const Var loss = diffusion_loss(rec, net, batch, schedule_, loss_);
    const double value = rec.value(loss).item();
    if (!std::isfinite(value))
      throw NumericalError("training loss diverged (non-finite) at epoch " +
                           std::to_string(state_.loss_history.size() + 1));
    auto grads = rec.backward(loss);
    if (train_.grad_clip > 0.0) clip_global_norm(grads, train_.grad_clip);
    adam_step(state_.params, grads, state_.optimizer);
    return value;
  }

 private:
  DenoiserConfig cfg_;
  LossConfig loss_;
  NoiseSchedule schedule_;
  TrainConfig train_;
  TrainState state_;
  Tensor data_;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> loss_history;
};

/// Trains from scratch for train_cfg.epochs epochs. `on_epoch` (optional)
/// sees the state after every completed epoch.
inline TrainResult train(const std::vector<AVMask>& dataset, const DenoiserConfig& cfg,
                         const LossConfig& loss, const NoiseSchedule& schedule, Rng rng,
                         const TrainConfig& train_cfg,
                         const std::function<void(const TrainState&)>& on_epoch = {}) {
  Trainer trainer(dataset, cfg, loss, schedule, train_cfg,
                  Trainer::initial_state(cfg, train_cfg.adam, std::move(rng)));
  for (std::size_t e = 0; e < train_cfg.epochs; ++e) {
    trainer.run_epoch();
    if (on_epoch) on_epoch(trainer.state());
  }
  auto st = std::move(trainer).release();
  return {std::move(st.params), std::move(st.loss_history)};
}

}  // namespace vesselgen
