#pragma once

#include "selfstorm/core.hpp"
#include "selfstorm/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace selfstorm {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 5;
    int batch_size = 16;
    int k_max_train = 1;
    std::uint64_t seed = 0;
    /// Stop once an epoch improves the mean loss by less than this fraction.
    std::optional<double> plateau_stop;

    void validate() const;
};

inline constexpr double kBeta0Floor = 1e-3;

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;

    static AdamState zeros_like(const ModelParams& params);
};

/// Non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct L1Loss {
    double value = 0;
    ImageD grad;  // d value / d y_hat
};

/// mean |y_hat - y|; gradient sign(y_hat - y) / count with sign(0) = 0.
L1Loss l1_loss(const ImageD& y_hat, const ImageD& y);

/// Bias-corrected Adam update followed by alpha0 -> [0, 1], beta0 -> [1e-3, inf).
void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, const TrainConfig& config);

/// Clamp activation parameters into their valid ranges.
void clamp_activations(ModelParams& params);

struct EpochRecord {
    int epoch = 0;          // 1-based
    double mean_loss = 0;   // mean over batches of the batch loss
    double seconds = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Self-supervised training on an already normalised stack. Loss and gradient
/// are mean over the frames in the batch and their pixels. Per-frame work may
/// run on several threads; gradients are reduced in frame order.
TrainResult train(const FrameStack& stack, const TrainConfig& config, const ModelParams& initial,
                  const EpochCallback& on_epoch = {});

}  // namespace selfstorm
