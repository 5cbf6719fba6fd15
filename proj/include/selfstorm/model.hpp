#pragma once

// Model-based autoencoder. The encoder is ISTA unrolled with learned,
// weight-shared convolutions and smooth thresholds; the decoder is a two-layer
// strided convolution that plays the role of the measurement operator.

#include "selfstorm/core.hpp"
#include "selfstorm/kernels.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace selfstorm {

struct ActivationParams {
    double alpha0 = 0.95;
    double beta0 = 8.0;

    friend bool operator==(const ActivationParams&, const ActivationParams&) = default;
};

struct ModelConfig {
    int kernel_size = 15;
    int scale_factor = 4;
    double init_sigma = 1.0;  // Gaussian used for every kernel at init
    ActivationParams init_activation{};

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kKernelCount = 6;
inline constexpr std::size_t kActivationCount = 3;
inline constexpr std::array<std::string_view, kKernelCount> kKernelNames = {"W0_1", "W0_2", "W_1",
                                                                           "W_2",  "WD_1", "WD_2"};
inline constexpr std::array<std::string_view, kActivationCount> kActivationNames = {"act1", "act2", "act3"};

/// Every trainable tensor and scalar. The same layout carries gradients and
/// Adam moments.
struct ModelParams {
    ModelConfig config;
    ImageD w0_1, w0_2;  // input branch (plays A^T)
    ImageD w_1, w_2;    // iteration branch (plays A^T A)
    ImageD wd_1, wd_2;  // decoder (plays A)
    ActivationParams act1, act2, act3;

    std::array<ImageD*, kKernelCount> kernels() { return {&w0_1, &w0_2, &w_1, &w_2, &wd_1, &wd_2}; }
    std::array<const ImageD*, kKernelCount> kernels() const {
        return {&w0_1, &w0_2, &w_1, &w_2, &wd_1, &wd_2};
    }
    std::array<ActivationParams*, kActivationCount> activations() { return {&act1, &act2, &act3}; }
    std::array<const ActivationParams*, kActivationCount> activations() const { return {&act1, &act2, &act3}; }

    Eigen::Index parameter_count() const;

    /// Kernels (column-major, in kKernelNames order) then (alpha0, beta0) pairs.
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& v);

    /// Same shapes, every value zero (alpha0/beta0 included).
    ModelParams zeros_like() const;
    ModelParams& operator+=(const ModelParams& other);
    ModelParams& operator*=(double s);

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ParamGrads = ModelParams;

/// Gaussian kernels (sigma = config.init_sigma, normalised) and identical
/// activation pairs for all layers.
ModelParams init_params(const ModelConfig& config = {});

/// Percentile pair of each smooth-threshold call, in evaluation order.
using PercentileList = std::vector<std::pair<double, double>>;

struct ThresholdRecord {
    double i1 = 0, i99 = 0;
    ResolvedThreshold<double> resolved{};
};

struct IterationTrace {
    ImageD x_in;       // x^(k)
    ImageD c;          // W_1 * x^(k)
    ThresholdRecord t2;
    ImageD a2;         // S_act2(c)
    ImageD z;          // x^(k) - W_2 * a2 + b
    ThresholdRecord t3;
};

/// Intermediates of a training-mode forward pass.
struct ForwardTrace {
    ImageD y_up;
    ImageD b_pre;      // W0_1 * y_up
    ThresholdRecord t1;
    ImageD a1;         // S_act1(b_pre)
    ImageD b;          // W0_2 * a1, reused by every iteration
    ThresholdRecord t3_init;
    std::vector<IterationTrace> iterations;
    ImageD x_hat;
    ImageD e;          // WD_1 * x_hat
    ImageD r1;         // relu(e)
    ImageD f;          // WD_2 *_s r1
    PercentileList percentiles;
};

/// Frozen percentiles make the forward a fixed smooth function of the
/// parameters, which is what the backward pass differentiates.
struct EncodeOptions {
    const PercentileList* frozen = nullptr;
    ThresholdGuard guard = ThresholdGuard::clamp;
};

/// The input branch b = W0_2 * S_act1(W0_1 * y_up).
ImageD input_branch(const ImageD& y_up, const ModelParams& params);

/// One weight-shared iteration: S_act3(x - W_2 * S_act2(W_1 * x) + b).
ImageD encoder_update(const ImageD& x, const ImageD& b, const ModelParams& params);

ImageD encode(const ImageD& y_up, const ModelParams& params, int k_max, ForwardTrace* trace = nullptr,
              const EncodeOptions& options = {});

/// ReLU(WD_2 *_s ReLU(WD_1 * x)), output M x M.
ImageD decode(const ImageD& x_hat, const ModelParams& params, ForwardTrace* trace = nullptr);

struct ForwardResult {
    ImageD x_hat;
    ImageD y_hat;
    std::optional<ForwardTrace> trace;
};

ForwardResult forward(const ImageD& y, const ModelParams& params, int k_max, bool training,
                      const EncodeOptions& options = {});

/// Gradients of <grad_x_hat, encode(...)>; optional gradient w.r.t. y_up.
ParamGrads backward_encoder(const ForwardTrace& trace, const ModelParams& params, const ImageD& grad_x_hat,
                            ImageD* grad_y_up = nullptr);

/// Gradients of <grad_y_hat, decode(encode(...))>, accumulated over every
/// unrolled iteration for the shared weights.
ParamGrads backward(const ForwardTrace& trace, const ModelParams& params, const ImageD& grad_y_hat,
                    ImageD* grad_y_up = nullptr);

/// As above; throws if the forward pass was not run in training mode.
ParamGrads backward(const ForwardResult& result, const ModelParams& params, const ImageD& grad_y_hat);

}  // namespace selfstorm
