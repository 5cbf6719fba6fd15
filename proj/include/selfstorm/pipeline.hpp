#pragma once

// End-to-end pieces around the model: per-frame normalisation, encoder-only
// inference with summation, binarisation and the support SNR.

#include "selfstorm/core.hpp"
#include "selfstorm/model.hpp"
#include "selfstorm/simulator.hpp"

#include <limits>
#include <vector>

namespace selfstorm {

struct NormalizeConfig {
    double background_percentile = 98.0;  // pixels at or above this percentile are foreground
    int min_component_pixels = 1;

    void validate() const;
};

/// Foreground mask -> strict 8-neighbour maxima -> bounding box of each maximum's
/// 8-connected foreground component -> z-score inside the box. Boxes are taken
/// in descending peak intensity and a pixel is normalised at most once;
/// everything outside a box becomes 0.
Frame normalize_frame(const Frame& frame, const NormalizeConfig& config);
FrameStack normalize_stack(const FrameStack& stack, const NormalizeConfig& config);

/// Sum over frames of the encoder output (the decoder is not used).
HighResImage infer(const FrameStack& stack_normalized, const ModelParams& params, int k_max_infer = 2);

/// Diffraction-limited reference: bilinear upsampling of the plain frame sum.
HighResImage upsampled_sum(const FrameStack& stack, int scale_factor);

/// Camera counts to photons above background: (v - baseline) / gain minus the
/// per-frame median, clamped at 0. Used before ISTA.
FrameStack counts_to_signal_photons(const FrameStack& stack, const CameraModel& camera);

/// 1 where value > threshold.
BinaryImage binarize(const ImageD& image, double threshold);
inline BinaryImage binarize(const HighResImage& image, double threshold) { return binarize(image.pixels(), threshold); }

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// 10 log10(||gt||^2 / ||gt - pred||^2) in dB; +inf when pred == gt.
double snr(const BinaryImage& gt, const BinaryImage& pred);

struct EvalReport {
    double snr_db = 0;
    double best_threshold = 0;
    std::vector<std::pair<double, double>> threshold_curve;  // (threshold, snr_db)
};

/// Evenly spaced thresholds min + j (max - min) / n, j = 0..n-1; ties keep the
/// lowest threshold.
EvalReport best_snr_over_thresholds(const BinaryImage& gt, const ImageD& image, int n_thresholds = 256);

}  // namespace selfstorm
