#pragma once

// Central finite-difference verification of the hand-written reverse passes.

#include "selfstorm/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace selfstorm {

/// A scalar objective <w, op(inputs)> of a flattened point, with its analytic gradient.
struct GradCheckProblem {
    Eigen::VectorXd point;
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    /// Optional on/off pattern of every ReLU-type input. A coordinate whose
    /// +-eps probe changes the pattern straddles a kink and is skipped.
    std::function<std::vector<std::uint8_t>(const Eigen::VectorXd&)> regime;
};

struct GradCheckResult {
    double worst_error = 0;
    Eigen::Index checked = 0;
    Eigen::Index skipped = 0;  // coordinates whose probe crossed a kink
};

/// Worst per-coordinate relative error |g - d| / max(|g|, |d|, floor) between
/// the analytic gradient g and central differences d, where
/// floor = 1e-3 * max|d| + 1e-12 keeps coordinates with negligible gradient
/// from dominating. Every coordinate is perturbed.
GradCheckResult grad_check(const GradCheckProblem& problem, double eps);

struct GradCheckOp {
    std::string name;
    bool linear = false;  // tolerance 1e-9 instead of 1e-4
    double eps = 1e-5;
    int trials = 100;
    /// Production-size repeat of an op already covered at full trial count.
    bool spot_check = false;
    std::function<GradCheckProblem(Rng&)> make;
};

/// Every registered differentiable op, including the full encoder and autoencoder.
std::vector<GradCheckOp> registered_grad_check_ops();

struct GradCheckOutcome {
    std::string name;
    bool linear = false;
    int trials = 0;
    bool spot_check = false;
    double worst_error = 0;
    double tolerance = 0;
    Eigen::Index checked = 0;
    Eigen::Index skipped = 0;
    bool passed = false;
};

inline constexpr double kLinearOpTolerance = 1e-9;
inline constexpr double kNonlinearOpTolerance = 1e-4;
/// An op fails if more than this share of its probes straddle a kink.
inline constexpr double kMaxSkippedFraction = 0.01;

/// Runs each op for its trial count on rng.child(op index).child(trial).
std::vector<GradCheckOutcome> run_grad_check_suite(std::uint64_t seed);

}  // namespace selfstorm
