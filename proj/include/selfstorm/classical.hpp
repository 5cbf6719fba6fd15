#pragma once

// Frame-wise positive ISTA on an explicit measurement operator.

#include "selfstorm/core.hpp"
#include "selfstorm/linear_operator.hpp"

#include <vector>

namespace selfstorm {

enum class StepRule {
    /// x <- T_{lambda/L}(x - (1/L) * 2 A^T (A x - y)), L = 2 lambda_max(A^T A).
    classical_1_over_L,
    /// x <- T_{lambda/L}(x - 2L * A^T (A x - y)); kept for fidelity experiments, usually diverges.
    literal_2L,
};

struct IstaConfig {
    double lambda = 0.1;
    int max_iters = 100;
    double tolerance = 1e-8;  // early exit on ||x_{k+1} - x_k||_inf
    StepRule step_rule = StepRule::classical_1_over_L;
    /// Record the objective after every iteration (and assert it never increases
    /// under the classical rule).
    bool track_objective = false;

    void validate() const;
};

/// max(x - t, 0) elementwise.
template <typename Derived>
auto positive_soft_threshold(const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar t) {
    return (x.array() - t).cwiseMax(typename Derived::Scalar(0)).matrix();
}

struct PowerIterationOptions {
    int max_iters = 200;
    double rel_tol = 1e-9;
    std::uint64_t seed = 0;
};

/// L = 2 * lambda_max(A^T A), by power iteration on A^T A.
double lipschitz_constant(const LinearOperator& op, const PowerIterationOptions& options = {});

/// ||y - A x||^2 + lambda ||x||_1
double lasso_objective(const LinearOperator& op, const ImageD& x, const ImageD& y, double lambda);

struct IstaResult {
    ImageD x;
    int iterations = 0;
    std::vector<double> objective;  // filled when track_objective
};

/// Starts from x = 0. Pass a precomputed Lipschitz constant to share it across frames.
IstaResult ista(const ImageD& y, const LinearOperator& op, const IstaConfig& config, double lipschitz = 0.0);

HighResImage ista(const Frame& y, const LinearOperator& op, const IstaConfig& config, int scale_factor,
                  double lipschitz = 0.0);

/// Per-frame ISTA, summed pixelwise over the stack.
HighResImage ista_reconstruct_stack(const FrameStack& stack, const LinearOperator& op, const IstaConfig& config,
                                    int scale_factor);

}  // namespace selfstorm
