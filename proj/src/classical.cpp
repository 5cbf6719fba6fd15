#include "selfstorm/classical.hpp"

#include <cmath>
#include <stdexcept>

namespace selfstorm {

void IstaConfig::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (max_iters < 1) throw std::invalid_argument("ISTA needs max_iters >= 1");
    if (!(tolerance >= 0.0)) throw std::invalid_argument("ISTA tolerance must be >= 0");
}

double lipschitz_constant(const LinearOperator& op, const PowerIterationOptions& options) {
    Rng rng(options.seed);
    ImageD v(op.input_rows(), op.input_cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(0.5, 1.5);
    v /= v.norm();
    double lambda = 0.0;
    for (int it = 0; it < options.max_iters; ++it) {
        ImageD w = op.adjoint(op.forward(v));
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = v.cwiseProduct(w).sum();  // Rayleigh quotient, |v| = 1
        v = w / norm;
        const bool converged = it > 0 && std::abs(next - lambda) <= options.rel_tol * std::abs(next);
        lambda = next;
        if (converged) break;
    }
    return 2.0 * lambda;
}

double lasso_objective(const LinearOperator& op, const ImageD& x, const ImageD& y, double lambda) {
    return (y - op.forward(x)).squaredNorm() + lambda * x.cwiseAbs().sum();
}

IstaResult ista(const ImageD& y, const LinearOperator& op, const IstaConfig& config, double lipschitz) {
    config.validate();
    if (y.rows() != op.output_rows() || y.cols() != op.output_cols())
        throw std::invalid_argument("ista: measurement shape does not match operator");
    const double L = lipschitz > 0.0 ? lipschitz : lipschitz_constant(op);

    IstaResult result;
    result.x = ImageD::Zero(op.input_rows(), op.input_cols());
    if (L == 0.0) return result;

    const double threshold = config.lambda / L;
    const double step = config.step_rule == StepRule::classical_1_over_L ? 2.0 / L : 2.0 * L;
    if (config.track_objective) result.objective.push_back(lasso_objective(op, result.x, y, config.lambda));

    for (int k = 0; k < config.max_iters; ++k) {
        const ImageD residual = op.forward(result.x) - y;
        ImageD next = positive_soft_threshold(result.x - step * op.adjoint(residual), threshold);
        const double change = (next - result.x).cwiseAbs().maxCoeff();
        result.x = std::move(next);
        result.iterations = k + 1;
        if (config.track_objective) {
            const double obj = lasso_objective(op, result.x, y, config.lambda);
            if (config.step_rule == StepRule::classical_1_over_L) {
                const double prev = result.objective.back();
                if (obj > prev + 1e-9 * std::max(1.0, std::abs(prev)))
                    throw std::logic_error("ISTA objective increased");
            }
            result.objective.push_back(obj);
        }
        if (!result.x.allFinite()) throw std::runtime_error("ISTA diverged");
        if (change < config.tolerance) break;
    }
    return result;
}

HighResImage ista(const Frame& y, const LinearOperator& op, const IstaConfig& config, int scale_factor,
                  double lipschitz) {
    return HighResImage(ista(y.pixels(), op, config, lipschitz).x, scale_factor);
}

HighResImage ista_reconstruct_stack(const FrameStack& stack, const LinearOperator& op, const IstaConfig& config,
                                    int scale_factor) {
    config.validate();
    const double L = lipschitz_constant(op);
    const auto n = static_cast<std::ptrdiff_t>(stack.count());
    std::vector<ImageD> per_frame(stack.count());

#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        per_frame[static_cast<std::size_t>(i)] = ista(stack[static_cast<std::size_t>(i)].pixels(), op, config, L).x;

    ImageD sum = ImageD::Zero(op.input_rows(), op.input_cols());
    for (const ImageD& x : per_frame) sum += x;
    return HighResImage(std::move(sum), scale_factor);
}

}  // namespace selfstorm
