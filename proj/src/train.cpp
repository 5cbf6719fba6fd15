#include "selfstorm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace selfstorm {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (k_max_train < 0) throw std::invalid_argument("k_max_train must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
    if (plateau_stop && !(*plateau_stop >= 0.0)) throw std::invalid_argument("plateau threshold must be >= 0");
}

AdamState AdamState::zeros_like(const ModelParams& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

L1Loss l1_loss(const ImageD& y_hat, const ImageD& y) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
        throw std::invalid_argument("l1_loss: shape mismatch");
    const double count = static_cast<double>(y.size());
    const auto diff = (y_hat - y).array();
    L1Loss out;
    out.value = diff.abs().sum() / count;
    out.grad = (diff.sign() / count).matrix();
    return out;
}

void clamp_activations(ModelParams& params) {
    for (ActivationParams* a : params.activations()) {
        a->alpha0 = std::clamp(a->alpha0, 0.0, 1.0);
        a->beta0 = std::max(a->beta0, kBeta0Floor);
    }
}

void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, const TrainConfig& config) {
    const Eigen::VectorXd g = grads.flatten();
    if (!g.allFinite()) throw DivergenceError("diverged: non-finite gradient");
    if (state.step < 0) throw std::invalid_argument("Adam step counter must be >= 0");

    Eigen::VectorXd p = params.flatten();
    Eigen::VectorXd m = state.m.flatten();
    Eigen::VectorXd v = state.v.flatten();
    if (m.size() != p.size() || v.size() != p.size())
        throw std::invalid_argument("Adam state does not match parameter layout");

    state.step += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const Eigen::ArrayXd m_hat = m.array() / c1;
    const Eigen::ArrayXd v_hat = v.array() / c2;
    p.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);

    params.unflatten(p);
    state.m.unflatten(m);
    state.v.unflatten(v);
    clamp_activations(params);
}

TrainResult train(const FrameStack& stack, const TrainConfig& config, const ModelParams& initial,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (stack.count() == 0) throw std::invalid_argument("cannot train on an empty stack");
    if (stack.frame_size() * initial.config.scale_factor <= 0)
        throw std::invalid_argument("invalid stack geometry");

    TrainResult result{initial, {}};
    ModelParams& params = result.params;
    AdamState state = AdamState::zeros_like(params);
    Rng rng(config.seed);

    std::vector<std::size_t> order(stack.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(config.batch_size);

    double previous = 0.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates on the seeded stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t n = std::min(batch, order.size() - start);
            std::vector<ParamGrads> frame_grads(n);
            std::vector<double> frame_loss(n);

#pragma omp parallel for schedule(dynamic, 1)
            for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
                const ImageD& y = stack[order[start + static_cast<std::size_t>(b)]].pixels();
                ForwardResult fr = forward(y, params, config.k_max_train, true);
                L1Loss loss = l1_loss(fr.y_hat, y);
                frame_loss[static_cast<std::size_t>(b)] = loss.value;
                frame_grads[static_cast<std::size_t>(b)] = backward(*fr.trace, params, loss.grad);
            }

            ParamGrads grads = params.zeros_like();
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                grads += frame_grads[b];
                batch_loss += frame_loss[b];
            }
            const double inv = 1.0 / static_cast<double>(n);
            grads *= inv;
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw DivergenceError("diverged: non-finite loss in epoch " + std::to_string(epoch));
            try {
                adam_step(params, grads, state, config);
            } catch (const DivergenceError&) {
                throw DivergenceError("diverged: non-finite gradient in epoch " + std::to_string(epoch));
            }
            loss_sum += batch_loss;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(batches);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (config.plateau_stop && epoch > 1 && previous > 0.0) {
            const double improvement = (previous - rec.mean_loss) / previous;
            if (improvement < *config.plateau_stop) break;
        }
        previous = rec.mean_loss;
    }
    return result;
}

}  // namespace selfstorm
