#include "selfstorm/train.hpp"

#include <doctest.h>

#include <cmath>

using namespace selfstorm;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.kernel_size = 5;
    c.scale_factor = 2;
    return c;
}

FrameStack random_stack(std::uint64_t seed, int frames, int m = 8) {
    Rng rng(seed);
    std::vector<Frame> out;
    for (int f = 0; f < frames; ++f) {
        ImageD x = ImageD::Zero(m, m);
        for (int k = 0; k < 3; ++k) {
            const int r = static_cast<int>(rng.uniform(1, m - 1)), c = static_cast<int>(rng.uniform(1, m - 1));
            x(r, c) += rng.uniform(1.0, 3.0);
            x(r + 1, c) += 0.5;
        }
        out.emplace_back(x, 100.0);
    }
    return FrameStack(out);
}

}  // namespace

TEST_CASE("l1 loss value and sign gradient") {
    ImageD a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 1, 0, 5, 4;
    const L1Loss l = l1_loss(a, b);
    CHECK(l.value == 1.0);
    CHECK(l.grad(0, 0) == 0.0);
    CHECK(l.grad(0, 1) == 0.25);
    CHECK(l.grad(1, 0) == -0.25);
    CHECK_THROWS_AS(l1_loss(a, ImageD::Zero(3, 3)), std::invalid_argument);
}

TEST_CASE("adam first step moves every coordinate by the learning rate") {
    ModelParams p = init_params(small_config());
    const Eigen::VectorXd before = p.flatten();
    ParamGrads g = p.zeros_like();
    Eigen::VectorXd gv(before.size());
    for (Eigen::Index i = 0; i < gv.size(); ++i) gv(i) = (i % 3 == 0 ? -1.0 : 1.0) * (0.1 + 0.01 * double(i % 7));
    g.unflatten(gv);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.adam_eps = 1e-12;
    AdamState st = AdamState::zeros_like(p);
    adam_step(p, g, st, cfg);
    CHECK(st.step == 1);
    const Eigen::VectorXd delta = p.flatten() - before;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        const double want = -1e-3 * (gv(i) > 0 ? 1.0 : -1.0);
        CHECK(delta(i) == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("adam two-step recursion matches a scalar oracle") {
    ModelParams p = init_params(small_config());
    const Eigen::VectorXd p0 = p.flatten();
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    AdamState st = AdamState::zeros_like(p);
    const double g1 = 0.3, g2 = -0.1;
    ParamGrads g = p.zeros_like();
    g.unflatten(Eigen::VectorXd::Constant(p0.size(), g1));
    adam_step(p, g, st, cfg);
    g.unflatten(Eigen::VectorXd::Constant(p0.size(), g2));
    adam_step(p, g, st, cfg);

    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_eps, lr = cfg.learning_rate;
    double m = (1 - b1) * g1, v = (1 - b2) * g1 * g1;
    double step1 = lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
    m = b1 * m + (1 - b1) * g2;
    v = b2 * v + (1 - b2) * g2 * g2;
    double step2 = lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
    // Coordinate 0 is a kernel tap, which is not clamped.
    CHECK(p.flatten()(0) == doctest::Approx(p0(0) - step1 - step2).epsilon(1e-12));
}

TEST_CASE("adam clamps activation parameters") {
    ModelParams p = init_params(small_config());
    ParamGrads g = p.zeros_like();
    g.act1.alpha0 = -1.0;  // pushes alpha0 up past 1
    g.act2.beta0 = 1.0;    // pushes beta0 down
    p.act2.beta0 = 1e-3;
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    AdamState st = AdamState::zeros_like(p);
    adam_step(p, g, st, cfg);
    CHECK(p.act1.alpha0 == 1.0);
    CHECK(p.act2.beta0 == kBeta0Floor);
}

TEST_CASE("non-finite gradient is a divergence") {
    ModelParams p = init_params(small_config());
    ParamGrads g = p.zeros_like();
    g.w_1(0, 0) = std::nan("");
    AdamState st = AdamState::zeros_like(p);
    CHECK_THROWS_AS(adam_step(p, g, st, TrainConfig{}), DivergenceError);
}

TEST_CASE("training on a zero stack leaves parameters unchanged with zero loss") {
    const FrameStack zeros(std::vector<Frame>(4, Frame(ImageD::Zero(8, 8), 100.0)));
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    const ModelParams init = init_params(small_config());
    const TrainResult r = train(zeros, cfg, init);
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0].mean_loss == 0.0);
    CHECK(r.history[1].mean_loss == 0.0);
    CHECK(r.params == init);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const FrameStack stack = random_stack(1, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 11;
    const ModelParams init = init_params(small_config());
    const TrainResult a = train(stack, cfg, init);
    const TrainResult b = train(stack, cfg, init);
    CHECK(a.params == b.params);
    CHECK(a.history[1].mean_loss == b.history[1].mean_loss);
    cfg.seed = 12;
    const TrainResult c = train(stack, cfg, init);
    CHECK(!(c.params == a.params));
}

TEST_CASE("gradients reach every kernel and the loss decreases on a small problem") {
    const FrameStack stack = random_stack(2, 4);
    ModelParams init = init_params(small_config());
    init.act1.alpha0 = init.act2.alpha0 = init.act3.alpha0 = 0.5;
    const ForwardResult fr = forward(stack[0].pixels(), init, 1, true);
    const L1Loss loss = l1_loss(fr.y_hat, stack[0].pixels());
    const ParamGrads g = backward(fr, init, loss.grad);
    for (const ImageD* w : g.kernels()) CHECK(w->cwiseAbs().maxCoeff() > 0.0);

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-2;
    const TrainResult r = train(stack, cfg, init);
    CHECK(r.history.back().mean_loss < r.history.front().mean_loss);
}

TEST_CASE("plateau stop ends training early") {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.plateau_stop = 0.5;
    const FrameStack stack = random_stack(3, 4);
    const TrainResult r = train(stack, cfg, init_params(small_config()));
    CHECK(r.history.size() < 5);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.adam_beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
