#include "selfstorm/grad_check.hpp"

#include "selfstorm/kernels.hpp"
#include "selfstorm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace selfstorm {

GradCheckResult grad_check(const GradCheckProblem& problem, double eps) {
    const Eigen::VectorXd analytic = problem.gradient(problem.point);
    Eigen::VectorXd numeric(problem.point.size());
    std::vector<bool> skip(static_cast<std::size_t>(problem.point.size()), false);
    Eigen::VectorXd x = problem.point;
    const auto base_regime = problem.regime ? problem.regime(x) : std::vector<std::uint8_t>{};
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = x(i);
        x(i) = orig + eps;
        const double fp = problem.value(x);
        const bool flip_p = problem.regime && problem.regime(x) != base_regime;
        x(i) = orig - eps;
        const double fm = problem.value(x);
        const bool flip_m = problem.regime && problem.regime(x) != base_regime;
        x(i) = orig;
        numeric(i) = (fp - fm) / (2.0 * eps);
        skip[static_cast<std::size_t>(i)] = flip_p || flip_m;
    }
    GradCheckResult result;
    double max_numeric = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!skip[static_cast<std::size_t>(i)]) max_numeric = std::max(max_numeric, std::abs(numeric(i)));
    const double floor = 1e-3 * max_numeric + 1e-12;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (skip[static_cast<std::size_t>(i)]) {
            ++result.skipped;
            continue;
        }
        ++result.checked;
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
        result.worst_error = std::max(result.worst_error, std::abs(analytic(i) - numeric(i)) / denom);
    }
    return result;
}

namespace {

ImageD random_image(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    ImageD m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

// Entries with |v| in [margin, scale], random sign.
ImageD random_away_from_zero(Rng& rng, Eigen::Index rows, Eigen::Index cols, double margin, double scale) {
    ImageD m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double mag = rng.uniform(margin, scale);
        m.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
    }
    return m;
}

Eigen::VectorXd flat(const ImageD& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

ImageD unflat(const Eigen::VectorXd& v, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const ImageD>(v.data() + offset, rows, cols);
}

GradCheckOp conv_op(std::string name, bool wrt_kernel, int in_size, int kernel_size, int stride) {
    GradCheckOp op;
    op.name = std::move(name);
    op.linear = true;
    op.eps = 1e-2;  // central differences are exact on linear maps; a large step limits roundoff
    op.make = [=](Rng& rng) {
        const ConvSpec spec = ConvSpec::same(kernel_size, stride);
        const int out = spec.output_size(in_size);
        const ImageD input = random_image(rng, in_size, in_size, -1, 1);
        const ImageD kernel = random_image(rng, kernel_size, kernel_size, -1, 1);
        const ImageD w = random_image(rng, out, out, -1, 1);
        GradCheckProblem p;
        if (wrt_kernel) {
            p.point = flat(kernel);
            p.value = [=](const Eigen::VectorXd& v) {
                return conv2d_forward(input, unflat(v, 0, kernel_size, kernel_size), spec).cwiseProduct(w).sum();
            };
            p.gradient = [=](const Eigen::VectorXd& v) {
                return flat(conv2d_backward(w, input, unflat(v, 0, kernel_size, kernel_size), spec).kernel);
            };
        } else {
            p.point = flat(input);
            p.value = [=](const Eigen::VectorXd& v) {
                return conv2d_forward(unflat(v, 0, in_size, in_size), kernel, spec).cwiseProduct(w).sum();
            };
            p.gradient = [=](const Eigen::VectorXd& v) {
                return flat(conv2d_backward(w, unflat(v, 0, in_size, in_size), kernel, spec).input);
            };
        }
        return p;
    };
    return op;
}

GradCheckOp upsample_op() {
    GradCheckOp op;
    op.name = "upsample_bilinear";
    op.linear = true;
    op.eps = 1e-2;
    op.make = [](Rng& rng) {
        const int m = 6, s = 4;
        const ImageD w = random_image(rng, m * s, m * s, -1, 1);
        GradCheckProblem p;
        p.point = flat(random_image(rng, m, m, -1, 1));
        p.value = [=](const Eigen::VectorXd& v) {
            return upsample_bilinear(unflat(v, 0, m, m), s).cwiseProduct(w).sum();
        };
        p.gradient = [=](const Eigen::VectorXd&) { return flat(upsample_bilinear_adjoint(w, s)); };
        return p;
    };
    return op;
}

GradCheckOp relu_op() {
    GradCheckOp op;
    op.name = "relu";
    op.make = [](Rng& rng) {
        const int n = 10;
        const ImageD w = random_image(rng, n, n, -1, 1);
        GradCheckProblem p;
        p.point = flat(random_away_from_zero(rng, n, n, 1e-3, 2.0));
        p.value = [=](const Eigen::VectorXd& v) { return relu_forward(unflat(v, 0, n, n)).cwiseProduct(w).sum(); };
        p.gradient = [=](const Eigen::VectorXd& v) { return flat(relu_backward(w, unflat(v, 0, n, n))); };
        return p;
    };
    return op;
}

GradCheckOp smooth_threshold_op() {
    GradCheckOp op;
    op.name = "smooth_threshold";
    op.make = [](Rng& rng) {
        const int n = 10;
        const ImageD x = random_away_from_zero(rng, n, n, 1e-3, 2.0);
        const auto [i1, i99] = activation_percentiles(x);
        const ImageD w = random_image(rng, n, n, -1, 1);
        const double alpha0 = rng.uniform(0.6, 0.95);
        const double beta0 = rng.uniform(2.0, 10.0);
        GradCheckProblem p;
        p.point.resize(n * n + 2);
        p.point << flat(x), alpha0, beta0;
        p.value = [=](const Eigen::VectorXd& v) {
            return smooth_threshold_forward<double>(unflat(v, 0, n, n), i1, i99, v(n * n), v(n * n + 1))
                .cwiseProduct(w)
                .sum();
        };
        p.gradient = [=](const Eigen::VectorXd& v) {
            const auto g = smooth_threshold_backward<double>(w, unflat(v, 0, n, n), i1, i99, v(n * n), v(n * n + 1));
            Eigen::VectorXd out(n * n + 2);
            out << flat(g.x), g.alpha0, g.beta0;
            return out;
        };
        return p;
    };
    return op;
}

ModelParams random_params(Rng& rng, const ModelConfig& config) {
    ModelParams p = init_params(config);
    const double amp = p.w0_1.maxCoeff();
    for (ImageD* k : {&p.w0_1, &p.w0_2, &p.w_1, &p.w_2}) *k += 0.1 * amp * random_image(rng, k->rows(), k->cols(), -1, 1);
    // Decoder kernels stay positive, with a floor far above the probe step (the
    // Gaussian's corner taps are ~1e-22), so the decoder's ReLUs never see a corner.
    for (ImageD* k : {&p.wd_1, &p.wd_2})
        *k = k->cwiseProduct(random_image(rng, k->rows(), k->cols(), 0.7, 1.3)).array() + 0.02 * amp;
    for (ActivationParams* a : p.activations()) *a = {rng.uniform(0.5, 0.95), rng.uniform(4.0, 10.0)};
    return p;
}

ImageD random_frame(Rng& rng, int m) {
    ImageD y = random_image(rng, m, m, 0.0, 1.0);
    for (int k = 0; k < 3; ++k) {
        y(static_cast<Eigen::Index>(rng.uniform(0, m)), static_cast<Eigen::Index>(rng.uniform(0, m))) +=
            rng.uniform(3.0, 5.0);
    }
    return y;
}

// Sign pattern of every ReLU-type input in the trace. Percentiles are frozen,
// so these are the only places the objective is not smooth.
std::vector<std::uint8_t> kink_pattern(const ForwardTrace& t, bool with_decoder) {
    std::vector<std::uint8_t> pattern;
    auto scan = [&](const ImageD& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) pattern.push_back(m.data()[i] > 0.0);
    };
    scan(t.b_pre);
    scan(t.b);
    for (const IterationTrace& it : t.iterations) {
        scan(it.c);
        scan(it.z);
    }
    if (with_decoder) {
        scan(t.e);
        scan(t.f);
    }
    return pattern;
}

// Objective <w, encode(y_up)> or <w, decode(encode(upsample(y)))> over
// (parameters, input), with the activation percentiles frozen at the base point.
GradCheckOp model_op(std::string name, bool full_autoencoder, ModelConfig config, int frame_size, int trials) {
    GradCheckOp op;
    op.name = std::move(name);
    op.trials = trials;
    op.make = [=](Rng& rng) {
        const int k_max = 1;
        const int s = config.scale_factor;
        const int in_size = full_autoencoder ? frame_size : frame_size * s;
        const int out_size = full_autoencoder ? frame_size : frame_size * s;
        const ModelParams base = random_params(rng, config);
        const ImageD input = full_autoencoder ? random_frame(rng, frame_size)
                                              : upsample_bilinear(random_frame(rng, frame_size), s);
        auto frozen = std::make_shared<PercentileList>();
        {
            ForwardTrace trace;
            const ImageD y_up = full_autoencoder ? upsample_bilinear(input, s) : input;
            encode(y_up, base, k_max, &trace);
            *frozen = trace.percentiles;
        }
        const Eigen::Index np = base.parameter_count();
        const ImageD w = random_image(rng, out_size, out_size, -1, 1);

        auto unpack = [=](const Eigen::VectorXd& v) {
            ModelParams p = base;
            p.unflatten(v.head(np));
            return std::pair{p, unflat(v, np, in_size, in_size)};
        };
        GradCheckProblem p;
        p.point.resize(np + input.size());
        p.point << base.flatten(), flat(input);
        p.value = [=](const Eigen::VectorXd& v) {
            const auto [params, in] = unpack(v);
            EncodeOptions opts;
            opts.frozen = frozen.get();
            const ImageD y_up = full_autoencoder ? upsample_bilinear(in, s) : in;
            const ImageD x_hat = encode(y_up, params, k_max, nullptr, opts);
            const ImageD out = full_autoencoder ? decode(x_hat, params) : x_hat;
            return out.cwiseProduct(w).sum();
        };
        p.gradient = [=](const Eigen::VectorXd& v) {
            const auto [params, in] = unpack(v);
            EncodeOptions opts;
            opts.frozen = frozen.get();
            ForwardTrace trace;
            const ImageD y_up = full_autoencoder ? upsample_bilinear(in, s) : in;
            const ImageD x_hat = encode(y_up, params, k_max, &trace, opts);
            ImageD g_up;
            ParamGrads g;
            if (full_autoencoder) {
                decode(x_hat, params, &trace);
                g = backward(trace, params, w, &g_up);
            } else {
                g = backward_encoder(trace, params, w, &g_up);
            }
            const ImageD g_in = full_autoencoder ? upsample_bilinear_adjoint(g_up, s) : g_up;
            Eigen::VectorXd out(np + g_in.size());
            out << g.flatten(), flat(g_in);
            return out;
        };
        p.regime = [=](const Eigen::VectorXd& v) {
            const auto [params, in] = unpack(v);
            EncodeOptions opts;
            opts.frozen = frozen.get();
            ForwardTrace trace;
            const ImageD y_up = full_autoencoder ? upsample_bilinear(in, s) : in;
            const ImageD x_hat = encode(y_up, params, k_max, &trace, opts);
            if (full_autoencoder) decode(x_hat, params, &trace);
            return kink_pattern(trace, full_autoencoder);
        };
        return p;
    };
    return op;
}

GradCheckOp spot_check(GradCheckOp op) {
    op.spot_check = true;
    return op;
}

}  // namespace

std::vector<GradCheckOp> registered_grad_check_ops() {
    const ModelConfig small{5, 2, 1.0, {}};
    const ModelConfig full{15, 4, 1.0, {}};
    return {
        conv_op("conv2d/input", false, 12, 5, 1),
        conv_op("conv2d/kernel", true, 12, 5, 1),
        conv_op("conv2d_strided/input", false, 16, 15, 4),
        conv_op("conv2d_strided/kernel", true, 16, 15, 4),
        upsample_op(),
        relu_op(),
        smooth_threshold_op(),
        model_op("encoder(k_max=1)", false, small, 8, 100),
        spot_check(model_op("encoder(k_max=1, 15x15)", false, full, 8, 2)),
        model_op("autoencoder(k_max=1)", true, small, 8, 100),
        spot_check(model_op("autoencoder(k_max=1, 15x15)", true, full, 8, 2)),
    };
}

std::vector<GradCheckOutcome> run_grad_check_suite(std::uint64_t seed) {
    const Rng root(seed);
    const auto ops = registered_grad_check_ops();
    std::vector<GradCheckOutcome> outcomes;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const GradCheckOp& op = ops[i];
        const Rng op_rng = root.child(i);
        GradCheckOutcome out;
        out.name = op.name;
        out.linear = op.linear;
        out.trials = op.trials;
        out.spot_check = op.spot_check;
        out.tolerance = op.linear ? kLinearOpTolerance : kNonlinearOpTolerance;
        for (int t = 0; t < op.trials; ++t) {
            Rng trial_rng = op_rng.child(static_cast<std::uint64_t>(t));
            const GradCheckResult r = grad_check(op.make(trial_rng), op.eps);
            out.worst_error = std::max(out.worst_error, r.worst_error);
            out.checked += r.checked;
            out.skipped += r.skipped;
        }
        out.passed = out.worst_error < out.tolerance && out.skipped <= kMaxSkippedFraction * (out.checked + out.skipped);
        outcomes.push_back(out);
    }
    return outcomes;
}

}  // namespace selfstorm
