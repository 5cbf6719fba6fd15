#include "selfstorm/model.hpp"

#include "selfstorm/simulator.hpp"

#include <stdexcept>

namespace selfstorm {

Eigen::Index ModelParams::parameter_count() const {
    Eigen::Index n = 0;
    for (const ImageD* k : kernels()) n += k->size();
    return n + 2 * static_cast<Eigen::Index>(kActivationCount);
}

Eigen::VectorXd ModelParams::flatten() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index pos = 0;
    for (const ImageD* k : kernels()) {
        v.segment(pos, k->size()) = Eigen::Map<const Eigen::VectorXd>(k->data(), k->size());
        pos += k->size();
    }
    for (const ActivationParams* a : activations()) {
        v(pos++) = a->alpha0;
        v(pos++) = a->beta0;
    }
    return v;
}

void ModelParams::unflatten(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw std::invalid_argument("unflatten: parameter vector size mismatch");
    Eigen::Index pos = 0;
    for (ImageD* k : kernels()) {
        Eigen::Map<Eigen::VectorXd>(k->data(), k->size()) = v.segment(pos, k->size());
        pos += k->size();
    }
    for (ActivationParams* a : activations()) {
        a->alpha0 = v(pos++);
        a->beta0 = v(pos++);
    }
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (ImageD* k : z.kernels()) k->setZero();
    for (ActivationParams* a : z.activations()) *a = {0.0, 0.0};
    return z;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
    auto mine = kernels();
    auto theirs = other.kernels();
    for (std::size_t i = 0; i < kKernelCount; ++i) *mine[i] += *theirs[i];
    auto ma = activations();
    auto ta = other.activations();
    for (std::size_t i = 0; i < kActivationCount; ++i) {
        ma[i]->alpha0 += ta[i]->alpha0;
        ma[i]->beta0 += ta[i]->beta0;
    }
    return *this;
}

ModelParams& ModelParams::operator*=(double s) {
    for (ImageD* k : kernels()) *k *= s;
    for (ActivationParams* a : activations()) {
        a->alpha0 *= s;
        a->beta0 *= s;
    }
    return *this;
}

ModelParams init_params(const ModelConfig& config) {
    if (config.kernel_size < 1 || config.kernel_size % 2 == 0)
        throw std::invalid_argument("model kernel size must be odd");
    if (config.scale_factor < 1) throw std::invalid_argument("scale factor must be >= 1");
    const Eigen::VectorXd g = gaussian_profile(config.init_sigma, config.kernel_size);
    ImageD k = g * g.transpose();
    k /= k.sum();

    ModelParams p;
    p.config = config;
    for (ImageD* w : p.kernels()) *w = k;
    for (ActivationParams* a : p.activations()) *a = config.init_activation;
    return p;
}

namespace {

ConvSpec encoder_spec(const ModelParams& p) { return ConvSpec::same(p.config.kernel_size); }
ConvSpec decoder_stride_spec(const ModelParams& p) {
    return ConvSpec::same(p.config.kernel_size, p.config.scale_factor);
}

// Percentile bookkeeping for the sequence of threshold calls in one pass.
class ThresholdContext {
public:
    ThresholdContext(const EncodeOptions& options, PercentileList* record)
        : options_(options), record_(record) {}

    ImageD apply(const ImageD& x, const ActivationParams& act, ThresholdRecord* out) {
        std::pair<double, double> pct;
        if (options_.frozen) {
            if (index_ >= options_.frozen->size()) throw std::invalid_argument("frozen percentile list too short");
            pct = (*options_.frozen)[index_];
        } else {
            pct = activation_percentiles(x);
        }
        ++index_;
        if (record_) record_->push_back(pct);
        const auto th = resolve_threshold(pct.first, pct.second, act.alpha0, act.beta0, options_.guard);
        if (out) *out = {pct.first, pct.second, th};
        return smooth_threshold_forward(x, th);
    }

private:
    const EncodeOptions& options_;
    PercentileList* record_;
    std::size_t index_ = 0;
};

ImageD input_branch_impl(const ImageD& y_up, const ModelParams& p, ThresholdContext& ctx, ForwardTrace* trace) {
    const ConvSpec spec = encoder_spec(p);
    ImageD b_pre = conv2d_forward(y_up, p.w0_1, spec);
    ImageD a1 = ctx.apply(b_pre, p.act1, trace ? &trace->t1 : nullptr);
    ImageD b = conv2d_forward(a1, p.w0_2, spec);
    if (trace) {
        trace->b_pre = std::move(b_pre);
        trace->a1 = std::move(a1);
        trace->b = b;
    }
    return b;
}

ImageD update_impl(const ImageD& x, const ImageD& b, const ModelParams& p, ThresholdContext& ctx,
                   IterationTrace* it) {
    const ConvSpec spec = encoder_spec(p);
    ImageD c = conv2d_forward(x, p.w_1, spec);
    ThresholdRecord t2, t3;
    ImageD a2 = ctx.apply(c, p.act2, &t2);
    ImageD z = x - conv2d_forward(a2, p.w_2, spec) + b;
    ImageD next = ctx.apply(z, p.act3, &t3);
    if (it) {
        it->x_in = x;
        it->c = std::move(c);
        it->t2 = t2;
        it->a2 = std::move(a2);
        it->z = std::move(z);
        it->t3 = t3;
    }
    return next;
}

}  // namespace

ImageD input_branch(const ImageD& y_up, const ModelParams& params) {
    EncodeOptions options;
    ThresholdContext ctx(options, nullptr);
    return input_branch_impl(y_up, params, ctx, nullptr);
}

ImageD encoder_update(const ImageD& x, const ImageD& b, const ModelParams& params) {
    EncodeOptions options;
    ThresholdContext ctx(options, nullptr);
    return update_impl(x, b, params, ctx, nullptr);
}

ImageD encode(const ImageD& y_up, const ModelParams& params, int k_max, ForwardTrace* trace,
              const EncodeOptions& options) {
    if (k_max < 0) throw std::invalid_argument("k_max must be >= 0");
    if (y_up.rows() != y_up.cols()) throw std::invalid_argument("encoder input must be square");
    if (trace) {
        trace->y_up = y_up;
        trace->iterations.clear();
        trace->percentiles.clear();
    }
    ThresholdContext ctx(options, trace ? &trace->percentiles : nullptr);
    const ImageD b = input_branch_impl(y_up, params, ctx, trace);
    ImageD x = ctx.apply(b, params.act3, trace ? &trace->t3_init : nullptr);
    for (int k = 0; k < k_max; ++k) {
        IterationTrace* it = nullptr;
        if (trace) it = &trace->iterations.emplace_back();
        x = update_impl(x, b, params, ctx, it);
    }
    if (trace) trace->x_hat = x;
    return x;
}

ImageD decode(const ImageD& x_hat, const ModelParams& params, ForwardTrace* trace) {
    if (x_hat.rows() != x_hat.cols() || x_hat.rows() % params.config.scale_factor != 0)
        throw std::invalid_argument("decoder input must be square with N divisible by the scale factor");
    ImageD e = conv2d_forward(x_hat, params.wd_1, encoder_spec(params));
    ImageD r1 = relu_forward(e);
    ImageD f = conv2d_forward(r1, params.wd_2, decoder_stride_spec(params));
    ImageD y_hat = relu_forward(f);
    if (trace) {
        trace->e = std::move(e);
        trace->r1 = std::move(r1);
        trace->f = std::move(f);
    }
    return y_hat;
}

ForwardResult forward(const ImageD& y, const ModelParams& params, int k_max, bool training,
                      const EncodeOptions& options) {
    ForwardResult result;
    const ImageD y_up = upsample_bilinear(y, params.config.scale_factor);
    if (training) {
        ForwardTrace trace;
        result.x_hat = encode(y_up, params, k_max, &trace, options);
        result.y_hat = decode(result.x_hat, params, &trace);
        result.trace = std::move(trace);
    } else {
        result.x_hat = encode(y_up, params, k_max, nullptr, options);
        result.y_hat = decode(result.x_hat, params);
    }
    return result;
}

ParamGrads backward_encoder(const ForwardTrace& trace, const ModelParams& params, const ImageD& grad_x_hat,
                            ImageD* grad_y_up) {
    if (grad_x_hat.rows() != trace.x_hat.rows() || grad_x_hat.cols() != trace.x_hat.cols())
        throw std::invalid_argument("backward: gradient shape does not match encoder output");
    const ConvSpec spec = encoder_spec(params);
    ParamGrads g = params.zeros_like();

    ImageD gx = grad_x_hat;
    ImageD gb = ImageD::Zero(trace.b.rows(), trace.b.cols());
    for (auto it = trace.iterations.rbegin(); it != trace.iterations.rend(); ++it) {
        const auto g3 = smooth_threshold_backward(gx, it->z, it->t3.resolved, params.act3.beta0);
        g.act3.alpha0 += g3.alpha0;
        g.act3.beta0 += g3.beta0;
        // z = x - W_2 * a2 + b
        gb += g3.x;
        const ImageD gd = -g3.x;
        const auto conv2 = conv2d_backward(gd, it->a2, params.w_2, spec);
        g.w_2 += conv2.kernel;
        const auto g2 = smooth_threshold_backward(conv2.input, it->c, it->t2.resolved, params.act2.beta0);
        g.act2.alpha0 += g2.alpha0;
        g.act2.beta0 += g2.beta0;
        const auto conv1 = conv2d_backward(g2.x, it->x_in, params.w_1, spec);
        g.w_1 += conv1.kernel;
        gx = g3.x + conv1.input;
    }
    // x^(0) = S_act3(b)
    const auto g3 = smooth_threshold_backward(gx, trace.b, trace.t3_init.resolved, params.act3.beta0);
    g.act3.alpha0 += g3.alpha0;
    g.act3.beta0 += g3.beta0;
    gb += g3.x;

    const auto conv02 = conv2d_backward(gb, trace.a1, params.w0_2, spec);
    g.w0_2 += conv02.kernel;
    const auto g1 = smooth_threshold_backward(conv02.input, trace.b_pre, trace.t1.resolved, params.act1.beta0);
    g.act1.alpha0 += g1.alpha0;
    g.act1.beta0 += g1.beta0;
    const auto conv01 = conv2d_backward(g1.x, trace.y_up, params.w0_1, spec, grad_y_up != nullptr);
    g.w0_1 += conv01.kernel;
    if (grad_y_up) *grad_y_up = conv01.input;
    return g;
}

ParamGrads backward(const ForwardTrace& trace, const ModelParams& params, const ImageD& grad_y_hat,
                    ImageD* grad_y_up) {
    if (grad_y_hat.rows() != trace.f.rows() || grad_y_hat.cols() != trace.f.cols())
        throw std::invalid_argument("backward: gradient shape does not match decoder output");
    const ImageD gf = relu_backward(grad_y_hat, trace.f);
    const auto convd2 = conv2d_backward(gf, trace.r1, params.wd_2, decoder_stride_spec(params));
    const ImageD ge = relu_backward(convd2.input, trace.e);
    const auto convd1 = conv2d_backward(ge, trace.x_hat, params.wd_1, encoder_spec(params));

    ParamGrads g = backward_encoder(trace, params, convd1.input, grad_y_up);
    g.wd_2 += convd2.kernel;
    g.wd_1 += convd1.kernel;
    return g;
}

ParamGrads backward(const ForwardResult& result, const ModelParams& params, const ImageD& grad_y_hat) {
    if (!result.trace) throw std::logic_error("backward requires a training-mode forward trace");
    return backward(*result.trace, params, grad_y_hat);
}

}  // namespace selfstorm
