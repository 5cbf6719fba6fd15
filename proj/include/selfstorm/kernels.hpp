#pragma once

// Differentiable operations used by the autoencoder. Every forward has a
// hand-written reverse-mode partner; grad_check.hpp verifies them.

#include "selfstorm/core.hpp"

#include <cmath>
#include <stdexcept>

namespace selfstorm {

struct ConvSpec {
    int kernel_size = 15;
    int stride = 1;
    int padding = 7;

    /// "same" padding for an odd kernel.
    static ConvSpec same(int kernel_size, int stride = 1) {
        return {kernel_size, stride, (kernel_size - 1) / 2};
    }

    int output_size(int in) const {
        const int span = in + 2 * padding - kernel_size;
        if (span < 0) throw std::invalid_argument("convolution kernel larger than padded input");
        return span / stride + 1;
    }
};

namespace detail {

inline void check_conv(const ConvSpec& spec, Eigen::Index kr, Eigen::Index kc) {
    if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0)
        throw std::invalid_argument("convolution kernel size must be odd");
    if (spec.stride < 1 || spec.padding < 0)
        throw std::invalid_argument("invalid convolution stride or padding");
    if (kr != spec.kernel_size || kc != spec.kernel_size)
        throw std::invalid_argument("kernel shape does not match convolution spec");
}

template <typename Scalar>
Image<Scalar> zero_pad(const Image<Scalar>& in, int pad) {
    Image<Scalar> out = Image<Scalar>::Zero(in.rows() + 2 * pad, in.cols() + 2 * pad);
    out.block(pad, pad, in.rows(), in.cols()) = in;
    return out;
}

template <typename Scalar>
using StridedView = Eigen::Map<const Image<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
template <typename Scalar>
using StridedViewMut = Eigen::Map<Image<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// Window of `padded` seen by kernel tap (a, b) across all output positions.
template <typename Scalar>
StridedView<Scalar> tap_view(const Image<Scalar>& padded, Eigen::Index a, Eigen::Index b,
                             Eigen::Index out_rows, Eigen::Index out_cols, int stride) {
    const Eigen::Index ld = padded.rows();
    return StridedView<Scalar>(padded.data() + a + b * ld, out_rows, out_cols,
                               Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(stride * ld, stride));
}

template <typename Scalar>
StridedViewMut<Scalar> tap_view(Image<Scalar>& padded, Eigen::Index a, Eigen::Index b,
                                Eigen::Index out_rows, Eigen::Index out_cols, int stride) {
    const Eigen::Index ld = padded.rows();
    return StridedViewMut<Scalar>(padded.data() + a + b * ld, out_rows, out_cols,
                                  Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(stride * ld, stride));
}

}  // namespace detail

/// 2-D cross-correlation (the kernel is not flipped) with zero padding and stride:
///   out(i, j) = sum_{a,b} kernel(a, b) * in(i*stride + a - pad, j*stride + b - pad)
/// Taps are accumulated in a fixed order (column-major over the kernel), so
/// results do not depend on threading.
template <typename Scalar>
Image<Scalar> conv2d_forward(const Image<Scalar>& input, const Image<Scalar>& kernel, const ConvSpec& spec) {
    detail::check_conv(spec, kernel.rows(), kernel.cols());
    const int out_rows = spec.output_size(static_cast<int>(input.rows()));
    const int out_cols = spec.output_size(static_cast<int>(input.cols()));
    const Image<Scalar> padded = detail::zero_pad(input, spec.padding);
    Image<Scalar> out = Image<Scalar>::Zero(out_rows, out_cols);
    for (Eigen::Index b = 0; b < kernel.cols(); ++b) {
        for (Eigen::Index a = 0; a < kernel.rows(); ++a) {
            const Scalar w = kernel(a, b);
            if (spec.stride == 1)
                out.noalias() += w * padded.block(a, b, out_rows, out_cols);
            else
                out.noalias() += w * detail::tap_view(padded, a, b, out_rows, out_cols, spec.stride);
        }
    }
    return out;
}

template <typename Scalar>
struct ConvGrads {
    Image<Scalar> input;
    Image<Scalar> kernel;
};

/// Reverse mode of conv2d_forward: gradients of <grad_output, conv(input, kernel)>.
/// Pass need_input = false to skip the input gradient (first layer of a graph).
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Image<Scalar>& grad_output, const Image<Scalar>& input,
                                  const Image<Scalar>& kernel, const ConvSpec& spec, bool need_input = true) {
    detail::check_conv(spec, kernel.rows(), kernel.cols());
    const int out_rows = spec.output_size(static_cast<int>(input.rows()));
    const int out_cols = spec.output_size(static_cast<int>(input.cols()));
    if (grad_output.rows() != out_rows || grad_output.cols() != out_cols)
        throw std::invalid_argument("conv2d_backward: grad_output shape does not match forward output");

    const Image<Scalar> padded = detail::zero_pad(input, spec.padding);
    ConvGrads<Scalar> grads;
    grads.kernel.resize(kernel.rows(), kernel.cols());
    Image<Scalar> grad_padded;
    if (need_input) grad_padded = Image<Scalar>::Zero(padded.rows(), padded.cols());

    for (Eigen::Index b = 0; b < kernel.cols(); ++b) {
        for (Eigen::Index a = 0; a < kernel.rows(); ++a) {
            if (spec.stride == 1) {
                grads.kernel(a, b) = padded.block(a, b, out_rows, out_cols).cwiseProduct(grad_output).sum();
                if (need_input) grad_padded.block(a, b, out_rows, out_cols).noalias() += kernel(a, b) * grad_output;
            } else {
                grads.kernel(a, b) =
                    detail::tap_view(padded, a, b, out_rows, out_cols, spec.stride).cwiseProduct(grad_output).sum();
                if (need_input) {
                    auto view = detail::tap_view(grad_padded, a, b, out_rows, out_cols, spec.stride);
                    view += kernel(a, b) * grad_output;
                }
            }
        }
    }
    if (need_input) grads.input = grad_padded.block(spec.padding, spec.padding, input.rows(), input.cols());
    return grads;
}

/// Interpolation matrix U (out x in) for one axis. Output sample u reads the
/// input at coordinate u / scale: the top-left pixel centres of both grids
/// coincide, which is the geometry of stride-`scale` subsampling. Samples past
/// the last input pixel hold its value.
template <typename Scalar>
Image<Scalar> bilinear_axis_matrix(int in_size, int scale) {
    if (scale < 1) throw std::invalid_argument("scale factor must be a positive integer");
    const int out_size = in_size * scale;
    Image<Scalar> u = Image<Scalar>::Zero(out_size, in_size);
    for (int o = 0; o < out_size; ++o) {
        const int i0 = o / scale;
        const Scalar t = static_cast<Scalar>(o % scale) / static_cast<Scalar>(scale);
        if (i0 >= in_size - 1) {
            u(o, in_size - 1) = Scalar(1);
        } else {
            u(o, i0) = Scalar(1) - t;
            u(o, i0 + 1) += t;
        }
    }
    return u;
}

template <typename Scalar>
Image<Scalar> upsample_bilinear(const Image<Scalar>& frame, int scale_factor) {
    const Image<Scalar> ur = bilinear_axis_matrix<Scalar>(static_cast<int>(frame.rows()), scale_factor);
    const Image<Scalar> uc = bilinear_axis_matrix<Scalar>(static_cast<int>(frame.cols()), scale_factor);
    return ur * frame * uc.transpose();
}

/// Exact adjoint of upsample_bilinear.
template <typename Scalar>
Image<Scalar> upsample_bilinear_adjoint(const Image<Scalar>& grad, int scale_factor) {
    if (scale_factor < 1 || grad.rows() % scale_factor || grad.cols() % scale_factor)
        throw std::invalid_argument("upsample adjoint: shape not divisible by scale factor");
    const Image<Scalar> ur = bilinear_axis_matrix<Scalar>(static_cast<int>(grad.rows() / scale_factor), scale_factor);
    const Image<Scalar> uc = bilinear_axis_matrix<Scalar>(static_cast<int>(grad.cols() / scale_factor), scale_factor);
    return ur.transpose() * grad * uc;
}

template <typename Scalar>
Image<Scalar> relu_forward(const Image<Scalar>& x) {
    return x.cwiseMax(Scalar(0));
}

/// Subgradient 0 at the kink.
template <typename Scalar>
Image<Scalar> relu_backward(const Image<Scalar>& grad_y, const Image<Scalar>& x) {
    return (x.array() > Scalar(0)).select(grad_y, Scalar(0));
}

// ---------------------------------------------------------------------------
// Smooth positive hard threshold
//   S(x) = relu(x) / (1 + exp(-beta * (|x| - alpha)))
// with alpha = i1 + (i99 - i1) * alpha0 and beta = beta0 / alpha, where i1 and
// i99 are the 1st/99th percentiles of the layer input (held constant under
// differentiation).

enum class ThresholdGuard {
    strict,  // alpha <= 0 is an error
    clamp,   // alpha is floored at kAlphaFloor, with zero derivative when floored
};

inline constexpr double kFlatInputSpread = 1e-12;
inline constexpr double kAlphaFloor = 1e-6;

template <typename Scalar>
struct ResolvedThreshold {
    Scalar alpha;
    Scalar beta;
    Scalar dalpha_dalpha0;  // d alpha / d alpha0
};

template <typename Scalar>
ResolvedThreshold<Scalar> resolve_threshold(Scalar i1, Scalar i99, Scalar alpha0, Scalar beta0,
                                            ThresholdGuard guard = ThresholdGuard::strict) {
    const Scalar spread = i99 - i1;
    Scalar alpha;
    Scalar dalpha;
    if (spread < Scalar(kFlatInputSpread)) {
        // Flat input: there is no spread to interpolate across.
        alpha = i99 * alpha0;
        dalpha = i99;
        if (alpha < Scalar(kAlphaFloor)) {
            alpha = Scalar(kAlphaFloor);
            dalpha = Scalar(0);
        }
    } else {
        alpha = i1 + spread * alpha0;
        dalpha = spread;
        if (!(alpha > Scalar(0))) {
            if (guard == ThresholdGuard::strict) throw std::domain_error("degenerate threshold");
            alpha = Scalar(kAlphaFloor);
            dalpha = Scalar(0);
        } else if (guard == ThresholdGuard::clamp && alpha < Scalar(kAlphaFloor)) {
            alpha = Scalar(kAlphaFloor);
            dalpha = Scalar(0);
        }
    }
    return {alpha, beta0 / alpha, dalpha};
}

namespace detail {
template <typename Scalar>
Scalar stable_sigmoid(Scalar z) {
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (Scalar(1) + e);
}
}  // namespace detail

template <typename Scalar>
Image<Scalar> smooth_threshold_forward(const Image<Scalar>& x, const ResolvedThreshold<Scalar>& th) {
    return x.unaryExpr([&](Scalar v) {
        if (v <= Scalar(0)) return Scalar(0);
        return v * detail::stable_sigmoid(th.beta * (v - th.alpha));
    });
}

template <typename Scalar>
Image<Scalar> smooth_threshold_forward(const Image<Scalar>& x, Scalar i1, Scalar i99, Scalar alpha0, Scalar beta0) {
    return smooth_threshold_forward(x, resolve_threshold(i1, i99, alpha0, beta0));
}

template <typename Scalar>
struct ThresholdGrads {
    Image<Scalar> x;
    Scalar alpha0 = 0;
    Scalar beta0 = 0;
};

template <typename Scalar>
ThresholdGrads<Scalar> smooth_threshold_backward(const Image<Scalar>& grad_y, const Image<Scalar>& x,
                                                 const ResolvedThreshold<Scalar>& th, Scalar beta0) {
    if (grad_y.rows() != x.rows() || grad_y.cols() != x.cols())
        throw std::invalid_argument("smooth_threshold_backward: shape mismatch");
    ThresholdGrads<Scalar> g;
    g.x.resize(x.rows(), x.cols());
    // With z = beta0 * (|x| / alpha - 1):
    //   dz/dalpha = -beta0 |x| / alpha^2,  dz/dbeta0 = |x| / alpha - 1.
    Scalar acc_alpha = 0;
    Scalar acc_beta0 = 0;
    const Scalar inv_alpha = Scalar(1) / th.alpha;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Scalar v = x(i, j);
            if (v <= Scalar(0)) {
                g.x(i, j) = Scalar(0);
                continue;
            }
            const Scalar s = detail::stable_sigmoid(th.beta * (v - th.alpha));
            const Scalar ds = s * (Scalar(1) - s);
            const Scalar gy = grad_y(i, j);
            g.x(i, j) = gy * (s + v * ds * th.beta);
            const Scalar common = gy * v * ds;
            acc_alpha += common * (-beta0 * v * inv_alpha * inv_alpha);
            acc_beta0 += common * (v * inv_alpha - Scalar(1));
        }
    }
    g.alpha0 = acc_alpha * th.dalpha_dalpha0;
    g.beta0 = acc_beta0;
    return g;
}

template <typename Scalar>
ThresholdGrads<Scalar> smooth_threshold_backward(const Image<Scalar>& grad_y, const Image<Scalar>& x, Scalar i1,
                                                 Scalar i99, Scalar alpha0, Scalar beta0) {
    return smooth_threshold_backward(grad_y, x, resolve_threshold(i1, i99, alpha0, beta0), beta0);
}

/// (1st, 99th) percentiles of an image, as used by the smooth threshold.
template <typename Scalar>
std::pair<Scalar, Scalar> activation_percentiles(const Image<Scalar>& x) {
    std::vector<double> scratch(x.data(), x.data() + x.size());
    const double i1 = percentile_inplace(scratch, 1.0);
    const double i99 = percentile_inplace(scratch, 99.0);
    return {static_cast<Scalar>(i1), static_cast<Scalar>(i99)};
}

}  // namespace selfstorm
