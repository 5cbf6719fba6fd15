#include "selfstorm/core.hpp"

#include <algorithm>
#include <cmath>

namespace selfstorm {

Frame::Frame(ImageD pixels, double pixel_size_nm)
    : pixels_(std::move(pixels)), pixel_size_nm_(pixel_size_nm) {
    if (pixels_.rows() != pixels_.cols())
        throw std::invalid_argument("frame must be square");
    if (pixels_.rows() < kMinFrameSize)
        throw std::invalid_argument("frame must be at least 8x8");
    if (!pixels_.allFinite())
        throw std::invalid_argument("frame contains non-finite pixels");
    if (!(pixel_size_nm_ > 0.0))
        throw std::invalid_argument("pixel size must be positive");
}

FrameStack::FrameStack(std::vector<Frame> frames, std::string metadata)
    : frames_(std::move(frames)), metadata_(std::move(metadata)) {
    if (frames_.empty())
        throw std::invalid_argument("frame stack is empty");
    const auto m = frames_.front().size();
    const auto px = frames_.front().pixel_size_nm();
    for (const auto& f : frames_) {
        if (f.size() != m || f.pixel_size_nm() != px)
            throw std::invalid_argument("frames in a stack must share size and pixel size");
    }
}

FrameStack FrameStack::slice(std::size_t first, std::size_t n) const {
    if (first + n > frames_.size() || n == 0)
        throw std::out_of_range("frame stack slice out of range");
    return FrameStack({frames_.begin() + static_cast<std::ptrdiff_t>(first),
                       frames_.begin() + static_cast<std::ptrdiff_t>(first + n)},
                      metadata_);
}

HighResImage::HighResImage(ImageD pixels, int scale_factor)
    : pixels_(std::move(pixels)), scale_factor_(scale_factor) {
    if (scale_factor_ < 1)
        throw std::invalid_argument("scale factor must be >= 1");
    if (pixels_.rows() != pixels_.cols() || pixels_.rows() % scale_factor_ != 0)
        throw std::invalid_argument("high-res image must be square with N divisible by the scale factor");
    if (!pixels_.allFinite() || (pixels_.size() > 0 && pixels_.minCoeff() < 0.0))
        throw std::invalid_argument("high-res image must be finite and non-negative");
}

BinaryImage::BinaryImage(Mask pixels) : pixels_(std::move(pixels)) {
    if ((pixels_.array() > 1).any())
        throw std::invalid_argument("binary image values must be 0 or 1");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng Rng::child(std::uint64_t index) const {
    return Rng(splitmix64(seed_ ^ (0x9E3779B97F4A7C15ULL * (index + 1))));
}

double Rng::uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
    if (stddev == 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::int64_t Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(engine_);
}

bool Rng::bernoulli(double p) {
    return std::bernoulli_distribution(p)(engine_);
}

double percentile_inplace(std::span<double> scratch, double p) {
    if (scratch.empty())
        throw std::invalid_argument("empty sample");
    if (!(p >= 0.0 && p <= 100.0))
        throw std::invalid_argument("percentile must lie in [0, 100]");
    const auto n = scratch.size();
    const double rank = (p / 100.0) * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = rank - static_cast<double>(lo);

    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.end());
    const double v_lo = scratch[lo];
    if (hi == lo || frac == 0.0) return v_lo;
    const double v_hi = *std::min_element(scratch.begin() + static_cast<std::ptrdiff_t>(lo) + 1, scratch.end());
    return v_lo + frac * (v_hi - v_lo);
}

double percentile(std::span<const double> values, double p) {
    if (values.empty())
        throw std::invalid_argument("empty sample");
    for (double v : values) {
        if (!std::isfinite(v))
            throw std::invalid_argument("percentile of non-finite sample");
    }
    std::vector<double> scratch(values.begin(), values.end());
    return percentile_inplace(scratch, p);
}

}  // namespace selfstorm
