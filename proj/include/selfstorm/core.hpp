#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfstorm {

/// Dense 2-D image, indexed (row, col). Column-major like every other Eigen matrix.
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using ImageD = Image<double>;
using ImageF = Image<float>;
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kMinFrameSize = 8;

/// One low-resolution camera frame (M x M).
class Frame {
public:
    Frame() = default;
    Frame(ImageD pixels, double pixel_size_nm);

    const ImageD& pixels() const noexcept { return pixels_; }
    double pixel_size_nm() const noexcept { return pixel_size_nm_; }
    int size() const noexcept { return static_cast<int>(pixels_.rows()); }

private:
    ImageD pixels_;
    double pixel_size_nm_ = 100.0;
};

/// T frames sharing one geometry. The model is trained on nothing else.
class FrameStack {
public:
    FrameStack() = default;
    FrameStack(std::vector<Frame> frames, std::string metadata = {});

    const std::vector<Frame>& frames() const noexcept { return frames_; }
    const Frame& operator[](std::size_t i) const { return frames_.at(i); }
    std::size_t count() const noexcept { return frames_.size(); }
    int frame_size() const noexcept { return frames_.empty() ? 0 : frames_.front().size(); }
    double pixel_size_nm() const noexcept {
        return frames_.empty() ? 0.0 : frames_.front().pixel_size_nm();
    }
    const std::string& metadata() const noexcept { return metadata_; }

    /// Contiguous sub-range [first, first + n).
    FrameStack slice(std::size_t first, std::size_t n) const;

private:
    std::vector<Frame> frames_;
    std::string metadata_;
};

/// N x N super-resolved image, N = scale_factor * M.
class HighResImage {
public:
    HighResImage() = default;
    HighResImage(ImageD pixels, int scale_factor);

    const ImageD& pixels() const noexcept { return pixels_; }
    int scale_factor() const noexcept { return scale_factor_; }
    int size() const noexcept { return static_cast<int>(pixels_.rows()); }

private:
    ImageD pixels_;
    int scale_factor_ = 1;
};

/// {0,1} image; the support of a reconstruction or of the ground truth.
class BinaryImage {
public:
    BinaryImage() = default;
    explicit BinaryImage(Mask pixels);

    const Mask& pixels() const noexcept { return pixels_; }
    int rows() const noexcept { return static_cast<int>(pixels_.rows()); }
    int cols() const noexcept { return static_cast<int>(pixels_.cols()); }
    Eigen::Index count() const { return pixels_.cast<Eigen::Index>().sum(); }

private:
    Mask pixels_;
};

/// Seeded generator. mt19937_64, seeded directly with the 64-bit seed.
/// Child streams are derived with SplitMix64(seed ^ golden * (index + 1)) so
/// parallel work never shares state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    Rng child(std::uint64_t index) const;

    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);
    std::int64_t poisson(double mean);
    bool bernoulli(double p);
    std::uint64_t next_u64() { return engine_(); }
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Linear interpolation between order statistics at rank (p / 100) * (n - 1).
double percentile(std::span<const double> values, double p);

/// Same, but reorders `scratch` in place instead of copying. Used on hot paths.
double percentile_inplace(std::span<double> scratch, double p);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace selfstorm
