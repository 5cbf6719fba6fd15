#include "selfstorm/kernels.hpp"
#include "selfstorm/pipeline.hpp"

#include <doctest.h>

#include <cmath>

using namespace selfstorm;

namespace {

BinaryImage square_support(int n, std::initializer_list<std::pair<int, int>> on) {
    Mask m = Mask::Zero(n, n);
    for (auto [r, c] : on) m(r, c) = 1;
    return BinaryImage(m);
}

}  // namespace

TEST_CASE("snr hand-computable cases") {
    const BinaryImage gt = square_support(8, {{1, 1}, {2, 2}, {3, 3}, {4, 4}});
    const BinaryImage extra = square_support(8, {{1, 1}, {2, 2}, {3, 3}, {4, 4}, {6, 1}});
    CHECK(snr(gt, extra) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-15));
    CHECK(std::abs(snr(gt, extra) - 6.0206) < 5e-5);
    CHECK(snr(gt, BinaryImage(Mask::Zero(8, 8))) == 0.0);
    CHECK(snr(gt, gt) == kInfiniteSnr);
    CHECK_THROWS_AS(snr(BinaryImage(Mask::Zero(8, 8)), gt), std::invalid_argument);
    CHECK_THROWS_AS(snr(gt, BinaryImage(Mask::Zero(4, 4))), std::invalid_argument);
}

TEST_CASE("binarize is a strict threshold") {
    ImageD x(1, 3);
    x << 0.5, 1.0, 1.5;
    const BinaryImage b = binarize(x, 1.0);
    CHECK(b.pixels()(0, 0) == 0);
    CHECK(b.pixels()(0, 1) == 0);
    CHECK(b.pixels()(0, 2) == 1);
}

TEST_CASE("threshold sweep finds exact reconstructions and ties keep the lowest threshold") {
    const BinaryImage gt = square_support(8, {{1, 1}, {5, 6}});
    const ImageD img = gt.pixels().cast<double>();
    const EvalReport r = best_snr_over_thresholds(gt, img, 16);
    CHECK(r.snr_db == kInfiniteSnr);
    CHECK(r.best_threshold == 0.0);
    CHECK(r.threshold_curve.size() == 16);
    const EvalReport zero = best_snr_over_thresholds(gt, ImageD::Zero(8, 8), 16);
    CHECK(zero.snr_db == 0.0);
    CHECK_THROWS_AS(best_snr_over_thresholds(gt, img, 1), std::invalid_argument);
}

TEST_CASE("256 thresholds are within 0.1 dB of a 4096-threshold sweep") {
    Rng rng(1);
    const int n = 64;
    Mask m = Mask::Zero(n, n);
    ImageD delta = ImageD::Zero(n, n);
    for (int k = 0; k < 40; ++k) {
        const int r = static_cast<int>(rng.uniform(4, n - 4)), c = static_cast<int>(rng.uniform(4, n - 4));
        m(r, c) = 1;
        delta(r, c) += rng.uniform(0.5, 1.5);
    }
    ImageD blur = ImageD::Zero(3, 3);
    blur << 0.05, 0.1, 0.05, 0.1, 0.4, 0.1, 0.05, 0.1, 0.05;
    ImageD img = conv2d_forward(delta, blur, ConvSpec::same(3));
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += rng.uniform(0.0, 0.3);
    const BinaryImage gt(m);
    const double coarse = best_snr_over_thresholds(gt, img, 256).snr_db;
    const double fine = best_snr_over_thresholds(gt, img, 4096).snr_db;
    REQUIRE(std::isfinite(fine));
    CHECK(fine >= coarse - 1e-12);
    CHECK(fine - coarse <= 0.1);
}

TEST_CASE("normalization z-scores the box around an isolated blob") {
    ImageD img = ImageD::Constant(10, 10, 1.0);
    img(4, 4) = 10.0;
    img(4, 5) = 5.0;
    NormalizeConfig cfg;
    cfg.background_percentile = 98.0;
    const Frame out = normalize_frame(Frame(img, 100.0), cfg);
    // The 98th percentile keeps the two bright pixels; their box is 1 x 2.
    const double mean = 7.5, sd = 2.5;
    CHECK(out.pixels()(4, 4) == doctest::Approx((10.0 - mean) / sd));
    CHECK(out.pixels()(4, 5) == doctest::Approx((5.0 - mean) / sd));
    CHECK(out.pixels().cwiseAbs().sum() == doctest::Approx(2.0));
}

TEST_CASE("normalization handles two blobs and a flat frame") {
    ImageD img = ImageD::Zero(20, 20);
    img(3, 3) = 8.0;
    img(3, 4) = 4.0;
    img(4, 3) = 4.0;
    img(15, 15) = 6.0;
    img(15, 16) = 3.0;
    img(16, 15) = 3.0;
    NormalizeConfig cfg;
    cfg.background_percentile = 98.5;
    const Frame out = normalize_frame(Frame(img, 100.0), cfg);
    CHECK(out.pixels()(3, 3) > 0);
    CHECK(out.pixels()(15, 15) > 0);
    CHECK(out.pixels()(10, 10) == 0.0);
    const Frame flat = normalize_frame(Frame(ImageD::Constant(8, 8, 3.0), 100.0), cfg);
    CHECK(flat.pixels().isZero());
    cfg.background_percentile = 100.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("inference sums per-frame encodings") {
    ModelConfig mc;
    mc.kernel_size = 5;
    mc.scale_factor = 2;
    const ModelParams p = init_params(mc);
    Rng rng(2);
    std::vector<Frame> frames;
    for (int f = 0; f < 3; ++f) {
        ImageD x = ImageD::Zero(8, 8);
        x(static_cast<int>(rng.uniform(1, 7)), static_cast<int>(rng.uniform(1, 7))) = 2.0;
        frames.emplace_back(x, 100.0);
    }
    const FrameStack stack(frames);
    const HighResImage all = infer(stack, p, 2);
    ImageD want = ImageD::Zero(16, 16);
    for (const Frame& f : frames) want += infer(FrameStack({f}), p, 2).pixels();
    CHECK((all.pixels() - want).cwiseAbs().maxCoeff() < 1e-12);
    const HighResImage zero = infer(FrameStack({Frame(ImageD::Zero(8, 8), 100.0)}), p, 2);
    CHECK(zero.pixels().isZero());
}

TEST_CASE("upsampled sum and photon conversion") {
    const FrameStack stack({Frame(ImageD::Constant(8, 8, 1.0), 100.0), Frame(ImageD::Constant(8, 8, 2.0), 100.0)});
    const HighResImage up = upsampled_sum(stack, 4);
    CHECK(up.size() == 32);
    CHECK((up.pixels().array() - 3.0).abs().maxCoeff() < 1e-14);

    CameraModel cam;
    cam.baseline = 100.0;
    cam.gain = 2.0;
    ImageD counts = ImageD::Constant(8, 8, 120.0);
    counts(2, 2) = 220.0;
    const FrameStack photons = counts_to_signal_photons(FrameStack({Frame(counts, 100.0)}), cam);
    CHECK(photons[0].pixels()(2, 2) == 50.0);
    CHECK(photons[0].pixels()(0, 0) == 0.0);
}
