#include "selfstorm/core.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace selfstorm;

TEST_CASE("frame validation") {
    CHECK_NOTHROW(Frame(ImageD::Zero(8, 8), 100.0));
    CHECK_THROWS_AS(Frame(ImageD::Zero(8, 9), 100.0), std::invalid_argument);
    CHECK_THROWS_AS(Frame(ImageD::Zero(7, 7), 100.0), std::invalid_argument);
    CHECK_THROWS_AS(Frame(ImageD::Zero(8, 8), 0.0), std::invalid_argument);
    ImageD bad = ImageD::Zero(8, 8);
    bad(3, 3) = std::nan("");
    CHECK_THROWS_AS(Frame(bad, 100.0), std::invalid_argument);
}

TEST_CASE("frame stack validation and slicing") {
    CHECK_THROWS_AS(FrameStack(std::vector<Frame>{}), std::invalid_argument);
    CHECK_THROWS_AS(FrameStack({Frame(ImageD::Zero(8, 8), 100.0), Frame(ImageD::Zero(9, 9), 100.0)}),
                    std::invalid_argument);
    std::vector<Frame> frames;
    for (int i = 0; i < 5; ++i) frames.emplace_back(ImageD::Constant(8, 8, i), 100.0);
    const FrameStack stack(frames, "meta");
    CHECK(stack.count() == 5);
    CHECK(stack.frame_size() == 8);
    const FrameStack sub = stack.slice(1, 3);
    CHECK(sub.count() == 3);
    CHECK(sub[0].pixels()(0, 0) == 1.0);
    CHECK(sub.metadata() == "meta");
    CHECK_THROWS_AS(stack.slice(3, 3), std::out_of_range);
}

TEST_CASE("high-res and binary image validation") {
    CHECK_NOTHROW(HighResImage(ImageD::Zero(8, 8), 4));
    CHECK_THROWS_AS(HighResImage(ImageD::Zero(8, 8), 3), std::invalid_argument);
    CHECK_THROWS_AS(HighResImage(ImageD::Constant(8, 8, -1.0), 4), std::invalid_argument);
    Mask m = Mask::Zero(4, 4);
    m(1, 1) = 1;
    CHECK(BinaryImage(m).count() == 1);
    m(2, 2) = 2;
    CHECK_THROWS_AS(BinaryImage{m}, std::invalid_argument);
}

TEST_CASE("percentile interpolates between order statistics") {
    const std::vector<double> v = {5, 1, 4, 2, 3};
    CHECK(percentile(v, 0) == 1.0);
    CHECK(percentile(v, 100) == 5.0);
    CHECK(percentile(v, 50) == 3.0);
    CHECK(percentile(v, 10) == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(percentile(v, 99) == doctest::Approx(4.96).epsilon(1e-15));
    CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), std::invalid_argument);
    CHECK_THROWS_AS(percentile(v, 101), std::invalid_argument);

    Rng rng(3);
    std::vector<double> big(1001);
    for (double& x : big) x = rng.uniform();
    std::vector<double> sorted = big;
    std::sort(sorted.begin(), sorted.end());
    CHECK(percentile(big, 37.5) == sorted[375]);
}

TEST_CASE("rng is reproducible and child streams differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    const Rng root(42);
    Rng c0 = root.child(0), c0b = root.child(0), c1 = root.child(1);
    const auto v0 = c0.next_u64();
    CHECK(v0 == c0b.next_u64());
    CHECK(v0 != c1.next_u64());
    CHECK(Rng(1).child(0).seed() == splitmix64(1ULL ^ 0x9E3779B97F4A7C15ULL));
}

TEST_CASE("rng distributions") {
    Rng rng(7);
    CHECK(rng.poisson(0.0) == 0);
    CHECK(rng.normal(2.0, 0.0) == 2.0);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.poisson(4.0));
    CHECK(sum / n == doctest::Approx(4.0).epsilon(0.03));
}
