#include "selfstorm/io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace selfstorm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "selfstorm_test_io";
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (std::uint32_t(b[at + 3]) << 24);
}

ImageD ramp(int rows, int cols, double scale) {
    ImageD m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * (r * cols + c);
    return m;
}

struct BigEndianTiff {
    std::vector<std::uint8_t> bytes;
    void u16(std::uint16_t v) {
        bytes.push_back(std::uint8_t(v >> 8));
        bytes.push_back(std::uint8_t(v));
    }
    void u32(std::uint32_t v) {
        u16(std::uint16_t(v >> 16));
        u16(std::uint16_t(v));
    }
    void entry(std::uint16_t tag, std::uint16_t type, std::uint32_t value) {
        u16(tag);
        u16(type);
        u32(1);
        if (type == 3) {
            u16(std::uint16_t(value));
            u16(0);
        } else {
            u32(value);
        }
    }
};

}  // namespace

TEST_CASE("tiff round-trip for every sample type") {
    const fs::path dir = scratch_dir();
    const std::vector<ImageD> u8 = {ramp(3, 5, 1.0), ramp(3, 5, 2.0)};
    io::write_tiff(dir / "u8.tif", u8, io::SampleType::u8, "hello");
    const io::TiffImage a = io::read_tiff(dir / "u8.tif");
    REQUIRE(a.pages.size() == 2);
    CHECK(a.pages[0] == u8[0]);
    CHECK(a.pages[1] == u8[1]);
    CHECK(a.description == "hello");

    const std::vector<ImageD> u16 = {ramp(4, 4, 1000.0)};
    io::write_tiff(dir / "u16.tif", u16, io::SampleType::u16);
    CHECK(io::read_tiff(dir / "u16.tif").pages[0] == u16[0]);

    const std::vector<ImageD> f32 = {ramp(6, 2, 0.25)};
    io::write_tiff(dir / "f32.tif", f32, io::SampleType::f32);
    CHECK(io::read_tiff(dir / "f32.tif").pages[0] == f32[0]);
}

TEST_CASE("integer tiff samples are rounded and clamped") {
    const fs::path dir = scratch_dir();
    ImageD m(1, 3);
    m << -5.0, 1.6, 300.0;
    io::write_tiff(dir / "clamp.tif", {m}, io::SampleType::u8);
    const ImageD back = io::read_tiff(dir / "clamp.tif").pages[0];
    CHECK(back(0, 0) == 0.0);
    CHECK(back(0, 1) == 2.0);
    CHECK(back(0, 2) == 255.0);
}

TEST_CASE("big-endian tiff is read") {
    BigEndianTiff t;
    t.bytes = {'M', 'M'};
    t.u16(42);
    t.u32(8);
    // 2 rows x 3 cols of u16 follow the IFD.
    const std::uint16_t n = 8;
    const std::uint32_t data_at = 8 + 2 + n * 12 + 4;
    t.u16(n);
    t.entry(256, 4, 3);
    t.entry(257, 4, 2);
    t.entry(258, 3, 16);
    t.entry(259, 3, 1);
    t.entry(262, 3, 1);
    t.entry(273, 4, data_at);
    t.entry(278, 4, 2);
    t.entry(279, 4, 12);
    t.u32(0);
    for (std::uint16_t v : {1, 2, 3, 400, 500, 60000}) t.u16(v);
    const fs::path p = scratch_dir() / "be.tif";
    write_all(p, t.bytes);
    const ImageD img = io::read_tiff(p).pages.at(0);
    REQUIRE(img.rows() == 2);
    REQUIRE(img.cols() == 3);
    CHECK(img(0, 2) == 3.0);
    CHECK(img(1, 0) == 400.0);
    CHECK(img(1, 2) == 60000.0);
}

TEST_CASE("corrupt tiff errors name the page") {
    const fs::path dir = scratch_dir();
    io::write_tiff(dir / "two.tif", {ramp(4, 4, 1.0), ramp(4, 4, 1.0)}, io::SampleType::u16);
    std::vector<std::uint8_t> bytes = read_all(dir / "two.tif");
    write_all(dir / "truncated.tif", {bytes.begin(), bytes.end() - 10});
    try {
        io::read_tiff(dir / "truncated.tif");
        FAIL("expected a format error");
    } catch (const io::FormatError& e) {
        CHECK(std::string(e.what()).find("page 2") != std::string::npos);
    }

    // Compression tag of page 1 is the fourth IFD entry.
    std::vector<std::uint8_t> compressed = bytes;
    const std::uint32_t ifd = le32(compressed, 4);
    compressed[ifd + 2 + 3 * 12 + 8] = 5;
    write_all(dir / "lzw.tif", compressed);
    try {
        io::read_tiff(dir / "lzw.tif");
        FAIL("expected a format error");
    } catch (const io::FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("page 1") != std::string::npos);
        CHECK(msg.find("compress") != std::string::npos);
    }

    write_all(dir / "junk.tif", {'X', 'Y', 1, 2, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(io::read_tiff(dir / "junk.tif"), io::FormatError);
    CHECK_THROWS_AS(io::read_tiff(dir / "missing.tif"), io::IoError);
}

TEST_CASE("stack tiff keeps the pixel size; raw stacks are lossless") {
    const fs::path dir = scratch_dir();
    std::vector<Frame> frames = {Frame(ramp(8, 8, 3.0), 80.0), Frame(ramp(8, 8, 5.0), 80.0)};
    const FrameStack stack(frames, "demo stack");
    io::write_stack_tiff(dir / "stack.tif", stack);
    const FrameStack t = io::read_stack(dir / "stack.tif");
    CHECK(t.pixel_size_nm() == 80.0);
    CHECK(t[1].pixels() == stack[1].pixels());

    std::vector<Frame> fine = {Frame(ramp(8, 8, 0.1) + ImageD::Constant(8, 8, 1.0 / 3.0), 80.0)};
    io::write_stack_raw(dir / "stack.raw", FrameStack(fine, "raw"));
    const FrameStack r = io::read_stack(dir / "stack.raw");
    CHECK(r[0].pixels() == fine[0].pixels());
    CHECK(r.pixel_size_nm() == 80.0);
    CHECK(r.metadata() == "raw");
}

TEST_CASE("binary and float tiff helpers") {
    const fs::path dir = scratch_dir();
    Mask m = Mask::Zero(8, 8);
    m(2, 3) = 1;
    io::write_binary_tiff(dir / "bin.tif", BinaryImage(m));
    CHECK(io::read_binary_tiff(dir / "bin.tif").pixels() == m);
    const ImageD f = ramp(8, 8, 0.5);
    io::write_float_tiff(dir / "f.tif", f);
    CHECK(io::read_tiff(dir / "f.tif").pages[0] == f);
    io::write_png_preview(dir / "f.png", f);
    const auto png = read_all(dir / "f.png");
    REQUIRE(png.size() > 8);
    CHECK(png[1] == 'P');
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const fs::path dir = scratch_dir();
    ModelConfig mc;
    mc.kernel_size = 5;
    ModelParams p = init_params(mc);
    Rng rng(1);
    Eigen::VectorXd v = p.flatten();
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += rng.normal(0.0, 1e-3) / 3.0;
    p.unflatten(v);
    io::save_checkpoint(dir / "a.ckpt", p);
    const ModelParams q = io::load_checkpoint(dir / "a.ckpt");
    CHECK(q == p);
    io::save_checkpoint(dir / "b.ckpt", q);
    CHECK(read_all(dir / "a.ckpt") == read_all(dir / "b.ckpt"));

    std::string text = io::read_text(dir / "a.ckpt");
    io::write_text(dir / "bad.ckpt", text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(io::load_checkpoint(dir / "bad.ckpt"), io::FormatError);
}

TEST_CASE("hex and number formatting") {
    for (double v : {0.0, -1.5, 1.0 / 3.0, 1e-300, 6.02e23}) CHECK(io::parse_double(io::format_hex(v)) == v);
    CHECK(io::parse_double("2.5") == 2.5);
    CHECK_THROWS_AS(io::parse_double("2.5x"), io::FormatError);
    CHECK_THROWS_AS(io::parse_double(""), io::FormatError);
}

TEST_CASE("evaluation report and curve files") {
    const fs::path dir = scratch_dir();
    EvalReport r;
    r.snr_db = kInfiniteSnr;
    r.best_threshold = 0.5;
    r.threshold_curve = {{0.0, 1.0}, {0.5, kInfiniteSnr}};
    io::write_eval_report(dir / "report.txt", r, 2);
    const std::string text = io::read_text(dir / "report.txt");
    CHECK(text.find("snr_db=inf") != std::string::npos);
    io::write_threshold_curve_csv(dir / "curve.csv", r);
    CHECK(io::read_text(dir / "curve.csv").rfind("threshold,snr_db\n", 0) == 0);
}
