#include "selfstorm/commands.hpp"
#include "selfstorm/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace selfstorm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "selfstorm_test_commands" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig tiny_config() {
    RunConfig c;
    c.geometry.frame_size = 16;
    c.scene.frame_count = 6;
    c.scene.curve_count = 1;
    c.scene.curve_length_nm = 800.0;
    c.scene.margin_nm = 300.0;
    c.scene.activation_prob = 0.3;
    c.model.kernel_size = 7;
    c.train.epochs = 2;
    c.train.batch_size = 3;
    c.ista.max_iters = 20;
    c.eval_thresholds = 32;
    return c;
}

std::string file_bytes(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST_CASE("simulate writes every artefact and is reproducible") {
    const RunConfig c = tiny_config();
    const fs::path a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
    cmd_simulate(c, a);
    cmd_simulate(c, b);
    for (const char* name : {"stack.tif", "ground_truth.csv", "support.tif", "support.png", "config.txt"}) {
        CHECK(fs::exists(a / name));
        CHECK(file_bytes(a / name) == file_bytes(b / name));
    }
    const FrameStack stack = io::read_stack(a / "stack.tif");
    CHECK(stack.count() == 6);
    CHECK(stack.frame_size() == 16);
    CHECK(parse_run_config(file_bytes(a / "config.txt")).scene.frame_count == 6);

    RunConfig raw = c;
    raw.output_format = StackFormat::raw;
    const fs::path r = fresh_dir("sim_raw");
    cmd_simulate(raw, r);
    CHECK(fs::exists(r / "stack.raw"));
    CHECK(fs::exists(r / "stack.raw.hdr"));

    RunConfig bad = c;
    bad.scene.frame_count = 0;
    CHECK_THROWS_AS(cmd_simulate(bad, fresh_dir("sim_bad")), ConfigError);
}

TEST_CASE("train, infer, ista and evaluate run end to end") {
    const RunConfig c = tiny_config();
    const fs::path dir = fresh_dir("e2e");
    cmd_simulate(c, dir);
    std::ostringstream progress;
    const TrainResult tr = cmd_train(c, dir / "stack.tif", dir / "model.ckpt", &progress);
    CHECK(tr.history.size() == 2);
    CHECK(fs::exists(dir / "model.ckpt"));
    CHECK(fs::exists(dir / "model.ckpt.log"));
    CHECK(fs::exists(dir / "model.ckpt.config.txt"));
    CHECK(progress.str().find("epoch 2") != std::string::npos);

    const HighResImage img = cmd_infer(c, dir / "stack.tif", dir / "model.ckpt", dir / "ss.tif");
    CHECK(img.size() == 64);
    CHECK(fs::exists(dir / "ss.png"));
    cmd_infer(c, dir / "stack.tif", dir / "model.ckpt", dir / "ss2.tif");
    CHECK(file_bytes(dir / "ss.tif") == file_bytes(dir / "ss2.tif"));

    cmd_ista(c, dir / "stack.tif", dir / "ista.tif");
    CHECK(fs::exists(dir / "ista.tif.config.txt"));

    const EvalReport rep = cmd_evaluate(c, dir / "support.tif", dir / "support.tif", dir / "self.txt");
    CHECK(rep.snr_db == kInfiniteSnr);
    CHECK(fs::exists(dir / "self_curve.csv"));
    CHECK_NOTHROW(cmd_evaluate(c, dir / "support.tif", dir / "ss.tif", dir / "ss_report.txt"));
}

TEST_CASE("zero stack trains to zero loss and infers a zero image") {
    RunConfig c = tiny_config();
    const fs::path dir = fresh_dir("zero");
    io::write_stack_tiff(dir / "zero.tif", FrameStack(std::vector<Frame>(3, Frame(ImageD::Zero(16, 16), 100.0))));
    const TrainResult tr = cmd_train(c, dir / "zero.tif", dir / "z.ckpt");
    for (const EpochRecord& e : tr.history) CHECK(e.mean_loss == 0.0);
    const HighResImage img = cmd_infer(c, dir / "zero.tif", dir / "z.ckpt", dir / "z.tif");
    CHECK(img.pixels().isZero());

    c.ista.lambda = 1e12;
    io::write_stack_tiff(dir / "ones.tif", FrameStack(std::vector<Frame>(2, Frame(ImageD::Constant(16, 16, 500.0), 100.0))));
    CHECK(cmd_ista(c, dir / "ones.tif", dir / "i.tif").pixels().isZero());
}

TEST_CASE("commands validate paths and shapes before working") {
    const RunConfig c = tiny_config();
    const fs::path dir = fresh_dir("errors");
    CHECK_THROWS_AS(cmd_train(c, dir / "missing.tif", dir / "m.ckpt"), ConfigError);
    io::write_stack_tiff(dir / "s.tif", FrameStack(std::vector<Frame>(2, Frame(ImageD::Zero(16, 16), 100.0))));
    CHECK_THROWS_AS(cmd_train(c, dir / "s.tif", dir / "no_such_dir" / "m.ckpt"), ConfigError);

    Mask m = Mask::Zero(8, 8);
    m(1, 1) = 1;
    io::write_binary_tiff(dir / "gt.tif", BinaryImage(m));
    io::write_float_tiff(dir / "img.tif", ImageD::Zero(16, 16));
    CHECK_THROWS_WITH_AS(cmd_evaluate(c, dir / "gt.tif", dir / "img.tif", dir / "r.txt"),
                         doctest::Contains("shape mismatch"), std::invalid_argument);
    io::write_binary_tiff(dir / "empty.tif", BinaryImage(Mask::Zero(16, 16)));
    CHECK_THROWS_AS(cmd_evaluate(c, dir / "empty.tif", dir / "img.tif", dir / "r.txt"), std::invalid_argument);
}

TEST_CASE("gradcheck report lists every registered op once") {
    std::ostringstream out;
    const auto outcomes = cmd_gradcheck(RunConfig{}, out);
    const auto ops = registered_grad_check_ops();
    REQUIRE(outcomes.size() == ops.size());
    for (const GradCheckOp& op : ops) {
        std::size_t count = 0, pos = 0;
        const std::string text = out.str();
        while ((pos = text.find(op.name + " ", pos)) != std::string::npos) {
            if (pos == 0 || text[pos - 1] == '\n') ++count;
            ++pos;
        }
        CHECK(count == 1);
    }
    for (const auto& o : outcomes) {
        CHECK(o.passed);
        if (o.linear) CHECK(o.worst_error < 1e-9);
    }
}
