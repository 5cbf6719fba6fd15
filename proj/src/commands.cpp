#include "selfstorm/commands.hpp"

#include "selfstorm/classical.hpp"
#include "selfstorm/io.hpp"
#include "selfstorm/model.hpp"
#include "selfstorm/train.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace selfstorm {

namespace {

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what + " path");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

void require_output(const fs::path& p) {
    if (p.empty()) throw ConfigError("missing output path");
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw ConfigError("output directory does not exist: " + parent.string());
}

void write_echo(const RunConfig& config, const fs::path& path) { io::write_text(path, echo_run_config(config)); }

FrameStack load_stack(const RunConfig& config, const fs::path& path) {
    return io::read_stack(path, config.geometry.pixel_size_nm);
}

fs::path png_beside(const fs::path& image) {
    fs::path p = image;
    p.replace_extension(".png");
    return p;
}

}  // namespace

fs::path config_echo_path(const fs::path& output) {
    fs::path p = output;
    p += ".config.txt";
    return p;
}

Simulation simulate_from_config(const RunConfig& config) {
    config.validate();
    const Rng root(config.seed);
    Rng scene_rng = root.child(0);
    const EmitterScene scene = make_scene(config.scene, config.geometry, scene_rng);
    return simulate_sequence(scene, config.psf, config.camera, config.geometry, root.child(1), config.noise);
}

void cmd_simulate(const RunConfig& config, const fs::path& out_dir) {
    config.validate();
    if (out_dir.empty()) throw ConfigError("missing output directory");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw io::IoError("cannot create output directory '" + out_dir.string() + "'");

    const Simulation sim = simulate_from_config(config);
    if (config.output_format == StackFormat::tiff) io::write_stack_tiff(out_dir / "stack.tif", sim.stack);
    else io::write_stack_raw(out_dir / "stack.raw", sim.stack);
    io::write_ground_truth_csv(out_dir / "ground_truth.csv", sim.truth);
    io::write_binary_tiff(out_dir / "support.tif", sim.truth.support);
    io::write_png_preview(out_dir / "support.png", sim.truth.support.pixels().cast<double>());
    write_echo(config, out_dir / "config.txt");
}

TrainResult cmd_train(const RunConfig& config, const fs::path& stack_path, const fs::path& checkpoint,
                      std::ostream* progress) {
    config.validate();
    require_file(stack_path, "stack");
    require_output(checkpoint);

    const FrameStack stack = load_stack(config, stack_path);
    const FrameStack normalized = normalize_stack(stack, config.normalize);
    const ModelParams initial = init_params(config.resolved_model());
    TrainResult result = train(normalized, config.resolved_train(), initial, [&](const EpochRecord& e) {
        if (!progress) return;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "epoch %d  mean_loss %.6g  %.1fs\n", e.epoch, e.mean_loss, e.seconds);
        *progress << buf << std::flush;
    });

    io::save_checkpoint(checkpoint, result.params);
    fs::path log = checkpoint;
    log += ".log";
    io::write_training_log(log, result.history);
    write_echo(config, config_echo_path(checkpoint));
    return result;
}

HighResImage cmd_infer(const RunConfig& config, const fs::path& stack_path, const fs::path& checkpoint,
                       const fs::path& out_image) {
    config.validate();
    require_file(stack_path, "stack");
    require_file(checkpoint, "checkpoint");
    require_output(out_image);

    const ModelParams params = io::load_checkpoint(checkpoint);
    const FrameStack stack = load_stack(config, stack_path);
    const int n_hr = stack.frame_size() * params.config.scale_factor;
    if (n_hr <= params.config.kernel_size / 2) {
        std::ostringstream msg;
        msg << "shape mismatch: " << stack.frame_size() << "x" << stack.frame_size() << " frames at scale "
            << params.config.scale_factor << " are too small for " << params.config.kernel_size << "x"
            << params.config.kernel_size << " kernels";
        throw std::invalid_argument(msg.str());
    }
    const HighResImage image = infer(normalize_stack(stack, config.normalize), params, config.infer_k_max);

    io::write_float_tiff(out_image, image.pixels());
    io::write_png_preview(png_beside(out_image), image.pixels());
    write_echo(config, config_echo_path(out_image));
    return image;
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& gt_path, const fs::path& image_path,
                        const fs::path& out_report) {
    config.validate();
    require_file(gt_path, "ground truth");
    require_file(image_path, "image");
    require_output(out_report);

    const BinaryImage gt = io::read_binary_tiff(gt_path);
    const ImageD image = io::read_tiff(image_path).pages.front();
    if (gt.rows() != image.rows() || gt.cols() != image.cols()) {
        std::ostringstream msg;
        msg << "shape mismatch: ground truth is " << gt.rows() << "x" << gt.cols() << ", image is " << image.rows()
            << "x" << image.cols();
        throw std::invalid_argument(msg.str());
    }
    const EvalReport report = best_snr_over_thresholds(gt, image, config.eval_thresholds);

    io::write_eval_report(out_report, report, config.eval_thresholds);
    fs::path curve = out_report.parent_path() / (out_report.stem().string() + "_curve.csv");
    io::write_threshold_curve_csv(curve, report);
    write_echo(config, config_echo_path(out_report));
    return report;
}

HighResImage cmd_ista(const RunConfig& config, const fs::path& stack_path, const fs::path& out_image) {
    config.validate();
    require_file(stack_path, "stack");
    require_output(out_image);

    FrameStack stack = load_stack(config, stack_path);
    if (config.ista_to_photons) stack = counts_to_signal_photons(stack, config.camera);
    const int s = config.geometry.scale_factor;
    const MeasurementOperator op = build_measurement_operator(config.psf, stack.frame_size(), s);
    const HighResImage image = ista_reconstruct_stack(stack, op, config.ista, s);

    io::write_float_tiff(out_image, image.pixels());
    io::write_png_preview(png_beside(out_image), image.pixels());
    write_echo(config, config_echo_path(out_image));
    return image;
}

std::vector<GradCheckOutcome> cmd_gradcheck(const RunConfig& config, std::ostream& out, const fs::path& out_report) {
    if (!out_report.empty()) require_output(out_report);
    const std::vector<GradCheckOutcome> outcomes = run_grad_check_suite(config.seed);
    std::ostringstream lines;
    for (const GradCheckOutcome& o : outcomes) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-30s %-9s %-5s trials=%-3d worst_rel_err=%.3e tol=%.0e kink_skipped=%ld/%ld %s\n",
                      o.name.c_str(), o.linear ? "linear" : "nonlinear", o.spot_check ? "spot" : "full", o.trials, o.worst_error, o.tolerance,
                      static_cast<long>(o.skipped), static_cast<long>(o.checked + o.skipped),
                      o.passed ? "PASS" : "FAIL");
        lines << buf;
    }
    out << lines.str() << std::flush;
    if (!out_report.empty()) {
        io::write_text(out_report, lines.str());
        write_echo(config, config_echo_path(out_report));
    }
    return outcomes;
}

}  // namespace selfstorm
