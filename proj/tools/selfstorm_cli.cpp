#include "selfstorm/commands.hpp"
#include "selfstorm/io.hpp"
#include "selfstorm/run_config.hpp"
#include "selfstorm/train.hpp"

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
    std::vector<std::string> overrides;
    bool print_config = false;
};

selfstorm::RunConfig resolve_config(const CommonFlags& flags) {
    selfstorm::RunConfig config;
    if (!flags.config_path.empty()) config = selfstorm::load_run_config(flags.config_path);
    for (const std::string& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw selfstorm::ConfigError("--set expects section.key=value, got '" + kv + "'");
        selfstorm::set_run_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed) config.seed = *flags.seed;
    if (flags.threads) config.threads = *flags.threads;
    config.validate();
#ifdef _OPENMP
    if (config.threads > 0) omp_set_num_threads(config.threads);
#endif
    return config;
}

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& out_help) {
    cmd->add_option("--config", flags.config_path, "Run configuration file (key = value sections)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "Master seed (overrides [run] seed)");
    cmd->add_option("--threads", flags.threads, "Cap on worker threads")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", flags.out, out_help);
    cmd->add_option("--set", flags.overrides, "Override a config value: section.key=value (repeatable)");
    cmd->add_flag("--print-config", flags.print_config, "Print the resolved configuration and exit");
}

std::string format_snr(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised deep unrolled reconstruction for single-molecule localization microscopy"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string stack_path, checkpoint_path, gt_path, image_path;
    std::optional<int> thresholds;

    auto* simulate = app.add_subcommand("simulate", "Simulate a blinking-emitter frame stack with ground truth");
    add_common(simulate, flags, "Output directory");

    auto* train = app.add_subcommand("train", "Self-supervised training on a frame stack");
    add_common(train, flags, "Checkpoint path");
    train->add_option("--stack", stack_path, "Input stack (.tif or .raw)")->required();

    auto* infer = app.add_subcommand("infer", "Reconstruct a super-resolved image with a trained checkpoint");
    add_common(infer, flags, "Output image (.tif); a .png preview is written beside it");
    infer->add_option("--stack", stack_path, "Input stack (.tif or .raw)")->required();
    infer->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Best-threshold SNR of an image against a binary ground truth");
    add_common(evaluate, flags, "Report path; the threshold curve goes to <stem>_curve.csv");
    evaluate->add_option("--gt", gt_path, "Binary ground-truth TIFF")->required();
    evaluate->add_option("--image", image_path, "Reconstruction TIFF")->required();
    evaluate->add_option("--thresholds", thresholds, "Number of thresholds (overrides [eval] n_thresholds)");

    auto* ista = app.add_subcommand("ista", "Frame-wise ISTA reconstruction summed over the stack");
    add_common(ista, flags, "Output image (.tif); a .png preview is written beside it");
    ista->add_option("--stack", stack_path, "Input stack (.tif or .raw)")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every reverse pass");
    add_common(gradcheck, flags, "Optional report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        selfstorm::RunConfig config = resolve_config(flags);
        if (thresholds) {
            config.eval_thresholds = *thresholds;
            config.validate();
        }
        if (flags.print_config) {
            std::cout << selfstorm::echo_run_config(config);
            return kExitOk;
        }

        if (simulate->parsed()) {
            selfstorm::cmd_simulate(config, flags.out.empty() ? "." : flags.out);
            std::cout << "wrote simulation to " << (flags.out.empty() ? "." : flags.out) << "\n";
        } else if (train->parsed()) {
            const auto result = selfstorm::cmd_train(config, stack_path, flags.out, &std::cout);
            std::cout << "wrote " << flags.out << " after " << result.history.size() << " epochs\n";
        } else if (infer->parsed()) {
            selfstorm::cmd_infer(config, stack_path, checkpoint_path, flags.out);
            std::cout << "wrote " << flags.out << "\n";
        } else if (evaluate->parsed()) {
            const auto report = selfstorm::cmd_evaluate(config, gt_path, image_path, flags.out);
            std::cout << "snr_db " << format_snr(report.snr_db) << "  best_threshold " << report.best_threshold
                      << "\n";
        } else if (ista->parsed()) {
            selfstorm::cmd_ista(config, stack_path, flags.out);
            std::cout << "wrote " << flags.out << "\n";
        } else if (gradcheck->parsed()) {
            const auto outcomes = selfstorm::cmd_gradcheck(config, std::cout, flags.out);
            for (const auto& o : outcomes)
                if (!o.passed) return kExitRuntime;
        }
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
