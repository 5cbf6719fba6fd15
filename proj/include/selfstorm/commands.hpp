#pragma once

// The command-line workflows as library calls. Each command writes an echo of
// the resolved configuration next to its outputs. Validation problems throw
// ConfigError / std::invalid_argument; I/O and numerical failures throw
// std::runtime_error subclasses.

#include "selfstorm/grad_check.hpp"
#include "selfstorm/pipeline.hpp"
#include "selfstorm/run_config.hpp"
#include "selfstorm/simulator.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace selfstorm {

namespace fs = std::filesystem;

/// Scene from rng.child(0), frames from rng.child(1), rng = Rng(config.seed).
Simulation simulate_from_config(const RunConfig& config);

/// out_dir/{stack.tif|stack.raw, ground_truth.csv, support.tif, support.png, config.txt}
void cmd_simulate(const RunConfig& config, const fs::path& out_dir);

/// Normalizes, trains from init_params and writes the checkpoint plus
/// <checkpoint>.log. Progress lines go to `progress` when given.
TrainResult cmd_train(const RunConfig& config, const fs::path& stack_path, const fs::path& checkpoint,
                      std::ostream* progress = nullptr);

/// Float TIFF at out_image plus a PNG preview with the extension replaced.
HighResImage cmd_infer(const RunConfig& config, const fs::path& stack_path, const fs::path& checkpoint,
                       const fs::path& out_image);

/// Report at out_report plus <stem>_curve.csv beside it.
EvalReport cmd_evaluate(const RunConfig& config, const fs::path& gt_path, const fs::path& image_path,
                        const fs::path& out_report);

HighResImage cmd_ista(const RunConfig& config, const fs::path& stack_path, const fs::path& out_image);

/// Prints one line per registered op; writes the same lines to out_report when non-empty.
std::vector<GradCheckOutcome> cmd_gradcheck(const RunConfig& config, std::ostream& out, const fs::path& out_report = {});

/// Where a command writes its configuration echo for a given output file.
fs::path config_echo_path(const fs::path& output);

}  // namespace selfstorm
