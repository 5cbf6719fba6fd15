#pragma once

// Plain-text run configuration: "[section]" headers followed by key = value
// lines, '#' comments. Unknown sections or keys are rejected.

#include "selfstorm/classical.hpp"
#include "selfstorm/model.hpp"
#include "selfstorm/pipeline.hpp"
#include "selfstorm/simulator.hpp"
#include "selfstorm/train.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfstorm {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class StackFormat { tiff, raw };

struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 0;  // 0: runtime default

    Geometry geometry;
    PsfModel psf;
    CameraModel camera;
    SceneConfig scene;
    bool noise = true;

    NormalizeConfig normalize;
    ModelConfig model;  // scale_factor is taken from geometry
    TrainConfig train;  // seed is taken from the run seed
    int infer_k_max = 2;

    IstaConfig ista;
    bool ista_to_photons = true;  // subtract baseline/background before ISTA

    int eval_thresholds = 256;
    StackFormat output_format = StackFormat::tiff;

    /// Model and training configs with the shared fields filled in.
    ModelConfig resolved_model() const;
    TrainConfig resolved_train() const;

    /// Throws ConfigError naming the first offending field.
    void validate() const;
};

/// Parses text; `source` prefixes error messages (usually the file path).
RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

/// Sets one "section.key" to a value, with the same checks as the parser.
void set_run_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value);

/// Every field, defaults included; parse_run_config(echo(c)) == c.
std::string echo_run_config(const RunConfig& config);

std::vector<std::string> run_config_keys();

}  // namespace selfstorm
