#pragma once

// File formats: baseline TIFF (uncompressed strips), PNG previews, raw
// float64 stacks, ground-truth CSV, model checkpoints and evaluation reports.

#include "selfstorm/core.hpp"
#include "selfstorm/model.hpp"
#include "selfstorm/pipeline.hpp"
#include "selfstorm/simulator.hpp"
#include "selfstorm/train.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfstorm::io {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SampleType { u8, u16, f32 };

struct TiffImage {
    std::vector<ImageD> pages;
    std::string description;  // ImageDescription of the first page, if any
};

/// Multi-page, little-endian, one strip per page. Integer types are rounded
/// and clamped to their range.
void write_tiff(const fs::path& path, const std::vector<ImageD>& pages, SampleType type,
                const std::string& description = {});

/// Reads uncompressed greyscale TIFF (either byte order; 8/16/32-bit unsigned,
/// 32/64-bit float). Errors name the offending page (1-based).
TiffImage read_tiff(const fs::path& path);

void write_stack_tiff(const fs::path& path, const FrameStack& stack);
FrameStack read_stack_tiff(const fs::path& path, double pixel_size_nm = 100.0);

/// Lossless float64 little-endian frames (row-major) plus a key=value header
/// at path + ".hdr".
void write_stack_raw(const fs::path& path, const FrameStack& stack);
FrameStack read_stack_raw(const fs::path& path);

/// Frames from .tif/.tiff or .raw by extension.
FrameStack read_stack(const fs::path& path, double pixel_size_nm = 100.0);

void write_binary_tiff(const fs::path& path, const BinaryImage& image);
BinaryImage read_binary_tiff(const fs::path& path);

void write_float_tiff(const fs::path& path, const ImageD& image);

/// 8-bit greyscale preview: linear map of [min, max] onto [0, 255]; a constant image maps to 0.
void write_png_preview(const fs::path& path, const ImageD& image);

/// frame_id,x_nm,y_nm,photons; one row per activation, frames 0-based.
void write_ground_truth_csv(const fs::path& path, const GroundTruth& truth);

/// Text container: header, config echo, named tensors and scalars as hex
/// floats so save/load is bit-exact.
void save_checkpoint(const fs::path& path, const ModelParams& params);
ModelParams load_checkpoint(const fs::path& path);

void write_eval_report(const fs::path& path, const EvalReport& report, int n_thresholds);
void write_threshold_curve_csv(const fs::path& path, const EvalReport& report);

void write_training_log(const fs::path& path, const std::vector<EpochRecord>& history);

std::string format_hex(double v);
double parse_double(const std::string& s);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace selfstorm::io
