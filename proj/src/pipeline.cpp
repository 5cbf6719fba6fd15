#include "selfstorm/pipeline.hpp"

#include "selfstorm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace selfstorm {

void NormalizeConfig::validate() const {
    if (!(background_percentile > 50.0 && background_percentile < 100.0))
        throw std::invalid_argument("background percentile must lie in (50, 100)");
    if (min_component_pixels < 1) throw std::invalid_argument("min component size must be >= 1");
}

namespace {

struct Box {
    int r0, c0, r1, c1;  // inclusive
};

struct Peak {
    double value;
    int row, col;
};

// 8-connected component labels of the mask (0 = background).
Eigen::MatrixXi label_components(const Mask& mask, std::vector<Box>& boxes, std::vector<int>& sizes) {
    const int rows = static_cast<int>(mask.rows());
    const int cols = static_cast<int>(mask.cols());
    Eigen::MatrixXi labels = Eigen::MatrixXi::Zero(rows, cols);
    std::vector<std::pair<int, int>> stack;
    int next = 0;
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) {
            if (!mask(r, c) || labels(r, c)) continue;
            ++next;
            Box box{r, c, r, c};
            int size = 0;
            labels(r, c) = next;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                ++size;
                box.r0 = std::min(box.r0, pr);
                box.r1 = std::max(box.r1, pr);
                box.c0 = std::min(box.c0, pc);
                box.c1 = std::max(box.c1, pc);
                for (int dc = -1; dc <= 1; ++dc) {
                    for (int dr = -1; dr <= 1; ++dr) {
                        const int nr = pr + dr;
                        const int nc = pc + dc;
                        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                        if (mask(nr, nc) && !labels(nr, nc)) {
                            labels(nr, nc) = next;
                            stack.push_back({nr, nc});
                        }
                    }
                }
            }
            boxes.push_back(box);
            sizes.push_back(size);
        }
    }
    return labels;
}

bool is_strict_local_max(const ImageD& img, int r, int c) {
    const double v = img(r, c);
    for (int dc = -1; dc <= 1; ++dc) {
        for (int dr = -1; dr <= 1; ++dr) {
            if (!dr && !dc) continue;
            const int nr = r + dr;
            const int nc = c + dc;
            if (nr < 0 || nr >= img.rows() || nc < 0 || nc >= img.cols()) continue;
            if (!(v > img(nr, nc))) return false;
        }
    }
    return true;
}

}  // namespace

Frame normalize_frame(const Frame& frame, const NormalizeConfig& config) {
    config.validate();
    const ImageD& img = frame.pixels();
    const int rows = static_cast<int>(img.rows());
    const int cols = static_cast<int>(img.cols());

    std::vector<double> scratch(img.data(), img.data() + img.size());
    const double cut = percentile_inplace(scratch, config.background_percentile);
    const Mask mask = (img.array() >= cut).cast<std::uint8_t>();

    std::vector<Box> boxes;
    std::vector<int> sizes;
    const Eigen::MatrixXi labels = label_components(mask, boxes, sizes);

    std::vector<Peak> peaks;
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) {
            if (mask(r, c) && is_strict_local_max(img, r, c)) peaks.push_back({img(r, c), r, c});
        }
    }
    // Descending intensity; position breaks ties so the order is total.
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.col != b.col) return a.col < b.col;
        return a.row < b.row;
    });

    ImageD out = ImageD::Zero(rows, cols);
    Mask claimed = Mask::Zero(rows, cols);
    for (const Peak& p : peaks) {
        const int label = labels(p.row, p.col);
        const auto idx = static_cast<std::size_t>(label - 1);
        if (sizes[idx] < config.min_component_pixels) continue;
        const Box& b = boxes[idx];
        const auto block = img.block(b.r0, b.c0, b.r1 - b.r0 + 1, b.c1 - b.c0 + 1);
        const double mean = block.mean();
        const double var = (block.array() - mean).square().mean();
        const double sd = std::sqrt(var);
        for (int c = b.c0; c <= b.c1; ++c) {
            for (int r = b.r0; r <= b.r1; ++r) {
                if (claimed(r, c)) continue;
                claimed(r, c) = 1;
                const double centred = img(r, c) - mean;
                out(r, c) = sd < 1e-12 ? centred : centred / sd;
            }
        }
    }
    return Frame(std::move(out), frame.pixel_size_nm());
}

FrameStack normalize_stack(const FrameStack& stack, const NormalizeConfig& config) {
    config.validate();
    std::vector<Frame> out(stack.count());
    const auto n = static_cast<std::ptrdiff_t>(stack.count());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = normalize_frame(stack[static_cast<std::size_t>(i)], config);
    return FrameStack(std::move(out), stack.metadata() + " normalized");
}

HighResImage infer(const FrameStack& stack_normalized, const ModelParams& params, int k_max_infer) {
    if (k_max_infer < 0) throw std::invalid_argument("k_max_infer must be >= 0");
    const int s = params.config.scale_factor;
    const int n_hr = stack_normalized.frame_size() * s;
    if (n_hr < params.config.kernel_size / 2 + 1)
        throw std::invalid_argument("stack frame size is incompatible with the checkpoint");

    std::vector<ImageD> per_frame(stack_normalized.count());
    const auto n = static_cast<std::ptrdiff_t>(stack_normalized.count());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const ImageD y_up = upsample_bilinear(stack_normalized[static_cast<std::size_t>(i)].pixels(), s);
        per_frame[static_cast<std::size_t>(i)] = encode(y_up, params, k_max_infer);
    }
    ImageD sum = ImageD::Zero(n_hr, n_hr);
    for (const ImageD& x : per_frame) sum += x;
    return HighResImage(std::move(sum), s);
}

HighResImage upsampled_sum(const FrameStack& stack, int scale_factor) {
    ImageD sum = ImageD::Zero(stack.frame_size(), stack.frame_size());
    for (const Frame& f : stack.frames()) sum += f.pixels();
    return HighResImage(upsample_bilinear(sum, scale_factor).cwiseMax(0.0), scale_factor);
}

FrameStack counts_to_signal_photons(const FrameStack& stack, const CameraModel& camera) {
    camera.validate();
    std::vector<Frame> out;
    out.reserve(stack.count());
    for (const Frame& f : stack.frames()) {
        ImageD photons = ((f.pixels().array() - camera.baseline) / camera.gain).matrix();
        std::vector<double> scratch(photons.data(), photons.data() + photons.size());
        const double median = percentile_inplace(scratch, 50.0);
        out.emplace_back((photons.array() - median).cwiseMax(0.0).matrix(), f.pixel_size_nm());
    }
    return FrameStack(std::move(out), stack.metadata() + " photons");
}

BinaryImage binarize(const ImageD& image, double threshold) {
    return BinaryImage((image.array() > threshold).cast<std::uint8_t>());
}

double snr(const BinaryImage& gt, const BinaryImage& pred) {
    if (gt.rows() != pred.rows() || gt.cols() != pred.cols()) throw std::invalid_argument("snr: shape mismatch");
    const Eigen::Index energy = gt.count();
    if (energy == 0) throw std::invalid_argument("undefined SNR: ground truth is empty");
    const Eigen::Index errors = (gt.pixels().array() != pred.pixels().array()).cast<Eigen::Index>().sum();
    if (errors == 0) return kInfiniteSnr;
    return 10.0 * std::log10(static_cast<double>(energy) / static_cast<double>(errors));
}

EvalReport best_snr_over_thresholds(const BinaryImage& gt, const ImageD& image, int n_thresholds) {
    if (n_thresholds < 2) throw std::invalid_argument("need at least 2 thresholds");
    if (gt.rows() != image.rows() || gt.cols() != image.cols())
        throw std::invalid_argument("evaluation: image and ground truth shapes differ");
    const double lo = image.minCoeff();
    const double hi = image.maxCoeff();
    const double step = (hi - lo) / n_thresholds;
    EvalReport report;
    report.snr_db = -kInfiniteSnr;
    for (int j = 0; j < n_thresholds; ++j) {
        const double t = lo + j * step;
        const double s = snr(gt, binarize(image, t));
        report.threshold_curve.emplace_back(t, s);
        if (s > report.snr_db) {
            report.snr_db = s;
            report.best_threshold = t;
        }
    }
    return report;
}

}  // namespace selfstorm
