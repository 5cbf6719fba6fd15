#pragma once

// Synthetic SMLM acquisitions: Gaussian PSF, strided measurement operator,
// Poisson + Gaussian read-out camera, and density augmentation by binning.

#include "selfstorm/core.hpp"
#include "selfstorm/linear_operator.hpp"

#include <string>
#include <vector>

namespace selfstorm {

/// Isotropic Gaussian PSF. fwhm_px is in low-resolution (camera) pixels,
/// kernel_size in high-resolution pixels.
struct PsfModel {
    double fwhm_px = 2.35;
    int kernel_size = 33;

    double sigma_lowres() const;
    double sigma_highres(int scale_factor) const { return sigma_lowres() * scale_factor; }
};

struct CameraModel {
    double baseline = 100.0;          // A/D counts
    double gain = 1.0;                // counts per photo-electron
    double read_noise_sigma = 10.0;   // counts
    double background_photons = 10.0; // per low-res pixel per frame

    void validate() const;
};

struct Emitter {
    double x_nm = 0;  // along columns
    double y_nm = 0;  // along rows
    double photons = 0;
};

enum class SceneStructure { random, curves };

std::string to_string(SceneStructure s);
SceneStructure scene_structure_from_string(const std::string& s);

struct EmitterScene {
    std::vector<Emitter> emitters;
    SceneStructure structure = SceneStructure::curves;
    double activation_prob = 0.05;
    int frame_count = 360;
};

/// Geometry shared by the simulator, the operator and the ground truth.
struct Geometry {
    int frame_size = 64;  // M
    int scale_factor = 4;
    double pixel_size_nm = 100.0;

    int highres_size() const { return frame_size * scale_factor; }
    double highres_pixel_nm() const { return pixel_size_nm / scale_factor; }
    double fov_nm() const { return frame_size * pixel_size_nm; }
    void validate() const;
};

struct SceneConfig {
    SceneStructure structure = SceneStructure::curves;
    int emitter_count = 50;       // random scenes
    int curve_count = 4;          // curve scenes
    double curve_length_nm = 5000.0;
    double spacing_nm = 25.0;     // along-curve emitter spacing
    double curvature_sigma = 0.08; // heading random walk per step (radians)
    double curve_width_nm = 0.0;  // emitters spread uniformly across this width
    double photons_min = 1500.0;
    double photons_max = 3000.0;
    double margin_nm = 400.0;     // keep emitters away from the border
    double activation_prob = 0.05;
    int frame_count = 360;
};

EmitterScene make_scene(const SceneConfig& config, const Geometry& geometry, Rng& rng);

/// Per-frame activations plus the aggregate high-res support.
struct GroundTruth {
    std::vector<std::vector<int>> active;  // emitter indices per frame
    std::vector<Emitter> emitters;
    BinaryImage support;                   // N x N
};

/// Normalised (sum 1) isotropic Gaussian, sigma = fwhm / (2 sqrt(2 ln 2)).
ImageD gaussian_psf_kernel(double fwhm_px, int kernel_size);

/// Separable 1-D factor of gaussian_psf_kernel; the 2-D kernel is its outer product.
Eigen::VectorXd gaussian_profile(double sigma, int kernel_size);

/// Measurement operator: PSF correlation on the N x N grid followed by stride-s
/// sampling (output pixel i reads high-res pixel i*s), i.e. the
/// conv2d_forward(x, kernel(), ConvSpec::same(k, s)) map. The kernel is the
/// normalised PSF times s^2, so a point source's counts sum to its photon number.
class MeasurementOperator final : public LinearOperator {
public:
    MeasurementOperator(const PsfModel& psf, int frame_size, int scale_factor);
    /// Arbitrary separable profile (used to build a delta operator in tests).
    MeasurementOperator(Eigen::VectorXd profile, double gain, int frame_size, int scale_factor);

    ImageD forward(const ImageD& x) const override;
    ImageD adjoint(const ImageD& y) const override;

    Eigen::Index input_rows() const override { return highres_; }
    Eigen::Index input_cols() const override { return highres_; }
    Eigen::Index output_rows() const override { return frame_size_; }
    Eigen::Index output_cols() const override { return frame_size_; }

    /// 2-D correlation kernel equivalent to forward().
    ImageD kernel() const;
    int kernel_size() const { return static_cast<int>(profile_.size()); }
    int scale_factor() const { return scale_; }
    int frame_size() const { return frame_size_; }

private:
    Eigen::VectorXd profile_;
    double gain_;
    int frame_size_, scale_, highres_;
    Eigen::MatrixXd sampling_;  // M x N banded matrix: sampling_(i, u) = profile(u - i*s + pad)
};

MeasurementOperator build_measurement_operator(const PsfModel& psf, int frame_size, int scale_factor);

/// Emitters split onto the 4 nearest high-res nodes with bilinear weights.
ImageD splat_emitters(const std::vector<Emitter>& emitters, std::span<const int> active, const Geometry& geometry);

Frame render_frame(const EmitterScene& scene, std::span<const int> active, const MeasurementOperator& op,
                   const CameraModel& camera, const Geometry& geometry, Rng& rng, bool noise_on);

struct Simulation {
    FrameStack stack;
    GroundTruth truth;
};

/// Frame f draws activations and noise from rng.child(f).
Simulation simulate_sequence(const EmitterScene& scene, const PsfModel& psf, const CameraModel& camera,
                             const Geometry& geometry, const Rng& rng, bool noise_on = true);

/// Sum of every `factor` consecutive frames; a trailing remainder is dropped.
FrameStack bin_frames(const FrameStack& stack, int factor);

/// Nearest high-res node of an emitter position (row, col).
std::pair<int, int> snap_to_grid(const Emitter& e, const Geometry& geometry);

}  // namespace selfstorm
