#include "selfstorm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace selfstorm {

namespace {
const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);
}

double PsfModel::sigma_lowres() const { return fwhm_px / kFwhmPerSigma; }

void CameraModel::validate() const {
    if (!(baseline >= 0.0)) throw std::invalid_argument("camera baseline must be >= 0");
    if (!(gain > 0.0)) throw std::invalid_argument("camera gain must be > 0");
    if (!(read_noise_sigma >= 0.0)) throw std::invalid_argument("read noise must be >= 0");
    if (!(background_photons >= 0.0)) throw std::invalid_argument("background must be >= 0");
}

void Geometry::validate() const {
    if (frame_size < kMinFrameSize) throw std::invalid_argument("frame size must be >= 8");
    if (scale_factor < 1) throw std::invalid_argument("scale factor must be >= 1");
    if (!(pixel_size_nm > 0.0)) throw std::invalid_argument("pixel size must be > 0");
}

std::string to_string(SceneStructure s) { return s == SceneStructure::random ? "random" : "curves"; }

SceneStructure scene_structure_from_string(const std::string& s) {
    if (s == "random") return SceneStructure::random;
    if (s == "curves") return SceneStructure::curves;
    throw std::invalid_argument("unknown scene structure '" + s + "'");
}

EmitterScene make_scene(const SceneConfig& config, const Geometry& geometry, Rng& rng) {
    geometry.validate();
    if (!(config.activation_prob > 0.0 && config.activation_prob <= 1.0))
        throw std::invalid_argument("activation probability must lie in (0, 1]");
    if (config.frame_count < 1) throw std::invalid_argument("frame count must be >= 1");
    if (!(config.photons_min > 0.0) || config.photons_max < config.photons_min)
        throw std::invalid_argument("invalid photon range");

    // Keep positions on [0, N-1] in high-res units.
    const double hi = (geometry.highres_size() - 1) * geometry.highres_pixel_nm();
    const double lo_m = std::min(config.margin_nm, 0.45 * hi);
    const double hi_m = hi - lo_m;

    EmitterScene scene;
    scene.structure = config.structure;
    scene.activation_prob = config.activation_prob;
    scene.frame_count = config.frame_count;

    auto photons = [&] { return rng.uniform(config.photons_min, config.photons_max); };

    if (config.structure == SceneStructure::random) {
        if (config.emitter_count < 1) throw std::invalid_argument("emitter count must be >= 1");
        for (int k = 0; k < config.emitter_count; ++k) {
            const double x = rng.uniform(lo_m, hi_m);
            const double y = rng.uniform(lo_m, hi_m);
            scene.emitters.push_back({x, y, photons()});
        }
    } else {
        if (config.curve_count < 1 || !(config.spacing_nm > 0.0) || !(config.curve_width_nm >= 0.0))
            throw std::invalid_argument("curve scene needs >= 1 curve and positive spacing");
        const int steps = std::max(1, static_cast<int>(config.curve_length_nm / config.spacing_nm));
        for (int c = 0; c < config.curve_count; ++c) {
            double x = rng.uniform(lo_m, hi_m);
            double y = rng.uniform(lo_m, hi_m);
            double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (int s = 0; s < steps; ++s) {
                if (config.curve_width_nm > 0.0) {
                    // Uniform offset across the filament, perpendicular to the heading.
                    const double d = rng.uniform(-0.5, 0.5) * config.curve_width_nm;
                    const double ex = std::clamp(x - d * std::sin(heading), lo_m, hi_m);
                    const double ey = std::clamp(y + d * std::cos(heading), lo_m, hi_m);
                    scene.emitters.push_back({ex, ey, photons()});
                } else {
                    scene.emitters.push_back({x, y, photons()});
                }
                heading += rng.normal(0.0, config.curvature_sigma);
                double nx = x + config.spacing_nm * std::cos(heading);
                double ny = y + config.spacing_nm * std::sin(heading);
                // Reflect off the margin box.
                if (nx < lo_m || nx > hi_m) {
                    heading = std::numbers::pi - heading;
                    nx = std::clamp(x + config.spacing_nm * std::cos(heading), lo_m, hi_m);
                }
                if (ny < lo_m || ny > hi_m) {
                    heading = -heading;
                    ny = std::clamp(y + config.spacing_nm * std::sin(heading), lo_m, hi_m);
                }
                x = nx;
                y = ny;
            }
        }
    }
    return scene;
}

Eigen::VectorXd gaussian_profile(double sigma, int kernel_size) {
    if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("PSF kernel size must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("PSF sigma must be positive");
    const int half = kernel_size / 2;
    Eigen::VectorXd g(kernel_size);
    for (int i = 0; i < kernel_size; ++i) {
        const double d = i - half;
        g(i) = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    return g / g.sum();
}

ImageD gaussian_psf_kernel(double fwhm_px, int kernel_size) {
    if (kernel_size < 3 || kernel_size % 2 == 0) throw std::invalid_argument("PSF kernel size must be odd and >= 3");
    if (!(fwhm_px > 0.0)) throw std::invalid_argument("PSF FWHM must be positive");
    const Eigen::VectorXd g = gaussian_profile(fwhm_px / kFwhmPerSigma, kernel_size);
    ImageD k = g * g.transpose();
    return k / k.sum();
}

MeasurementOperator::MeasurementOperator(const PsfModel& psf, int frame_size, int scale_factor)
    : MeasurementOperator(gaussian_profile(psf.sigma_highres(scale_factor), psf.kernel_size),
                          static_cast<double>(scale_factor) * scale_factor, frame_size, scale_factor) {}

MeasurementOperator::MeasurementOperator(Eigen::VectorXd profile, double gain, int frame_size, int scale_factor)
    : profile_(std::move(profile)), gain_(gain), frame_size_(frame_size), scale_(scale_factor),
      highres_(frame_size * scale_factor) {
    if (scale_factor < 1) throw std::invalid_argument("scale factor must be a positive integer");
    if (profile_.size() % 2 == 0) throw std::invalid_argument("PSF kernel size must be odd");
    const int pad = static_cast<int>(profile_.size()) / 2;
    sampling_ = Eigen::MatrixXd::Zero(frame_size_, highres_);
    for (int i = 0; i < frame_size_; ++i) {
        for (int a = 0; a < profile_.size(); ++a) {
            const int u = i * scale_ + a - pad;
            if (u >= 0 && u < highres_) sampling_(i, u) = profile_(a);
        }
    }
}

ImageD MeasurementOperator::forward(const ImageD& x) const {
    if (x.rows() != highres_ || x.cols() != highres_)
        throw std::invalid_argument("measurement operator: input must be N x N");
    return gain_ * (sampling_ * x * sampling_.transpose());
}

ImageD MeasurementOperator::adjoint(const ImageD& y) const {
    if (y.rows() != frame_size_ || y.cols() != frame_size_)
        throw std::invalid_argument("measurement operator: adjoint input must be M x M");
    return gain_ * (sampling_.transpose() * y * sampling_);
}

ImageD MeasurementOperator::kernel() const { return gain_ * (profile_ * profile_.transpose()); }

MeasurementOperator build_measurement_operator(const PsfModel& psf, int frame_size, int scale_factor) {
    return MeasurementOperator(psf, frame_size, scale_factor);
}

std::pair<int, int> snap_to_grid(const Emitter& e, const Geometry& geometry) {
    const double px = geometry.highres_pixel_nm();
    const int n = geometry.highres_size();
    const int row = std::clamp(static_cast<int>(std::lround(e.y_nm / px)), 0, n - 1);
    const int col = std::clamp(static_cast<int>(std::lround(e.x_nm / px)), 0, n - 1);
    return {row, col};
}

ImageD splat_emitters(const std::vector<Emitter>& emitters, std::span<const int> active, const Geometry& geometry) {
    const int n = geometry.highres_size();
    const double px = geometry.highres_pixel_nm();
    ImageD x = ImageD::Zero(n, n);
    for (int idx : active) {
        const Emitter& e = emitters.at(static_cast<std::size_t>(idx));
        const double r = e.y_nm / px;
        const double c = e.x_nm / px;
        const int r0 = static_cast<int>(std::floor(r));
        const int c0 = static_cast<int>(std::floor(c));
        const double tr = r - r0;
        const double tc = c - c0;
        const double w[2][2] = {{(1 - tr) * (1 - tc), (1 - tr) * tc}, {tr * (1 - tc), tr * tc}};
        for (int dr = 0; dr < 2; ++dr) {
            for (int dc = 0; dc < 2; ++dc) {
                const int rr = r0 + dr;
                const int cc = c0 + dc;
                if (rr >= 0 && rr < n && cc >= 0 && cc < n) x(rr, cc) += e.photons * w[dr][dc];
            }
        }
    }
    return x;
}

Frame render_frame(const EmitterScene& scene, std::span<const int> active, const MeasurementOperator& op,
                   const CameraModel& camera, const Geometry& geometry, Rng& rng, bool noise_on) {
    camera.validate();
    if (op.frame_size() != geometry.frame_size || op.scale_factor() != geometry.scale_factor)
        throw std::invalid_argument("render_frame: operator geometry mismatch");
    const ImageD x = splat_emitters(scene.emitters, active, geometry);
    const ImageD photons = (op.forward(x).array() + camera.background_photons).matrix();

    ImageD counts(photons.rows(), photons.cols());
    for (Eigen::Index j = 0; j < photons.cols(); ++j) {
        for (Eigen::Index i = 0; i < photons.rows(); ++i) {
            double v;
            if (noise_on) {
                v = static_cast<double>(rng.poisson(photons(i, j))) * camera.gain + camera.baseline +
                    rng.normal(0.0, camera.read_noise_sigma);
            } else {
                v = photons(i, j) * camera.gain + camera.baseline;
            }
            counts(i, j) = std::max(v, 0.0);
        }
    }
    return Frame(std::move(counts), geometry.pixel_size_nm);
}

Simulation simulate_sequence(const EmitterScene& scene, const PsfModel& psf, const CameraModel& camera,
                             const Geometry& geometry, const Rng& rng, bool noise_on) {
    geometry.validate();
    camera.validate();
    if (scene.frame_count < 1) throw std::invalid_argument("frame count must be >= 1");
    if (scene.emitters.empty()) throw std::invalid_argument("scene has no emitters");
    const MeasurementOperator op(psf, geometry.frame_size, geometry.scale_factor);

    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(scene.frame_count));
    GroundTruth truth;
    truth.emitters = scene.emitters;
    const int n = geometry.highres_size();
    Mask support = Mask::Zero(n, n);

    for (int f = 0; f < scene.frame_count; ++f) {
        Rng frame_rng = rng.child(static_cast<std::uint64_t>(f));
        std::vector<int> active;
        for (int k = 0; k < static_cast<int>(scene.emitters.size()); ++k) {
            if (frame_rng.bernoulli(scene.activation_prob)) active.push_back(k);
        }
        for (int k : active) {
            const auto [r, c] = snap_to_grid(scene.emitters[static_cast<std::size_t>(k)], geometry);
            support(r, c) = 1;
        }
        frames.push_back(render_frame(scene, active, op, camera, geometry, frame_rng, noise_on));
        truth.active.push_back(std::move(active));
    }
    truth.support = BinaryImage(std::move(support));

    std::ostringstream meta;
    meta << "simulated structure=" << to_string(scene.structure) << " emitters=" << scene.emitters.size()
         << " frames=" << scene.frame_count << " fwhm_px=" << psf.fwhm_px << " scale=" << geometry.scale_factor;
    return {FrameStack(std::move(frames), meta.str()), std::move(truth)};
}

FrameStack bin_frames(const FrameStack& stack, int factor) {
    if (factor < 1) throw std::invalid_argument("binning factor must be >= 1");
    if (static_cast<std::size_t>(factor) > stack.count())
        throw std::invalid_argument("binning factor exceeds frame count");
    const std::size_t out_count = stack.count() / static_cast<std::size_t>(factor);
    std::vector<Frame> out;
    out.reserve(out_count);
    for (std::size_t j = 0; j < out_count; ++j) {
        ImageD sum = stack[j * factor].pixels();
        for (int k = 1; k < factor; ++k) sum += stack[j * factor + static_cast<std::size_t>(k)].pixels();
        out.emplace_back(std::move(sum), stack.pixel_size_nm());
    }
    return FrameStack(std::move(out), stack.metadata() + " binned=" + std::to_string(factor));
}

}  // namespace selfstorm
