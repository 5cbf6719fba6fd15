#include "selfstorm/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace selfstorm {

namespace {

double to_double(const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(d))
        throw ConfigError("expected a finite number, got '" + v + "'");
    return d;
}

template <typename Int>
Int to_int(const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

struct Field {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SS_FIELD(sec, name, member, conv) \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = conv(v); }, \
          [](const RunConfig& c) { return fmt(c.member); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        SS_FIELD("run", "seed", seed, to_int<std::uint64_t>),
        SS_FIELD("run", "threads", threads, to_int<int>),

        SS_FIELD("geometry", "frame_size", geometry.frame_size, to_int<int>),
        SS_FIELD("geometry", "scale_factor", geometry.scale_factor, to_int<int>),
        SS_FIELD("geometry", "pixel_size_nm", geometry.pixel_size_nm, to_double),

        SS_FIELD("psf", "fwhm_px", psf.fwhm_px, to_double),
        SS_FIELD("psf", "kernel_size", psf.kernel_size, to_int<int>),

        SS_FIELD("camera", "baseline", camera.baseline, to_double),
        SS_FIELD("camera", "gain", camera.gain, to_double),
        SS_FIELD("camera", "read_noise_sigma", camera.read_noise_sigma, to_double),
        SS_FIELD("camera", "background_photons", camera.background_photons, to_double),

        Field{"scene", "structure",
              [](RunConfig& c, const std::string& v) {
                  try {
                      c.scene.structure = scene_structure_from_string(v);
                  } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                  }
              },
              [](const RunConfig& c) { return to_string(c.scene.structure); }},
        SS_FIELD("scene", "emitter_count", scene.emitter_count, to_int<int>),
        SS_FIELD("scene", "curve_count", scene.curve_count, to_int<int>),
        SS_FIELD("scene", "curve_length_nm", scene.curve_length_nm, to_double),
        SS_FIELD("scene", "spacing_nm", scene.spacing_nm, to_double),
        SS_FIELD("scene", "curvature_sigma", scene.curvature_sigma, to_double),
        SS_FIELD("scene", "curve_width_nm", scene.curve_width_nm, to_double),
        SS_FIELD("scene", "photons_min", scene.photons_min, to_double),
        SS_FIELD("scene", "photons_max", scene.photons_max, to_double),
        SS_FIELD("scene", "margin_nm", scene.margin_nm, to_double),
        SS_FIELD("scene", "activation_prob", scene.activation_prob, to_double),
        SS_FIELD("scene", "frame_count", scene.frame_count, to_int<int>),
        SS_FIELD("scene", "noise", noise, to_bool),

        SS_FIELD("normalize", "background_percentile", normalize.background_percentile, to_double),
        SS_FIELD("normalize", "min_component_pixels", normalize.min_component_pixels, to_int<int>),

        SS_FIELD("model", "kernel_size", model.kernel_size, to_int<int>),
        SS_FIELD("model", "init_sigma", model.init_sigma, to_double),
        SS_FIELD("model", "alpha0", model.init_activation.alpha0, to_double),
        SS_FIELD("model", "beta0", model.init_activation.beta0, to_double),

        SS_FIELD("train", "learning_rate", train.learning_rate, to_double),
        SS_FIELD("train", "adam_beta1", train.adam_beta1, to_double),
        SS_FIELD("train", "adam_beta2", train.adam_beta2, to_double),
        SS_FIELD("train", "adam_eps", train.adam_eps, to_double),
        SS_FIELD("train", "epochs", train.epochs, to_int<int>),
        SS_FIELD("train", "batch_size", train.batch_size, to_int<int>),
        SS_FIELD("train", "k_max", train.k_max_train, to_int<int>),
        Field{"train", "plateau_stop",
              [](RunConfig& c, const std::string& v) {
                  if (v == "none") c.train.plateau_stop.reset();
                  else c.train.plateau_stop = to_double(v);
              },
              [](const RunConfig& c) { return c.train.plateau_stop ? fmt(*c.train.plateau_stop) : std::string("none"); }},

        SS_FIELD("infer", "k_max", infer_k_max, to_int<int>),

        SS_FIELD("ista", "lambda", ista.lambda, to_double),
        SS_FIELD("ista", "max_iters", ista.max_iters, to_int<int>),
        SS_FIELD("ista", "tolerance", ista.tolerance, to_double),
        Field{"ista", "step_rule",
              [](RunConfig& c, const std::string& v) {
                  if (v == "classical") c.ista.step_rule = StepRule::classical_1_over_L;
                  else if (v == "literal_2L") c.ista.step_rule = StepRule::literal_2L;
                  else throw ConfigError("step_rule must be 'classical' or 'literal_2L', got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.ista.step_rule == StepRule::classical_1_over_L ? "classical" : "literal_2L");
              }},
        SS_FIELD("ista", "to_photons", ista_to_photons, to_bool),

        SS_FIELD("eval", "n_thresholds", eval_thresholds, to_int<int>),

        Field{"output", "format",
              [](RunConfig& c, const std::string& v) {
                  if (v == "tiff") c.output_format = StackFormat::tiff;
                  else if (v == "raw") c.output_format = StackFormat::raw;
                  else throw ConfigError("output format must be 'tiff' or 'raw', got '" + v + "'");
              },
              [](const RunConfig& c) { return std::string(c.output_format == StackFormat::tiff ? "tiff" : "raw"); }},
    };
    return table;
}

#undef SS_FIELD

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const Field& f : fields())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

template <typename Fn>
void rethrow_as_config(const std::string& where, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace

ModelConfig RunConfig::resolved_model() const {
    ModelConfig m = model;
    m.scale_factor = geometry.scale_factor;
    return m;
}

TrainConfig RunConfig::resolved_train() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

void RunConfig::validate() const {
    rethrow_as_config("run", [&] {
        if (threads < 0) throw ConfigError("threads must be >= 0");
    });
    rethrow_as_config("geometry", [&] { geometry.validate(); });
    rethrow_as_config("psf", [&] {
        if (!(psf.fwhm_px > 0.0)) throw ConfigError("fwhm_px must be > 0");
        if (psf.kernel_size < 3 || psf.kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd and >= 3");
    });
    rethrow_as_config("camera", [&] { camera.validate(); });
    rethrow_as_config("scene", [&] {
        if (scene.frame_count < 1) throw ConfigError("frame_count must be >= 1");
        if (!(scene.activation_prob > 0.0 && scene.activation_prob <= 1.0))
            throw ConfigError("activation_prob must lie in (0, 1]");
        if (!(scene.photons_min > 0.0 && scene.photons_max >= scene.photons_min))
            throw ConfigError("need 0 < photons_min <= photons_max");
        if (scene.emitter_count < 1) throw ConfigError("emitter_count must be >= 1");
        if (scene.curve_count < 1) throw ConfigError("curve_count must be >= 1");
        if (!(scene.spacing_nm > 0.0) || !(scene.curve_length_nm > 0.0))
            throw ConfigError("curve length and spacing must be > 0");
        if (!(scene.curve_width_nm >= 0.0)) throw ConfigError("curve_width_nm must be >= 0");
        if (!(scene.margin_nm >= 0.0) || 2.0 * scene.margin_nm >= geometry.fov_nm())
            throw ConfigError("margin_nm must be >= 0 and leave room inside the field of view");
    });
    rethrow_as_config("normalize", [&] { normalize.validate(); });
    rethrow_as_config("model", [&] {
        if (model.kernel_size < 1 || model.kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
        if (!(model.init_sigma > 0.0)) throw ConfigError("init_sigma must be > 0");
        if (!(model.init_activation.alpha0 >= 0.0 && model.init_activation.alpha0 <= 1.0))
            throw ConfigError("alpha0 must lie in [0, 1]");
        if (!(model.init_activation.beta0 >= kBeta0Floor)) throw ConfigError("beta0 must be >= 1e-3");
    });
    rethrow_as_config("train", [&] { resolved_train().validate(); });
    rethrow_as_config("infer", [&] {
        if (infer_k_max < 0) throw ConfigError("k_max must be >= 0");
    });
    rethrow_as_config("ista", [&] { ista.validate(); });
    rethrow_as_config("eval", [&] {
        if (eval_thresholds < 2) throw ConfigError("n_thresholds must be >= 2");
    });
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
    RunConfig config;
    std::set<std::string> sections;
    for (const Field& f : fields()) sections.insert(f.section);

    std::istringstream in(text);
    std::string section;
    std::set<std::string> seen;
    int line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        if (section.empty()) throw ConfigError(where + ": key outside of any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* f = find_field(section, key);
        if (!f) throw ConfigError(where + ": unknown key '" + section + "." + key + "'");
        if (!seen.insert(section + "." + key).second)
            throw ConfigError(where + ": duplicate key '" + section + "." + key + "'");
        rethrow_as_config(where + ": " + section + "." + key, [&] { f->set(config, value); });
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.string());
}

void set_run_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) throw ConfigError("expected section.key, got '" + dotted_key + "'");
    const Field* f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
    if (!f) throw ConfigError("unknown key '" + dotted_key + "'");
    rethrow_as_config(dotted_key, [&] { f->set(config, trim(value)); });
}

std::string echo_run_config(const RunConfig& config) {
    std::ostringstream out;
    std::string section;
    for (const Field& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
    return out.str();
}

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.push_back(f.section + "." + f.key);
    return keys;
}

}  // namespace selfstorm
