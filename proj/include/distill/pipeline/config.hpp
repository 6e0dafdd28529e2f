#pragma once

// Experiment configuration: defaults, TOML overrides, validation and the
// resolved snapshot written into every run directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "distill/confidence/confidence.hpp"
#include "distill/pipeline/toml.hpp"
#include "distill/scenegen/scene.hpp"
#include "distill/student/student.hpp"
#include "distill/teacher/ensemble.hpp"

namespace distill::pipeline {

struct ExperimentConfig {
    std::string name = "default";
    std::uint64_t seed = 7;
    std::string output_root = "runs";
    std::size_t threads = 1;

    scene::SceneSpec scene;
    std::size_t num_scenes = 50;
    scene::CameraModel camera;

    teacher::MatcherConfig matcher;
    bool use_ensemble = true;
    teacher::EnsembleConfig ensemble;

    confidence::ConfidenceNetConfig conf;
    std::size_t conf_train_scenes = 20;

    double tau = 0.3;
    std::vector<double> sweep_taus{0.3, 0.55, 0.75};

    student::StudentConfig student;

    student::SegConfig seg;
    std::size_t transfer_scenes = 16;       // labelled training scenes
    std::size_t transfer_eval_scenes = 32;
    int transfer_layers = 3;

    std::filesystem::path run_dir() const { return std::filesystem::path(output_root) / name; }

    /// Copies shared fields into the nested configs and derives per-stage
    /// seeds from the master seed. Idempotent.
    void resolve() {
        scene.seed = derive_seed(seed, 1);
        conf.seed = derive_seed(seed, 3);
        conf.max_disparity = matcher.max_disparity;
        student.width = scene.width;
        student.height = scene.height;
        student.max_disparity = matcher.max_disparity;
        student.seed = derive_seed(seed, 5);
        seg.seed = derive_seed(seed, 8);
    }

    void validate() const {
        auto wrap = [](auto&& fn) {
            try {
                fn();
            } catch (const InvalidArgument& e) {
                throw ConfigError(std::string("invalid config: ") + e.what());
            }
        };
        auto bad = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
        if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
            bad("name must be a non-empty single path component");
        }
        if (output_root.empty()) bad("output_root must not be empty");
        if (threads < 1) bad("threads must be >= 1");
        if (num_scenes < 2) bad("scene.count must be >= 2");
        wrap([&] { scene.validate(); });
        wrap([&] { camera.validate(); });
        wrap([&] { matcher.validate(); });
        wrap([&] { ensemble.validate(); });
        wrap([&] { conf.validate(); });
        wrap([&] { student.validate(); });
        wrap([&] { seg.validate(); });
        if (conf_train_scenes < 1) bad("conf.train_scenes must be >= 1");
        if (!(tau >= 0.0 && tau <= 1.0)) bad("pseudo.tau must be in [0,1]");
        if (sweep_taus.empty()) bad("sweep.taus must not be empty");
        for (std::size_t i = 0; i < sweep_taus.size(); ++i) {
            if (!(sweep_taus[i] >= 0.0 && sweep_taus[i] <= 1.0)) bad("sweep.taus must lie in [0,1]");
            if (i > 0 && sweep_taus[i] <= sweep_taus[i - 1]) bad("sweep.taus must be strictly ascending");
        }
        if (transfer_scenes < 1) bad("transfer.scenes must be >= 1");
        if (transfer_eval_scenes < 1) bad("transfer.eval_scenes must be >= 1");
        if (transfer_layers < 2 || static_cast<std::size_t>(transfer_layers) > seg.num_classes) {
            bad("transfer.layers must be in [2, transfer.num_classes]");
        }
    }
};

namespace detail {

class Reader {
public:
    explicit Reader(const toml::Table& t) : t_(t) {}

    template <typename Fn>
    void with(const std::string& key, Fn&& fn) {
        auto it = t_.find(key);
        if (it == t_.end()) return;
        used_.insert(key);
        fn(it->second);
    }

    void get(const std::string& key, std::string& out) {
        with(key, [&](const toml::Value& v) {
            if (!v.is_string()) type_error(key, "a string");
            out = std::get<std::string>(v.v);
        });
    }
    void get(const std::string& key, bool& out) {
        with(key, [&](const toml::Value& v) {
            if (!v.is_bool()) type_error(key, "a boolean");
            out = std::get<bool>(v.v);
        });
    }
    void get(const std::string& key, double& out) {
        with(key, [&](const toml::Value& v) { out = as_double(key, v); });
    }
    template <typename I>
        requires std::is_integral_v<I>
    void get(const std::string& key, I& out) {
        with(key, [&](const toml::Value& v) { out = as_int<I>(key, v); });
    }
    void get(const std::string& key, std::vector<double>& out) {
        with(key, [&](const toml::Value& v) {
            if (!v.is_array()) type_error(key, "an array of numbers");
            out.clear();
            for (const auto& e : std::get<toml::Array>(v.v)) out.push_back(as_double(key, e));
        });
    }
    void get(const std::string& key, std::vector<std::size_t>& out) {
        with(key, [&](const toml::Value& v) {
            if (!v.is_array()) type_error(key, "an array of integers");
            out.clear();
            for (const auto& e : std::get<toml::Array>(v.v)) out.push_back(as_int<std::size_t>(key, e));
        });
    }
    void get(const std::string& key, std::vector<std::string>& out) {
        with(key, [&](const toml::Value& v) {
            if (!v.is_array()) type_error(key, "an array of strings");
            out.clear();
            for (const auto& e : std::get<toml::Array>(v.v)) {
                if (!e.is_string()) type_error(key, "an array of strings");
                out.push_back(std::get<std::string>(e.v));
            }
        });
    }

    void reject_unknown() const {
        for (const auto& [key, value] : t_) {
            if (!used_.count(key)) throw ConfigError("invalid config: unknown key '" + key + "'");
        }
    }

private:
    [[noreturn]] static void type_error(const std::string& key, const char* what) {
        throw ConfigError("invalid config: " + key + " must be " + what);
    }

    static double as_double(const std::string& key, const toml::Value& v) {
        if (v.is_float()) return std::get<double>(v.v);
        if (v.is_int()) return static_cast<double>(std::get<std::int64_t>(v.v));
        type_error(key, "a number");
    }

    template <typename I>
    static I as_int(const std::string& key, const toml::Value& v) {
        if (!v.is_int()) type_error(key, "an integer");
        const std::int64_t x = std::get<std::int64_t>(v.v);
        if constexpr (std::is_unsigned_v<I>) {
            if (x < 0) throw ConfigError("invalid config: " + key + " must be >= 0");
        }
        if (x < static_cast<std::int64_t>(std::numeric_limits<I>::min()) ||
            (x > 0 && static_cast<std::uint64_t>(x) > static_cast<std::uint64_t>(std::numeric_limits<I>::max()))) {
            throw ConfigError("invalid config: " + key + " is out of range");
        }
        return static_cast<I>(x);
    }

    const toml::Table& t_;
    std::set<std::string> used_;
};

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_floating_point_v<T>) {
            s += fmt_double(xs[i]);
        } else if constexpr (std::is_same_v<T, std::string>) {
            s += "\"" + xs[i] + "\"";
        } else {
            s += std::to_string(xs[i]);
        }
    }
    return s + "]";
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

/// Applies a parsed table on top of `base`. Unknown keys and wrong types are
/// ConfigErrors; the result is resolved but not validated.
inline ExperimentConfig apply_table(const toml::Table& table, ExperimentConfig cfg = {}) {
    detail::Reader r(table);
    r.get("name", cfg.name);
    r.get("seed", cfg.seed);
    r.get("output_root", cfg.output_root);
    r.get("threads", cfg.threads);

    r.get("scene.count", cfg.num_scenes);
    r.get("scene.width", cfg.scene.width);
    r.get("scene.height", cfg.scene.height);
    r.get("scene.num_layers", cfg.scene.num_layers);
    r.get("scene.d_min", cfg.scene.d_min);
    r.get("scene.d_max", cfg.scene.d_max);
    r.get("scene.noise_sigma", cfg.scene.noise_sigma);
    r.get("scene.flat_prob", cfg.scene.flat_prob);
    r.get("scene.ground_plane", cfg.scene.ground_plane);
    std::vector<std::string> textures;
    bool have_textures = false;
    r.with("scene.textures", [&](const toml::Value&) { have_textures = true; });
    if (have_textures) {
        r.get("scene.textures", textures);
        cfg.scene.textures.clear();
        for (const auto& t : textures) {
            try {
                cfg.scene.textures.push_back(scene::texture_from_string(t));
            } catch (const InvalidArgument& e) {
                throw ConfigError(std::string("invalid config: scene.textures: ") + e.what());
            }
        }
    }

    r.get("camera.focal_length", cfg.camera.focal_length);
    r.get("camera.baseline", cfg.camera.baseline);
    r.get("camera.depth_cap", cfg.camera.depth_cap);

    r.get("matcher.max_disparity", cfg.matcher.max_disparity);
    r.get("matcher.census_window", cfg.matcher.census_window);
    r.get("matcher.aggregation_window", cfg.matcher.aggregation_window);
    r.get("matcher.lr_threshold", cfg.matcher.lr_threshold);

    r.get("ensemble.enabled", cfg.use_ensemble);
    r.get("ensemble.scales", cfg.ensemble.scales);
    std::string fuse = cfg.ensemble.fuse_at == teacher::FuseAt::Smallest ? "smallest" : "full";
    r.get("ensemble.fuse_at", fuse);
    if (fuse == "smallest") {
        cfg.ensemble.fuse_at = teacher::FuseAt::Smallest;
    } else if (fuse == "full") {
        cfg.ensemble.fuse_at = teacher::FuseAt::Full;
    } else {
        throw ConfigError("invalid config: ensemble.fuse_at must be \"smallest\" or \"full\"");
    }

    r.get("conf.train_scenes", cfg.conf_train_scenes);
    r.get("conf.patch_size", cfg.conf.patch_size);
    r.get("conf.channels", cfg.conf.channels);
    r.get("conf.epochs", cfg.conf.epochs);
    r.get("conf.lr", cfg.conf.lr);
    r.get("conf.decay_every", cfg.conf.decay_every);
    r.get("conf.decay", cfg.conf.decay);
    r.get("conf.batch_size", cfg.conf.batch_size);
    r.get("conf.patches_per_epoch", cfg.conf.patches_per_epoch);
    r.get("conf.probe_patches", cfg.conf.probe_patches);

    r.get("pseudo.tau", cfg.tau);
    r.get("sweep.taus", cfg.sweep_taus);

    r.get("student.channels", cfg.student.channels);
    r.get("student.epochs", cfg.student.epochs);
    r.get("student.batch_size", cfg.student.batch_size);
    r.get("student.lr", cfg.student.lr);

    r.get("transfer.scenes", cfg.transfer_scenes);
    r.get("transfer.eval_scenes", cfg.transfer_eval_scenes);
    r.get("transfer.layers", cfg.transfer_layers);
    r.get("transfer.num_classes", cfg.seg.num_classes);
    r.get("transfer.epochs", cfg.seg.epochs);
    r.get("transfer.batch_size", cfg.seg.batch_size);
    r.get("transfer.lr", cfg.seg.lr);

    r.reject_unknown();
    cfg.resolve();
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
    return apply_table(toml::parse(text, source));
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.string());
}

/// Fully resolved config as TOML; parse_config(to_toml(c)) reproduces c.
inline std::string to_toml(const ExperimentConfig& c) {
    using detail::fmt_double;
    using detail::fmt_list;
    std::vector<std::string> textures;
    for (auto t : c.scene.textures) textures.emplace_back(scene::to_string(t));
    std::ostringstream os;
    os << "name = " << detail::quote(c.name) << "\n"
       << "seed = " << c.seed << "\n"
       << "output_root = " << detail::quote(c.output_root) << "\n"
       << "threads = " << c.threads << "\n"
       << "\n[scene]\n"
       << "count = " << c.num_scenes << "\n"
       << "width = " << c.scene.width << "\n"
       << "height = " << c.scene.height << "\n"
       << "num_layers = " << c.scene.num_layers << "\n"
       << "d_min = " << fmt_double(c.scene.d_min) << "\n"
       << "d_max = " << fmt_double(c.scene.d_max) << "\n"
       << "textures = " << fmt_list(textures) << "\n"
       << "noise_sigma = " << fmt_double(c.scene.noise_sigma) << "\n"
       << "flat_prob = " << fmt_double(c.scene.flat_prob) << "\n"
       << "ground_plane = " << (c.scene.ground_plane ? "true" : "false") << "\n"
       << "\n[camera]\n"
       << "focal_length = " << fmt_double(c.camera.focal_length) << "\n"
       << "baseline = " << fmt_double(c.camera.baseline) << "\n"
       << "depth_cap = " << fmt_double(c.camera.depth_cap) << "\n"
       << "\n[matcher]\n"
       << "max_disparity = " << c.matcher.max_disparity << "\n"
       << "census_window = " << c.matcher.census_window << "\n"
       << "aggregation_window = " << c.matcher.aggregation_window << "\n"
       << "lr_threshold = " << fmt_double(c.matcher.lr_threshold) << "\n"
       << "\n[ensemble]\n"
       << "enabled = " << (c.use_ensemble ? "true" : "false") << "\n"
       << "scales = " << fmt_list(c.ensemble.scales) << "\n"
       << "fuse_at = \"" << (c.ensemble.fuse_at == teacher::FuseAt::Smallest ? "smallest" : "full") << "\"\n"
       << "\n[conf]\n"
       << "train_scenes = " << c.conf_train_scenes << "\n"
       << "patch_size = " << c.conf.patch_size << "\n"
       << "channels = " << c.conf.channels << "\n"
       << "epochs = " << c.conf.epochs << "\n"
       << "lr = " << fmt_double(c.conf.lr) << "\n"
       << "decay_every = " << c.conf.decay_every << "\n"
       << "decay = " << fmt_double(c.conf.decay) << "\n"
       << "batch_size = " << c.conf.batch_size << "\n"
       << "patches_per_epoch = " << c.conf.patches_per_epoch << "\n"
       << "probe_patches = " << c.conf.probe_patches << "\n"
       << "\n[pseudo]\n"
       << "tau = " << fmt_double(c.tau) << "\n"
       << "\n[sweep]\n"
       << "taus = " << fmt_list(c.sweep_taus) << "\n"
       << "\n[student]\n"
       << "channels = " << fmt_list(c.student.channels) << "\n"
       << "epochs = " << c.student.epochs << "\n"
       << "batch_size = " << c.student.batch_size << "\n"
       << "lr = " << fmt_double(c.student.lr) << "\n"
       << "\n[transfer]\n"
       << "scenes = " << c.transfer_scenes << "\n"
       << "eval_scenes = " << c.transfer_eval_scenes << "\n"
       << "layers = " << c.transfer_layers << "\n"
       << "num_classes = " << c.seg.num_classes << "\n"
       << "epochs = " << c.seg.epochs << "\n"
       << "batch_size = " << c.seg.batch_size << "\n"
       << "lr = " << fmt_double(c.seg.lr) << "\n";
    return os.str();
}

}  // namespace distill::pipeline
