#pragma once

// Procedural rectified stereo scenes with exact ground truth.
//
// A scene is a background (sky above a horizon, a ground plane below it whose
// integer disparity grows towards the bottom row) plus fronto-parallel
// textured rectangles standing on the ground. Both views are rendered by
// nearest-pixel lookup into layer-space textures with a per-pixel z-buffer on
// disparity, so non-occluded pixels are exactly photo-consistent before noise.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numbers>

#include "distill/imageio/image.hpp"
#include "distill/imageio/pnm.hpp"
#include "distill/rng.hpp"

namespace distill::scene {

enum class Texture { Noise, Stripes, Checker, Flat };

inline const char* to_string(Texture t) {
    switch (t) {
        case Texture::Noise: return "noise";
        case Texture::Stripes: return "stripes";
        case Texture::Checker: return "checker";
        case Texture::Flat: return "flat";
    }
    return "?";
}

inline Texture texture_from_string(const std::string& s) {
    if (s == "noise") return Texture::Noise;
    if (s == "stripes") return Texture::Stripes;
    if (s == "checker") return Texture::Checker;
    if (s == "flat") return Texture::Flat;
    throw InvalidArgument("unknown texture '" + s + "'");
}

struct SceneSpec {
    int width = 64;
    int height = 64;
    int num_layers = 4;  // background counts as one layer
    double d_min = 2.0;
    double d_max = 14.0;
    std::vector<Texture> textures{Texture::Noise, Texture::Stripes, Texture::Checker};
    double noise_sigma = 0.02;
    double flat_prob = 0.0;   // chance that a foreground layer is textureless
    bool ground_plane = true; // false: background is a fronto-parallel plane at d_min
    std::uint64_t seed = 1;

    void validate() const {
        if (width < 8 || height < 8) throw InvalidArgument("scene.width/height must be >= 8");
        if (num_layers < 2 || num_layers > 8) throw InvalidArgument("scene.num_layers must be in [2,8]");
        if (d_min < 1.0) throw InvalidArgument("scene.d_min must be >= 1");
        if (d_max < d_min) throw InvalidArgument("scene.d_max must be >= d_min");
        if (!(d_max < width / 4.0)) throw InvalidArgument("scene.d_max must be < width/4");
        if (textures.empty()) throw InvalidArgument("scene.textures must not be empty");
        if (noise_sigma < 0.0 || noise_sigma > 1.0) throw InvalidArgument("scene.noise_sigma must be in [0,1]");
        if (flat_prob < 0.0 || flat_prob > 1.0) throw InvalidArgument("scene.flat_prob must be in [0,1]");
    }
};

/// One surface of the scene in left-image coordinates.
struct Layer {
    int label = 0;
    // Rectangle [x0,x1) x [y0,y1); the background covers everything.
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool background = false;
    int disparity = 0;                  // objects
    std::vector<int> row_disparity;     // background, one entry per row
    Texture texture = Texture::Noise;
    std::array<double, 3> albedo{};
    double cell = 1.0;                  // texture cell size in pixels
    double stripe_angle = 0.0;
    std::uint64_t texture_seed = 0;

    int disparity_at(int y) const { return background ? row_disparity[static_cast<std::size_t>(y)] : disparity; }
    bool covers(int x, int y) const { return background || (x >= x0 && x < x1 && y >= y0 && y < y1); }
};

struct SceneLayout {
    int width = 0, height = 0;
    int horizon = 0;
    double d_min = 0.0, d_max = 0.0;
    std::vector<Layer> layers;  // index == label; ascending disparity for objects
};

struct StereoSample {
    Image left, right;
    DisparityMap gt_disparity;                 // left-referenced, valid everywhere
    std::vector<std::uint8_t> occlusion_mask;  // 1 = visible in both views
    std::vector<std::uint8_t> class_labels;    // layer label per pixel, 0 = background

    bool operator==(const StereoSample&) const = default;
};

namespace detail {

inline double hash_unit(std::uint64_t seed, std::int64_t u, std::int64_t v) {
    const std::uint64_t h = mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(u) * 0x9e3779b97f4a7c15ULL ^
                                                     static_cast<std::uint64_t>(v) * 0xc2b2ae3d27d4eb4fULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double pattern_value(const Layer& layer, double u, double v) {
    switch (layer.texture) {
        case Texture::Noise:
            return hash_unit(layer.texture_seed, static_cast<std::int64_t>(std::floor(u)),
                             static_cast<std::int64_t>(std::floor(v)));
        case Texture::Stripes: {
            const double t = u * std::cos(layer.stripe_angle) + v * std::sin(layer.stripe_angle);
            return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * t / 3.0);
        }
        case Texture::Checker: {
            const auto cu = static_cast<std::int64_t>(std::floor(u / 2.0));
            const auto cv = static_cast<std::int64_t>(std::floor(v / 2.0));
            return ((cu + cv) % 2 == 0) ? 0.9 : 0.1;
        }
        case Texture::Flat: return 0.5;
    }
    return 0.5;
}

inline double texture_value(const Layer& layer, int x, int y) {
    // Background texture cells grow with ground disparity (perspective).
    const double cell = layer.background ? std::max(2.0, 0.25 * layer.disparity_at(y)) : layer.cell;
    const double u = (x - layer.x0) / cell;
    const double v = (y - layer.y0) / cell;
    if (layer.texture == Texture::Flat) return 0.5;
    // Pixel-scale detail keeps patterned layers locally distinctive.
    const double detail = hash_unit(layer.texture_seed ^ 0xde7a11ULL, x - layer.x0, y - layer.y0);
    return 0.7 * pattern_value(layer, u, v) + 0.3 * detail;
}

inline constexpr std::array<double, 3> kHazeColor{0.80, 0.84, 0.90};

/// Colour of `layer` at left-image coordinates (x, y), including the
/// distance haze that fades far surfaces towards kHazeColor.
inline std::array<double, 3> layer_color(const SceneLayout& scene, const Layer& layer, int x, int y) {
    const double t = texture_value(layer, x, y);
    const double d = layer.disparity_at(y);
    const double span = std::max(scene.d_max - scene.d_min, 1.0);
    const double haze = 0.4 * std::exp(-(d - scene.d_min) / (0.4 * span));
    std::array<double, 3> rgb{};
    for (int c = 0; c < 3; ++c) {
        const double surface = layer.albedo[c] * (0.3 + 0.7 * t);
        rgb[c] = (1.0 - haze) * surface + haze * kHazeColor[c];
    }
    return rgb;
}

/// Index of the layer seen at left-image (x, y): highest disparity wins,
/// ties go to the higher label.
inline std::size_t left_winner(const SceneLayout& scene, int x, int y) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < scene.layers.size(); ++k) {
        const Layer& l = scene.layers[k];
        if (l.covers(x, y) && l.disparity_at(y) >= scene.layers[best].disparity_at(y)) best = k;
    }
    return best;
}

}  // namespace detail

/// Draws the scene geometry for `spec` (deterministic in spec.seed).
inline SceneLayout layout_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0x5ce7e));
    SceneLayout scene;
    scene.width = spec.width;
    scene.height = spec.height;
    scene.d_min = spec.d_min;
    scene.d_max = spec.d_max;
    scene.horizon = spec.ground_plane ? static_cast<int>(std::lround(spec.height * 0.35)) : spec.height;

    const int dmin = static_cast<int>(std::ceil(spec.d_min));
    const int dmax = static_cast<int>(std::floor(spec.d_max));
    const int ground_max = dmin + static_cast<int>(std::lround(0.75 * (dmax - dmin)));

    auto pick_albedo = [&] {
        return std::array<double, 3>{uniform(rng, 0.15, 1.0), uniform(rng, 0.15, 1.0), uniform(rng, 0.15, 1.0)};
    };

    Layer bg;
    bg.label = 0;
    bg.background = true;
    bg.row_disparity.resize(static_cast<std::size_t>(spec.height), dmin);
    for (int y = scene.horizon; y < spec.height; ++y) {
        const double t = static_cast<double>(y - scene.horizon + 1) / (spec.height - scene.horizon);
        bg.row_disparity[static_cast<std::size_t>(y)] = dmin + static_cast<int>(std::lround(t * (ground_max - dmin)));
    }
    bg.texture = Texture::Noise;
    bg.albedo = pick_albedo();
    bg.cell = 1.0;
    bg.texture_seed = rng();
    bg.x1 = spec.width;
    bg.y1 = spec.height;
    scene.layers.push_back(bg);

    std::vector<Layer> objects;
    for (int k = 1; k < spec.num_layers; ++k) {
        Layer obj;
        int d = 0;
        int bottom = 0;
        if (spec.ground_plane) {
            bottom = uniform_int(rng, scene.horizon + 1, spec.height - 1);
            d = std::clamp(bg.row_disparity[static_cast<std::size_t>(bottom)] + uniform_int(rng, 1, 2), dmin, dmax);
        } else {
            d = uniform_int(rng, std::min(dmin + 1, dmax), dmax);
            bottom = uniform_int(rng, spec.height / 3, spec.height - 1);
        }
        const double near = static_cast<double>(d) / std::max(dmax, 1);
        const int h = std::max(4, static_cast<int>(std::lround(spec.height * near * uniform(rng, 0.35, 0.7))));
        const int w = std::max(4, static_cast<int>(std::lround(spec.width * near * uniform(rng, 0.25, 0.55))));
        obj.disparity = d;
        obj.y1 = bottom + 1;
        obj.y0 = std::max(0, obj.y1 - h);
        obj.x0 = uniform_int(rng, -w / 4, spec.width - (3 * w) / 4);
        obj.x1 = obj.x0 + w;
        obj.texture = spec.textures[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(spec.textures.size()) - 1))];
        if (uniform(rng, 0.0, 1.0) < spec.flat_prob) obj.texture = Texture::Flat;
        obj.albedo = pick_albedo();
        obj.cell = std::max(1.0, 0.25 * d);
        obj.stripe_angle = uniform(rng, 0.0, std::numbers::pi);
        obj.texture_seed = rng();
        objects.push_back(obj);
    }
    std::stable_sort(objects.begin(), objects.end(),
                     [](const Layer& a, const Layer& b) { return a.disparity < b.disparity; });
    for (std::size_t k = 0; k < objects.size(); ++k) {
        objects[k].label = static_cast<int>(k + 1);
        scene.layers.push_back(objects[k]);
    }
    return scene;
}

/// Renders both views, ground truth, occlusion mask and labels. Noise is
/// added after rendering and both views are quantized to 8 bits, so the
/// sample equals what a PPM round-trip returns.
inline StereoSample render_scene(const SceneLayout& scene, double noise_sigma, std::uint64_t noise_seed) {
    const int w = scene.width, h = scene.height;
    StereoSample s;
    s.left = Image(w, h, 3);
    s.right = Image(w, h, 3);
    s.gt_disparity = DisparityMap(w, h);
    s.occlusion_mask.assign(static_cast<std::size_t>(w) * h, 0);
    s.class_labels.assign(static_cast<std::size_t>(w) * h, 0);

    std::vector<std::size_t> right_winner(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int xr = 0; xr < w; ++xr) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < scene.layers.size(); ++k) {
                const Layer& l = scene.layers[k];
                if (l.covers(xr + l.disparity_at(y), y) &&
                    l.disparity_at(y) >= scene.layers[best].disparity_at(y)) {
                    best = k;
                }
            }
            right_winner[static_cast<std::size_t>(xr)] = best;
            const Layer& l = scene.layers[best];
            const auto rgb = detail::layer_color(scene, l, xr + l.disparity_at(y), y);
            for (int c = 0; c < 3; ++c) s.right.at(xr, y, c) = rgb[c];
        }
        for (int x = 0; x < w; ++x) {
            const std::size_t k = detail::left_winner(scene, x, y);
            const Layer& l = scene.layers[k];
            const auto rgb = detail::layer_color(scene, l, x, y);
            for (int c = 0; c < 3; ++c) s.left.at(x, y, c) = rgb[c];
            const int d = l.disparity_at(y);
            s.gt_disparity.set(x, y, d);
            const std::size_t i = s.gt_disparity.index(x, y);
            s.class_labels[i] = static_cast<std::uint8_t>(l.label);
            const int xr = x - d;
            s.occlusion_mask[i] = (xr >= 0 && xr < w && right_winner[static_cast<std::size_t>(xr)] == k) ? 1 : 0;
        }
    }

    Rng rng(noise_seed);
    for (Image* view : {&s.left, &s.right}) {
        for (double& v : view->data) {
            if (noise_sigma > 0.0) v += normal(rng, 0.0, noise_sigma);
            v = quantize_u8(v) / 255.0;
        }
    }
    return s;
}

inline StereoSample generate_scene(const SceneSpec& spec) {
    return render_scene(layout_scene(spec), spec.noise_sigma, derive_seed(spec.seed, 0x401fe));
}

/// Focal length and baseline for disparity/depth conversion.
struct CameraModel {
    double focal_length = 500.0;  // pixels
    double baseline = 0.12;       // meters
    double depth_cap = 80.0;      // meters

    void validate() const {
        if (!(focal_length > 0.0)) throw InvalidArgument("camera.focal_length must be > 0");
        if (!(baseline > 0.0)) throw InvalidArgument("camera.baseline must be > 0");
        if (!(depth_cap > 0.0)) throw InvalidArgument("camera.depth_cap must be > 0");
    }
    double focal_baseline() const { return focal_length * baseline; }
};

}  // namespace distill::scene
