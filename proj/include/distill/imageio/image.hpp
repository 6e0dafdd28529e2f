#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "distill/error.hpp"

namespace distill {

/// Row-major, channel-interleaved image with values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 0 || h < 0 || (c != 1 && c != 3)) {
            throw InvalidArgument("image: bad geometry " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                                  std::to_string(c));
        }
    }

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

/// Single-channel float map. On disk and in FloatMap form a value > 0 is
/// valid and a value <= 0 marks an invalid or unknown pixel.
struct FloatMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    FloatMap() = default;
    FloatMap(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t pixels() const { return data.size(); }
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    static bool is_valid(double v) { return v > 0.0; }
    bool operator==(const FloatMap&) const = default;
};

inline constexpr double kInvalidValue = -1.0;

/// Per-pixel disparity (pixels) with explicit validity, so that a valid zero
/// disparity survives in memory. Converting to a FloatMap writes invalid
/// pixels as kInvalidValue.
struct DisparityMap {
    int width = 0;
    int height = 0;
    std::vector<double> value;
    std::vector<std::uint8_t> valid;

    DisparityMap() = default;
    DisparityMap(int w, int h)
        : width(w), height(h), value(static_cast<std::size_t>(w) * h, 0.0), valid(value.size(), 0) {}

    std::size_t pixels() const { return value.size(); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    double at(int x, int y) const { return value[index(x, y)]; }
    void set(int x, int y, double v) {
        value[index(x, y)] = v;
        valid[index(x, y)] = 1;
    }
    void invalidate(int x, int y) {
        value[index(x, y)] = 0.0;
        valid[index(x, y)] = 0;
    }
    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto v : valid) n += v;
        return n;
    }

    FloatMap to_float_map() const {
        FloatMap out(width, height);
        for (std::size_t i = 0; i < value.size(); ++i) out.data[i] = valid[i] ? value[i] : kInvalidValue;
        return out;
    }

    static DisparityMap from_float_map(const FloatMap& map) {
        DisparityMap out(map.width, map.height);
        for (std::size_t i = 0; i < map.data.size(); ++i) {
            if (FloatMap::is_valid(map.data[i])) {
                out.value[i] = map.data[i];
                out.valid[i] = 1;
            }
        }
        return out;
    }

    bool operator==(const DisparityMap&) const = default;
};

/// Rec. 601 luma of an RGB image; single-channel images pass through.
inline Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        out.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    }
    return out;
}

inline void require_same_size(int w1, int h1, int w2, int h2, const char* what) {
    if (w1 != w2 || h1 != h2) {
        throw ShapeError(std::string(what) + ": size mismatch " + std::to_string(w1) + "x" + std::to_string(h1) +
                         " vs " + std::to_string(w2) + "x" + std::to_string(h2));
    }
}

}  // namespace distill
