#pragma once

#include <algorithm>

#include "distill/imageio/image.hpp"

namespace distill {

enum class ResizeMode { Image, Disparity };

namespace detail {

struct Tap {
    int lo, hi;
    double frac;  // weight of `hi`
};

/// Half-pixel-centre source coordinate for target index `i`, clamped to the edge.
inline Tap source_tap(int i, int old_size, int new_size) {
    double s = (i + 0.5) * static_cast<double>(old_size) / new_size - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(old_size - 1));
    const int lo = static_cast<int>(std::floor(s));
    return {lo, std::min(lo + 1, old_size - 1), s - lo};
}

inline void require_target(int w, int h) {
    if (w < 1 || h < 1) throw InvalidArgument("resize: target dimensions must be >= 1");
}

}  // namespace detail

/// Standard bilinear resampling with edge clamping.
inline Image resize_bilinear(const Image& img, int new_w, int new_h) {
    detail::require_target(new_w, new_h);
    if (new_w == img.width && new_h == img.height) return img;
    Image out(new_w, new_h, img.channels);
    for (int y = 0; y < new_h; ++y) {
        const auto ty = detail::source_tap(y, img.height, new_h);
        for (int x = 0; x < new_w; ++x) {
            const auto tx = detail::source_tap(x, img.width, new_w);
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1 - tx.frac) * img.at(tx.lo, ty.lo, c) + tx.frac * img.at(tx.hi, ty.lo, c);
                const double bottom = (1 - tx.frac) * img.at(tx.lo, ty.hi, c) + tx.frac * img.at(tx.hi, ty.hi, c);
                out.at(x, y, c) = (1 - ty.frac) * top + ty.frac * bottom;
            }
        }
    }
    return out;
}

/// Disparity-aware resampling. Shrinking averages the valid source pixels
/// whose centres fall in each target cell (no valid source -> invalid);
/// enlarging uses bilinear weights restricted to valid neighbours. Values are
/// then multiplied by new_w / old_w.
inline DisparityMap resize_bilinear(const DisparityMap& d, int new_w, int new_h) {
    detail::require_target(new_w, new_h);
    const double factor = static_cast<double>(new_w) / d.width;
    DisparityMap out(new_w, new_h);
    if (new_w <= d.width && new_h <= d.height) {
        std::vector<double> sum(out.pixels(), 0.0);
        std::vector<std::size_t> count(out.pixels(), 0);
        for (int y = 0; y < d.height; ++y) {
            const int ty = static_cast<int>(std::floor((y + 0.5) * new_h / d.height));
            for (int x = 0; x < d.width; ++x) {
                if (!d.is_valid(x, y)) continue;
                const int tx = static_cast<int>(std::floor((x + 0.5) * new_w / d.width));
                sum[out.index(tx, ty)] += d.at(x, y);
                ++count[out.index(tx, ty)];
            }
        }
        for (std::size_t i = 0; i < sum.size(); ++i) {
            if (count[i] == 0) continue;
            out.value[i] = sum[i] / static_cast<double>(count[i]) * factor;
            out.valid[i] = 1;
        }
        return out;
    }
    for (int y = 0; y < new_h; ++y) {
        const auto ty = detail::source_tap(y, d.height, new_h);
        for (int x = 0; x < new_w; ++x) {
            const auto tx = detail::source_tap(x, d.width, new_w);
            const int xs[4] = {tx.lo, tx.hi, tx.lo, tx.hi};
            const int ys[4] = {ty.lo, ty.lo, ty.hi, ty.hi};
            const double ws[4] = {(1 - tx.frac) * (1 - ty.frac), tx.frac * (1 - ty.frac), (1 - tx.frac) * ty.frac,
                                  tx.frac * ty.frac};
            double acc = 0.0, weight = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (ws[k] <= 0.0 || !d.is_valid(xs[k], ys[k])) continue;
                acc += ws[k] * d.at(xs[k], ys[k]);
                weight += ws[k];
            }
            if (weight > 0.0) out.set(x, y, acc / weight * factor);
        }
    }
    return out;
}

/// FloatMap front end; Disparity mode applies the <= 0 invalid convention.
inline FloatMap resize_bilinear(const FloatMap& map, int new_w, int new_h, ResizeMode mode) {
    if (mode == ResizeMode::Disparity) {
        return resize_bilinear(DisparityMap::from_float_map(map), new_w, new_h).to_float_map();
    }
    Image as_image(map.width, map.height, 1);
    as_image.data = map.data;
    Image resized = resize_bilinear(as_image, new_w, new_h);
    FloatMap out(new_w, new_h);
    out.data = std::move(resized.data);
    return out;
}

}  // namespace distill
