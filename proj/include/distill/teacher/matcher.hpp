#pragma once

// Census / Hamming block matcher with box aggregation, winner-take-all,
// parabola subpixel refinement and a left-right consistency check.

#include "distill/imageio/image.hpp"
#include "distill/teacher/census.hpp"

namespace distill::teacher {

struct MatcherConfig {
    int max_disparity = 16;
    int census_window = 7;
    int aggregation_window = 5;
    double lr_threshold = 1.0;

    void validate() const {
        if (max_disparity < 1) throw InvalidArgument("matcher.max_disparity must be >= 1");
        if (census_window < 3 || census_window % 2 == 0) throw InvalidArgument("matcher.census_window must be odd and >= 3");
        if (aggregation_window < 3 || aggregation_window % 2 == 0) {
            throw InvalidArgument("matcher.aggregation_window must be odd and >= 3");
        }
        if (!(lr_threshold >= 0.0)) throw InvalidArgument("matcher.lr_threshold must be >= 0");
    }
};

/// Both views' winner-take-all maps plus the LR-checked left map.
struct MatchResult {
    DisparityMap left;            // LR-checked, subpixel
    DisparityMap left_unchecked;  // subpixel, before the LR check
    DisparityMap right;           // right-referenced, integer
};

namespace detail {

/// Sentinel for candidates whose right-view match falls outside the image.
inline constexpr int kNoCost = -1;

/// Box mean over a (2r+1)^2 window with clamped borders, per disparity slice,
/// ignoring kNoCost entries. Slices with no usable entry get `fallback`.
/// Layout of `cost`: [(y*W + x) * D + d].
inline std::vector<double> box_aggregate(const std::vector<int>& cost, int w, int h, int slices, int radius,
                                         double fallback) {
    std::vector<int> hsum(cost.size()), hcount(cost.size());
    std::vector<double> out(cost.size());
    auto at = [slices, w](int x, int y, int d) { return (static_cast<std::size_t>(y) * w + x) * slices + d; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int d = 0; d < slices; ++d) {
                int s = 0, n = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const int c = cost[at(std::clamp(x + k, 0, w - 1), y, d)];
                    if (c == kNoCost) continue;
                    s += c;
                    ++n;
                }
                hsum[at(x, y, d)] = s;
                hcount[at(x, y, d)] = n;
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int d = 0; d < slices; ++d) {
                int s = 0, n = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const std::size_t i = at(x, std::clamp(y + k, 0, h - 1), d);
                    s += hsum[i];
                    n += hcount[i];
                }
                out[at(x, y, d)] = n > 0 ? static_cast<double>(s) / n : fallback;
            }
        }
    }
    return out;
}

/// Vertex offset of the parabola through (-1,c_minus), (0,c0), (1,c_plus).
inline double parabola_offset(double c_minus, double c0, double c_plus) {
    const double denom = c_minus - 2.0 * c0 + c_plus;
    if (denom <= 0.0) return 0.0;
    return std::clamp((c_minus - c_plus) / (2.0 * denom), -0.5, 0.5);
}

}  // namespace detail

inline MatchResult match_stereo(const Image& left, const Image& right, const MatcherConfig& cfg) {
    cfg.validate();
    require_same_size(left.width, left.height, right.width, right.height, "compute_disparity");
    const int w = left.width, h = left.height, slices = cfg.max_disparity + 1;
    const CensusMap cl = census_transform(left, cfg.census_window);
    const CensusMap cr = census_transform(right, cfg.census_window);
    const double worst = static_cast<double>(cl.bit_count());

    std::vector<int> cost(static_cast<std::size_t>(w) * h * slices);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int d = 0; d < slices; ++d) {
                cost[(static_cast<std::size_t>(y) * w + x) * slices + d] = x - d >= 0 ? hamming(cl, x, y, cr, x - d, y) : detail::kNoCost;
            }
        }
    }
    const std::vector<double> agg = detail::box_aggregate(cost, w, h, slices, cfg.aggregation_window / 2, worst);
    auto agg_at = [&](int x, int y, int d) { return agg[(static_cast<std::size_t>(y) * w + x) * slices + d]; };

    MatchResult result{DisparityMap(w, h), DisparityMap(w, h), DisparityMap(w, h)};
    // Winner pinned to the left frame edge. No subpixel fit there, so the LR
    // check for these pixels asks for exact agreement; anything looser lets
    // the out-of-view band next to the border through.
    std::vector<std::uint8_t> edge_pinned(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int top = std::min(cfg.max_disparity, x);
            int best = 0;
            for (int d = 1; d <= top; ++d) {
                if (agg_at(x, y, d) < agg_at(x, y, best)) best = d;
            }
            if (best == top && top < cfg.max_disparity) edge_pinned[static_cast<std::size_t>(y) * w + x] = 1;
            double refined = best;
            if (best > 0 && best < top) {
                refined += detail::parabola_offset(agg_at(x, y, best - 1), agg_at(x, y, best), agg_at(x, y, best + 1));
            }
            result.left_unchecked.set(x, y, refined);

            // Right view: the right pixel xr matches left pixel xr + d.
            const int xr = x;
            const int top_r = std::min(cfg.max_disparity, w - 1 - xr);
            int best_r = 0;
            for (int d = 1; d <= top_r; ++d) {
                if (agg_at(xr + d, y, d) < agg_at(xr + best_r, y, best_r)) best_r = d;
            }
            result.right.set(xr, y, best_r);
        }
    }

    result.left = result.left_unchecked;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = result.left_unchecked.at(x, y);
            const int xr = static_cast<int>(std::lround(x - d));
            const double tol = edge_pinned[static_cast<std::size_t>(y) * w + x] ? 0.0 : cfg.lr_threshold;
            if (xr < 0 || xr >= w || std::abs(d - result.right.at(xr, y)) > tol) {
                result.left.invalidate(x, y);
            }
        }
    }
    return result;
}

/// Left-referenced disparity; pixels failing the LR check are invalid.
inline DisparityMap compute_disparity(const Image& left, const Image& right, const MatcherConfig& cfg) {
    return match_stereo(left, right, cfg).left;
}

}  // namespace distill::teacher
