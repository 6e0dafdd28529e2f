#pragma once

// Multi-scale data ensemble: match at several image scales, resample every
// map to a common fusion resolution and average the valid estimates.

#include "distill/imageio/resize.hpp"
#include "distill/parallel.hpp"
#include "distill/teacher/matcher.hpp"

namespace distill::teacher {

enum class FuseAt { Smallest, Full };

struct EnsembleConfig {
    std::vector<double> scales{1.0, 0.75, 0.5};
    FuseAt fuse_at = FuseAt::Smallest;

    void validate() const {
        if (scales.empty()) throw InvalidArgument("ensemble.scales must not be empty");
        bool has_one = false;
        for (std::size_t i = 0; i < scales.size(); ++i) {
            if (!(scales[i] > 0.0 && scales[i] <= 1.0)) throw InvalidArgument("ensemble.scales must lie in (0,1]");
            if (i > 0 && scales[i] >= scales[i - 1]) throw InvalidArgument("ensemble.scales must be sorted descending");
            has_one = has_one || scales[i] == 1.0;
        }
        if (!has_one) throw InvalidArgument("ensemble.scales must contain 1.0");
    }
};

/// Per-pixel mean over the maps valid at that pixel; invalid only where every
/// map is invalid. All maps must share one size.
inline DisparityMap fuse_valid_mean(const std::vector<DisparityMap>& maps) {
    if (maps.empty()) throw InvalidArgument("fuse_valid_mean: no maps");
    DisparityMap out(maps.front().width, maps.front().height);
    for (std::size_t i = 0; i < out.pixels(); ++i) {
        double sum = 0.0;
        int n = 0;
        for (const auto& m : maps) {
            require_same_size(m.width, m.height, out.width, out.height, "fuse_valid_mean");
            if (!m.valid[i]) continue;
            sum += m.value[i];
            ++n;
        }
        if (n > 0) {
            out.value[i] = sum / n;
            out.valid[i] = 1;
        }
    }
    return out;
}

inline DisparityMap ensemble_predict(const Image& left, const Image& right, const MatcherConfig& cfg,
                                     const EnsembleConfig& ens) {
    cfg.validate();
    ens.validate();
    require_same_size(left.width, left.height, right.width, right.height, "ensemble_predict");
    const std::size_t n = ens.scales.size();
    std::vector<DisparityMap> per_scale(n);
    parallel_for(n, [&](std::size_t k) {
        const double s = ens.scales[k];
        if (s == 1.0) {
            per_scale[k] = compute_disparity(left, right, cfg);
            return;
        }
        const int sw = std::max(1, static_cast<int>(std::lround(left.width * s)));
        const int sh = std::max(1, static_cast<int>(std::lround(left.height * s)));
        MatcherConfig scaled = cfg;
        scaled.max_disparity = std::max(1, static_cast<int>(std::ceil(cfg.max_disparity * s)));
        per_scale[k] = compute_disparity(resize_bilinear(left, sw, sh), resize_bilinear(right, sw, sh), scaled);
    });

    const DisparityMap& smallest = per_scale.back();
    const int fw = ens.fuse_at == FuseAt::Smallest ? smallest.width : left.width;
    const int fh = ens.fuse_at == FuseAt::Smallest ? smallest.height : left.height;
    std::vector<DisparityMap> aligned;
    aligned.reserve(n);
    for (const auto& m : per_scale) {
        aligned.push_back(m.width == fw && m.height == fh ? m : resize_bilinear(m, fw, fh));
    }
    DisparityMap fused = fuse_valid_mean(aligned);
    if (fw != left.width || fh != left.height) fused = resize_bilinear(fused, left.width, left.height);
    return fused;
}

}  // namespace distill::teacher
