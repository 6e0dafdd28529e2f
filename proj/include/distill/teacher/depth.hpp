#pragma once

#include "distill/imageio/image.hpp"
#include "distill/scenegen/scene.hpp"

namespace distill::teacher {

/// depth = f*B / d, clamped to the camera's depth cap. Invalid disparities
/// stay invalid (kInvalidValue).
inline FloatMap disparity_to_depth(const DisparityMap& d, const scene::CameraModel& cam) {
    cam.validate();
    const double fb = cam.focal_baseline();
    FloatMap out(d.width, d.height, kInvalidValue);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
        if (!d.valid[i]) continue;
        out.data[i] = d.value[i] * cam.depth_cap > fb ? fb / d.value[i] : cam.depth_cap;
    }
    return out;
}

}  // namespace distill::teacher
