#pragma once

// Pseudo ground truth: teacher disparity gated by a thresholded confidence map.

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "distill/confidence/confidence.hpp"
#include "distill/imageio/pfm.hpp"
#include "distill/imageio/pnm.hpp"

namespace distill::pseudogt {

struct PseudoLabel {
    DisparityMap disparity;           // teacher disparity, unchanged
    std::vector<std::uint8_t> mask;   // 1 = supervise this pixel
    double tau = 0.0;
    double density = 0.0;             // kept pixels / all pixels

    std::size_t kept() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

/// M(p) = 1 iff C(p) >= tau and d(p) is valid.
inline PseudoLabel apply_threshold(const DisparityMap& d, const confidence::ConfidenceMap& c, double tau) {
    require_same_size(d.width, d.height, c.width, c.height, "apply_threshold");
    if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("apply_threshold: tau must be in [0,1]");
    PseudoLabel out{d, std::vector<std::uint8_t>(d.pixels(), 0), tau, 0.0};
    std::size_t kept = 0;
    for (std::size_t i = 0; i < d.pixels(); ++i) {
        if (d.valid[i] && c.data[i] >= tau) {
            out.mask[i] = 1;
            ++kept;
        }
    }
    out.density = d.pixels() ? static_cast<double>(kept) / static_cast<double>(d.pixels()) : 0.0;
    return out;
}

/// Sum of |D~ - gt| and count over kept pixels with valid gt.
struct ErrorSum {
    double total = 0.0;
    std::size_t count = 0;
    double mean() const { return count ? total / static_cast<double>(count) : std::nan(""); }
};

inline ErrorSum kept_error(const PseudoLabel& label, const DisparityMap& gt) {
    require_same_size(label.disparity.width, label.disparity.height, gt.width, gt.height, "kept_error");
    ErrorSum e;
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        if (!label.mask[i] || !gt.valid[i]) continue;
        e.total += std::abs(label.disparity.value[i] - gt.value[i]);
        ++e.count;
    }
    return e;
}

/// Directory name for a threshold, e.g. 0.3 -> "0.30".
inline std::string tau_dir_name(double tau) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", tau);
    return buf;
}

inline void write_pseudo_label(const std::filesystem::path& dir, const PseudoLabel& label) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    write_pfm(dir / "pgt.pfm", label.disparity.to_float_map());
    PnmData mask{label.disparity.width, label.disparity.height, 1, std::vector<std::uint8_t>(label.mask.size())};
    for (std::size_t i = 0; i < mask.bytes.size(); ++i) mask.bytes[i] = label.mask[i] ? 255 : 0;
    write_pnm_raw(dir / "mask.pgm", mask);
}

inline PseudoLabel read_pseudo_label(const std::filesystem::path& dir, double tau) {
    PseudoLabel out;
    out.disparity = DisparityMap::from_float_map(read_pfm(dir / "pgt.pfm"));
    const PnmData mask = read_pnm_raw(dir / "mask.pgm");
    require_same_size(mask.width, mask.height, out.disparity.width, out.disparity.height, "read_pseudo_label");
    out.mask.resize(mask.bytes.size());
    for (std::size_t i = 0; i < mask.bytes.size(); ++i) out.mask[i] = (mask.bytes[i] && out.disparity.valid[i]) ? 1 : 0;
    out.tau = tau;
    out.density = static_cast<double>(out.kept()) / static_cast<double>(out.mask.size());
    return out;
}

}  // namespace distill::pseudogt
