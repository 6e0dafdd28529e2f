#pragma once

// Depth error metrics and segmentation IoU.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "distill/imageio/image.hpp"

namespace distill::eval {

inline constexpr double kPredEpsilon = 1e-3;  // meters, floor applied to predictions

struct MetricsReport {
    double rmse_lin = 0.0;
    double rmse_log = 0.0;
    double abs_rel = 0.0;
    double sqr_rel = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    double depth_cap = 0.0;
    std::size_t n_pixels = 0;

    bool operator==(const MetricsReport&) const = default;
};

/// Depth metrics over pixels where gt is valid and gt <= cap. Predictions are
/// clamped to [kPredEpsilon, cap] first. Logs are natural.
inline MetricsReport compute_metrics(const FloatMap& pred, const FloatMap& gt, double cap) {
    require_same_size(pred.width, pred.height, gt.width, gt.height, "compute_metrics");
    if (!(cap > 0.0)) throw InvalidArgument("compute_metrics: cap must be > 0");
    double se = 0.0, sle = 0.0, ar = 0.0, sr = 0.0;
    std::size_t n = 0, d1 = 0, d2 = 0, d3 = 0;
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        const double d = gt.data[i];
        if (!FloatMap::is_valid(d) || d > cap) continue;
        const double u = std::clamp(pred.data[i], kPredEpsilon, cap);
        const double diff = d - u;
        const double ldiff = std::log(d) - std::log(u);
        se += diff * diff;
        sle += ldiff * ldiff;
        ar += std::abs(diff) / d;
        sr += diff * diff / d;
        const double ratio = std::max(d / u, u / d);
        d1 += ratio < 1.25;
        d2 += ratio < 1.25 * 1.25;
        d3 += ratio < 1.25 * 1.25 * 1.25;
        ++n;
    }
    if (n == 0) throw InvalidArgument("compute_metrics: no valid ground-truth pixels under the cap");
    const double nn = static_cast<double>(n);
    return {std::sqrt(se / nn), std::sqrt(sle / nn), ar / nn, sr / nn,
            d1 / nn, d2 / nn, d3 / nn, cap, n};
}

/// Pixel-weighted mean of several reports (same cap), i.e. metrics over the
/// union of their pixels.
inline MetricsReport pool_reports(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw InvalidArgument("pool_reports: no reports");
    MetricsReport out;
    out.depth_cap = reports.front().depth_cap;
    double se = 0.0, sle = 0.0;
    for (const auto& r : reports) {
        if (r.depth_cap != out.depth_cap) throw InvalidArgument("pool_reports: depth caps differ");
        const double w = static_cast<double>(r.n_pixels);
        se += r.rmse_lin * r.rmse_lin * w;
        sle += r.rmse_log * r.rmse_log * w;
        out.abs_rel += r.abs_rel * w;
        out.sqr_rel += r.sqr_rel * w;
        out.delta1 += r.delta1 * w;
        out.delta2 += r.delta2 * w;
        out.delta3 += r.delta3 * w;
        out.n_pixels += r.n_pixels;
    }
    const double n = static_cast<double>(out.n_pixels);
    out.rmse_lin = std::sqrt(se / n);
    out.rmse_log = std::sqrt(sle / n);
    out.abs_rel /= n;
    out.sqr_rel /= n;
    out.delta1 /= n;
    out.delta2 /= n;
    out.delta3 /= n;
    return out;
}

/// Mean intersection-over-union over classes present in pred or gt.
inline double mean_iou(std::span<const int> pred, std::span<const int> gt, int num_classes) {
    if (pred.size() != gt.size()) throw ShapeError("mean_iou: label maps differ in size");
    if (num_classes < 1) throw InvalidArgument("mean_iou: num_classes must be >= 1");
    std::vector<std::size_t> inter(static_cast<std::size_t>(num_classes)), uni(inter.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const int p = pred[i], g = gt[i];
        if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
            throw InvalidArgument("mean_iou: label out of range [0," + std::to_string(num_classes) + ")");
        }
        if (p == g) {
            ++inter[static_cast<std::size_t>(p)];
            ++uni[static_cast<std::size_t>(p)];
        } else {
            ++uni[static_cast<std::size_t>(p)];
            ++uni[static_cast<std::size_t>(g)];
        }
    }
    double total = 0.0;
    int present = 0;
    for (std::size_t k = 0; k < inter.size(); ++k) {
        if (uni[k] == 0) continue;
        total += static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
        ++present;
    }
    if (present == 0) throw InvalidArgument("mean_iou: no classes present");
    return total / present;
}

struct MetricDelta {
    std::string name;
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0;  // a - b
    bool higher_is_better = false;
    bool a_better() const { return higher_is_better ? a > b : a < b; }
};

inline std::array<std::string, 7> metric_names() {
    return {"rmse_lin", "rmse_log", "abs_rel", "sqr_rel", "delta1", "delta2", "delta3"};
}

inline std::array<double, 7> metric_values(const MetricsReport& r) {
    return {r.rmse_lin, r.rmse_log, r.abs_rel, r.sqr_rel, r.delta1, r.delta2, r.delta3};
}

/// Per-metric comparison in table order; the error metrics are lower-is-better,
/// the delta shares higher-is-better.
inline std::vector<MetricDelta> compare_reports(const MetricsReport& a, const MetricsReport& b) {
    if (a.depth_cap != b.depth_cap) throw InvalidArgument("compare_reports: depth caps differ");
    const auto names = metric_names();
    const auto va = metric_values(a), vb = metric_values(b);
    std::vector<MetricDelta> out;
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], va[i], vb[i], va[i] - vb[i], i >= 4});
    return out;
}

inline std::string metrics_tsv_header() {
    return "model\trmse_lin\trmse_log\tabs_rel\tsqr_rel\tdelta1\tdelta2\tdelta3\n";
}

inline std::string metrics_tsv_row(const std::string& model, const MetricsReport& r) {
    std::string row = model;
    char buf[32];
    for (double v : metric_values(r)) {
        std::snprintf(buf, sizeof buf, "\t%.6f", v);
        row += buf;
    }
    return row + "\n";
}

}  // namespace distill::eval
