#pragma once

// Patch-based confidence for disparity maps: a small fully convolutional net
// whose receptive field is exactly one patch, its training labels, and a
// left-right consistency baseline.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "distill/imageio/image.hpp"
#include "distill/numerics/adam.hpp"
#include "distill/numerics/losses.hpp"
#include "distill/numerics/network.hpp"
#include "distill/parallel.hpp"

namespace distill::confidence {

/// C(p) in [0,1]; zero on the border band and at invalid disparities.
using ConfidenceMap = FloatMap;

inline constexpr double kGoodThreshold = 3.0;  // pixels

/// Per-pixel training labels: 1 good, 0 bad, nn::kIgnoreLabel excluded.
struct ConfidenceLabels {
    int width = 0, height = 0;
    std::vector<int> label;
};

/// Label 1 iff |pred - gt| < 3 px; pixels where either map is invalid are excluded.
inline ConfidenceLabels gt_confidence(const DisparityMap& pred, const DisparityMap& gt) {
    require_same_size(pred.width, pred.height, gt.width, gt.height, "gt_confidence");
    ConfidenceLabels out{pred.width, pred.height, std::vector<int>(pred.pixels(), nn::kIgnoreLabel)};
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
        if (!pred.valid[i] || !gt.valid[i]) continue;
        out.label[i] = std::abs(pred.value[i] - gt.value[i]) < kGoodThreshold ? 1 : 0;
    }
    return out;
}

struct ConfidenceNetConfig {
    int patch_size = 9;
    std::size_t channels = 16;
    int epochs = 100;
    double lr = 1e-3;
    int decay_every = 10;      // epochs
    double decay = 0.1;
    std::size_t batch_size = 64;
    std::size_t patches_per_epoch = 1024;
    std::size_t probe_patches = 1024;
    double max_disparity = 16.0;  // normalization
    std::uint64_t seed = 1;

    int radius() const { return patch_size / 2; }
    int conv_layers() const { return (patch_size - 1) / 2; }

    void validate() const {
        if (patch_size < 3 || patch_size % 2 == 0) throw InvalidArgument("conf.patch_size must be odd and >= 3");
        if (channels < 1) throw InvalidArgument("conf.channels must be >= 1");
        if (epochs < 0) throw InvalidArgument("conf.epochs must be >= 0");
        if (!(lr > 0.0)) throw InvalidArgument("conf.lr must be > 0");
        if (decay_every < 1) throw InvalidArgument("conf.decay_every must be >= 1");
        if (!(decay > 0.0 && decay <= 1.0)) throw InvalidArgument("conf.decay must be in (0,1]");
        if (batch_size < 1) throw InvalidArgument("conf.batch_size must be >= 1");
        if (patches_per_epoch < 1) throw InvalidArgument("conf.patches_per_epoch must be >= 1");
        if (probe_patches < 1) throw InvalidArgument("conf.probe_patches must be >= 1");
        if (!(max_disparity > 0.0)) throw InvalidArgument("conf.max_disparity must be > 0");
    }
};

/// (patch_size-1)/2 unpadded 3x3 conv+relu blocks then a 1x1 projection to a
/// logit, so a patch maps to a single output and a full map maps densely.
inline std::vector<nn::LayerSpec> confidence_layers(const ConfidenceNetConfig& cfg) {
    cfg.validate();
    std::vector<nn::LayerSpec> layers;
    std::size_t in = 1;
    for (int k = 0; k < cfg.conv_layers(); ++k) {
        layers.push_back(nn::conv_layer("conf.conv" + std::to_string(k + 1), in, cfg.channels, 3));
        layers.push_back(nn::relu_layer(cfg.channels));
        in = cfg.channels;
    }
    layers.push_back(nn::linear_layer("conf.logit", in, 1));
    return layers;
}

inline nn::Network build_confidence_net(const ConfidenceNetConfig& cfg) {
    return nn::Network(confidence_layers(cfg), derive_seed(cfg.seed, 0xc0f));
}

/// Network input: disparity / max_disparity, invalid pixels as 0.
inline std::vector<double> normalized_disparity(const DisparityMap& d, double max_disparity) {
    std::vector<double> out(d.pixels(), 0.0);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
        if (d.valid[i]) out[i] = d.value[i] / max_disparity;
    }
    return out;
}

struct ConfidenceSample {
    DisparityMap disparity;
    ConfidenceLabels labels;
};

struct ConfidenceTrainResult {
    nn::Network net;
    double initial_loss = 0.0;        // probe loss before the first update
    std::vector<double> epoch_loss;   // probe loss after each epoch
};

namespace detail {

struct PatchRef {
    std::size_t sample;
    int x, y;
};

struct PatchBatch {
    nn::Tensor input;   // [B,1,P,P]
    nn::Tensor labels;  // [B,1,1,1]
};

inline PatchBatch gather_patches(const std::vector<std::vector<double>>& inputs,
                                 const std::vector<ConfidenceSample>& samples, std::span<const PatchRef> refs,
                                 int patch) {
    const int r = patch / 2;
    const std::size_t pp = static_cast<std::size_t>(patch) * patch;
    std::vector<double> data(refs.size() * pp), labels(refs.size());
    for (std::size_t b = 0; b < refs.size(); ++b) {
        const auto& ref = refs[b];
        const auto& s = samples[ref.sample];
        const int w = s.disparity.width;
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                data[b * pp + static_cast<std::size_t>((dy + r) * patch + dx + r)] =
                    inputs[ref.sample][static_cast<std::size_t>(ref.y + dy) * w + ref.x + dx];
            }
        }
        labels[b] = s.labels.label[static_cast<std::size_t>(ref.y) * w + ref.x];
    }
    const std::size_t n = refs.size();
    const auto p = static_cast<std::size_t>(patch);
    return {nn::Tensor({n, 1, p, p}, std::move(data)), nn::Tensor({n, 1, 1, 1}, std::move(labels))};
}

inline double probe_loss(nn::Network& net, const std::vector<std::vector<double>>& inputs,
                         const std::vector<ConfidenceSample>& samples, std::span<const PatchRef> probe,
                         const ConfidenceNetConfig& cfg) {
    nn::NoGradGuard guard;
    double total = 0.0;
    for (std::size_t start = 0; start < probe.size(); start += cfg.batch_size) {
        const auto chunk = probe.subspan(start, std::min(cfg.batch_size, probe.size() - start));
        const auto batch = gather_patches(inputs, samples, chunk, cfg.patch_size);
        total += nn::bce_with_sigmoid_loss(net.forward(batch.input, nn::Mode::Eval), batch.labels).item() *
                 static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(probe.size());
}

}  // namespace detail

/// BCE training on patches centred at labelled interior pixels. Each epoch
/// draws up to patches_per_epoch patches; lr decays by `decay` every
/// `decay_every` epochs.
inline ConfidenceTrainResult train_confidence_net(const std::vector<ConfidenceSample>& samples,
                                                  const ConfidenceNetConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw InvalidArgument("train_confidence_net: no samples");
    const int r = cfg.radius();
    std::vector<std::vector<double>> inputs;
    std::vector<detail::PatchRef> refs;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        require_same_size(s.disparity.width, s.disparity.height, s.labels.width, s.labels.height,
                          "train_confidence_net");
        inputs.push_back(normalized_disparity(s.disparity, cfg.max_disparity));
        for (int y = r; y < s.disparity.height - r; ++y) {
            for (int x = r; x < s.disparity.width - r; ++x) {
                if (s.labels.label[static_cast<std::size_t>(y) * s.disparity.width + x] != nn::kIgnoreLabel) {
                    refs.push_back({k, x, y});
                }
            }
        }
    }
    if (refs.empty()) throw InvalidArgument("train_confidence_net: no labelled pixels");

    ConfidenceTrainResult result{build_confidence_net(cfg), 0.0, {}};
    std::vector<detail::PatchRef> probe = refs;
    {
        Rng rng(derive_seed(cfg.seed, 0x9b0be));
        std::shuffle(probe.begin(), probe.end(), rng);
        probe.resize(std::min(probe.size(), cfg.probe_patches));
    }
    result.initial_loss = detail::probe_loss(result.net, inputs, samples, probe, cfg);

    nn::AdamState adam;
    adam.config.lr = cfg.lr;
    std::vector<nn::Tensor> params = result.net.parameters();
    std::vector<detail::PatchRef> order = refs;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        adam.config.lr = cfg.lr * std::pow(cfg.decay, epoch / cfg.decay_every);
        Rng rng(derive_seed(cfg.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t take = std::min(order.size(), cfg.patches_per_epoch);
        for (std::size_t start = 0; start < take; start += cfg.batch_size) {
            const auto chunk = std::span<const detail::PatchRef>(order).subspan(start, std::min(cfg.batch_size, take - start));
            const auto batch = detail::gather_patches(inputs, samples, chunk, cfg.patch_size);
            result.net.zero_grad();
            nn::backward(nn::bce_with_sigmoid_loss(result.net.forward(batch.input, nn::Mode::Train), batch.labels));
            nn::adam_step(params, adam);
        }
        result.epoch_loss.push_back(detail::probe_loss(result.net, inputs, samples, probe, cfg));
    }
    return result;
}

/// Dense inference: sigmoid of the logit at every interior pixel, zero on the
/// border band of width patch radius and at invalid disparities.
inline ConfidenceMap predict_confidence_map(nn::Network& net, const DisparityMap& d, const ConfidenceNetConfig& cfg) {
    cfg.validate();
    if (d.width < cfg.patch_size || d.height < cfg.patch_size) {
        throw InvalidArgument("predict_confidence_map: map " + std::to_string(d.width) + "x" +
                              std::to_string(d.height) + " smaller than patch " + std::to_string(cfg.patch_size));
    }
    const int r = cfg.radius();
    ConfidenceMap out(d.width, d.height, 0.0);
    if (d.valid_count() == 0) return out;
    nn::NoGradGuard guard;
    const nn::Tensor input({1, 1, static_cast<std::size_t>(d.height), static_cast<std::size_t>(d.width)},
                           normalized_disparity(d, cfg.max_disparity));
    const nn::Tensor logits = net.forward(input, nn::Mode::Eval);
    const int ow = d.width - 2 * r;
    for (int y = r; y < d.height - r; ++y) {
        for (int x = r; x < d.width - r; ++x) {
            if (!d.is_valid(x, y)) continue;
            out.at(x, y) = nn::sigmoid_scalar(logits[static_cast<std::size_t>(y - r) * ow + (x - r)]);
        }
    }
    return out;
}

/// Share of labelled interior pixels where (C >= 0.5) agrees with the label.
inline double confidence_accuracy(nn::Network& net, const std::vector<ConfidenceSample>& samples,
                                  const ConfidenceNetConfig& cfg) {
    std::size_t hits = 0, total = 0;
    const int r = cfg.radius();
    for (const auto& s : samples) {
        const ConfidenceMap c = predict_confidence_map(net, s.disparity, cfg);
        for (int y = r; y < s.disparity.height - r; ++y) {
            for (int x = r; x < s.disparity.width - r; ++x) {
                const int label = s.labels.label[static_cast<std::size_t>(y) * s.disparity.width + x];
                if (label == nn::kIgnoreLabel) continue;
                hits += (c.at(x, y) >= 0.5) == (label == 1);
                ++total;
            }
        }
    }
    if (total == 0) throw InvalidArgument("confidence_accuracy: no labelled interior pixels");
    return static_cast<double>(hits) / static_cast<double>(total);
}

/// exp(-|d_L(p) - d_R(p - d_L(p))|); 0 where d_L is invalid or projects outside
/// the right view or onto an invalid right pixel.
inline ConfidenceMap lrc_confidence_baseline(const DisparityMap& left, const DisparityMap& right) {
    require_same_size(left.width, left.height, right.width, right.height, "lrc_confidence_baseline");
    ConfidenceMap out(left.width, left.height, 0.0);
    for (int y = 0; y < left.height; ++y) {
        for (int x = 0; x < left.width; ++x) {
            if (!left.is_valid(x, y)) continue;
            const double d = left.at(x, y);
            const int xr = static_cast<int>(std::lround(x - d));
            if (xr < 0 || xr >= left.width || !right.is_valid(xr, y)) continue;
            out.at(x, y) = std::exp(-std::abs(d - right.at(xr, y)));
        }
    }
    return out;
}

/// Mean error of the retained pixels after dropping the lowest-confidence
/// fraction k/steps, for k = 0..steps-1. Ties keep the original pixel order.
inline std::vector<double> sparsification_curve(std::span<const double> errors, std::span<const double> conf,
                                                int steps = 20) {
    if (errors.size() != conf.size()) throw ShapeError("sparsification_curve: size mismatch");
    if (errors.empty()) throw InvalidArgument("sparsification_curve: no pixels");
    if (steps < 1) throw InvalidArgument("sparsification_curve: steps must be >= 1");
    std::vector<std::size_t> order(errors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
    std::vector<double> suffix(order.size() + 1, 0.0);
    for (std::size_t i = order.size(); i-- > 0;) suffix[i] = suffix[i + 1] + errors[order[i]];
    std::vector<double> curve;
    for (int k = 0; k < steps; ++k) {
        const std::size_t drop = order.size() * static_cast<std::size_t>(k) / static_cast<std::size_t>(steps);
        curve.push_back(suffix[drop] / static_cast<double>(order.size() - drop));
    }
    return curve;
}

}  // namespace distill::confidence
