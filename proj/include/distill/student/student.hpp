#pragma once

// Monocular encoder-decoder: conv/BN/relu stages with index-memorizing max
// pooling, a mirrored decoder that unpools with those indices, and either a
// sigmoid disparity head or a K-class segmentation head.

#include <iostream>
#include <limits>
#include <numeric>

#include "distill/eval/metrics.hpp"
#include "distill/numerics/adam.hpp"
#include "distill/numerics/losses.hpp"
#include "distill/numerics/network.hpp"
#include "distill/pseudogt/pseudogt.hpp"
#include "distill/scenegen/scene.hpp"
#include "distill/teacher/depth.hpp"

namespace distill::student {

struct StudentConfig {
    int width = 64;
    int height = 64;
    std::vector<std::size_t> channels{16, 32, 64};
    double max_disparity = 16.0;  // head output 1.0 maps to this many pixels
    int epochs = 30;
    std::size_t batch_size = 4;
    double lr = 1e-3;
    std::uint64_t seed = 1;

    void validate() const {
        if (channels.empty()) throw InvalidArgument("student.channels must not be empty");
        for (auto c : channels) {
            if (c == 0) throw InvalidArgument("student.channels must be positive");
        }
        const int m = 1 << channels.size();
        if (width < m || height < m || width % m != 0 || height % m != 0) {
            throw InvalidArgument("student input " + std::to_string(width) + "x" + std::to_string(height) +
                                  " must be a positive multiple of " + std::to_string(m));
        }
        if (!(max_disparity > 0.0)) throw InvalidArgument("student.max_disparity must be > 0");
        if (epochs < 0) throw InvalidArgument("student.epochs must be >= 0");
        if (batch_size < 1) throw InvalidArgument("student.batch_size must be >= 1");
        if (!(lr > 0.0)) throw InvalidArgument("student.lr must be > 0");
    }
};

/// Encoder and decoder without a head; ends with channels[0] features.
inline std::vector<nn::LayerSpec> trunk_layers(const StudentConfig& cfg) {
    cfg.validate();
    using namespace nn;
    std::vector<LayerSpec> layers;
    auto block = [&](const std::string& name, std::size_t in, std::size_t out) {
        layers.push_back(conv3x3_layer(name + ".conv", in, out));
        layers.push_back(batchnorm_layer(name + ".bn", out));
        layers.push_back(relu_layer(out));
    };
    std::vector<int> pools;
    std::size_t in = 3;
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
        const std::string stage = "enc" + std::to_string(s + 1);
        block(stage + "a", in, cfg.channels[s]);
        block(stage + "b", cfg.channels[s], cfg.channels[s]);
        pools.push_back(static_cast<int>(layers.size()));
        layers.push_back(maxpool_layer(stage + ".pool", cfg.channels[s]));
        in = cfg.channels[s];
    }
    for (std::size_t s = cfg.channels.size(); s-- > 0;) {
        const std::string stage = "dec" + std::to_string(s + 1);
        const std::size_t out = s > 0 ? cfg.channels[s - 1] : cfg.channels[0];
        layers.push_back(unpool_layer(stage + ".unpool", cfg.channels[s], pools[s]));
        block(stage + "a", cfg.channels[s], cfg.channels[s]);
        block(stage + "b", cfg.channels[s], out);
    }
    return layers;
}

inline std::vector<nn::LayerSpec> student_layers(const StudentConfig& cfg) {
    auto layers = trunk_layers(cfg);
    layers.push_back(nn::conv3x3_layer("head", cfg.channels[0], 1));
    layers.push_back(nn::sigmoid_layer(1));
    return layers;
}

/// Same trunk (same tensor names) with K-class logits instead of disparity.
inline std::vector<nn::LayerSpec> segmentation_layers(const StudentConfig& cfg, std::size_t num_classes) {
    if (num_classes < 2) throw InvalidArgument("segmentation: num_classes must be >= 2");
    auto layers = trunk_layers(cfg);
    layers.push_back(nn::conv3x3_layer("seg_head", cfg.channels[0], num_classes));
    return layers;
}

inline nn::Network build_student(const StudentConfig& cfg) {
    return nn::Network(student_layers(cfg), derive_seed(cfg.seed, 0x57d));
}

/// [N,3,H,W] batch from RGB images of the configured size.
inline nn::Tensor image_batch(const std::vector<const Image*>& images, const StudentConfig& cfg) {
    const auto h = static_cast<std::size_t>(cfg.height), w = static_cast<std::size_t>(cfg.width);
    std::vector<double> data(images.size() * 3 * h * w);
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Image& img = *images[b];
        if (img.width != cfg.width || img.height != cfg.height || img.channels != 3) {
            throw ShapeError("student: expected " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height) +
                             " RGB input, got " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                             "x" + std::to_string(img.channels));
        }
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < h * w; ++p) data[((b * 3 + c) * h * w) + p] = img.data[p * 3 + c];
        }
    }
    return nn::Tensor({images.size(), 3, h, w}, std::move(data));
}

struct TrainSample {
    const Image* left = nullptr;
    const pseudogt::PseudoLabel* label = nullptr;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN without validation data
};

struct TrainResult {
    nn::Network net;            // best epoch by validation loss (last epoch without validation data)
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    std::size_t rejected = 0;   // samples dropped for an empty mask
};

namespace detail {

struct Targets {
    nn::Tensor target;  // normalized disparity [N,1,H,W]
    nn::Tensor mask;    // [N,1,H,W]
};

inline Targets target_batch(const std::vector<const pseudogt::PseudoLabel*>& labels, const StudentConfig& cfg) {
    const auto hw = static_cast<std::size_t>(cfg.width) * cfg.height;
    std::vector<double> t(labels.size() * hw, 0.0), m(labels.size() * hw, 0.0);
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto& l = *labels[b];
        require_same_size(l.disparity.width, l.disparity.height, cfg.width, cfg.height, "student target");
        for (std::size_t p = 0; p < hw; ++p) {
            if (!l.mask[p]) continue;
            t[b * hw + p] = l.disparity.value[p] / cfg.max_disparity;
            m[b * hw + p] = 1.0;
        }
    }
    const nn::Shape shape{labels.size(), 1, static_cast<std::size_t>(cfg.height), static_cast<std::size_t>(cfg.width)};
    return {nn::Tensor(shape, std::move(t)), nn::Tensor(shape, std::move(m))};
}

inline double masked_loss_over(nn::Network& net, const std::vector<TrainSample>& samples, const StudentConfig& cfg) {
    nn::NoGradGuard guard;
    double total = 0.0, weight = 0.0;
    for (const auto& s : samples) {
        const auto targets = target_batch({s.label}, cfg);
        const double kept = static_cast<double>(s.label->kept());
        total += nn::masked_l1_loss(net.forward(image_batch({s.left}, cfg), nn::Mode::Eval), targets.target,
                                    targets.mask).item() * kept;
        weight += kept;
    }
    return total / weight;
}

inline std::vector<TrainSample> drop_empty(const std::vector<TrainSample>& in, std::size_t& rejected,
                                           const char* what) {
    std::vector<TrainSample> out;
    for (const auto& s : in) {
        if (s.label->kept() == 0) {
            ++rejected;
            std::cerr << "warning: " << what << " sample with an empty confidence mask skipped\n";
            continue;
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace detail

/// Masked L1 on normalized disparity with Adam. Keeps the parameters of the
/// epoch with the lowest validation loss (validation loss is the same masked
/// loss against the validation samples' pseudo labels).
inline TrainResult train_student(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                                 const StudentConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw InvalidArgument("train_student: empty training set");
    TrainResult result{build_student(cfg), {}, -1, 0};
    const auto kept_train = detail::drop_empty(train, result.rejected, "training");
    const auto kept_val = detail::drop_empty(val, result.rejected, "validation");
    if (kept_train.empty()) throw InvalidArgument("train_student: every training sample has an empty mask");

    nn::AdamState adam;
    adam.config.lr = cfg.lr;
    nn::Network& net = result.net;
    std::vector<nn::Tensor> params = net.parameters();
    std::vector<std::size_t> order(kept_train.size());
    double best = std::numeric_limits<double>::infinity();
    nn::Network best_net = net.clone();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0x5e9000ULL + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Image*> images;
            std::vector<const pseudogt::PseudoLabel*> labels;
            for (std::size_t k = start; k < end; ++k) {
                images.push_back(kept_train[order[k]].left);
                labels.push_back(kept_train[order[k]].label);
            }
            const auto targets = detail::target_batch(labels, cfg);
            net.zero_grad();
            const nn::Tensor loss = nn::masked_l1_loss(net.forward(image_batch(images, cfg), nn::Mode::Train),
                                                       targets.target, targets.mask);
            nn::backward(loss);
            nn::adam_step(params, adam);
            total += loss.item();
            ++batches;
        }
        EpochRecord rec{epoch + 1, total / static_cast<double>(batches), std::nan("")};
        if (!kept_val.empty()) {
            rec.val_loss = detail::masked_loss_over(net, kept_val, cfg);
            if (rec.val_loss < best) {
                best = rec.val_loss;
                best_net = net.clone();
                result.best_epoch = rec.epoch;
            }
        }
        result.history.push_back(rec);
    }
    if (kept_val.empty() || result.best_epoch < 0) {
        result.best_epoch = cfg.epochs;
    } else {
        result.net = std::move(best_net);
    }
    return result;
}

inline std::string loss_tsv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch\ttrain_loss\tval_loss\n";
    char buf[96];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d\t%.9f\t%.9f\n", r.epoch, r.train_loss, r.val_loss);
        out += buf;
    }
    return out;
}

/// Network output denormalized to pixels; every pixel is valid.
inline DisparityMap predict_disparity(nn::Network& net, const Image& left, const StudentConfig& cfg) {
    nn::NoGradGuard guard;
    const nn::Tensor out = net.forward(image_batch({&left}, cfg), nn::Mode::Eval);
    DisparityMap d(cfg.width, cfg.height);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
        d.value[i] = out[i] * cfg.max_disparity;
        d.valid[i] = 1;
    }
    return d;
}

/// Depth in meters, capped; every pixel lies in (0, depth_cap].
inline FloatMap predict_depth(nn::Network& net, const Image& left, const StudentConfig& cfg,
                              const scene::CameraModel& cam) {
    return teacher::disparity_to_depth(predict_disparity(net, left, cfg), cam);
}

// ---------------------------------------------------------------------------
// Segmentation transfer

enum class SegInit { Scratch, DepthPretrained };

struct SegConfig {
    std::size_t num_classes = 3;
    int epochs = 20;
    std::size_t batch_size = 4;
    double lr = 1e-3;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_classes < 2) throw InvalidArgument("seg.num_classes must be >= 2");
        if (epochs < 0) throw InvalidArgument("seg.epochs must be >= 0");
        if (batch_size < 1) throw InvalidArgument("seg.batch_size must be >= 1");
        if (!(lr > 0.0)) throw InvalidArgument("seg.lr must be > 0");
    }
};

struct SegSample {
    const Image* image = nullptr;
    const std::vector<std::uint8_t>* labels = nullptr;
};

struct SegResult {
    nn::Network net;
    double mean_iou = 0.0;  // on the evaluation samples
    std::vector<double> epoch_loss;
};

inline std::vector<int> predict_labels(nn::Network& net, const Image& img, const StudentConfig& arch,
                                       std::size_t num_classes) {
    nn::NoGradGuard guard;
    const nn::Tensor logits = net.forward(image_batch({&img}, arch), nn::Mode::Eval);
    const std::size_t hw = static_cast<std::size_t>(arch.width) * arch.height;
    std::vector<int> out(hw, 0);
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t k = 1; k < num_classes; ++k) {
            if (logits[k * hw + p] > logits[static_cast<std::size_t>(out[p]) * hw + p]) out[p] = static_cast<int>(k);
        }
    }
    return out;
}

/// Fine-tunes the whole network with softmax cross-entropy. With
/// DepthPretrained every trunk tensor (including batch-norm statistics) is
/// copied from `pretrained`; the head always starts fresh.
inline SegResult transfer_train_segmentation(const std::vector<SegSample>& train, const std::vector<SegSample>& eval,
                                             SegInit init, const std::vector<nn::NamedTensor>& pretrained,
                                             const StudentConfig& arch, const SegConfig& cfg) {
    cfg.validate();
    if (train.empty() || eval.empty()) throw InvalidArgument("transfer_train_segmentation: empty dataset");
    const auto check_labels = [&](const std::vector<SegSample>& set) {
        for (const auto& s : set) {
            for (auto l : *s.labels) {
                if (l >= cfg.num_classes) {
                    throw InvalidArgument("transfer_train_segmentation: label " + std::to_string(l) +
                                          " outside num_classes " + std::to_string(cfg.num_classes));
                }
            }
        }
    };
    check_labels(train);
    check_labels(eval);

    SegResult result{nn::Network(segmentation_layers(arch, cfg.num_classes), derive_seed(cfg.seed, 0x5e6)), 0.0, {}};
    if (init == SegInit::DepthPretrained) {
        if (pretrained.empty()) throw InvalidArgument("transfer_train_segmentation: no pretrained weights");
        result.net.load_state(pretrained, false);
    }
    nn::AdamState adam;
    adam.config.lr = cfg.lr;
    std::vector<nn::Tensor> params = result.net.parameters();
    std::vector<std::size_t> order(train.size());
    const std::size_t hw = static_cast<std::size_t>(arch.width) * arch.height;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0x5e9e0000ULL + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Image*> images;
            std::vector<int> labels;
            for (std::size_t k = start; k < end; ++k) {
                images.push_back(train[order[k]].image);
                const auto& l = *train[order[k]].labels;
                if (l.size() != hw) throw ShapeError("transfer_train_segmentation: label map size mismatch");
                labels.insert(labels.end(), l.begin(), l.end());
            }
            result.net.zero_grad();
            const nn::Tensor loss =
                nn::softmax_cross_entropy(result.net.forward(image_batch(images, arch), nn::Mode::Train), labels);
            nn::backward(loss);
            nn::adam_step(params, adam);
            total += loss.item();
            ++batches;
        }
        result.epoch_loss.push_back(total / static_cast<double>(batches));
    }

    // IoU over the pooled evaluation pixels.
    std::vector<int> pred_all, gt_all;
    for (const auto& s : eval) {
        const auto pred = predict_labels(result.net, *s.image, arch, cfg.num_classes);
        pred_all.insert(pred_all.end(), pred.begin(), pred.end());
        gt_all.insert(gt_all.end(), s.labels->begin(), s.labels->end());
    }
    result.mean_iou = eval::mean_iou(pred_all, gt_all, static_cast<int>(cfg.num_classes));
    return result;
}

}  // namespace distill::student
