#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "distill/numerics/batchnorm.hpp"
#include "distill/numerics/conv.hpp"
#include "distill/numerics/pooling.hpp"
#include "distill/rng.hpp"

namespace distill::nn {

enum class LayerKind { Conv3x3, Conv, BatchNorm, Relu, Sigmoid, MaxPool2x2, Unpool2x2, Linear };

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::Conv: return "conv";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::MaxPool2x2: return "maxpool2x2_indices";
        case LayerKind::Unpool2x2: return "unpool2x2";
        case LayerKind::Linear: return "linear";
    }
    return "?";
}

/// One layer of a sequential network.
///   conv3x3: 3x3, zero padding 1 (size preserving)
///   conv:    k x k, no padding
///   linear:  1x1 projection
/// Unpool layers name the maxpool layer (by index) whose argmax they reuse.
struct LayerSpec {
    LayerKind kind;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    int pool_ref = -1;
    std::string name;

    std::size_t padding() const { return kind == LayerKind::Conv3x3 ? 1 : 0; }
    bool has_weights() const {
        return kind == LayerKind::Conv3x3 || kind == LayerKind::Conv || kind == LayerKind::Linear;
    }
};

inline LayerSpec conv3x3_layer(std::string name, std::size_t in, std::size_t out) {
    return {LayerKind::Conv3x3, in, out, 3, -1, std::move(name)};
}
inline LayerSpec conv_layer(std::string name, std::size_t in, std::size_t out, std::size_t k) {
    return {LayerKind::Conv, in, out, k, -1, std::move(name)};
}
inline LayerSpec linear_layer(std::string name, std::size_t in, std::size_t out) {
    return {LayerKind::Linear, in, out, 1, -1, std::move(name)};
}
inline LayerSpec batchnorm_layer(std::string name, std::size_t channels) {
    return {LayerKind::BatchNorm, channels, channels, 0, -1, std::move(name)};
}
inline LayerSpec relu_layer(std::size_t channels) { return {LayerKind::Relu, channels, channels, 0, -1, "relu"}; }
inline LayerSpec sigmoid_layer(std::size_t channels) {
    return {LayerKind::Sigmoid, channels, channels, 0, -1, "sigmoid"};
}
inline LayerSpec maxpool_layer(std::string name, std::size_t channels) {
    return {LayerKind::MaxPool2x2, channels, channels, 0, -1, std::move(name)};
}
inline LayerSpec unpool_layer(std::string name, std::size_t channels, int pool_ref) {
    return {LayerKind::Unpool2x2, channels, channels, 0, pool_ref, std::move(name)};
}

/// Channel continuity, odd kernels, and one-to-one unpool/maxpool pairing.
inline void validate_layers(const std::vector<LayerSpec>& layers) {
    if (layers.empty()) throw InvalidArgument("network: no layers");
    std::map<int, int> pool_users;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + l.name + ")";
        if (l.in_channels == 0 || l.out_channels == 0) throw InvalidArgument(where + ": channels must be positive");
        if (i > 0 && layers[i - 1].out_channels != l.in_channels) {
            throw ShapeError(where + ": expects " + std::to_string(l.in_channels) + " channels, previous layer gives " +
                             std::to_string(layers[i - 1].out_channels));
        }
        if (l.has_weights() && l.kernel % 2 == 0) throw InvalidArgument(where + ": kernel must be odd");
        if (!l.has_weights() && l.in_channels != l.out_channels) {
            throw ShapeError(where + ": " + to_string(l.kind) + " cannot change channel count");
        }
        if (l.kind == LayerKind::Unpool2x2) {
            if (l.pool_ref < 0 || static_cast<std::size_t>(l.pool_ref) >= i ||
                layers[static_cast<std::size_t>(l.pool_ref)].kind != LayerKind::MaxPool2x2) {
                throw InvalidArgument(where + ": unpool must reference an earlier maxpool layer");
            }
            if (layers[static_cast<std::size_t>(l.pool_ref)].in_channels != l.in_channels) {
                throw ShapeError(where + ": channel count differs from its paired maxpool");
            }
            if (++pool_users[l.pool_ref] > 1) {
                throw InvalidArgument(where + ": maxpool layer " + std::to_string(l.pool_ref) +
                                      " already paired with another unpool");
            }
        }
    }
}

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

enum class Mode { Train, Eval };

/// Sequential network over a validated layer list. Owns the trainable
/// parameters and the batch-norm running statistics.
class Network {
public:
    Network() = default;

    Network(std::vector<LayerSpec> layers, std::uint64_t seed) : layers_(std::move(layers)) {
        validate_layers(layers_);
        Rng rng(seed);
        slots_.resize(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            Slot& s = slots_[i];
            if (l.has_weights()) {
                const std::size_t fan_in = l.in_channels * l.kernel * l.kernel;
                const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
                std::vector<double> w(l.out_channels * fan_in);
                for (double& v : w) v = uniform(rng, -bound, bound);
                s.weight = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel}, std::move(w), true);
                s.bias = Tensor::zeros({l.out_channels}, true);
            } else if (l.kind == LayerKind::BatchNorm) {
                s.weight = Tensor::full({l.out_channels}, 1.0, true);
                s.bias = Tensor::zeros({l.out_channels}, true);
                s.stats = BatchNormStats::create(l.out_channels);
            }
        }
    }

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::size_t in_channels() const { return layers_.front().in_channels; }
    std::size_t out_channels() const { return layers_.back().out_channels; }

    Tensor forward(const Tensor& input, Mode mode) {
        if (input.rank() != 4 || input.dim(1) != in_channels()) {
            throw ShapeError("network: expected input [N," + std::to_string(in_channels()) + ",H,W], got " +
                             to_string(input.shape()));
        }
        std::map<std::size_t, PoolIndices> pools;
        Tensor x = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            Slot& s = slots_[i];
            switch (l.kind) {
                case LayerKind::Conv3x3:
                case LayerKind::Conv:
                case LayerKind::Linear: x = conv2d(x, s.weight, s.bias, l.padding()); break;
                case LayerKind::BatchNorm:
                    x = batchnorm_forward(x, s.weight, s.bias, s.stats, mode == Mode::Train);
                    break;
                case LayerKind::Relu: x = relu(x); break;
                case LayerKind::Sigmoid: x = sigmoid(x); break;
                case LayerKind::MaxPool2x2: {
                    auto [pooled, idx] = maxpool2x2_with_indices(x);
                    pools[i] = std::move(idx);
                    x = std::move(pooled);
                    break;
                }
                case LayerKind::Unpool2x2:
                    x = unpool2x2(x, pools.at(static_cast<std::size_t>(l.pool_ref)));
                    break;
            }
        }
        return x;
    }

    /// Trainable tensors in layer order (weight/gamma then bias/beta).
    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const Slot& s : slots_) {
            if (s.weight.defined()) {
                out.push_back(s.weight);
                out.push_back(s.bias);
            }
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const Tensor& t : parameters()) total += t.numel();
        return total;
    }

    void zero_grad() {
        for (Tensor t : parameters()) t.zero_grad();
    }

    /// Parameters and running statistics with stable names, for checkpoints.
    std::vector<NamedTensor> state() const {
        std::vector<NamedTensor> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            const Slot& s = slots_[i];
            if (l.has_weights()) {
                out.push_back({l.name + ".weight", s.weight});
                out.push_back({l.name + ".bias", s.bias});
            } else if (l.kind == LayerKind::BatchNorm) {
                out.push_back({l.name + ".gamma", s.weight});
                out.push_back({l.name + ".beta", s.bias});
                out.push_back({l.name + ".running_mean", s.stats.running_mean});
                out.push_back({l.name + ".running_var", s.stats.running_var});
            }
        }
        return out;
    }

    /// Copies values for every named entry of `entries` that this network
    /// owns. Returns the number of tensors copied; shape mismatches throw.
    std::size_t load_state(const std::vector<NamedTensor>& entries, bool require_all = true) {
        std::map<std::string, const Tensor*> by_name;
        for (const auto& e : entries) by_name[e.name] = &e.tensor;
        std::size_t copied = 0;
        for (NamedTensor& mine : state()) {
            auto it = by_name.find(mine.name);
            if (it == by_name.end()) {
                if (require_all) throw InvalidArgument("checkpoint lacks tensor '" + mine.name + "'");
                continue;
            }
            if (it->second->shape() != mine.tensor.shape()) {
                throw ShapeError("checkpoint tensor '" + mine.name + "' has shape " + to_string(it->second->shape()) +
                                 ", network expects " + to_string(mine.tensor.shape()));
            }
            auto dst = mine.tensor.mutable_data();
            std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
            ++copied;
        }
        return copied;
    }

    /// Deep copy (parameters are not shared with the original).
    Network clone() const {
        Network copy;
        copy.layers_ = layers_;
        copy.slots_.resize(slots_.size());
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            const Slot& s = slots_[i];
            Slot& d = copy.slots_[i];
            if (s.weight.defined()) {
                d.weight = s.weight.detach(true);
                d.bias = s.bias.detach(true);
            }
            if (s.stats.running_mean.defined()) {
                d.stats = s.stats;
                d.stats.running_mean = s.stats.running_mean.detach();
                d.stats.running_var = s.stats.running_var.detach();
            }
        }
        return copy;
    }

private:
    struct Slot {
        Tensor weight;  // conv weight or batch-norm gamma
        Tensor bias;    // conv bias or batch-norm beta
        BatchNormStats stats;
    };

    std::vector<LayerSpec> layers_;
    std::vector<Slot> slots_;
};

}  // namespace distill::nn
