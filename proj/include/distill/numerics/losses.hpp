#pragma once

#include "distill/numerics/tensor.hpp"

namespace distill::nn {

inline constexpr int kIgnoreLabel = -1;

/// Confidence-guided regression loss: (1 / sum M) * sum M * |pred - target|.
/// `mask` is binary; masked-out pixels contribute neither value nor gradient.
/// The target is a constant.
inline Tensor masked_l1_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    detail::require_same_shape(pred, target, "masked_l1_loss");
    detail::require_same_shape(pred, mask, "masked_l1_loss");
    const auto p = pred.data(), t = target.data(), m = mask.data();
    double count = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (m[i] != 0.0 && m[i] != 1.0) {
            throw InvalidArgument("masked_l1_loss: mask values must be 0 or 1, got " + std::to_string(m[i]));
        }
        if (m[i] == 0.0) continue;
        count += 1.0;
        total += std::abs(p[i] - t[i]);
    }
    if (count == 0.0) throw InvalidArgument("empty confidence mask");
    auto pp = pred.node(), pt = target.node(), pm = mask.node();
    return detail::make_result({1}, {total / count}, {&pred}, "masked_l1_loss",
                               [pp, pt, pm, count](detail::Node& self) {
                                   pp->ensure_grad();
                                   const double g = self.grad[0] / count;
                                   for (std::size_t i = 0; i < pp->data.size(); ++i) {
                                       if (pm->data[i] == 0.0) continue;
                                       const double diff = pp->data[i] - pt->data[i];
                                       if (diff > 0.0) pp->grad[i] += g;
                                       else if (diff < 0.0) pp->grad[i] -= g;
                                   }
                               });
}

/// Mean binary cross-entropy of sigmoid(logits) against {0,1} labels, in the
/// log-sum-exp stable form max(z,0) - z*y + log(1 + exp(-|z|)).
inline Tensor bce_with_sigmoid_loss(const Tensor& logits, const Tensor& labels) {
    detail::require_same_shape(logits, labels, "bce_with_sigmoid_loss");
    const auto z = logits.data(), y = labels.data();
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
            throw InvalidArgument("bce_with_sigmoid_loss: labels must be 0 or 1, got " + std::to_string(y[i]));
        }
        total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    const double n = static_cast<double>(z.size());
    auto pz = logits.node(), py = labels.node();
    return detail::make_result({1}, {total / n}, {&logits}, "bce_with_sigmoid_loss",
                               [pz, py, n](detail::Node& self) {
                                   pz->ensure_grad();
                                   const double g = self.grad[0] / n;
                                   for (std::size_t i = 0; i < pz->data.size(); ++i) {
                                       pz->grad[i] += g * (sigmoid_scalar(pz->data[i]) - py->data[i]);
                                   }
                               });
}

/// Mean negative log-softmax probability of the true class over logits
/// [N,K,H,W]; `labels` holds N*H*W entries in [0,K) or kIgnoreLabel.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 4) {
        throw ShapeError("softmax_cross_entropy: expected [N,K,H,W], got " + to_string(logits.shape()));
    }
    const std::size_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    if (labels.size() != n * hw) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n * hw) + " pixels");
    }
    const auto z = logits.data();
    std::vector<double> probs(z.size(), 0.0);
    double total = 0.0, count = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < hw; ++i) {
            const int label = labels[b * hw + i];
            if (label == kIgnoreLabel) continue;
            if (label < 0 || static_cast<std::size_t>(label) >= k) {
                throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(label) +
                                      " outside [0," + std::to_string(k) + ")");
            }
            double zmax = z[(b * k) * hw + i];
            for (std::size_t cls = 1; cls < k; ++cls) zmax = std::max(zmax, z[(b * k + cls) * hw + i]);
            double denom = 0.0;
            for (std::size_t cls = 0; cls < k; ++cls) denom += std::exp(z[(b * k + cls) * hw + i] - zmax);
            const double log_denom = std::log(denom) + zmax;
            for (std::size_t cls = 0; cls < k; ++cls) {
                probs[(b * k + cls) * hw + i] = std::exp(z[(b * k + cls) * hw + i] - log_denom);
            }
            total += log_denom - z[(b * k + static_cast<std::size_t>(label)) * hw + i];
            count += 1.0;
        }
    }
    if (count == 0.0) throw InvalidArgument("softmax_cross_entropy: every pixel is ignored");
    auto pz = logits.node();
    std::vector<int> owned(labels.begin(), labels.end());
    return detail::make_result(
        {1}, {total / count}, {&logits}, "softmax_cross_entropy",
        [pz, probs = std::move(probs), owned = std::move(owned), n, k, hw, count](detail::Node& self) {
            pz->ensure_grad();
            const double g = self.grad[0] / count;
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t i = 0; i < hw; ++i) {
                    const int label = owned[b * hw + i];
                    if (label == kIgnoreLabel) continue;
                    for (std::size_t cls = 0; cls < k; ++cls) {
                        const std::size_t at = (b * k + cls) * hw + i;
                        const double onehot = static_cast<std::size_t>(label) == cls ? 1.0 : 0.0;
                        pz->grad[at] += g * (probs[at] - onehot);
                    }
                }
            }
        });
}

}  // namespace distill::nn
