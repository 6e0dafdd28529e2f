#pragma once

#include "distill/numerics/tensor.hpp"

namespace distill::nn {

/// Per-channel running statistics of a batch-norm layer (not trained by gradient).
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormStats create(std::size_t channels) {
        return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
    }
};

/// Batch normalization over [N,C,H,W]. In training mode normalizes with the
/// batch statistics and updates the running statistics; otherwise uses them.
inline Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                BatchNormStats& stats, bool training) {
    if (input.rank() != 4) throw ShapeError("batchnorm: expected [N,C,H,W], got " + to_string(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || stats.running_mean.shape() != Shape{c} ||
        stats.running_var.shape() != Shape{c}) {
        throw ShapeError("batchnorm: parameters must have shape [" + std::to_string(c) + "]");
    }
    const std::size_t m = n * hw;
    if (training && m < 2) {
        throw InvalidArgument("batchnorm: training mode needs N*H*W >= 2, got " + std::to_string(m));
    }

    const auto x = input.data();
    std::vector<double> mu(c), inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (training) {
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = x.data() + (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) s += p[i];
            }
            const double mean_c = s / static_cast<double>(m);
            double ss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = x.data() + (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean_c) * (p[i] - mean_c);
            }
            const double var_c = ss / static_cast<double>(m);
            mu[ch] = mean_c;
            inv_std[ch] = 1.0 / std::sqrt(var_c + stats.eps);
            auto rm = stats.running_mean.mutable_data();
            auto rv = stats.running_var.mutable_data();
            rm[ch] = (1.0 - stats.momentum) * rm[ch] + stats.momentum * mean_c;
            rv[ch] = (1.0 - stats.momentum) * rv[ch] +
                     stats.momentum * ss / static_cast<double>(m - 1);
        } else {
            mu[ch] = stats.running_mean[ch];
            inv_std[ch] = 1.0 / std::sqrt(stats.running_var[ch] + stats.eps);
        }
    }

    std::vector<double> xhat(input.numel()), out(input.numel());
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                xhat[off + i] = (x[off + i] - mu[ch]) * inv_std[ch];
                out[off + i] = gamma[ch] * xhat[off + i] + beta[ch];
            }
        }
    }

    auto pin = input.node(), pg = gamma.node(), pb = beta.node();
    return detail::make_result(
        input.shape(), std::move(out), {&input, &gamma, &beta}, "batchnorm",
        [pin, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, hw, m,
         training](detail::Node& self) {
            const auto& dy = self.grad;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t off = (b * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        sum_dy += dy[off + i];
                        sum_dy_xhat += dy[off + i] * xhat[off + i];
                    }
                }
                if (pg->requires_grad) {
                    pg->ensure_grad();
                    pg->grad[ch] += sum_dy_xhat;
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    pb->grad[ch] += sum_dy;
                }
                if (!pin->requires_grad) continue;
                pin->ensure_grad();
                const double g = pg->data[ch];
                const double md = static_cast<double>(m);
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t off = (b * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        if (training) {
                            pin->grad[off + i] += g * inv_std[ch] / md *
                                                  (md * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
                        } else {
                            pin->grad[off + i] += g * inv_std[ch] * dy[off + i];
                        }
                    }
                }
            }
        });
}

}  // namespace distill::nn
