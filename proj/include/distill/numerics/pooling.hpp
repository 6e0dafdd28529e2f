#pragma once

#include "distill/numerics/tensor.hpp"

namespace distill::nn {

/// Argmax positions recorded by a 2x2 max-pool, as flat offsets into the
/// pooled input; consumed by the paired unpool.
struct PoolIndices {
    Shape input_shape;
    std::vector<std::size_t> argmax;  // one entry per pooled output element
};

/// 2x2 / stride-2 max pooling over [N,C,H,W]. Ties resolve to the first
/// position of the row-major window scan.
inline std::pair<Tensor, PoolIndices> maxpool2x2_with_indices(const Tensor& input) {
    if (input.rank() != 4) throw ShapeError("maxpool2x2: expected [N,C,H,W], got " + to_string(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2x2: H and W must be even, got H=" + std::to_string(h) +
                         ", W=" + std::to_string(w));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(n * c * oh * ow);
    PoolIndices indices{input.shape(), std::vector<std::size_t>(out.size())};
    const auto in = input.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x, ++o) {
                std::size_t best = base + 2 * y * w + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t at = base + (2 * y + dy) * w + 2 * x + dx;
                        if (in[at] > in[best]) best = at;
                    }
                }
                out[o] = in[best];
                indices.argmax[o] = best;
            }
        }
    }
    auto pin = input.node();
    auto argmax = indices.argmax;
    Tensor result = detail::make_result({n, c, oh, ow}, std::move(out), {&input}, "maxpool2x2",
                                        [pin, argmax = std::move(argmax)](detail::Node& self) {
                                            pin->ensure_grad();
                                            for (std::size_t i = 0; i < argmax.size(); ++i) {
                                                pin->grad[argmax[i]] += self.grad[i];
                                            }
                                        });
    return {std::move(result), std::move(indices)};
}

/// Places each input value at its recorded argmax; every other position is zero.
inline Tensor unpool2x2(const Tensor& input, const PoolIndices& indices) {
    const Shape& target = indices.input_shape;
    if (target.size() != 4 || input.rank() != 4 || input.dim(0) != target[0] || input.dim(1) != target[1] ||
        input.dim(2) * 2 != target[2] || input.dim(3) * 2 != target[3]) {
        throw ShapeError("unpool2x2: input " + to_string(input.shape()) +
                         " does not match pooled shape of " + to_string(target));
    }
    if (indices.argmax.size() != input.numel()) {
        throw ShapeError("unpool2x2: " + std::to_string(indices.argmax.size()) + " indices for " +
                         std::to_string(input.numel()) + " values");
    }
    const std::size_t total = numel(target);
    std::vector<double> out(total, 0.0);
    for (std::size_t i = 0; i < indices.argmax.size(); ++i) {
        if (indices.argmax[i] >= total) {
            throw InvalidArgument("unpool2x2: index " + std::to_string(indices.argmax[i]) +
                                  " out of bounds for " + to_string(target));
        }
        out[indices.argmax[i]] = input[i];
    }
    auto pin = input.node();
    return detail::make_result(target, std::move(out), {&input}, "unpool2x2",
                               [pin, argmax = indices.argmax](detail::Node& self) {
                                   pin->ensure_grad();
                                   for (std::size_t i = 0; i < argmax.size(); ++i) {
                                       pin->grad[i] += self.grad[argmax[i]];
                                   }
                               });
}

}  // namespace distill::nn
