#pragma once

#include <Eigen/Core>

#include "distill/numerics/tensor.hpp"

namespace distill::nn {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Every buffer handed to Eigen sits on its own alignment boundary. Eigen peels
// unaligned heads off some reductions, so a malloc'd pointer that lands on a
// different boundary from one run to the next would change the summation
// order and the low bits of the result.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

inline AlignedBuffer aligned_copy(std::span<const double> v) { return AlignedBuffer(v.begin(), v.end()); }

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel, padding;
    std::size_t out_height, out_width;

    std::size_t patch() const { return channels * kernel * kernel; }
    std::size_t pixels() const { return out_height * out_width; }
};

/// Unfolds one image [C,H,W] into columns [C*k*k, H'*W'] with zero padding.
inline void im2col(const double* image, const ConvGeometry& g, double* col) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                    double* dst = row + oy * g.out_width;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + g.out_width, 0.0);
                        continue;
                    }
                    const double* src = plane + iy * w;
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters columns back onto an image, accumulating.
inline void col2im(const double* col, const ConvGeometry& g, double* image) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + oy * g.out_width;
                    double* dst = plane + iy * w;
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// 2-D convolution, stride 1, symmetric zero padding.
/// input [N,C,H,W], weights [F,C,k,k], bias [F] -> [N,F,H+2p-k+1,W+2p-k+1].
inline Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t padding) {
    if (input.rank() != 4 || weights.rank() != 4 || bias.rank() != 1) {
        throw ShapeError("conv2d: expected input [N,C,H,W], weights [F,C,k,k], bias [F]; got input " +
                         to_string(input.shape()) + ", weights " + to_string(weights.shape()) +
                         ", bias " + to_string(bias.shape()));
    }
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t f = weights.dim(0), k = weights.dim(2);
    if (weights.dim(1) != c) {
        throw ShapeError("conv2d: input channels C=" + std::to_string(c) + " but weights expect C=" +
                         std::to_string(weights.dim(1)));
    }
    if (weights.dim(3) != k || k % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square and odd, got " + to_string(weights.shape()));
    }
    if (bias.dim(0) != f) {
        throw ShapeError("conv2d: bias has " + std::to_string(bias.dim(0)) + " entries for F=" +
                         std::to_string(f) + " filters");
    }
    if (h + 2 * padding < k || w + 2 * padding < k) {
        throw ShapeError("conv2d: spatial size H=" + std::to_string(h) + ", W=" + std::to_string(w) +
                         " smaller than kernel k=" + std::to_string(k) + " with padding " +
                         std::to_string(padding));
    }

    const detail::ConvGeometry g{c, h, w, k, padding, h + 2 * padding - k + 1, w + 2 * padding - k + 1};
    const std::size_t in_stride = c * h * w;
    const std::size_t out_stride = f * g.pixels();
    const bool direct = (k == 1 && padding == 0);

    detail::AlignedBuffer out(n * out_stride);
    detail::AlignedBuffer col(direct ? 0 : g.patch() * g.pixels());
    const detail::AlignedBuffer wbuf = detail::aligned_copy(weights.data());
    const detail::AlignedBuffer inbuf = direct ? detail::aligned_copy(input.data()) : detail::AlignedBuffer{};
    const detail::ConstMatrixMap wmat(wbuf.data(), f, g.patch());
    const std::span<const double> bvals = bias.data();
    for (std::size_t s = 0; s < n; ++s) {
        if (!direct) detail::im2col(input.data().data() + s * in_stride, g, col.data());
        const detail::ConstMatrixMap cmat(direct ? inbuf.data() + s * in_stride : col.data(), g.patch(), g.pixels());
        detail::MatrixMap omat(out.data() + s * out_stride, f, g.pixels());
        omat.noalias() = wmat * cmat;
        for (std::size_t o = 0; o < f; ++o) omat.row(o).array() += bvals[o];
    }

    auto pin = input.node(), pw = weights.node(), pb = bias.node();
    return detail::make_result(
        {n, f, g.out_height, g.out_width}, std::vector<double>(out.begin(), out.end()), {&input, &weights, &bias}, "conv2d",
        [pin, pw, pb, g, n, f, in_stride, out_stride, direct](detail::Node& self) {
            detail::AlignedBuffer col(direct ? 0 : g.patch() * g.pixels());
            detail::AlignedBuffer dcol(g.patch() * g.pixels());
            const detail::AlignedBuffer wbuf = detail::aligned_copy(pw->data);
            const detail::AlignedBuffer gbuf = detail::aligned_copy(self.grad);
            const detail::AlignedBuffer inbuf =
                direct && pw->requires_grad ? detail::aligned_copy(pin->data) : detail::AlignedBuffer{};
            detail::AlignedBuffer dwbuf(pw->requires_grad ? f * g.patch() : 0, 0.0);
            const detail::ConstMatrixMap wmat(wbuf.data(), f, g.patch());
            if (pw->requires_grad) pw->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            if (pin->requires_grad) pin->ensure_grad();
            for (std::size_t s = 0; s < n; ++s) {
                const double* gs = gbuf.data() + s * out_stride;
                const detail::ConstMatrixMap dout(gs, f, g.pixels());
                if (pw->requires_grad) {
                    if (!direct) detail::im2col(pin->data.data() + s * in_stride, g, col.data());
                    const detail::ConstMatrixMap cmat(direct ? inbuf.data() + s * in_stride : col.data(), g.patch(),
                                                      g.pixels());
                    detail::MatrixMap dw(dwbuf.data(), f, g.patch());
                    dw.noalias() += dout * cmat.transpose();
                }
                if (pb->requires_grad) {
                    for (std::size_t o = 0; o < f; ++o) {
                        double acc = 0.0;
                        for (std::size_t q = 0; q < g.pixels(); ++q) acc += gs[o * g.pixels() + q];
                        pb->grad[o] += acc;
                    }
                }
                if (pin->requires_grad) {
                    double* dimg = pin->grad.data() + s * in_stride;
                    detail::MatrixMap dc(dcol.data(), g.patch(), g.pixels());
                    dc.noalias() = wmat.transpose() * dout;
                    if (direct) {
                        for (std::size_t q = 0; q < dcol.size(); ++q) dimg[q] += dcol[q];
                    } else {
                        detail::col2im(dcol.data(), g, dimg);
                    }
                }
            }
            for (std::size_t q = 0; q < dwbuf.size(); ++q) pw->grad[q] += dwbuf[q];
        });
}

}  // namespace distill::nn
