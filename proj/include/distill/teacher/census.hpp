#pragma once

#include <bit>

#include "distill/imageio/image.hpp"

namespace distill::teacher {

/// Census bit-strings, `words` 64-bit words per pixel. Bit j of a pixel's
/// string is 1 iff the j-th window neighbour (row-major, centre skipped) is
/// darker than the centre. Neighbours outside the image are edge-clamped.
struct CensusMap {
    int width = 0;
    int height = 0;
    int window = 0;
    int words = 0;
    std::vector<std::uint64_t> bits;

    std::size_t bit_count() const { return static_cast<std::size_t>(window) * window - 1; }
    const std::uint64_t* at(int x, int y) const {
        return bits.data() + (static_cast<std::size_t>(y) * width + x) * words;
    }
    bool bit(int x, int y, std::size_t j) const { return (at(x, y)[j / 64] >> (j % 64)) & 1u; }
};

inline CensusMap census_transform(const Image& img, int window) {
    if (window < 3 || window % 2 == 0) throw InvalidArgument("census_transform: window must be odd and >= 3");
    const Image gray = to_grayscale(img);
    CensusMap out;
    out.width = gray.width;
    out.height = gray.height;
    out.window = window;
    out.words = static_cast<int>((out.bit_count() + 63) / 64);
    out.bits.assign(gray.pixels() * static_cast<std::size_t>(out.words), 0);
    const int r = window / 2;
    for (int y = 0; y < gray.height; ++y) {
        for (int x = 0; x < gray.width; ++x) {
            const double centre = gray.at(x, y);
            std::uint64_t* dst = out.bits.data() + (static_cast<std::size_t>(y) * gray.width + x) * out.words;
            std::size_t j = 0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = std::clamp(y + dy, 0, gray.height - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int xx = std::clamp(x + dx, 0, gray.width - 1);
                    if (gray.at(xx, yy) < centre) dst[j / 64] |= std::uint64_t{1} << (j % 64);
                    ++j;
                }
            }
        }
    }
    return out;
}

inline int hamming(const CensusMap& a, int xa, int ya, const CensusMap& b, int xb, int yb) {
    const std::uint64_t* pa = a.at(xa, ya);
    const std::uint64_t* pb = b.at(xb, yb);
    int d = 0;
    for (int w = 0; w < a.words; ++w) d += std::popcount(pa[w] ^ pb[w]);
    return d;
}

}  // namespace distill::teacher
