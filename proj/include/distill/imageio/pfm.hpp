#pragma once

// Grayscale PFM ("Pf"), negative scale (little-endian float32), rows stored
// bottom to top.

#include <bit>

#include "distill/imageio/pnm.hpp"

namespace distill {

inline std::string encode_pfm(const FloatMap& map) {
    if (map.data.size() != static_cast<std::size_t>(map.width) * map.height) {
        throw ShapeError("pfm: data size does not match geometry");
    }
    std::string out = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    out.reserve(out.size() + map.data.size() * 4);
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x) {
            const double v = map.at(x, y);
            if (!std::isfinite(v)) throw NumericError("pfm: non-finite value at (" + std::to_string(x) + "," + std::to_string(y) + ")");
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
        }
    }
    return out;
}

inline FloatMap decode_pfm(const std::string& bytes, const std::string& source = "pfm") {
    detail::HeaderReader header(bytes, source);
    const std::string magic = header.token(false);
    if (magic == "PF") throw FormatError(source + ": color PFM is not supported");
    if (magic != "Pf") throw FormatError(source + ": unsupported magic '" + magic + "' (expected Pf)");
    const long w = header.integer("width");
    const long h = header.integer("height");
    const std::string scale_token = header.token(false);
    double scale = 0.0;
    try {
        std::size_t used = 0;
        scale = std::stod(scale_token, &used);
        if (used != scale_token.size()) throw FormatError("");
    } catch (const std::exception&) {
        throw FormatError(source + ": malformed scale '" + scale_token + "'");
    }
    if (!(scale < 0.0) || !std::isfinite(scale)) {
        throw FormatError(source + ": scale " + scale_token + " unsupported (need negative, little-endian)");
    }
    if (w <= 0 || h <= 0) throw FormatError(source + ": non-positive dimensions");
    const std::size_t offset = header.payload_offset();
    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - std::min(offset, bytes.size()) < count * 4) {
        throw FormatError(source + ": truncated payload");
    }
    FloatMap map(static_cast<int>(w), static_cast<int>(h));
    std::size_t pos = offset;
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x, pos += 4) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
            const float v = std::bit_cast<float>(bits);
            if (!std::isfinite(v)) throw FormatError(source + ": non-finite value in payload");
            map.at(x, y) = v;
        }
    }
    return map;
}

inline FloatMap read_pfm(const std::filesystem::path& path) {
    return decode_pfm(detail::read_file_bytes(path), path.string());
}

/// Values are stored as float32; float64 inputs round to nearest float.
inline void write_pfm(const std::filesystem::path& path, const FloatMap& map) {
    detail::write_file_bytes(path, encode_pfm(map));
}

}  // namespace distill
