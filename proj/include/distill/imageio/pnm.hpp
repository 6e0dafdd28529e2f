#pragma once

// Binary PPM (P6) and PGM (P5) with maxval 255.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "distill/imageio/image.hpp"

namespace distill {

/// Raw 8-bit raster as stored in a PNM file.
struct PnmData {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> bytes;
    bool operator==(const PnmData&) const = default;
};

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing " + path.string());
}

/// Tokenizer for the ASCII header shared by PNM and PFM files.
class HeaderReader {
public:
    HeaderReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    std::string token(bool allow_comments = true) {
        skip_space(allow_comments);
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        if (start == pos_) throw FormatError(source_ + ": truncated header");
        return bytes_.substr(start, pos_ - start);
    }

    long integer(const char* what) {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw FormatError(source_ + ": malformed header field " + what + " '" + t + "'");
        }
        if (t.size() > 9) throw FormatError(source_ + ": header field " + what + " too large");
        return std::stol(t);
    }

    /// Consumes the single whitespace byte that terminates the header.
    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError(source_ + ": header not terminated by whitespace");
        }
        return pos_ + 1;
    }

private:
    void skip_space(bool allow_comments) {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#' && allow_comments) {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline PnmData decode_pnm(const std::string& bytes, const std::string& source = "pnm") {
    detail::HeaderReader header(bytes, source);
    const std::string magic = header.token();
    int channels = 0;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw FormatError(source + ": unsupported magic '" + magic + "' (expected P5 or P6)");
    const long w = header.integer("width");
    const long h = header.integer("height");
    const long maxval = header.integer("maxval");
    if (w <= 0 || h <= 0) throw FormatError(source + ": non-positive dimensions");
    if (maxval != 255) throw FormatError(source + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
    const std::size_t offset = header.payload_offset();
    const std::size_t expected = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
    if (bytes.size() - std::min(offset, bytes.size()) < expected) {
        throw FormatError(source + ": truncated payload (" + std::to_string(bytes.size() - offset) + " of " +
                          std::to_string(expected) + " bytes)");
    }
    PnmData out{static_cast<int>(w), static_cast<int>(h), channels, {}};
    out.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(offset + expected));
    return out;
}

inline std::string encode_pnm(const PnmData& raster) {
    if (raster.channels != 1 && raster.channels != 3) throw InvalidArgument("pnm: channels must be 1 or 3");
    if (raster.bytes.size() != static_cast<std::size_t>(raster.width) * raster.height * raster.channels) {
        throw ShapeError("pnm: byte count does not match geometry");
    }
    std::string out = (raster.channels == 3 ? "P6\n" : "P5\n") + std::to_string(raster.width) + " " +
                      std::to_string(raster.height) + "\n255\n";
    out.append(raster.bytes.begin(), raster.bytes.end());
    return out;
}

inline std::uint8_t quantize_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline Image to_image(const PnmData& raster) {
    Image img(raster.width, raster.height, raster.channels);
    for (std::size_t i = 0; i < raster.bytes.size(); ++i) img.data[i] = raster.bytes[i] / 255.0;
    return img;
}

inline PnmData to_raster(const Image& img) {
    PnmData out{img.width, img.height, img.channels, std::vector<std::uint8_t>(img.data.size())};
    for (std::size_t i = 0; i < img.data.size(); ++i) out.bytes[i] = quantize_u8(img.data[i]);
    return out;
}

inline PnmData read_pnm_raw(const std::filesystem::path& path) {
    return decode_pnm(detail::read_file_bytes(path), path.string());
}

inline void write_pnm_raw(const std::filesystem::path& path, const PnmData& raster) {
    detail::write_file_bytes(path, encode_pnm(raster));
}

/// Reads a P6 or P5 file into an Image with values k/255.
inline Image read_ppm(const std::filesystem::path& path) { return to_image(read_pnm_raw(path)); }

/// Writes P6 for 3-channel and P5 for 1-channel images (values clamped, rounded to 8 bit).
inline void write_ppm(const std::filesystem::path& path, const Image& img) { write_pnm_raw(path, to_raster(img)); }

}  // namespace distill
