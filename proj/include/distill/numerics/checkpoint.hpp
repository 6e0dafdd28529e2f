#pragma once

// Checkpoint file layout (all integers little-endian u64):
//   "DDCKPT01"
//   repeated until EOF:
//     name length, UTF-8 name bytes, rank, dims[rank], float64 payload (LE)

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "distill/numerics/network.hpp"

namespace distill::nn {

inline constexpr std::array<char, 8> kCheckpointMagic{'D', 'D', 'C', 'K', 'P', 'T', '0', '1'};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    bool done() const { return pos_ == bytes_.size(); }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(source_ + ": truncated checkpoint while reading " + what);
        }
    }

    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedTensor>& entries) {
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    for (const auto& [name, tensor] : entries) {
        detail::put_u64(out, name.size());
        out += name;
        detail::put_u64(out, tensor.rank());
        for (std::size_t d : tensor.shape()) detail::put_u64(out, d);
        for (double v : tensor.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes, const std::string& source = "checkpoint") {
    if (bytes.size() < kCheckpointMagic.size() ||
        std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
        throw FormatError(source + ": missing DDCKPT01 magic");
    }
    detail::ByteReader reader(bytes, source);
    reader.take(kCheckpointMagic.size(), "magic");
    std::vector<NamedTensor> entries;
    while (!reader.done()) {
        const std::uint64_t name_len = reader.u64("name length");
        std::string name = reader.take(name_len, "name");
        const std::uint64_t rank = reader.u64("rank");
        if (rank > 8) throw FormatError(source + ": implausible rank " + std::to_string(rank) + " for '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) d = reader.u64("dims");
        std::vector<double> values(numel(shape));
        for (double& v : values) v = std::bit_cast<double>(reader.u64("payload"));
        entries.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
    }
    return entries;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const std::string bytes = encode_checkpoint(entries);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path.string());
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path.string());
}

}  // namespace distill::nn
