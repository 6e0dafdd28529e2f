#pragma once

// On-disk dataset layout:
//   <root>/manifest.tsv
//   <root>/0000/{left.ppm,right.ppm,gt.pfm,occ.pgm,labels.pgm}
//   ...

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "distill/imageio/pfm.hpp"
#include "distill/imageio/pnm.hpp"
#include "distill/parallel.hpp"
#include "distill/scenegen/scene.hpp"

namespace distill::scene {

namespace fs = std::filesystem;

struct ManifestEntry {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string dir;  // relative to the dataset root
    bool validation = false;
};

/// Seed-stable 10% validation split.
inline bool is_validation_seed(std::uint64_t seed) { return mix_seed(seed ^ 0x7a11dULL) % 10 == 0; }

inline std::string sample_dir_name(std::size_t index) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_sample(const fs::path& dir, const StereoSample& s) {
    ensure_directory(dir);
    write_ppm(dir / "left.ppm", s.left);
    write_ppm(dir / "right.ppm", s.right);
    write_pfm(dir / "gt.pfm", s.gt_disparity.to_float_map());
    PnmData occ{s.left.width, s.left.height, 1, std::vector<std::uint8_t>(s.occlusion_mask.size())};
    for (std::size_t i = 0; i < occ.bytes.size(); ++i) occ.bytes[i] = s.occlusion_mask[i] ? 255 : 0;
    write_pnm_raw(dir / "occ.pgm", occ);
    write_pnm_raw(dir / "labels.pgm", PnmData{s.left.width, s.left.height, 1, s.class_labels});
}

inline StereoSample read_sample(const fs::path& dir) {
    StereoSample s;
    s.left = read_ppm(dir / "left.ppm");
    s.right = read_ppm(dir / "right.ppm");
    s.gt_disparity = DisparityMap::from_float_map(read_pfm(dir / "gt.pfm"));
    const PnmData occ = read_pnm_raw(dir / "occ.pgm");
    s.occlusion_mask.resize(occ.bytes.size());
    for (std::size_t i = 0; i < occ.bytes.size(); ++i) s.occlusion_mask[i] = occ.bytes[i] ? 1 : 0;
    s.class_labels = read_pnm_raw(dir / "labels.pgm").bytes;
    return s;
}

inline std::string encode_manifest(const std::vector<ManifestEntry>& entries) {
    std::ostringstream os;
    os << "index\tseed\tdir\tsplit\n";
    for (const auto& e : entries) {
        os << e.index << '\t' << e.seed << '\t' << e.dir << '\t' << (e.validation ? "val" : "train") << '\n';
    }
    return os.str();
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& root) {
    const fs::path path = root / "manifest.tsv";
    std::ifstream is(path);
    if (!is) throw MissingInput(path.string());
    std::string line;
    std::getline(is, line);
    if (line != "index\tseed\tdir\tsplit") throw FormatError(path.string() + ": unexpected header");
    std::vector<ManifestEntry> entries;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        ManifestEntry e;
        std::string split;
        if (!(row >> e.index >> e.seed >> e.dir >> split) || (split != "train" && split != "val")) {
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        }
        e.validation = split == "val";
        entries.push_back(e);
    }
    return entries;
}

/// Generates `count` scenes from `tmpl` with seeds derived from `seed` and
/// writes them plus a manifest under `root`. At least one sample is always
/// assigned to the validation split.
inline std::vector<ManifestEntry> generate_dataset(const SceneSpec& tmpl, std::size_t count, std::uint64_t seed,
                                                   const fs::path& root) {
    if (count == 0) throw InvalidArgument("generate_dataset: count must be >= 1");
    tmpl.validate();
    ensure_directory(root);
    std::vector<ManifestEntry> entries(count);
    bool any_val = false;
    for (std::size_t i = 0; i < count; ++i) {
        entries[i] = {i, derive_seed(seed, i), sample_dir_name(i), false};
        entries[i].validation = count > 1 && is_validation_seed(entries[i].seed);
        any_val = any_val || entries[i].validation;
    }
    if (!any_val && count > 1) entries.back().validation = true;
    parallel_for(count, [&](std::size_t i) {
        SceneSpec spec = tmpl;
        spec.seed = entries[i].seed;
        write_sample(root / entries[i].dir, generate_scene(spec));
    });
    const std::string manifest = encode_manifest(entries);
    std::ofstream os(root / "manifest.tsv", std::ios::binary);
    if (!os) throw IoError("cannot write " + (root / "manifest.tsv").string());
    os << manifest;
    return entries;
}

}  // namespace distill::scene
