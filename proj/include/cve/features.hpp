#pragma once

// CVF1 feature files: the contract between the external feature extractor
// and this harness.
//
// All integers are little-endian uint32, all samples little-endian IEEE-754
// binary32.
//
//   magic        4 bytes  "CVF1"
//   flags        u32      bit 0: every layer carries a per-channel weight block
//   layer_count  u32
//   layer_count times:
//     name_len   u32, followed by name_len bytes of UTF-8 (unique per file)
//     rank       u32      1, 2 or 3
//     dims       rank x u32   (d) | (n, d) | (c, h, w)
//     data       prod(dims) x f32, row-major
//     if flags bit 0:
//       weight_count u32  (== dims[0])
//       weights      weight_count x f32
//
// Readers reject unknown flag bits, duplicate names, zero dimensions and any
// trailing or missing bytes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cve {

struct FeatureLayer {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    std::optional<std::vector<float>> weights;

    std::size_t element_count() const;
    bool operator==(const FeatureLayer&) const = default;
};

struct FeatureFile {
    std::vector<FeatureLayer> layers;

    const FeatureLayer* find(const std::string& name) const;
    bool operator==(const FeatureFile&) const = default;
};

inline constexpr std::uint32_t kCvfFlagWeights = 1u;

std::vector<std::uint8_t> encode_cvf(const FeatureFile& file);
FeatureFile decode_cvf(std::span<const std::uint8_t> bytes);

FeatureFile read_cvf(const std::filesystem::path& path);
void write_cvf(const std::filesystem::path& path, const FeatureFile& file);

// Feature directories are laid out as <dir>/<kind>/<role>/<pair_id>.cvf where
// kind is one of the names below and role is "street" for the real street
// image or a method name for a generated image.

inline constexpr const char* kFidKind = "fid";
inline constexpr const char* kLpipsKind = "lpips";
inline constexpr const char* kCasKind = "cas";
inline constexpr const char* kStreetRole = "street";

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& kind,
                                   const std::string& role, const std::string& pair_id);

}  // namespace cve
