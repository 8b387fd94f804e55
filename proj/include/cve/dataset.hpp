#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cve/common.hpp"
#include "cve/features.hpp"
#include "cve/image.hpp"

namespace cve::dataset {

enum class SeverityLabel : int { Mild = 0, Moderate = 1, Severe = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<SeverityLabel, kNumClasses> kAllLabels = {
    SeverityLabel::Mild, SeverityLabel::Moderate, SeverityLabel::Severe};

constexpr int to_index(SeverityLabel l) { return static_cast<int>(l); }
SeverityLabel label_from_index(int index);
/// Lower-case wire name: "mild", "moderate", "severe".
std::string_view label_name(SeverityLabel l);
/// Parses the wire name (case-insensitive); nullopt when unknown.
std::optional<SeverityLabel> parse_label(std::string_view text);

struct SamplePair {
    std::string id;
    std::filesystem::path satellite_path;
    std::filesystem::path street_path;
    SeverityLabel label = SeverityLabel::Mild;
    std::map<std::string, std::filesystem::path> generated;

    bool operator==(const SamplePair&) const = default;
};

enum class Split { Train, Test };

/// Paths held in memory are absolute; they are written relative to the
/// manifest's directory.
struct Manifest {
    std::vector<SamplePair> pairs;
    Split split = Split::Test;
    std::vector<std::string> methods;

    std::size_t count(SeverityLabel l) const;
    std::vector<SeverityLabel> labels() const;
    bool operator==(const Manifest&) const = default;
};

class ManifestError : public Error {
public:
    enum class Kind { MissingFile, Schema, DuplicateId, DanglingPath };
    ManifestError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class InsufficientClassError : public Error {
public:
    using Error::Error;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Per class: shuffle that class's pairs with Rng(seed) and take the first
/// per_class. Both outputs keep the input's relative order.
std::pair<Manifest, Manifest> stratified_split(const Manifest& manifest, std::size_t per_class,
                                               std::uint64_t seed);

struct ToyCorpusOptions {
    std::size_t n_per_class = 4;
    std::size_t size = 32;
    std::uint64_t seed = 1;
    /// Also write fixture features (fid/, lpips/, cas/) under out/features.
    bool with_features = false;
};

/// Toy method names, in the order they appear in the manifest.
const std::vector<std::string>& toy_methods();

/// Writes out/manifest.json plus images under out/images. Deterministic in
/// the options.
Manifest synth_toy_corpus(const ToyCorpusOptions& options, const std::filesystem::path& out);

// Hand-crafted descriptors used for the committed fixture features. They are
// stand-ins for a pretrained backbone, good enough to separate the toy
// severity levels.

/// Single rank-1 layer "pool" of length kToyPooledDim.
inline constexpr std::size_t kToyPooledDim = 24;
FeatureFile toy_pooled_features(const ImagePlane& img);
/// Two weighted layers: "block1" (RGB, size/4 grid), "block2" (4 channels, size/8 grid).
FeatureFile toy_layered_features(const ImagePlane& img);

}  // namespace cve::dataset
