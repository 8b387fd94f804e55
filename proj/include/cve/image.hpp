#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cve {

/// H x W x C intensities in [0, 1], interleaved row-major (channel fastest).
class ImagePlane {
public:
    ImagePlane() = default;
    ImagePlane(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    ImagePlane(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
        return data_[(y * width_ + x) * channels_ + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return data_[(y * width_ + x) * channels_ + c];
    }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool same_shape(const ImagePlane& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    /// Clamp every sample into [0, 1].
    void clamp();

    bool operator==(const ImagePlane&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

/// Rec.601 luminance (0.299, 0.587, 0.114). Single-channel input is copied.
ImagePlane to_grayscale(const ImagePlane& img);

/// Area-average downscale so that max(height, width) <= max_edge. Images
/// already within the limit are returned unchanged.
ImagePlane downscale_to_edge(const ImagePlane& img, std::size_t max_edge);

/// Decode a PNG or JPEG file (detected by signature) to [0,1] by dividing
/// 8-bit samples by 255. Alpha is dropped; palettes and gray+alpha are
/// expanded. Throws IoError on failure.
ImagePlane read_image(const std::filesystem::path& path);
ImagePlane decode_image(std::span<const std::uint8_t> bytes);

/// 8-bit PNG encoding; samples are rounded to the nearest of 256 levels.
std::vector<std::uint8_t> encode_png(const ImagePlane& img);
void write_png(const std::filesystem::path& path, const ImagePlane& img);

}  // namespace cve
