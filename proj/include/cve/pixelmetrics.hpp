#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cve/features.hpp"
#include "cve/image.hpp"

namespace cve::pixel {

/// Canonical SSIM configuration: 11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range L = 1.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Normalized 1-D Gaussian taps of length params.window.
std::vector<double> gaussian_taps(const SsimParams& params = {});

/// Mean SSIM over every position where the window fits entirely inside the
/// image ("valid" filtering). Both images must be single-channel and the same
/// shape; color inputs must be converted with to_grayscale first.
double ssim(const ImagePlane& x, const ImagePlane& y, const SsimParams& params = {});

/// SSIM on the Rec.601 luminance of possibly-color images.
double ssim_luma(const ImagePlane& x, const ImagePlane& y);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over all samples; +inf when the images are equal.
double psnr(const ImagePlane& x, const ImagePlane& y);

struct FeatureMap {
    std::string name;
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<double> data;     // channels x height x width
    std::vector<double> weights;  // channels, non-negative
};

struct LayeredFeatures {
    std::vector<FeatureMap> layers;
};

/// Every layer must be rank 3 with a weight block.
LayeredFeatures layered_from_cvf(const FeatureFile& file);

inline constexpr double kLpipsEps = 1e-10;

/// Per layer: unit-normalize channel vectors at each site, take the
/// channel-weighted squared difference, average over sites. Sum over layers.
double lpips(const LayeredFeatures& fx, const LayeredFeatures& fy);

struct PixelMetricRow {
    std::string pair_id;
    std::string method;
    double ssim = 0.0;
    double psnr_db = 0.0;
    std::optional<double> lpips;

    bool operator==(const PixelMetricRow&) const = default;
};

}  // namespace cve::pixel
