#pragma once

// Straightforward reference implementations used to cross-check the
// optimized code paths.

#include <cmath>
#include <vector>

#include "cve/fidstats.hpp"
#include "cve/image.hpp"

namespace cve::test {

/// SSIM with an explicit 2-D Gaussian window at every valid position and
/// two-pass (deviation-based) local moments.
inline double naive_ssim(const ImagePlane& x, const ImagePlane& y, int window = 11, double sigma = 1.5) {
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int h = static_cast<int>(x.height()), w = static_cast<int>(x.width());
    const int half = window / 2;
    std::vector<double> kernel(static_cast<std::size_t>(window * window));
    double ksum = 0.0;
    for (int u = 0; u < window; ++u)
        for (int v = 0; v < window; ++v) {
            const double du = u - half, dv = v - half;
            kernel[static_cast<std::size_t>(u * window + v)] = std::exp(-(du * du + dv * dv) / (2 * sigma * sigma));
            ksum += kernel[static_cast<std::size_t>(u * window + v)];
        }
    for (auto& k : kernel) k /= ksum;

    double total = 0.0;
    int count = 0;
    for (int i = 0; i + window <= h; ++i)
        for (int j = 0; j + window <= w; ++j) {
            double mx = 0, my = 0;
            for (int u = 0; u < window; ++u)
                for (int v = 0; v < window; ++v) {
                    const double k = kernel[static_cast<std::size_t>(u * window + v)];
                    mx += k * x.at(i + u, j + v);
                    my += k * y.at(i + u, j + v);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int u = 0; u < window; ++u)
                for (int v = 0; v < window; ++v) {
                    const double k = kernel[static_cast<std::size_t>(u * window + v)];
                    const double dx = x.at(i + u, j + v) - mx, dy = y.at(i + u, j + v) - my;
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cxy += k * dx * dy;
                }
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

/// Random symmetric positive definite matrix B B^T + shift I.
template <typename RngT>
fid::Matrix random_spd(RngT& rng, std::size_t d, double shift = 0.1) {
    fid::Matrix b(d, d);
    for (auto& v : b.data) v = rng.normal();
    auto a = b * b.transpose();
    for (std::size_t i = 0; i < d; ++i) a(i, i) += shift;
    return a;
}

inline double relative_frobenius(const fid::Matrix& a, const fid::Matrix& b) {
    return (a - b).frobenius() / b.frobenius();
}

}  // namespace cve::test
