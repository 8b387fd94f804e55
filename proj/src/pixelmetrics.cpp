#include "cve/pixelmetrics.hpp"

#include <cmath>
#include <set>

#include "cve/common.hpp"

namespace cve::pixel {

std::vector<double> gaussian_taps(const SsimParams& params) {
    std::vector<double> taps(params.window);
    const double centre = (params.window - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < params.window; ++i) {
        const double d = i - centre;
        taps[i] = std::exp(-(d * d) / (2.0 * params.sigma * params.sigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

namespace {

/// Separable valid-mode filter of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
    const std::size_t k = taps.size();
    const std::size_t ow = w - k + 1, oh = h - k + 1;
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += taps[i] * src[y * w + x + i];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += taps[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const ImagePlane& x, const ImagePlane& y, const SsimParams& params) {
    if (!x.same_shape(y)) throw ShapeError("ssim: images differ in shape");
    if (x.channels() != 1) throw DomainError("ssim: expects single-channel input (convert with to_grayscale)");
    const auto k = static_cast<std::size_t>(params.window);
    if (x.height() < k || x.width() < k)
        throw DomainError("ssim: image " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                          " smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");

    const std::size_t h = x.height(), w = x.width();
    const auto px = x.data(), py = y.data();
    std::vector<double> a(px.begin(), px.end()), b(py.begin(), py.end());
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto taps = gaussian_taps(params);
    const auto mu_a = filter_valid(a, h, w, taps);
    const auto mu_b = filter_valid(b, h, w, taps);
    const auto e_aa = filter_valid(aa, h, w, taps);
    const auto e_bb = filter_valid(bb, h, w, taps);
    const auto e_ab = filter_valid(ab, h, w, taps);

    const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
    const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double var_a = e_aa[i] - ma * ma;
        const double var_b = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

double ssim_luma(const ImagePlane& x, const ImagePlane& y) {
    if (!x.same_shape(y)) throw ShapeError("ssim: images differ in shape");
    return ssim(to_grayscale(x), to_grayscale(y));
}

double psnr(const ImagePlane& x, const ImagePlane& y) {
    if (!x.same_shape(y)) throw ShapeError("psnr: images differ in shape");
    if (x.empty()) throw DomainError("psnr: empty images");
    const auto a = x.data(), b = y.data();
    double sse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = sse / static_cast<double>(a.size());
    if (mse == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(1.0 / mse);
}

LayeredFeatures layered_from_cvf(const FeatureFile& file) {
    LayeredFeatures out;
    for (const auto& layer : file.layers) {
        if (layer.dims.size() != 3) throw ShapeError("lpips: layer '" + layer.name + "' must be rank 3 (c,h,w)");
        if (!layer.weights) throw ShapeError("lpips: layer '" + layer.name + "' carries no channel weights");
        FeatureMap map{layer.name, layer.dims[0], layer.dims[1], layer.dims[2],
                       std::vector<double>(layer.data.begin(), layer.data.end()),
                       std::vector<double>(layer.weights->begin(), layer.weights->end())};
        for (double wgt : map.weights)
            if (!(wgt >= 0.0)) throw DomainError("lpips: layer '" + layer.name + "' has a negative channel weight");
        for (double v : map.data)
            if (!std::isfinite(v)) throw DomainError("lpips: layer '" + layer.name + "' has non-finite entries");
        out.layers.push_back(std::move(map));
    }
    return out;
}

double lpips(const LayeredFeatures& fx, const LayeredFeatures& fy) {
    if (fx.layers.size() != fy.layers.size()) throw ShapeError("lpips: layer count mismatch");
    std::set<std::string> names;
    double total = 0.0;
    for (std::size_t l = 0; l < fx.layers.size(); ++l) {
        const auto& a = fx.layers[l];
        const auto& b = fy.layers[l];
        if (a.name != b.name || a.channels != b.channels || a.height != b.height || a.width != b.width)
            throw ShapeError("lpips: layer '" + a.name + "' does not match '" + b.name + "'");
        if (a.weights != b.weights) throw ShapeError("lpips: layer '" + a.name + "' weights differ");
        if (!names.insert(a.name).second) throw ShapeError("lpips: duplicate layer '" + a.name + "'");
        if (a.data.size() != a.channels * a.height * a.width || a.weights.size() != a.channels)
            throw ShapeError("lpips: layer '" + a.name + "' sizes are inconsistent");
        const std::size_t sites = a.height * a.width;
        double layer_sum = 0.0;
        for (std::size_t s = 0; s < sites; ++s) {
            double na = 0.0, nb = 0.0;
            for (std::size_t c = 0; c < a.channels; ++c) {
                na += a.data[c * sites + s] * a.data[c * sites + s];
                nb += b.data[c * sites + s] * b.data[c * sites + s];
            }
            na = std::sqrt(na) + kLpipsEps;
            nb = std::sqrt(nb) + kLpipsEps;
            for (std::size_t c = 0; c < a.channels; ++c) {
                const double d = a.data[c * sites + s] / na - b.data[c * sites + s] / nb;
                layer_sum += a.weights[c] * d * d;
            }
        }
        total += layer_sum / static_cast<double>(sites);
    }
    return total;
}

}  // namespace cve::pixel
