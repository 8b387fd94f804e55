#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cve/dataset.hpp"
#include "cve/hash.hpp"

namespace cve::dataset {

namespace fs = std::filesystem;

namespace {

struct Rgb {
    double r, g, b;
};

/// Layout of one scene, shared by its satellite and street renderings.
struct Scene {
    double facade_left, facade_right, facade_top;  // fractions of the frame
    Rgb wall, roof, sky, ground, lawn;
};

Scene sample_scene(Rng& rng) {
    Scene s{};
    s.facade_left = rng.uniform(0.10, 0.30);
    s.facade_right = rng.uniform(0.70, 0.90);
    s.facade_top = rng.uniform(0.30, 0.45);
    s.wall = {rng.uniform(0.70, 0.90), rng.uniform(0.65, 0.85), rng.uniform(0.55, 0.75)};
    s.roof = {rng.uniform(0.35, 0.55), rng.uniform(0.30, 0.45), rng.uniform(0.30, 0.40)};
    s.sky = {rng.uniform(0.50, 0.65), rng.uniform(0.70, 0.80), rng.uniform(0.85, 0.95)};
    s.ground = {rng.uniform(0.40, 0.50), rng.uniform(0.38, 0.45), rng.uniform(0.35, 0.42)};
    s.lawn = {rng.uniform(0.25, 0.35), rng.uniform(0.45, 0.60), rng.uniform(0.20, 0.30)};
    return s;
}

void put(ImagePlane& img, std::size_t y, std::size_t x, Rgb c) {
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
}

void fill_ellipse(ImagePlane& img, double cy, double cx, double ry, double rx, Rgb c) {
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double dy = (static_cast<double>(y) - cy) / ry;
            const double dx = (static_cast<double>(x) - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) put(img, y, x, c);
        }
}

void add_noise(ImagePlane& img, Rng& rng, double sigma) {
    for (double& v : img.data()) v += sigma * rng.normal();
    img.clamp();
}

/// Round to the 256 levels an 8-bit PNG can hold, so in-memory values equal decoded ones.
void quantize(ImagePlane& img) {
    for (double& v : img.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

void add_debris(ImagePlane& img, Rng& rng, int blobs) {
    const double n = static_cast<double>(img.height());
    for (int i = 0; i < blobs; ++i) {
        const double shade = rng.uniform(0.10, 0.30);
        fill_ellipse(img, rng.uniform(0.55 * n, 0.95 * n), rng.uniform(0.05 * n, 0.95 * n),
                     rng.uniform(0.04 * n, 0.10 * n), rng.uniform(0.06 * n, 0.16 * n),
                     {shade + 0.08, shade + 0.04, shade});
    }
}

ImagePlane render_street(const Scene& s, int severity, Rng& damage, std::size_t size) {
    ImagePlane img(size, size, 3);
    const double n = static_cast<double>(size);
    const auto top = static_cast<std::size_t>(s.facade_top * n);
    const auto left = static_cast<std::size_t>(s.facade_left * n);
    const auto right = static_cast<std::size_t>(s.facade_right * n);
    const auto horizon = static_cast<std::size_t>(0.75 * n);
    for (std::size_t y = 0; y < size; ++y) {
        const double fade = static_cast<double>(y) / n;
        for (std::size_t x = 0; x < size; ++x) {
            if (y >= horizon) put(img, y, x, s.ground);
            else if (y >= top && x >= left && x < right) put(img, y, x, s.wall);
            else put(img, y, x, {s.sky.r + 0.1 * fade, s.sky.g + 0.05 * fade, s.sky.b});
        }
    }
    for (std::size_t x = left; x < right; ++x)
        for (std::size_t y = top; y < std::min(size, top + std::max<std::size_t>(1, size / 16)); ++y)
            put(img, y, x, s.roof);
    // Damage: broken openings in the facade, debris on the ground, sensor noise.
    for (int i = 0; i < 2 * severity; ++i) {
        const double cy = damage.uniform(s.facade_top * n + 2, 0.7 * n);
        const double cx = damage.uniform(s.facade_left * n + 2, s.facade_right * n - 2);
        fill_ellipse(img, cy, cx, damage.uniform(0.03 * n, 0.07 * n), damage.uniform(0.03 * n, 0.08 * n),
                     {0.08, 0.07, 0.07});
    }
    add_debris(img, damage, 3 * severity);
    add_noise(img, damage, 0.01 + 0.04 * severity);
    return img;
}

ImagePlane render_satellite(const Scene& s, int severity, Rng& damage, std::size_t size) {
    ImagePlane img(size, size, 3);
    const double n = static_cast<double>(size);
    const auto x0 = static_cast<std::size_t>(s.facade_left * n);
    const auto x1 = static_cast<std::size_t>(s.facade_right * n);
    const auto y0 = static_cast<std::size_t>(0.25 * n);
    const auto y1 = static_cast<std::size_t>((0.25 + (s.facade_right - s.facade_left) * 0.7) * n);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            put(img, y, x, (y >= y0 && y < y1 && x >= x0 && x < x1) ? s.roof : s.lawn);
    const double missing = 0.12 * severity;
    for (std::size_t y = y0; y < std::min(y1, size); ++y)
        for (std::size_t x = x0; x < x1; ++x)
            if (damage.uniform() < missing) put(img, y, x, {0.15, 0.12, 0.10});
    const std::size_t scatter = static_cast<std::size_t>(0.04 * severity * n * n);
    for (std::size_t i = 0; i < scatter; ++i) {
        const auto y = static_cast<std::size_t>(damage.below(size));
        const auto x = static_cast<std::size_t>(damage.below(size));
        put(img, y, x, {0.55, 0.50, 0.45});
    }
    add_noise(img, damage, 0.01 + 0.02 * severity);
    return img;
}

ImagePlane box_blur(const ImagePlane& img, int radius) {
    ImagePlane out(img.height(), img.width(), img.channels());
    const auto h = static_cast<int>(img.height());
    const auto w = static_cast<int>(img.width());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (std::size_t c = 0; c < img.channels(); ++c) {
                double acc = 0.0;
                int count = 0;
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        acc += img.at(yy, xx, c);
                        ++count;
                    }
                out.at(y, x, c) = acc / count;
            }
    return out;
}

ImagePlane shift_columns(const ImagePlane& img, std::size_t by) {
    ImagePlane out(img.height(), img.width(), img.channels());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < img.channels(); ++c)
                out.at(y, (x + by) % img.width(), c) = img.at(y, x, c);
    return out;
}

std::uint64_t stream_seed(std::uint64_t seed, std::size_t index, std::string_view stream) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)) ^ fnv1a64(stream);
}

/// Mean of a channel-interleaved block [y0,y1) x [x0,x1) for channel c.
double block_mean(const ImagePlane& img, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1,
                  std::size_t c) {
    double acc = 0.0;
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) acc += img.at(y, x, c);
    return acc / static_cast<double>((y1 - y0) * (x1 - x0));
}

struct GradientPlanes {
    ImagePlane lum, gx, gy;
};

GradientPlanes gradients(const ImagePlane& img) {
    GradientPlanes g{to_grayscale(img), {}, {}};
    const std::size_t h = img.height(), w = img.width();
    g.gx = ImagePlane(h, w, 1);
    g.gy = ImagePlane(h, w, 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xr = std::min(x + 1, w - 1), yd = std::min(y + 1, h - 1);
            g.gx.at(y, x) = std::abs(g.lum.at(y, xr) - g.lum.at(y, x));
            g.gy.at(y, x) = std::abs(g.lum.at(yd, x) - g.lum.at(y, x));
        }
    return g;
}

}  // namespace

const std::vector<std::string>& toy_methods() {
    static const std::vector<std::string> methods = {"pix2pix", "controlnet", "controlnet_vlm", "disaster_moe"};
    return methods;
}

FeatureFile toy_pooled_features(const ImagePlane& img) {
    const auto g = gradients(img);
    const std::size_t h = img.height(), w = img.width();
    std::vector<float> v;
    v.reserve(kToyPooledDim);
    const auto rgb = img.channels() == 3 ? img : ImagePlane(h, w, 3, [&] {
        std::vector<double> d;
        for (double x : img.data()) d.insert(d.end(), {x, x, x});
        return d;
    }());
    for (std::size_t c = 0; c < 3; ++c) v.push_back(static_cast<float>(block_mean(rgb, 0, h, 0, w, c)));
    const double mean = block_mean(g.lum, 0, h, 0, w, 0);
    double var = 0.0, dark = 0.0, bright = 0.0;
    for (double x : g.lum.data()) {
        var += (x - mean) * (x - mean);
        dark += x < 0.25 ? 1.0 : 0.0;
        bright += x > 0.75 ? 1.0 : 0.0;
    }
    const double count = static_cast<double>(h * w);
    v.push_back(static_cast<float>(std::sqrt(var / count)));
    v.push_back(static_cast<float>(block_mean(g.gx, 0, h, 0, w, 0)));
    v.push_back(static_cast<float>(block_mean(g.gy, 0, h, 0, w, 0)));
    v.push_back(static_cast<float>(dark / count));
    v.push_back(static_cast<float>(bright / count));
    for (std::size_t by = 0; by < 4; ++by)
        for (std::size_t bx = 0; bx < 4; ++bx)
            v.push_back(static_cast<float>(
                block_mean(g.lum, by * h / 4, (by + 1) * h / 4, bx * w / 4, (bx + 1) * w / 4, 0)));
    return FeatureFile{{FeatureLayer{"pool", {static_cast<std::uint32_t>(v.size())}, std::move(v), std::nullopt}}};
}

FeatureFile toy_layered_features(const ImagePlane& img) {
    const auto g = gradients(img);
    const std::size_t h = img.height(), w = img.width();

    FeatureLayer block1{"block1", {3, static_cast<std::uint32_t>(h / 4), static_cast<std::uint32_t>(w / 4)}, {},
                        std::vector<float>{0.5f, 0.5f, 0.5f}};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t by = 0; by < h / 4; ++by)
            for (std::size_t bx = 0; bx < w / 4; ++bx)
                block1.data.push_back(static_cast<float>(
                    block_mean(img, 4 * by, 4 * by + 4, 4 * bx, 4 * bx + 4, img.channels() == 3 ? c : 0)));

    FeatureLayer block2{"block2", {4, static_cast<std::uint32_t>(h / 8), static_cast<std::uint32_t>(w / 8)}, {},
                        std::vector<float>{1.0f, 0.8f, 0.8f, 0.6f}};
    std::vector<float> lum, gx, gy, sd;
    for (std::size_t by = 0; by < h / 8; ++by)
        for (std::size_t bx = 0; bx < w / 8; ++bx) {
            const std::size_t y0 = 8 * by, x0 = 8 * bx;
            const double m = block_mean(g.lum, y0, y0 + 8, x0, x0 + 8, 0);
            double var = 0.0;
            for (std::size_t y = y0; y < y0 + 8; ++y)
                for (std::size_t x = x0; x < x0 + 8; ++x) var += (g.lum.at(y, x) - m) * (g.lum.at(y, x) - m);
            lum.push_back(static_cast<float>(m));
            gx.push_back(static_cast<float>(block_mean(g.gx, y0, y0 + 8, x0, x0 + 8, 0)));
            gy.push_back(static_cast<float>(block_mean(g.gy, y0, y0 + 8, x0, x0 + 8, 0)));
            sd.push_back(static_cast<float>(std::sqrt(var / 64.0)));
        }
    for (const auto* plane : {&lum, &gx, &gy, &sd}) block2.data.insert(block2.data.end(), plane->begin(), plane->end());
    return FeatureFile{{std::move(block1), std::move(block2)}};
}

Manifest synth_toy_corpus(const ToyCorpusOptions& options, const fs::path& out) {
    if (options.n_per_class < 1) throw DomainError("synth_toy_corpus: n_per_class must be >= 1");
    if (options.size < 8) throw DomainError("synth_toy_corpus: size must be >= 8");
    std::error_code ec;
    fs::create_directories(out / "images", ec);
    if (ec) throw IoError("cannot create output directory " + (out / "images").string() + ": " + ec.message());

    const fs::path root = fs::absolute(out).lexically_normal();
    const fs::path features = root / "features";
    auto emit_features = [&](const ImagePlane& img, const std::string& role, const std::string& id) {
        if (!options.with_features) return;
        const auto pooled = toy_pooled_features(img);
        for (const char* kind : {kFidKind, kCasKind}) {
            fs::create_directories(features / kind / role);
            write_cvf(feature_path(features, kind, role, id), pooled);
        }
        fs::create_directories(features / kLpipsKind / role);
        write_cvf(feature_path(features, kLpipsKind, role, id), toy_layered_features(img));
    };

    Manifest m;
    m.split = Split::Test;
    m.methods = toy_methods();
    const std::size_t total = options.n_per_class * kNumClasses;
    for (std::size_t i = 0; i < total; ++i) {
        const int severity = static_cast<int>(i % kNumClasses);
        char id_buf[32];
        std::snprintf(id_buf, sizeof id_buf, "p%03zu", i + 1);
        const std::string id = id_buf;

        Rng scene_rng(stream_seed(options.seed, i, "scene"));
        const Scene scene = sample_scene(scene_rng);
        Rng street_rng(stream_seed(options.seed, i, "street"));
        Rng sat_rng(stream_seed(options.seed, i, "satellite"));
        auto street = render_street(scene, severity, street_rng, options.size);
        auto satellite = render_satellite(scene, severity, sat_rng, options.size);
        quantize(street);
        quantize(satellite);

        SamplePair pair;
        pair.id = id;
        pair.label = label_from_index(severity);
        pair.street_path = root / "images" / (id + "_street.png");
        pair.satellite_path = root / "images" / (id + "_sat.png");
        write_png(pair.street_path, street);
        write_png(pair.satellite_path, satellite);
        emit_features(street, kStreetRole, id);

        for (const auto& method : m.methods) {
            Rng rng(stream_seed(options.seed, i, method));
            ImagePlane gen;
            if (method == "pix2pix") {
                // Renders the undamaged version of the scene, blurred.
                Rng mild_rng(stream_seed(options.seed, i, "street"));
                gen = box_blur(render_street(scene, 0, mild_rng, options.size), 2);
            } else if (method == "controlnet") {
                gen = street;
                add_noise(gen, rng, 0.03);
            } else if (method == "controlnet_vlm") {
                gen = street;
                add_debris(gen, rng, 1 + static_cast<int>(rng.below(2)));
                add_noise(gen, rng, 0.05);
            } else {
                gen = shift_columns(street, 2);
                add_noise(gen, rng, 0.06);
            }
            quantize(gen);
            pair.generated[method] = root / "images" / (id + "_" + method + ".png");
            write_png(pair.generated[method], gen);
            emit_features(gen, method, id);
        }
        m.pairs.push_back(std::move(pair));
    }
    save_manifest(m, root / "manifest.json");
    return m;
}

}  // namespace cve::dataset
