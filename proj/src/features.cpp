#include "cve/features.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "cve/common.hpp"

namespace cve {

static_assert(std::endian::native == std::endian::little, "CVF I/O assumes a little-endian host");

std::size_t FeatureLayer::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

const FeatureLayer* FeatureFile::find(const std::string& name) const {
    for (const auto& layer : layers)
        if (layer.name == name) return &layer;
    return nullptr;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& values) {
    const auto offset = out.size();
    out.resize(offset + values.size() * 4);
    std::memcpy(out.data() + offset, values.data(), values.size() * 4);
}

class Cursor {
public:
    explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::vector<float> floats(std::size_t n) {
        if (n > remaining() / 4) throw IoError("cvf: payload shorter than declared sizes");
        std::vector<float> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * 4);
        pos_ += n * 4;
        return v;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw IoError("cvf: truncated file");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void validate(const FeatureFile& file, bool with_weights) {
    std::set<std::string> names;
    for (const auto& layer : file.layers) {
        if (!names.insert(layer.name).second) throw IoError("cvf: duplicate layer name '" + layer.name + "'");
        if (layer.dims.empty() || layer.dims.size() > 3)
            throw IoError("cvf: layer '" + layer.name + "' has unsupported rank");
        for (auto d : layer.dims)
            if (d == 0) throw IoError("cvf: layer '" + layer.name + "' has a zero dimension");
        if (layer.data.size() != layer.element_count())
            throw IoError("cvf: layer '" + layer.name + "' data length does not match dims");
        if (with_weights != layer.weights.has_value())
            throw IoError("cvf: weight blocks must be present on all layers or none");
        if (layer.weights && layer.weights->size() != layer.dims[0])
            throw IoError("cvf: layer '" + layer.name + "' weight count does not match channel count");
    }
}

}  // namespace

std::vector<std::uint8_t> encode_cvf(const FeatureFile& file) {
    const bool with_weights = !file.layers.empty() && file.layers.front().weights.has_value();
    validate(file, with_weights);
    std::vector<std::uint8_t> out = {'C', 'V', 'F', '1'};
    put_u32(out, with_weights ? kCvfFlagWeights : 0u);
    put_u32(out, static_cast<std::uint32_t>(file.layers.size()));
    for (const auto& layer : file.layers) {
        put_u32(out, static_cast<std::uint32_t>(layer.name.size()));
        out.insert(out.end(), layer.name.begin(), layer.name.end());
        put_u32(out, static_cast<std::uint32_t>(layer.dims.size()));
        for (auto d : layer.dims) put_u32(out, d);
        put_floats(out, layer.data);
        if (layer.weights) {
            put_u32(out, static_cast<std::uint32_t>(layer.weights->size()));
            put_floats(out, *layer.weights);
        }
    }
    return out;
}

FeatureFile decode_cvf(std::span<const std::uint8_t> bytes) {
    Cursor in(bytes);
    if (in.text(4) != "CVF1") throw IoError("cvf: bad magic");
    const auto flags = in.u32();
    if ((flags & ~kCvfFlagWeights) != 0) throw IoError("cvf: unknown flag bits");
    const bool with_weights = (flags & kCvfFlagWeights) != 0;
    const auto count = in.u32();
    FeatureFile file;
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureLayer layer;
        layer.name = in.text(in.u32());
        const auto rank = in.u32();
        if (rank < 1 || rank > 3) throw IoError("cvf: unsupported rank " + std::to_string(rank));
        for (std::uint32_t r = 0; r < rank; ++r) layer.dims.push_back(in.u32());
        layer.data = in.floats(layer.element_count());
        if (with_weights) {
            const auto wc = in.u32();
            layer.weights = in.floats(wc);
        }
        file.layers.push_back(std::move(layer));
    }
    if (in.remaining() != 0) throw IoError("cvf: trailing bytes after last layer");
    validate(file, with_weights);
    return file;
}

FeatureFile read_cvf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_cvf(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_cvf(const std::filesystem::path& path, const FeatureFile& file) {
    const auto bytes = encode_cvf(file);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& kind,
                                   const std::string& role, const std::string& pair_id) {
    return dir / kind / role / (pair_id + ".cvf");
}

}  // namespace cve
