#include "cve/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "cve/common.hpp"

namespace cve {

ImagePlane::ImagePlane(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : ImagePlane(height, width, channels, std::vector<double>(height * width * channels, fill)) {}

ImagePlane::ImagePlane(std::size_t height, std::size_t width, std::size_t channels,
                       std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (channels_ != 1 && channels_ != 3)
        throw DomainError("ImagePlane: channels must be 1 or 3, got " + std::to_string(channels_));
    if (height_ * width_ * channels_ != data_.size())
        throw ShapeError("ImagePlane: height*width*channels does not match data length");
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("ImagePlane: intensity outside [0,1]");
    }
}

void ImagePlane::clamp() {
    for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

ImagePlane to_grayscale(const ImagePlane& img) {
    if (img.channels() == 1) return img;
    std::vector<double> out(img.height() * img.width());
    const auto src = img.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return ImagePlane(img.height(), img.width(), 1, std::move(out));
}

ImagePlane downscale_to_edge(const ImagePlane& img, std::size_t max_edge) {
    if (max_edge == 0) throw DomainError("downscale_to_edge: max_edge must be positive");
    const std::size_t edge = std::max(img.height(), img.width());
    if (edge <= max_edge) return img;
    const double scale = static_cast<double>(max_edge) / static_cast<double>(edge);
    const auto out_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(img.height() * scale)));
    const auto out_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(img.width() * scale)));
    const std::size_t ch = img.channels();
    std::vector<double> out(out_h * out_w * ch, 0.0);
    // Each output pixel averages the source pixels whose centres fall in its footprint.
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const std::size_t y0 = oy * img.height() / out_h;
        const std::size_t y1 = std::max(y0 + 1, (oy + 1) * img.height() / out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::size_t x0 = ox * img.width() / out_w;
            const std::size_t x1 = std::max(x0 + 1, (ox + 1) * img.width() / out_w);
            const double count = static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x) acc += img.at(y, x, c);
                out[(oy * out_w + ox) * ch + c] = std::clamp(acc / count, 0.0, 1.0);
            }
        }
    }
    return ImagePlane(out_h, out_w, ch, std::move(out));
}

namespace {

ImagePlane from_bytes(std::size_t h, std::size_t w, std::size_t ch, const std::uint8_t* px) {
    std::vector<double> data(h * w * ch);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = px[i] / 255.0;
    return ImagePlane(h, w, ch, std::move(data));
}

ImagePlane decode_png(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw IoError(std::string("png decode: ") + image.message);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(std::string("png decode: ") + image.message);
    }
    return from_bytes(image.height, image.width, color ? 3 : 1, buffer.data());
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, mgr->message);
    std::longjmp(mgr->jump, 1);
}

ImagePlane decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    std::vector<std::uint8_t> buffer;
    std::size_t h = 0, w = 0, ch = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError(std::string("jpeg decode: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = cinfo.output_height;
    w = cinfo.output_width;
    ch = cinfo.output_components;
    buffer.resize(h * w * ch);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = buffer.data() + cinfo.output_scanline * w * ch;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_bytes(h, w, ch, buffer.data());
}

}  // namespace

ImagePlane decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPngSig[] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::equal(std::begin(kPngSig), std::end(kPngSig), bytes.begin()))
        return decode_png(bytes);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
        return decode_jpeg(bytes);
    throw IoError("unrecognized image format (expected PNG or JPEG)");
}

ImagePlane read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_image(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const ImagePlane& img) {
    if (img.empty()) throw DomainError("encode_png: empty image");
    std::vector<std::uint8_t> px(img.size());
    const auto src = img.data();
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr))
        throw IoError(std::string("png encode: ") + image.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr))
        throw IoError(std::string("png encode: ") + image.message);
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const ImagePlane& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

}  // namespace cve
