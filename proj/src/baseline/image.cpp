#include <png.h>
#include <zlib.h>

#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>

#include "credlens/baseline.hpp"
#include "credlens/common/io.hpp"

namespace credlens::baseline {

namespace {

bool isPng(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::memcmp(b.data(), kSig, 8) == 0;
}

bool isJpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

Image decodePng(std::span<const std::uint8_t> bytes) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw ImageError(std::string("png: ") + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image out;
    out.width = png.width;
    out.height = png.height;
    out.rgb.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, out.rgb.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw ImageError("png: " + message);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpegSilent(j_common_ptr) {}

void jpegErrorExit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

/// C-style on purpose: longjmp must not skip C++ destructors.
bool decodeJpegInto(const std::uint8_t* data, std::size_t size, std::uint32_t* width, std::uint32_t* height,
                    std::uint8_t** pixels, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpegErrorExit;
    err.base.output_message = jpegSilent;
    *pixels = nullptr;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        std::free(*pixels);
        *pixels = nullptr;
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    // fixed integer IDCT keeps decoding identical across machines
    cinfo.dct_method = JDCT_ISLOW;
    jpeg_start_decompress(&cinfo);
    *width = cinfo.output_width;
    *height = cinfo.output_height;
    const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
    *pixels = static_cast<std::uint8_t*>(std::malloc(stride * cinfo.output_height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = *pixels + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    const bool clean = err.base.num_warnings == 0;
    jpeg_destroy_decompress(&cinfo);
    if (!clean) {
        std::strncpy(message, "corrupt or truncated data", JMSG_LENGTH_MAX);
        std::free(*pixels);
        *pixels = nullptr;
    }
    return clean;
}

Image decodeJpeg(std::span<const std::uint8_t> bytes) {
    std::uint32_t w = 0, h = 0;
    std::uint8_t* pixels = nullptr;
    char message[JMSG_LENGTH_MAX] = {0};
    if (!decodeJpegInto(bytes.data(), bytes.size(), &w, &h, &pixels, message)) {
        throw ImageError(std::string("jpeg: ") + message);
    }
    Image out;
    out.width = w;
    out.height = h;
    out.rgb.assign(pixels, pixels + static_cast<std::size_t>(w) * h * 3);
    std::free(pixels);
    return out;
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
};

Moments populationMoments(const std::vector<double>& v) {
    Moments m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size()));
    return m;
}

}  // namespace

Image decodeImage(std::span<const std::uint8_t> bytes) {
    Image image;
    if (isPng(bytes)) image = decodePng(bytes);
    else if (isJpeg(bytes)) image = decodeJpeg(bytes);
    else throw ImageError("unsupported image format (expected PNG or JPEG)");
    if (image.width == 0 || image.height == 0) throw ImageError("image has zero area");
    return image;
}

Image loadImage(const std::filesystem::path& path) {
    try {
        return decodeImage(readBinaryFile(path));
    } catch (const ImageError& e) {
        throw ImageError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encodePng(const Image& image) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = image.width;
    png.height = image.height;
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
        throw ImageError(std::string("png encode: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
        throw ImageError(std::string("png encode: ") + png.message);
    }
    out.resize(size);
    return out;
}

std::vector<double> luminance(const Image& image) {
    const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (0.299 * image.rgb[3 * i] + 0.587 * image.rgb[3 * i + 1] + 0.114 * image.rgb[3 * i + 2]) / 255.0;
    }
    return out;
}

ImageFeatures imageFeatures(const Image& image) {
    if (image.width == 0 || image.height == 0) throw ImageError("image has zero area");
    const std::size_t w = image.width, h = image.height, n = w * h;
    ImageFeatures f;
    f.aspectRatio = static_cast<double>(w) / static_cast<double>(h);

    // integer sums keep constant fields at exactly zero spread
    std::int64_t sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    std::int64_t sumRg = 0, sqRg = 0, sumYb = 0, sqYb = 0;  // yb doubled to stay integral
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t r = image.rgb[3 * i], g = image.rgb[3 * i + 1], b = image.rgb[3 * i + 2];
        const std::int64_t px[3] = {r, g, b};
        for (int c = 0; c < 3; ++c) {
            sum[c] += px[c];
            sq[c] += px[c] * px[c];
        }
        const std::int64_t rg = r - g, yb2 = r + g - 2 * b;
        sumRg += rg;
        sqRg += rg * rg;
        sumYb += yb2;
        sqYb += yb2 * yb2;
    }
    const auto nd = static_cast<double>(n);
    const auto moments = [&](std::int64_t s, std::int64_t q, double scale) {
        const auto ni = static_cast<std::int64_t>(n);
        __extension__ using Wide = __int128;  // n*q overflows 64 bits on large images
        const Wide spread = static_cast<Wide>(ni) * q - static_cast<Wide>(s) * s;
        const double var = static_cast<double>(spread) / (nd * nd);
        return Moments{static_cast<double>(s) / nd / scale, std::sqrt(var) / scale};
    };
    const Moments mr = moments(sum[0], sq[0], 255.0), mg = moments(sum[1], sq[1], 255.0), mb = moments(sum[2], sq[2], 255.0);
    f.meanR = mr.mean, f.meanG = mg.mean, f.meanB = mb.mean;
    f.sdR = mr.sd, f.sdG = mg.sd, f.sdB = mb.sd;
    const Moments mrg = moments(sumRg, sqRg, 1.0), myb = moments(sumYb, sqYb, 2.0);
    f.colorfulness = std::sqrt(mrg.sd * mrg.sd + myb.sd * myb.sd) + 0.3 * std::sqrt(mrg.mean * mrg.mean + myb.mean * myb.mean);

    const auto lum = luminance(image);
    f.brightness = populationMoments(lum).mean;

    if (w >= 3 && h >= 3) {
        std::vector<double> lap;
        lap.reserve((w - 2) * (h - 2));
        std::size_t edges = 0;
        const auto L = [&](std::size_t x, std::size_t y) { return lum[y * w + x]; };
        for (std::size_t y = 1; y + 1 < h; ++y) {
            for (std::size_t x = 1; x + 1 < w; ++x) {
                lap.push_back(L(x, y - 1) + L(x - 1, y) + L(x + 1, y) + L(x, y + 1) - 4.0 * L(x, y));
                const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                                  (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
                const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                                  (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
                if (std::sqrt(gx * gx + gy * gy) > 0.1) ++edges;
            }
        }
        const double sd = populationMoments(lap).sd;
        f.sharpness = sd * sd;
        f.edgeDensity = static_cast<double>(edges) / static_cast<double>(lap.size());
    }

    uLongf compressedSize = compressBound(static_cast<uLong>(image.rgb.size()));
    std::vector<Bytef> buffer(compressedSize);
    if (compress2(buffer.data(), &compressedSize, image.rgb.data(), static_cast<uLong>(image.rgb.size()), 9) != Z_OK) {
        throw ImageError("zlib compression failed");
    }
    f.complexity = std::min(1.0, static_cast<double>(compressedSize) / static_cast<double>(3 * n));
    return f;
}

ImageFeatures imageFeatures(std::span<const std::uint8_t> encoded) { return imageFeatures(decodeImage(encoded)); }

std::vector<std::pair<std::string, double>> ImageFeatures::named() const {
    return {{"brightness", brightness}, {"colorfulness", colorfulness}, {"mean_r", meanR},
            {"mean_g", meanG},          {"mean_b", meanB},              {"sd_r", sdR},
            {"sd_g", sdG},              {"sd_b", sdB},                  {"aspect_ratio", aspectRatio},
            {"sharpness", sharpness},   {"complexity", complexity},     {"edge_density", edgeDensity}};
}

}  // namespace credlens::baseline
