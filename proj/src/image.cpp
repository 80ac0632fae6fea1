#include "uniview/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "uniview/errors.hpp"

namespace uniview {

Image::Image(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w <= 0 || h <= 0) throw DimensionError("image extents must be positive");
}

double& Image::at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
}

double Image::at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
}

TensorPtr tensor_from_image(const Image& img, bool requires_grad) {
    return make_tensor(img.pixels, {3, img.height, img.width}, requires_grad);
}

Image image_from_tensor(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 3)
        throw DimensionError("image_from_tensor: expects [3,H,W]");
    Image img(static_cast<int>(t.shape[2]), static_cast<int>(t.shape[1]));
    img.pixels = t.data;
    return img;
}

namespace {

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_u32be(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc =
        crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw DimensionError("write_png: malformed image");

    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3;
    std::vector<std::uint8_t> raw((row_bytes + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        row[0] = 0;
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[1 + x * 3 + c] = to_byte(img.at(c, y, x));
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw IoError("write_png: deflate failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: short write to " + path);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw IoError("read_png: not a PNG: " + path);

    std::uint32_t w = 0, h = 0;
    int color_type = -1;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool saw_end = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = get_u32be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("read_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("read_png: bad IHDR");
            w = get_u32be(data);
            h = get_u32be(data + 4);
            const int depth = data[8];
            color_type = data[9];
            if (depth != 8) throw IoError("read_png: only 8-bit images supported");
            if (color_type != 0 && color_type != 2 && color_type != 6)
                throw IoError("read_png: unsupported color type");
            if (data[12] != 0) throw IoError("read_png: interlaced images unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_end = true;
            break;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0 || color_type < 0 || idat.empty() || !saw_end)
        throw IoError("read_png: missing critical chunks in " + path);

    const std::size_t bpp = color_type == 2 ? 3 : (color_type == 6 ? 4 : 1);
    const std::size_t row_bytes = static_cast<std::size_t>(w) * bpp;
    std::vector<std::uint8_t> raw((row_bytes + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("read_png: inflate failed for " + path);

    std::vector<std::uint8_t> prev(row_bytes, 0);
    Image img(static_cast<int>(w), static_cast<int>(h));
    for (std::uint32_t y = 0; y < h; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        const std::uint8_t filter = row[0];
        std::uint8_t* cur = row + 1;
        for (std::size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= bpp ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= bpp ? prev[i - bpp] : 0;
            switch (filter) {
                case 0: break;
                case 1: cur[i] = static_cast<std::uint8_t>(cur[i] + a); break;
                case 2: cur[i] = static_cast<std::uint8_t>(cur[i] + b); break;
                case 3: cur[i] = static_cast<std::uint8_t>(cur[i] + (a + b) / 2); break;
                case 4: cur[i] = static_cast<std::uint8_t>(cur[i] + paeth(a, b, c)); break;
                default: throw IoError("read_png: unknown filter type");
            }
        }
        std::memcpy(prev.data(), cur, row_bytes);
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::uint8_t* px = cur + x * bpp;
            const double r = px[0] / 255.0;
            const double g = (bpp >= 3 ? px[1] : px[0]) / 255.0;
            const double bch = (bpp >= 3 ? px[2] : px[0]) / 255.0;
            img.at(0, static_cast<int>(y), static_cast<int>(x)) = r;
            img.at(1, static_cast<int>(y), static_cast<int>(x)) = g;
            img.at(2, static_cast<int>(y), static_cast<int>(x)) = bch;
        }
    }
    return img;
}

Image quantized(const Image& img) {
    Image out = img;
    for (double& v : out.pixels) v = to_byte(v) / 255.0;
    return out;
}

}  // namespace uniview
