#include <zlib.h>

#include "byte_io.hpp"
#include "wreckseg/grid_io.hpp"

namespace wreckseg::io {

namespace {

void put_be32(Bytes& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(Bytes& out, const char type[4], const Bytes& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

Bytes encode(std::size_t rows, std::size_t cols, std::uint8_t color_type, std::size_t channels,
             std::span<const std::uint8_t> px) {
    if (rows == 0 || cols == 0) fail(ErrorCode::InvalidArgument, "empty image");
    if (px.size() != rows * cols * channels) fail(ErrorCode::ShapeMismatch, "pixel buffer size mismatch");
    Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    Bytes ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(cols));
    put_be32(ihdr, static_cast<std::uint32_t>(rows));
    ihdr.insert(ihdr.end(), {8, color_type, 0, 0, 0});
    chunk(out, "IHDR", ihdr);

    const std::size_t stride = cols * channels;
    Bytes raw;
    raw.reserve(rows * (stride + 1));
    for (std::size_t r = 0; r < rows; ++r) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), px.begin() + static_cast<std::ptrdiff_t>(r * stride),
                   px.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    Bytes z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        fail(ErrorCode::Io, "zlib compression failed");
    z.resize(zlen);
    chunk(out, "IDAT", z);
    chunk(out, "IEND", {});
    return out;
}

}  // namespace

Bytes encode_png_gray_alpha(const GrayAlphaImage& img) { return encode(img.rows, img.cols, 4, 2, img.pixels); }

Bytes encode_png_rgba(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> rgba) {
    return encode(rows, cols, 6, 4, rgba);
}

}  // namespace wreckseg::io
