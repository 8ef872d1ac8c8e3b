// Minimal GeoTIFF reader: classic TIFF (either byte order), one band of 32-bit
// IEEE float, uncompressed, strips or tiles, georeferenced by ModelPixelScale +
// ModelTiepoint. Anything else is rejected with UnsupportedTiffFeature.

#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <string>

#include "byte_io.hpp"
#include "wreckseg/grid_io.hpp"

namespace wreckseg::io {

namespace {

enum Tag : std::uint16_t {
    ImageWidth = 256,
    ImageLength = 257,
    BitsPerSample = 258,
    Compression = 259,
    StripOffsets = 273,
    SamplesPerPixel = 277,
    RowsPerStrip = 278,
    StripByteCounts = 279,
    PlanarConfiguration = 284,
    Predictor = 317,
    TileWidth = 322,
    TileLength = 323,
    TileOffsets = 324,
    TileByteCounts = 325,
    SampleFormat = 339,
    ModelPixelScale = 33550,
    ModelTiepoint = 33922,
    ModelTransformation = 34264,
    GeoKeyDirectory = 34735,
    GdalNodata = 42113,
};

constexpr std::uint16_t kGTRasterTypeGeoKey = 1025;
constexpr std::uint16_t kGeographicTypeGeoKey = 2048;
constexpr std::uint16_t kProjectedCSTypeGeoKey = 3072;

struct Entry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t offset = 0;  // absolute offset of the value bytes
};

std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case 1: case 2: case 6: case 7: return 1;
        case 3: case 8: return 2;
        case 4: case 9: case 11: return 4;
        case 5: case 10: case 12: return 8;
        default: return 0;
    }
}

class Ifd {
public:
    Ifd(std::span<const std::uint8_t> file, bool le) : file_(file), le_(le) {}

    void add(std::uint16_t tag, Entry e) { entries_[tag] = e; }
    bool has(std::uint16_t tag) const { return entries_.count(tag) > 0; }

    std::vector<double> numbers(std::uint16_t tag) const {
        const Entry& e = entries_.at(tag);
        detail::ByteReader r(file_, ErrorCode::MalformedHeader, le_);
        r.seek(e.offset);
        std::vector<double> out;
        out.reserve(e.count);
        for (std::uint32_t i = 0; i < e.count; ++i) {
            switch (e.type) {
                case 1: case 7: out.push_back(r.u8()); break;
                case 6: out.push_back(static_cast<std::int8_t>(r.u8())); break;
                case 3: out.push_back(r.u16()); break;
                case 8: out.push_back(static_cast<std::int16_t>(r.u16())); break;
                case 4: out.push_back(r.u32()); break;
                case 9: out.push_back(static_cast<std::int32_t>(r.u32())); break;
                case 5: { double n = r.u32(), d = r.u32(); out.push_back(d == 0 ? 0.0 : n / d); break; }
                case 10: {
                    double n = static_cast<std::int32_t>(r.u32()), d = static_cast<std::int32_t>(r.u32());
                    out.push_back(d == 0 ? 0.0 : n / d);
                    break;
                }
                case 11: out.push_back(r.f32()); break;
                case 12: out.push_back(r.f64()); break;
                default: fail(ErrorCode::MalformedHeader, "tag " + std::to_string(tag) + " is not numeric");
            }
        }
        return out;
    }

    double scalar(std::uint16_t tag, double fallback) const {
        if (!has(tag)) return fallback;
        auto v = numbers(tag);
        if (v.empty()) fail(ErrorCode::MalformedHeader, "tag " + std::to_string(tag) + " has no value");
        return v.front();
    }

    std::string ascii(std::uint16_t tag) const {
        const Entry& e = entries_.at(tag);
        if (e.type != 2) fail(ErrorCode::MalformedHeader, "tag " + std::to_string(tag) + " is not ASCII");
        detail::ByteReader r(file_, ErrorCode::MalformedHeader, le_);
        r.seek(e.offset);
        auto b = r.bytes(e.count);
        std::string s(b.begin(), b.end());
        while (!s.empty() && (s.back() == '\0' || s.back() == ' ')) s.pop_back();
        return s;
    }

private:
    std::span<const std::uint8_t> file_;
    bool le_;
    std::map<std::uint16_t, Entry> entries_;
};

}  // namespace

GeoGrid read_geotiff(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) fail(ErrorCode::EmptyInput, "empty input");
    if (bytes.size() < 8) fail(ErrorCode::MalformedHeader, "file shorter than TIFF header");
    bool le;
    if (bytes[0] == 'I' && bytes[1] == 'I') le = true;
    else if (bytes[0] == 'M' && bytes[1] == 'M') le = false;
    else fail(ErrorCode::MalformedHeader, "missing TIFF byte-order mark");

    detail::ByteReader r(bytes, ErrorCode::MalformedHeader, le);
    r.seek(2);
    const std::uint16_t magic = r.u16();
    if (magic == 43) fail(ErrorCode::UnsupportedTiffFeature, "BigTIFF is not supported");
    if (magic != 42) fail(ErrorCode::MalformedHeader, "bad TIFF magic");
    const std::uint32_t ifd_off = r.u32();
    r.seek(ifd_off);
    const std::uint16_t n_entries = r.u16();
    if (n_entries == 0) fail(ErrorCode::MalformedHeader, "empty IFD");

    Ifd ifd(bytes, le);
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::uint16_t tag = r.u16();
        Entry e;
        e.type = r.u16();
        e.count = r.u32();
        const std::size_t value_pos = r.pos();
        const std::uint32_t raw = r.u32();
        const std::size_t sz = type_size(e.type);
        if (sz == 0) continue;  // unknown types are skipped, as TIFF readers must
        const std::uint64_t total = std::uint64_t{sz} * e.count;
        e.offset = total <= 4 ? value_pos : raw;
        if (e.offset + total > bytes.size()) fail(ErrorCode::MalformedHeader, "tag " + std::to_string(tag) + " points past end of file");
        ifd.add(tag, e);
    }

    for (auto t : {ImageWidth, ImageLength}) {
        if (!ifd.has(t)) fail(ErrorCode::MalformedHeader, "missing image dimensions");
    }
    const double w = ifd.scalar(ImageWidth, 0), h = ifd.scalar(ImageLength, 0);
    if (w < 1 || h < 1 || w * h > double(std::size_t{1} << 31)) fail(ErrorCode::InconsistentDimensions, "bad image dimensions");
    const auto cols = static_cast<std::size_t>(w), rows = static_cast<std::size_t>(h);

    if (ifd.scalar(Compression, 1) != 1) fail(ErrorCode::UnsupportedTiffFeature, "compressed TIFF");
    if (ifd.scalar(SamplesPerPixel, 1) != 1) fail(ErrorCode::UnsupportedTiffFeature, "multi-band TIFF");
    if (ifd.has(BitsPerSample)) {
        for (double b : ifd.numbers(BitsPerSample))
            if (b != 32) fail(ErrorCode::UnsupportedTiffFeature, "sample size is not 32 bits");
    } else {
        fail(ErrorCode::UnsupportedTiffFeature, "non-float sample (default 1-bit)");
    }
    if (ifd.scalar(SampleFormat, 1) != 3) fail(ErrorCode::UnsupportedTiffFeature, "non-float sample format");
    if (ifd.scalar(Predictor, 1) != 1) fail(ErrorCode::UnsupportedTiffFeature, "predictor");

    // Georeferencing
    if (!ifd.has(ModelPixelScale) || !ifd.has(ModelTiepoint)) {
        if (ifd.has(ModelTransformation)) fail(ErrorCode::UnsupportedTiffFeature, "ModelTransformation georeferencing");
        fail(ErrorCode::MalformedHeader, "missing ModelPixelScale/ModelTiepoint georeferencing");
    }
    const auto scale = ifd.numbers(ModelPixelScale);
    const auto tie = ifd.numbers(ModelTiepoint);
    if (scale.size() < 2 || tie.size() < 6) fail(ErrorCode::MalformedHeader, "short georeferencing tags");
    const double sx = scale[0], sy = scale[1];
    if (!(sx > 0) || !(sy > 0) || !std::isfinite(sx) || !std::isfinite(sy)) fail(ErrorCode::MalformedHeader, "non-positive pixel scale");
    if (std::abs(sx - sy) > 1e-9 * std::max(sx, sy)) fail(ErrorCode::UnsupportedTiffFeature, "non-square pixels");

    GeoTransform geo;
    geo.pixel_size = sx;
    geo.origin_easting = tie[3] - tie[0] * sx;
    geo.origin_northing = tie[4] + tie[1] * sy;
    if (ifd.has(GeoKeyDirectory)) {
        const auto keys = ifd.numbers(GeoKeyDirectory);
        if (keys.size() >= 4) {
            const auto n = static_cast<std::size_t>(keys[3]);
            for (std::size_t k = 0; k < n && 4 + 4 * k + 3 < keys.size(); ++k) {
                const auto id = static_cast<std::uint16_t>(keys[4 + 4 * k]);
                const auto loc = keys[4 + 4 * k + 1];
                const auto value = keys[4 + 4 * k + 3];
                if (loc != 0) continue;
                if (id == kProjectedCSTypeGeoKey || (id == kGeographicTypeGeoKey && geo.crs_id == 0))
                    geo.crs_id = static_cast<std::uint32_t>(value);
                if (id == kGTRasterTypeGeoKey && value == 2) {
                    // PixelIsPoint: the tiepoint names a pixel centre
                    geo.origin_easting -= sx / 2;
                    geo.origin_northing += sy / 2;
                }
            }
        }
    }

    bool has_nodata = false;
    double nodata = 0.0;
    if (ifd.has(GdalNodata)) {
        const std::string s = ifd.ascii(GdalNodata);
        char* end = nullptr;
        nodata = std::strtod(s.c_str(), &end);
        has_nodata = end != s.c_str();
    }

    GeoGrid g(rows, cols, geo);
    auto put_block = [&](std::size_t off, std::size_t row0, std::size_t col0, std::size_t brows, std::size_t bcols,
                         std::size_t stride) {
        detail::ByteReader br(bytes, ErrorCode::InconsistentDimensions, le);
        for (std::size_t rr = 0; rr < brows; ++rr) {
            br.seek(off + rr * stride * 4);
            for (std::size_t cc = 0; cc < bcols; ++cc) {
                const float v = br.f32();
                const std::size_t r0 = row0 + rr, c0 = col0 + cc;
                if (r0 >= rows || c0 >= cols) continue;
                const bool nd = !std::isfinite(v) || (has_nodata && static_cast<double>(v) == static_cast<double>(static_cast<float>(nodata)));
                g.depth(r0, c0) = v;
                g.valid(r0, c0) = nd ? 0 : 1;
            }
        }
    };

    if (ifd.has(TileOffsets)) {
        const double tw = ifd.scalar(TileWidth, 0), th = ifd.scalar(TileLength, 0);
        if (tw < 1 || th < 1) fail(ErrorCode::MalformedHeader, "tiled TIFF without tile dimensions");
        const auto across = static_cast<std::size_t>((w + tw - 1) / tw), down = static_cast<std::size_t>((h + th - 1) / th);
        const auto offs = ifd.numbers(TileOffsets);
        if (offs.size() < across * down) fail(ErrorCode::InconsistentDimensions, "too few tile offsets");
        const auto twi = static_cast<std::size_t>(tw), thi = static_cast<std::size_t>(th);
        for (std::size_t t = 0; t < across * down; ++t) {
            const std::size_t tr = t / across, tc = t % across;
            put_block(static_cast<std::size_t>(offs[t]), tr * thi, tc * twi, thi, twi, twi);
        }
    } else {
        if (!ifd.has(StripOffsets)) fail(ErrorCode::MalformedHeader, "no strip or tile offsets");
        const auto offs = ifd.numbers(StripOffsets);
        double rps = ifd.scalar(RowsPerStrip, h);
        if (rps < 1) fail(ErrorCode::MalformedHeader, "RowsPerStrip < 1");
        rps = std::min(rps, h);
        const auto rpsi = static_cast<std::size_t>(rps);
        const std::size_t n_strips = (rows + rpsi - 1) / rpsi;
        if (offs.size() < n_strips) fail(ErrorCode::InconsistentDimensions, "too few strip offsets");
        if (ifd.has(StripByteCounts)) {
            const auto counts = ifd.numbers(StripByteCounts);
            if (counts.size() < n_strips) fail(ErrorCode::InconsistentDimensions, "too few strip byte counts");
            for (std::size_t s = 0; s < n_strips; ++s) {
                const std::size_t nrow = std::min(rpsi, rows - s * rpsi);
                if (counts[s] < double(nrow * cols * 4)) fail(ErrorCode::InconsistentDimensions, "strip shorter than its rows");
            }
        }
        for (std::size_t s = 0; s < n_strips; ++s) {
            const std::size_t nrow = std::min(rpsi, rows - s * rpsi);
            put_block(static_cast<std::size_t>(offs[s]), s * rpsi, 0, nrow, cols, cols);
        }
    }
    return g;
}

}  // namespace wreckseg::io
