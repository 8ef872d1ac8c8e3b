#include "wreckseg/grid_io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <unistd.h>

#include "byte_io.hpp"

namespace wreckseg::io {

namespace {

constexpr std::uint16_t kBgrdVersion = 1;
constexpr std::size_t kMaxCells = std::size_t{1} << 31;

bool ieq(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
    }
    return true;
}

bool parse_double(std::string_view tok, double& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

// Whitespace tokenizer over a text buffer.
class Tokens {
public:
    explicit Tokens(std::string_view s) : s_(s) {}
    bool next(std::string_view& tok) {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ >= s_.size()) return false;
        std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        tok = s_.substr(start, pos_ - start);
        return true;
    }
    bool peek(std::string_view& tok) {
        std::size_t save = pos_;
        bool ok = next(tok);
        pos_ = save;
        return ok;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

std::string to_chars_shortest(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string to_chars_shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string_view format_name(RasterFormat f) {
    switch (f) {
        case RasterFormat::InternalBinary: return "bgrd";
        case RasterFormat::EsriAscii: return "asc";
        case RasterFormat::XyzPoints: return "xyz";
        case RasterFormat::GeoTiffSubset: return "tif";
    }
    return "?";
}

RasterFormat parse_format(std::string_view name) {
    if (ieq(name, "bgrd") || ieq(name, "internal") || ieq(name, "InternalBinary")) return RasterFormat::InternalBinary;
    if (ieq(name, "asc") || ieq(name, "esri") || ieq(name, "EsriAscii")) return RasterFormat::EsriAscii;
    if (ieq(name, "xyz") || ieq(name, "XyzPoints")) return RasterFormat::XyzPoints;
    if (ieq(name, "tif") || ieq(name, "tiff") || ieq(name, "geotiff") || ieq(name, "GeoTiffSubset"))
        return RasterFormat::GeoTiffSubset;
    fail(ErrorCode::InvalidArgument, "unknown raster format '" + std::string(name) + "'");
}

RasterFormat format_from_path(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    if (!ext.empty() && ext.front() == '.') ext.erase(0, 1);
    return parse_format(ext);
}

// ---------------------------------------------------------------------------
// InternalBinary

Bytes write_internal_binary(const GeoGrid& g) {
    g.check();
    Bytes out;
    out.reserve(4 + 2 + 8 + 24 + 4 + g.size() * 5);
    detail::ByteWriter w(out);
    w.raw(std::string("BGRD"));
    w.u16(kBgrdVersion);
    w.u32(static_cast<std::uint32_t>(g.rows()));
    w.u32(static_cast<std::uint32_t>(g.cols()));
    w.f64(g.geo.origin_easting);
    w.f64(g.geo.origin_northing);
    w.f64(g.geo.pixel_size);
    w.u32(g.geo.crs_id);
    for (float d : g.depth.data) w.f32(d);
    for (auto v : g.valid.data) w.u8(v ? 1 : 0);
    return out;
}

GeoGrid read_internal_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) fail(ErrorCode::EmptyInput, "empty input");
    detail::ByteReader r(bytes, ErrorCode::MalformedHeader);
    auto magic = r.bytes(4);
    if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != "BGRD")
        fail(ErrorCode::MalformedHeader, "bad magic, expected BGRD");
    if (r.u16() != kBgrdVersion) fail(ErrorCode::MalformedHeader, "unsupported BGRD version");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    GeoTransform geo;
    geo.origin_easting = r.f64();
    geo.origin_northing = r.f64();
    geo.pixel_size = r.f64();
    geo.crs_id = r.u32();
    if (rows == 0 || cols == 0) fail(ErrorCode::InconsistentDimensions, "zero rows or columns");
    const std::size_t n = std::size_t{rows} * cols;
    if (n > kMaxCells) fail(ErrorCode::InconsistentDimensions, "grid too large");
    if (r.remaining() != n * 5) fail(ErrorCode::InconsistentDimensions, "payload length does not match rows*cols");
    GeoGrid g(rows, cols, geo);
    for (std::size_t i = 0; i < n; ++i) g.depth.data[i] = r.f32();
    for (std::size_t i = 0; i < n; ++i) {
        auto v = r.u8();
        if (v > 1) fail(ErrorCode::MalformedHeader, "validity byte must be 0 or 1");
        g.valid.data[i] = v;
    }
    try {
        g.check();
    } catch (const Error& e) {
        fail(ErrorCode::MalformedHeader, e.what());
    }
    return g;
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid

GeoGrid read_esri_ascii(std::string_view text) {
    Tokens toks(text);
    std::string_view tok;
    if (!toks.peek(tok)) fail(ErrorCode::EmptyInput, "empty input");

    std::map<std::string, double> header;
    bool x_center = false, y_center = false;
    while (toks.peek(tok)) {
        if (tok.empty() || !(std::isalpha(static_cast<unsigned char>(tok.front())))) break;
        toks.next(tok);
        std::string key(tok);
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        std::string_view val;
        double v = 0.0;
        if (!toks.next(val) || !parse_double(val, v)) fail(ErrorCode::MalformedHeader, "header key '" + key + "' has no numeric value");
        if (key == "xllcenter") { key = "xllcorner"; x_center = true; }
        if (key == "yllcenter") { key = "yllcorner"; y_center = true; }
        if (key == "nodata_value") key = "nodata";
        if (key != "ncols" && key != "nrows" && key != "xllcorner" && key != "yllcorner" && key != "cellsize" && key != "nodata")
            fail(ErrorCode::MalformedHeader, "unknown header key '" + key + "'");
        if (header.count(key)) fail(ErrorCode::MalformedHeader, "duplicate header key '" + key + "'");
        header[key] = v;
    }
    for (const char* k : {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize"}) {
        if (!header.count(k)) fail(ErrorCode::MalformedHeader, std::string("missing header key '") + k + "'");
    }
    const double ncols = header["ncols"], nrows = header["nrows"], cs = header["cellsize"];
    if (ncols < 1 || nrows < 1 || ncols != std::floor(ncols) || nrows != std::floor(nrows) || ncols * nrows > double(kMaxCells))
        fail(ErrorCode::MalformedHeader, "ncols/nrows must be positive integers");
    if (!(cs > 0.0) || !std::isfinite(cs)) fail(ErrorCode::MalformedHeader, "cellsize must be positive");
    const auto rows = static_cast<std::size_t>(nrows), cols = static_cast<std::size_t>(ncols);

    GeoTransform geo;
    geo.pixel_size = cs;
    geo.origin_easting = header["xllcorner"] - (x_center ? cs / 2 : 0.0);
    geo.origin_northing = header["yllcorner"] - (y_center ? cs / 2 : 0.0) + nrows * cs;
    const bool has_nodata = header.count("nodata") > 0;
    const double nodata = has_nodata ? header["nodata"] : 0.0;

    GeoGrid g(rows, cols, geo);
    for (std::size_t i = 0; i < rows * cols; ++i) {
        if (!toks.next(tok)) fail(ErrorCode::InconsistentDimensions, "fewer values than nrows*ncols");
        double v = 0.0;
        if (!parse_double(tok, v)) fail(ErrorCode::MalformedHeader, "non-numeric cell value '" + std::string(tok) + "'");
        const bool is_nodata = (has_nodata && v == nodata) || !std::isfinite(v);
        g.valid.data[i] = is_nodata ? 0 : 1;
        g.depth.data[i] = is_nodata ? static_cast<float>(has_nodata ? nodata : 0.0) : static_cast<float>(v);
        if (!is_nodata && !std::isfinite(g.depth.data[i])) fail(ErrorCode::MalformedHeader, "value overflows 32-bit float");
    }
    if (toks.next(tok)) fail(ErrorCode::InconsistentDimensions, "more values than nrows*ncols");
    return g;
}

std::string write_esri_ascii(const GeoGrid& g) {
    g.check();
    double nodata = -9999.0;
    auto collides = [&](double nd) {
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.valid.data[i] && static_cast<double>(g.depth.data[i]) == nd) return true;
        return false;
    };
    while (collides(nodata)) nodata = nodata * 10.0 - 9.0;

    std::string out;
    out.reserve(128 + g.size() * 8);
    out += "ncols " + std::to_string(g.cols()) + "\n";
    out += "nrows " + std::to_string(g.rows()) + "\n";
    out += "xllcorner " + to_chars_shortest(g.geo.origin_easting) + "\n";
    out += "yllcorner " + to_chars_shortest(g.geo.origin_northing - g.height_m()) + "\n";
    out += "cellsize " + to_chars_shortest(g.geo.pixel_size) + "\n";
    out += "NODATA_value " + to_chars_shortest(nodata) + "\n";
    const std::string nd = to_chars_shortest(nodata);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
            if (c) out += ' ';
            out += g.is_valid(r, c) ? to_chars_shortest(g.depth(r, c)) : nd;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// XYZ points

XyzBinning bin_xyz_points(std::string_view text) {
    struct Pt { double x, y, z; };
    std::vector<Pt> pts;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool first_record = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string line(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        for (char& ch : line)
            if (ch == ',' || ch == ';' || ch == '\r') ch = ' ';
        Tokens toks(line);
        std::string_view t;
        if (!toks.peek(t) || t.front() == '#') continue;
        double v[3];
        bool ok = true;
        for (double& d : v) ok = ok && toks.next(t) && parse_double(t, d);
        if (!ok) {
            // a single leading column-name line is tolerated
            if (first_record && pts.empty()) { first_record = false; continue; }
            fail(ErrorCode::MalformedHeader, "line " + std::to_string(line_no) + ": expected 'x y z'");
        }
        first_record = false;
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
            fail(ErrorCode::MalformedHeader, "line " + std::to_string(line_no) + ": non-finite value");
        pts.push_back({v[0], v[1], v[2]});
    }
    if (pts.empty()) fail(ErrorCode::EmptyInput, "no points");
    if (pts.size() < 3) fail(ErrorCode::EmptyInput, "at least 3 points are required");

    auto min_spacing = [&](auto coord) {
        std::vector<double> vals;
        vals.reserve(pts.size());
        for (const auto& p : pts) vals.push_back(coord(p));
        std::sort(vals.begin(), vals.end());
        const double scale = std::max({1.0, std::abs(vals.front()), std::abs(vals.back())});
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < vals.size(); ++i) {
            const double d = vals[i] - vals[i - 1];
            if (d > 1e-9 * scale) best = std::min(best, d);
        }
        return std::pair{best, std::pair{vals.front(), vals.back()}};
    };
    auto [sx, xr] = min_spacing([](const Pt& p) { return p.x; });
    auto [sy, yr] = min_spacing([](const Pt& p) { return p.y; });
    const double ps = std::min(sx, sy);
    if (!std::isfinite(ps)) fail(ErrorCode::InconsistentDimensions, "points do not span a grid");

    const double fcols = std::round((xr.second - xr.first) / ps) + 1;
    const double frows = std::round((yr.second - yr.first) / ps) + 1;
    if (fcols * frows > double(kMaxCells)) fail(ErrorCode::InconsistentDimensions, "point spacing implies an oversized grid");
    const auto rows = static_cast<std::size_t>(frows), cols = static_cast<std::size_t>(fcols);

    GeoTransform geo;
    geo.pixel_size = ps;
    geo.origin_easting = xr.first - ps / 2;
    geo.origin_northing = yr.second + ps / 2;

    XyzBinning out;
    out.point_count = pts.size();
    out.counts = Raster<std::uint32_t>(rows, cols, 0);
    Raster<double> sums(rows, cols, 0.0);
    for (const auto& p : pts) {
        const auto c = static_cast<std::size_t>(std::clamp(std::round((p.x - xr.first) / ps), 0.0, fcols - 1));
        const auto r = static_cast<std::size_t>(std::clamp(std::round((yr.second - p.y) / ps), 0.0, frows - 1));
        sums(r, c) += p.z;
        out.counts(r, c) += 1;
    }
    out.grid = GeoGrid(rows, cols, geo, 0.0f, false);
    for (std::size_t i = 0; i < rows * cols; ++i) {
        if (out.counts.data[i] == 0) continue;
        out.grid.depth.data[i] = static_cast<float>(sums.data[i] / out.counts.data[i]);
        out.grid.valid.data[i] = 1;
    }
    return out;
}

GeoGrid read_xyz_points(std::string_view text) { return bin_xyz_points(text).grid; }

// ---------------------------------------------------------------------------
// Dispatch

GeoGrid read_grid(std::span<const std::uint8_t> bytes, RasterFormat format) {
    if (bytes.empty()) fail(ErrorCode::EmptyInput, "empty input");
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    switch (format) {
        case RasterFormat::InternalBinary: return read_internal_binary(bytes);
        case RasterFormat::EsriAscii: return read_esri_ascii(text);
        case RasterFormat::XyzPoints: return read_xyz_points(text);
        case RasterFormat::GeoTiffSubset: return read_geotiff(bytes);
    }
    fail(ErrorCode::InvalidArgument, "unknown format");
}

Bytes write_grid(const GeoGrid& grid, RasterFormat format) {
    switch (format) {
        case RasterFormat::InternalBinary: return write_internal_binary(grid);
        case RasterFormat::EsriAscii: {
            auto s = write_esri_ascii(grid);
            return Bytes(s.begin(), s.end());
        }
        default: break;
    }
    fail(ErrorCode::UnwritableFormat, std::string(format_name(format)) + " has no writer");
}

GeoGrid label_to_grid(const LabelMask& label, const GeoTransform& geo) {
    GeoGrid g(label.rows, label.cols, geo);
    for (std::size_t i = 0; i < label.size(); ++i) g.depth.data[i] = label.data[i] ? 1.0f : 0.0f;
    return g;
}

LabelMask grid_to_label(const GeoGrid& g) {
    LabelMask m(g.rows(), g.cols(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) m.data[i] = (g.valid.data[i] && g.depth.data[i] >= 0.5f) ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Rendering

GrayAlphaImage render_grayscale(const GeoGrid& grid, double lo, double hi) {
    if (!(lo < hi)) fail(ErrorCode::DegenerateRange, "render range requires lo < hi");
    GrayAlphaImage img;
    img.rows = grid.rows();
    img.cols = grid.cols();
    img.pixels.assign(grid.size() * 2, 0);
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!grid.valid.data[i]) continue;
        const double v = std::clamp((grid.depth.data[i] - lo) * scale, 0.0, 255.0);
        img.pixels[2 * i] = static_cast<std::uint8_t>(std::floor(v + 0.5));
        img.pixels[2 * i + 1] = 255;
    }
    return img;
}

// ---------------------------------------------------------------------------
// Files

Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + p.string() + "'");
    Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::Io, "read error on '" + p.string() + "'");
    return b;
}

void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
    static std::atomic<unsigned> counter{0};
    auto tmp = p;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::Io, "cannot create '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            fail(ErrorCode::Io, "write error on '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorCode::Io, "cannot rename into '" + p.string() + "'");
    }
}

void write_file_atomic(const std::filesystem::path& p, std::string_view text) {
    write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

GeoGrid read_grid_file(const std::filesystem::path& p, RasterFormat format) {
    auto bytes = read_file(p);
    return read_grid(bytes, format);
}

GeoGrid read_grid_file(const std::filesystem::path& p) { return read_grid_file(p, format_from_path(p)); }

}  // namespace wreckseg::io
