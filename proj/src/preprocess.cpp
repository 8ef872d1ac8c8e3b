#include "wreckseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace wreckseg::prep {

void ChunkerConfig::check() const {
    if (!(chunk_extent > 0.0) || !std::isfinite(chunk_extent)) fail(ErrorCode::InvalidArgument, "chunk_extent must be positive");
    const double s = stride_m();
    if (!(s > 0.0) || s > chunk_extent) fail(ErrorCode::InvalidArgument, "stride must satisfy 0 < stride <= chunk_extent");
}

ChunkLayout plan_chunks(std::size_t rows, std::size_t cols, double pixel_size, const ChunkerConfig& cfg) {
    cfg.check();
    if (rows == 0 || cols == 0) fail(ErrorCode::InconsistentDimensions, "empty grid");
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "pixel_size must be positive");
    if (pixel_size > cfg.chunk_extent) fail(ErrorCode::ResolutionTooCoarse, "pixel larger than the chunk extent");
    const double px = std::round(cfg.chunk_extent / pixel_size);
    if (px < 4) fail(ErrorCode::ResolutionTooCoarse, "chunk would be narrower than 4 pixels");
    ChunkLayout l;
    l.chunk_px = static_cast<std::size_t>(px);
    l.stride_px = std::clamp<std::size_t>(static_cast<std::size_t>(std::round(cfg.stride_m() / pixel_size)), 1, l.chunk_px);
    // A chunk starts at every multiple of the stride that lies inside the grid.
    l.chunk_rows = (rows + l.stride_px - 1) / l.stride_px;
    l.chunk_cols = (cols + l.stride_px - 1) / l.stride_px;
    return l;
}

namespace {

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect(std::size_t i, std::size_t n) {
    if (i < n) return i;
    if (n == 1) return 0;
    const std::size_t period = 2 * (n - 1);
    std::size_t m = i % period;
    return m < n ? m : period - m;
}

}  // namespace

Chunk cut_chunk(const GeoGrid& grid, const ChunkLayout& layout, std::size_t chunk_row, std::size_t chunk_col,
                EdgePolicy edge, const std::string& parent_id) {
    const std::size_t n = layout.chunk_px;
    Chunk ch;
    ch.parent_id = parent_id;
    ch.row_off = chunk_row * layout.stride_px;
    ch.col_off = chunk_col * layout.stride_px;
    if (ch.row_off >= grid.rows() || ch.col_off >= grid.cols()) fail(ErrorCode::InvalidArgument, "chunk index outside grid");
    ch.pixel_size = grid.geo.pixel_size;
    ch.pad_bottom = ch.row_off + n > grid.rows() ? ch.row_off + n - grid.rows() : 0;
    ch.pad_right = ch.col_off + n > grid.cols() ? ch.col_off + n - grid.cols() : 0;
    ch.data = Raster<float>(n, n, 0.0f);
    ch.valid = Mask(n, n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t pr = ch.row_off + r;
        const bool pad_r = pr >= grid.rows();
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t pc = ch.col_off + c;
            const bool pad_c = pc >= grid.cols();
            if ((pad_r || pad_c) && edge == EdgePolicy::NodataPad) continue;
            const std::size_t sr = reflect(pr, grid.rows()), sc = reflect(pc, grid.cols());
            ch.data(r, c) = grid.is_valid(sr, sc) ? grid.depth(sr, sc) : 0.0f;
            ch.valid(r, c) = grid.valid(sr, sc);
        }
    }
    return ch;
}

std::vector<Chunk> chunk_grid(const GeoGrid& grid, const ChunkerConfig& cfg, const std::string& parent_id) {
    const ChunkLayout l = plan_chunks(grid.rows(), grid.cols(), grid.geo.pixel_size, cfg);
    std::vector<Chunk> out;
    out.reserve(l.count());
    for (std::size_t i = 0; i < l.chunk_rows; ++i)
        for (std::size_t j = 0; j < l.chunk_cols; ++j) out.push_back(cut_chunk(grid, l, i, j, cfg.edge_policy, parent_id));
    return out;
}

NormalizedChunk normalize_chunk(const Chunk& chunk) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < chunk.data.size(); ++i) {
        if (!chunk.valid.data[i]) continue;
        lo = std::min(lo, static_cast<double>(chunk.data.data[i]));
        hi = std::max(hi, static_cast<double>(chunk.data.data[i]));
    }
    if (!(lo <= hi)) fail(ErrorCode::AllNodata, "chunk has no valid pixels");

    NormalizedChunk out;
    out.data = Raster<float>(chunk.data.rows, chunk.data.cols, 0.0f);
    out.valid = chunk.valid;
    out.depth_min = lo;
    out.depth_max = hi;
    out.parent_id = chunk.parent_id;
    out.row_off = chunk.row_off;
    out.col_off = chunk.col_off;
    out.pad_right = chunk.pad_right;
    out.pad_bottom = chunk.pad_bottom;
    out.pixel_size = chunk.pixel_size;
    const double range = hi - lo;
    for (std::size_t i = 0; i < chunk.data.size(); ++i) {
        if (!chunk.valid.data[i]) continue;
        out.data.data[i] = range > 0.0 ? static_cast<float>((chunk.data.data[i] - lo) / range) : 0.5f;
    }
    return out;
}

Raster<float> denormalize(const NormalizedChunk& chunk) {
    Raster<float> out(chunk.data.rows, chunk.data.cols, 0.0f);
    const double range = chunk.depth_max - chunk.depth_min;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = range > 0.0 ? static_cast<float>(chunk.data.data[i] * range + chunk.depth_min)
                                  : static_cast<float>(chunk.depth_min);
    }
    return out;
}

Raster<float> hillshade(const Raster<float>& depth, double pixel_size, const HillshadeParams& p) {
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "pixel_size must be positive");
    if (depth.rows == 0 || depth.cols == 0) fail(ErrorCode::InconsistentDimensions, "empty array");
    constexpr double deg = std::numbers::pi / 180.0;
    const double zenith = (90.0 - p.altitude_deg) * deg;
    const double azimuth = p.azimuth_deg * deg;
    const double cz = std::cos(zenith), sz = std::sin(zenith);
    const auto R = static_cast<std::ptrdiff_t>(depth.rows), C = static_cast<std::ptrdiff_t>(depth.cols);
    // elevation = -depth
    auto z = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
        r = std::clamp<std::ptrdiff_t>(r, 0, R - 1);
        c = std::clamp<std::ptrdiff_t>(c, 0, C - 1);
        return -static_cast<double>(depth(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
    };
    Raster<float> out(depth.rows, depth.cols, 0.0f);
    for (std::ptrdiff_t r = 0; r < R; ++r) {
        for (std::ptrdiff_t c = 0; c < C; ++c) {
            const double a = z(r - 1, c - 1), b = z(r - 1, c), cc = z(r - 1, c + 1);
            const double d = z(r, c - 1), f = z(r, c + 1);
            const double g = z(r + 1, c - 1), h = z(r + 1, c), i = z(r + 1, c + 1);
            const double dz_east = p.z_factor * ((cc + 2 * f + i) - (a + 2 * d + g)) / (8.0 * pixel_size);
            const double dz_south = p.z_factor * ((g + 2 * h + i) - (a + 2 * b + cc)) / (8.0 * pixel_size);
            const double dz_north = -dz_south;
            const double grad = std::hypot(dz_east, dz_north);
            const double slope = std::atan(grad);
            // aspect: compass bearing of the downslope direction
            const double aspect = grad > 0.0 ? std::atan2(-dz_east, -dz_north) : 0.0;
            const double shade = cz * std::cos(slope) + sz * std::sin(slope) * std::cos(azimuth - aspect);
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<float>(255.0 * std::max(0.0, shade));
        }
    }
    return out;
}

}  // namespace wreckseg::prep
