#include "wreckseg/geogrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace wreckseg {

std::size_t GeoGrid::valid_count() const {
    std::size_t n = 0;
    for (auto v : valid.data) n += v != 0;
    return n;
}

void GeoGrid::check() const {
    if (rows() < 1 || cols() < 1) fail(ErrorCode::InconsistentDimensions, "grid must have at least one row and column");
    if (!valid.same_shape(depth)) fail(ErrorCode::InconsistentDimensions, "validity mask shape differs from depth shape");
    if (depth.data.size() != rows() * cols()) fail(ErrorCode::InconsistentDimensions, "depth buffer size mismatch");
    if (!(geo.pixel_size > 0.0) || !std::isfinite(geo.pixel_size))
        fail(ErrorCode::InvalidArgument, "pixel_size must be positive and finite");
    if (!std::isfinite(geo.origin_easting) || !std::isfinite(geo.origin_northing))
        fail(ErrorCode::InvalidArgument, "origin must be finite");
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (valid.data[i] && !std::isfinite(depth.data[i]))
            fail(ErrorCode::InvalidArgument, "non-finite depth on a valid cell");
    }
}

bool GeoGrid::bit_equal(const GeoGrid& o) const {
    if (!(geo == o.geo) || !depth.same_shape(o.depth) || valid != o.valid) return false;
    return std::memcmp(depth.data.data(), o.depth.data.data(), depth.size() * sizeof(float)) == 0;
}

GeoGrid crop(const GeoGrid& g, std::size_t row0, std::size_t col0, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || row0 + rows > g.rows() || col0 + cols > g.cols())
        fail(ErrorCode::InvalidArgument, "crop window outside grid");
    GeoTransform geo = g.geo;
    geo.origin_easting = g.geo.easting_of_col(static_cast<double>(col0));
    geo.origin_northing = g.geo.northing_of_row(static_cast<double>(row0));
    GeoGrid out(rows, cols, geo);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out.depth(r, c) = g.depth(row0 + r, col0 + c);
            out.valid(r, c) = g.valid(row0 + r, col0 + c);
        }
    }
    return out;
}

DepthRange depth_stats(const GeoGrid& g) {
    DepthRange s;
    double sum = 0.0;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.valid.data[i]) continue;
        const double d = g.depth.data[i];
        s.min = std::min(s.min, d);
        s.max = std::max(s.max, d);
        sum += d;
        ++s.count;
    }
    if (s.count == 0) {
        s.min = s.max = 0.0;
    } else {
        s.mean = sum / static_cast<double>(s.count);
    }
    return s;
}

}  // namespace wreckseg
