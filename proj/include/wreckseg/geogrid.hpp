#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wreckseg/error.hpp"

namespace wreckseg {

// Dense row-major 2-D array. Row 0 is the northernmost row.
template <typename T>
struct Raster {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Raster() = default;
    Raster(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    std::size_t size() const { return data.size(); }
    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(std::size_t r, std::size_t c) const { return rows == r && cols == c; }
    template <typename U>
    bool same_shape(const Raster<U>& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Raster&, const Raster&) = default;
};

using Mask = Raster<std::uint8_t>;       // 1 = set, 0 = clear
using LabelMask = Raster<std::uint8_t>;  // 0 = terrain, 1 = ship

// Placement of the top-left corner of pixel (0, 0) in a projected CRS.
struct GeoTransform {
    double origin_easting = 0.0;
    double origin_northing = 0.0;
    double pixel_size = 1.0;  // metres per pixel, square pixels
    std::uint32_t crs_id = 0;

    double easting_of_col(double c) const { return origin_easting + c * pixel_size; }
    double northing_of_row(double r) const { return origin_northing - r * pixel_size; }

    friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

// Georeferenced depth raster (metres, positive down) with a nodata mask.
struct GeoGrid {
    GeoTransform geo;
    Raster<float> depth;
    Mask valid;

    GeoGrid() = default;
    GeoGrid(std::size_t rows, std::size_t cols, const GeoTransform& g, float fill = 0.0f, bool valid_fill = true)
        : geo(g), depth(rows, cols, fill), valid(rows, cols, valid_fill ? 1 : 0) {}

    std::size_t rows() const { return depth.rows; }
    std::size_t cols() const { return depth.cols; }
    std::size_t size() const { return depth.size(); }
    double width_m() const { return static_cast<double>(cols()) * geo.pixel_size; }
    double height_m() const { return static_cast<double>(rows()) * geo.pixel_size; }

    bool is_valid(std::size_t r, std::size_t c) const { return valid(r, c) != 0; }
    std::size_t valid_count() const;

    // Throws InconsistentDimensions / InvalidArgument when an invariant is broken.
    void check() const;

    // Bitwise comparison of depth (including nodata payload), mask and georeferencing.
    bool bit_equal(const GeoGrid& o) const;
};

// Crop [row0, row0+rows) x [col0, col0+cols), updating the origin.
GeoGrid crop(const GeoGrid& g, std::size_t row0, std::size_t col0, std::size_t rows, std::size_t cols);

struct DepthRange {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
};

// Statistics over valid cells. count == 0 when the grid is all nodata.
DepthRange depth_stats(const GeoGrid& g);

}  // namespace wreckseg
