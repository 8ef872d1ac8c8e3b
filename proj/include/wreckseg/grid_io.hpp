#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wreckseg/geogrid.hpp"

namespace wreckseg::io {

using Bytes = std::vector<std::uint8_t>;

enum class RasterFormat { InternalBinary, EsriAscii, XyzPoints, GeoTiffSubset };

std::string_view format_name(RasterFormat f);
// Accepts "bgrd", "asc", "xyz", "tif" (and a few aliases). Throws InvalidArgument.
RasterFormat parse_format(std::string_view name);
// Guesses from the file extension; throws InvalidArgument if unknown.
RasterFormat format_from_path(const std::filesystem::path& p);

GeoGrid read_grid(std::span<const std::uint8_t> bytes, RasterFormat format);
Bytes write_grid(const GeoGrid& grid, RasterFormat format);

GeoGrid read_grid_file(const std::filesystem::path& p);
GeoGrid read_grid_file(const std::filesystem::path& p, RasterFormat format);

// Individual readers, exposed for tests.
GeoGrid read_internal_binary(std::span<const std::uint8_t> bytes);
GeoGrid read_esri_ascii(std::string_view text);
GeoGrid read_xyz_points(std::string_view text);

// XYZ gridding with the per-cell point counts kept alongside the grid.
struct XyzBinning {
    GeoGrid grid;
    Raster<std::uint32_t> counts;
    std::size_t point_count = 0;
};
XyzBinning bin_xyz_points(std::string_view text);
GeoGrid read_geotiff(std::span<const std::uint8_t> bytes);

Bytes write_internal_binary(const GeoGrid& g);
std::string write_esri_ascii(const GeoGrid& g);

// Label masks travel as InternalBinary grids holding 0/1 depths.
GeoGrid label_to_grid(const LabelMask& label, const GeoTransform& geo);
LabelMask grid_to_label(const GeoGrid& g);

// 8-bit gray + alpha PNG. Valid pixels map lo -> 0 and hi -> 255 (clamped,
// round-half-up); nodata pixels are fully transparent.
struct GrayAlphaImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // interleaved gray, alpha
};

GrayAlphaImage render_grayscale(const GeoGrid& grid, double lo, double hi);

Bytes encode_png_gray_alpha(const GrayAlphaImage& img);
// Interleaved RGBA, rows*cols*4 bytes.
Bytes encode_png_rgba(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> rgba);

// Whole-file helpers. write_file_atomic writes to a sibling temp file and renames.
Bytes read_file(const std::filesystem::path& p);
void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& p, std::string_view text);

}  // namespace wreckseg::io
