#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wreckseg/geogrid.hpp"

namespace wreckseg::prep {

inline constexpr double kDefaultChunkExtentM = 200.0;
inline constexpr int kDefaultInpaintRadius = 8;

enum class EdgePolicy { ReflectPad, NodataPad };

struct ChunkerConfig {
    double chunk_extent = kDefaultChunkExtentM;  // metres
    std::optional<double> stride;                // metres; defaults to chunk_extent
    EdgePolicy edge_policy = EdgePolicy::ReflectPad;

    double stride_m() const { return stride.value_or(chunk_extent); }
    void check() const;
};

// Pixel geometry of a chunking run.
struct ChunkLayout {
    std::size_t chunk_px = 0;   // h == w
    std::size_t stride_px = 0;
    std::size_t chunk_rows = 0;  // chunks along the row axis
    std::size_t chunk_cols = 0;
    std::size_t count() const { return chunk_rows * chunk_cols; }
};

// Throws ResolutionTooCoarse when a chunk would be narrower than 4 pixels.
ChunkLayout plan_chunks(std::size_t rows, std::size_t cols, double pixel_size, const ChunkerConfig& cfg);

struct Chunk {
    std::string parent_id;
    std::size_t row_off = 0;  // pixels into the parent
    std::size_t col_off = 0;
    Raster<float> data;       // metres
    Mask valid;
    std::size_t pad_right = 0;
    std::size_t pad_bottom = 0;
    double pixel_size = 1.0;

    std::size_t size() const { return data.rows; }
    std::size_t real_rows() const { return data.rows - pad_bottom; }
    std::size_t real_cols() const { return data.cols - pad_right; }
};

// Chunk (chunk_row, chunk_col) of the layout.
Chunk cut_chunk(const GeoGrid& grid, const ChunkLayout& layout, std::size_t chunk_row, std::size_t chunk_col,
                EdgePolicy edge, const std::string& parent_id = {});

// All chunks in row-major order of (row_off, col_off).
std::vector<Chunk> chunk_grid(const GeoGrid& grid, const ChunkerConfig& cfg, const std::string& parent_id = {});

struct NormalizedChunk {
    Raster<float> data;  // in [0, 1]; 0 on nodata
    Mask valid;
    double depth_min = 0.0;
    double depth_max = 0.0;

    std::string parent_id;
    std::size_t row_off = 0;
    std::size_t col_off = 0;
    std::size_t pad_right = 0;
    std::size_t pad_bottom = 0;
    double pixel_size = 1.0;
};

// Min-max scaling over valid pixels; a zero range maps to 0.5. Throws AllNodata.
NormalizedChunk normalize_chunk(const Chunk& chunk);
// Back to metres: data * (max - min) + min.
Raster<float> denormalize(const NormalizedChunk& chunk);

struct InpaintConfig {
    int radius = kDefaultInpaintRadius;  // pixels
    int max_iterations = 2000;
    double tolerance = 1e-5;
    void check() const;
};

struct InpaintStats {
    std::size_t hole_pixels = 0;
    std::size_t holes = 0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;  // false is a warning; the filled field is still usable
};

// Fills every invalid pixel in place and marks it valid. Valid pixels are never
// written. Throws AllNodata.
InpaintStats inpaint_field(Raster<float>& data, Mask& valid, const InpaintConfig& cfg);

NormalizedChunk inpaint(const NormalizedChunk& chunk, const InpaintConfig& cfg, InpaintStats* stats = nullptr);

struct HillshadeParams {
    double azimuth_deg = 315.0;
    double altitude_deg = 45.0;
    double z_factor = 1.0;
};

// Horn-method hillshade of a positive-down depth array, values in [0, 255].
Raster<float> hillshade(const Raster<float>& depth, double pixel_size, const HillshadeParams& p = {});

}  // namespace wreckseg::prep
