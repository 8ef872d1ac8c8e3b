#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "wreckseg/geogrid.hpp"
#include "wreckseg/preprocess.hpp"
#include "wreckseg/segnet.hpp"

namespace wreckseg::detect {

inline constexpr std::size_t kDefaultBatchLimit = 500;

struct ProbabilityMap {
    GeoTransform geo;
    Raster<float> prob;  // ship probability in [0, 1]; 0 on nodata
    Mask valid;

    std::size_t rows() const { return prob.rows; }
    std::size_t cols() const { return prob.cols; }
};

// Pixel window into a grid.
struct PixelRect {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// One probability tile placed in the target extent. An empty `valid` means
// every tile pixel carries a value.
struct Piece {
    std::size_t row_off = 0;
    std::size_t col_off = 0;
    Raster<float> prob;
    Mask valid;
};

struct MergeStats {
    std::size_t max_live_tiles = 0;             // buffered pieces plus live accumulators
    std::vector<std::size_t> partials_per_level;  // layers emitted by each merge level
    std::size_t levels() const { return partials_per_level.size(); }
};

// Streaming merge with overlap averaging. Sums are carried in fixed point so the
// grouping of pieces cannot change the result. At most batch_limit pieces are
// buffered; each full buffer becomes a partial layer that is folded into the next
// level, which in turn emits after absorbing batch_limit partials.
class Merger {
public:
    Merger(std::size_t rows, std::size_t cols, std::size_t batch_limit = kDefaultBatchLimit);
    ~Merger();
    Merger(const Merger&) = delete;
    Merger& operator=(const Merger&) = delete;

    // Throws PlacementOutOfBounds.
    void add(Piece piece);
    // Averages, marks pixels without any contribution invalid.
    ProbabilityMap finish(const GeoTransform& geo);
    const MergeStats& stats() const { return stats_; }

private:
    struct Impl;
    Impl* impl_;
    MergeStats stats_;
};

// Direct merge when pieces <= batch_limit, recursive batches otherwise.
ProbabilityMap merge_chunks(std::vector<Piece> pieces, std::size_t rows, std::size_t cols, const GeoTransform& geo,
                            std::size_t batch_limit = kDefaultBatchLimit, MergeStats* stats = nullptr);

struct InferOptions {
    prep::ChunkerConfig chunker;
    prep::InpaintConfig inpaint;
    std::size_t batch_limit = kDefaultBatchLimit;
    int jobs = 1;
    std::function<void(std::size_t done, std::size_t total)> progress;
    MergeStats* stats = nullptr;
};

// Chunk, normalize, inpaint, optional hillshade channel, forward, softmax,
// crop padding, merge. Throws WeightsChannelMismatch.
ProbabilityMap infer_cnn(const GeoGrid& grid, const std::optional<PixelRect>& extent, const nn::ModelWeights& weights,
                         bool use_hillshade, const InferOptions& opt = {});

struct DepressionParams {
    double min_depress = 100.0;  // cells at 0.5 m/px, scaled by (0.5 / pixel_size)^2
    int buffer = 1;              // dilation in cells
    double interval = 0.2;       // metres between report contours
    double min_depth = 0.2;      // metres
    std::optional<double> base;  // metres; defaults to the raster minimum rounded to 0.1
    void check() const;
};

struct DepressionRegion {
    std::size_t id = 0;
    std::size_t cells = 0;       // before dilation
    double max_depth = 0.0;      // metres below the spill level
    double spill_level = 0.0;    // filled surface over the region
    PixelRect bbox;
    std::vector<double> contour_levels;  // base + k * interval inside the region's depth span
};

struct DepressionResult {
    ProbabilityMap map;  // 1 on kept (dilated) cells, 0 elsewhere
    std::vector<DepressionRegion> regions;
    double base = 0.0;
};

// Depression filling over the positive-down depth surface, where anything
// standing proud of the seabed is a pit. Throws AllNodata.
DepressionResult infer_depression(const GeoGrid& grid, const DepressionParams& p = {});

// Priority-flood fill: every valid cell raised to its spill level. Cells on the
// grid border or next to nodata drain freely. Nodata cells stay untouched.
Raster<double> priority_flood(const GeoGrid& grid);

}  // namespace wreckseg::detect
