#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "wreckseg/detect.hpp"
#include "wreckseg/geogrid.hpp"

namespace wreckseg::post {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr double kDefaultMinAreaM2 = 10.0;

struct Pixel {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Inclusive pixel bounds.
struct BBox {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t row1 = 0;
    std::size_t col1 = 0;
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Component {
    std::size_t id = 0;
    std::vector<Pixel> pixels;  // scan order
    std::size_t area_px = 0;
    double area_m2 = 0.0;
    BBox bbox_px;
    double mean_probability = 0.0;
};

struct DetectionSet {
    Mask mask;
    std::vector<Component> components;
    GeoTransform geo;
};

enum class AreaUnit { SquareMetres, Pixels };

// mask = p >= t on valid pixels. Throws InvalidArgument unless 0 <= t <= 1.
Mask threshold(const detect::ProbabilityMap& p, double t);

// Maximal connected regions (connectivity 4 or 8) in scan order of each
// region's first pixel. area_m2 uses pixel_size; mean_probability is filled
// when prob is given.
std::vector<Component> extract_components(const Mask& mask, int connectivity = 8, const Raster<float>* prob = nullptr,
                                          double pixel_size = 1.0);

// Keeps components with area >= min_area and renumbers them from 0.
DetectionSet filter_components(std::vector<Component> components, std::size_t rows, std::size_t cols,
                               const GeoTransform& geo, double min_area, AreaUnit unit = AreaUnit::SquareMetres);

struct PostParams {
    double threshold = kDefaultThreshold;
    double min_area = kDefaultMinAreaM2;
    AreaUnit unit = AreaUnit::SquareMetres;
    int connectivity = 8;
    void check() const;
};

// threshold + extract_components + filter_components.
DetectionSet postprocess(const detect::ProbabilityMap& p, const PostParams& params = {});

enum class GeoJsonMode { Boxes, Outlines };
std::string_view mode_name(GeoJsonMode m);

// Closed rings of pixel-corner coordinates (x = col, y = row). Exterior rings
// run counter-clockwise in world coordinates, holes clockwise. Collinear
// vertices are dropped; the first vertex is repeated at the end.
struct Ring {
    std::vector<std::pair<std::size_t, std::size_t>> xy;
};
std::vector<Ring> trace_outline(const Component& c, std::size_t rows, std::size_t cols, int connectivity = 8);

// FeatureCollection in the grid's projected CRS with a top-level "crs_id"
// member. Throws MissingGeoreference when the transform is not usable.
std::string to_geojson(const DetectionSet& set, GeoJsonMode mode, int connectivity = 8);

}  // namespace wreckseg::post
