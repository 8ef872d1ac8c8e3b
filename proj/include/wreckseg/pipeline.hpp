#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wreckseg/detect.hpp"
#include "wreckseg/metrics.hpp"
#include "wreckseg/postprocess.hpp"
#include "wreckseg/segnet.hpp"
#include "wreckseg/synthgen.hpp"

namespace wreckseg::pipeline {

enum class Backend { Cnn, CnnHillshade, Depression };
std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view s);

struct InferSettings {
    Backend backend = Backend::Cnn;
    const nn::ModelWeights* weights = nullptr;  // required for the cnn backends
    detect::InferOptions infer;
    detect::DepressionParams depression;
};

// Probability layer for the grid or a pixel window of it.
detect::ProbabilityMap predict(const GeoGrid& grid, const std::optional<detect::PixelRect>& extent,
                               const InferSettings& s);

// Pixel window covering a world rectangle, clipped to the grid. Throws
// InvalidArgument when the rectangle misses the grid.
detect::PixelRect world_to_pixels(const GeoGrid& grid, double min_e, double min_n, double max_e, double max_n);

// Procedural ships and terrain tiles for desk-scale datasets.
struct DeskDataConfig {
    std::size_t tile_px = 64;
    double resolution = 3.125;  // a 64 px tile spans 200 m
    std::size_t ships = 200;
    std::size_t terrains = 150;
    double length_min = 30, length_max = 110;
    double beam_min = 6, beam_max = 18;
    double height_min = 3, height_max = 8;
    double depth_min = 20, depth_max = 60;
    double roughness_min = 0.3, roughness_max = 1.5;
    std::uint64_t seed = 0;
    void check() const;
};
synth::DatasetInputs desk_inputs(const DeskDataConfig& c);

using Predictor = std::function<Mask(const GeoGrid& sample, const synth::ManifestEntry& entry)>;

// Thresholded, area-filtered mask from a probability layer.
Mask detection_mask(const detect::ProbabilityMap& p, const post::PostParams& pp);

// Predictor that runs each manifest sample as a single chunk.
Predictor tile_predictor(const InferSettings& s, const post::PostParams& pp);

struct EvalOptions {
    synth::Split split = synth::Split::Test;
    double tau = metrics::kWreckIouTau;
    bool per_site = false;
    std::optional<metrics::GroupKey> group;
    std::optional<std::vector<double>> edges;
};

// Pooled confusion over the split plus one record per sample with ship pixels.
metrics::MetricsReport evaluate(const synth::DatasetManifest& m, const Predictor& predict, const EvalOptions& o = {});

}  // namespace wreckseg::pipeline
