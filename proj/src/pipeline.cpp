#include "wreckseg/pipeline.hpp"

#include <cmath>

#include "wreckseg/grid_io.hpp"
#include "wreckseg/rng.hpp"

namespace wreckseg::pipeline {

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::Cnn: return "cnn";
        case Backend::CnnHillshade: return "cnn-hillshade";
        case Backend::Depression: return "depression";
    }
    return "?";
}

Backend parse_backend(std::string_view s) {
    if (s == "cnn") return Backend::Cnn;
    if (s == "cnn-hillshade") return Backend::CnnHillshade;
    if (s == "depression") return Backend::Depression;
    fail(ErrorCode::InvalidArgument, "backend must be cnn, cnn-hillshade or depression");
}

detect::ProbabilityMap predict(const GeoGrid& grid, const std::optional<detect::PixelRect>& extent,
                               const InferSettings& s) {
    if (s.backend == Backend::Depression) {
        detect::ProbabilityMap map;
        if (extent) {
            const auto& e = *extent;
            if (e.rows == 0 || e.cols == 0 || e.row0 + e.rows > grid.rows() || e.col0 + e.cols > grid.cols())
                fail(ErrorCode::InvalidArgument, "extent lies outside the grid");
            map = detect::infer_depression(crop(grid, e.row0, e.col0, e.rows, e.cols), s.depression).map;
        } else {
            map = detect::infer_depression(grid, s.depression).map;
        }
        if (s.infer.progress) s.infer.progress(1, 1);
        return map;
    }
    if (!s.weights) fail(ErrorCode::InvalidArgument, "the cnn backends need weights");
    return detect::infer_cnn(grid, extent, *s.weights, s.backend == Backend::CnnHillshade, s.infer);
}

detect::PixelRect world_to_pixels(const GeoGrid& g, double min_e, double min_n, double max_e, double max_n) {
    if (!(min_e < max_e && min_n < max_n)) fail(ErrorCode::InvalidArgument, "extent must have min < max on both axes");
    const double ps = g.geo.pixel_size;
    const double c0 = std::floor((min_e - g.geo.origin_easting) / ps), c1 = std::ceil((max_e - g.geo.origin_easting) / ps);
    const double r0 = std::floor((g.geo.origin_northing - max_n) / ps), r1 = std::ceil((g.geo.origin_northing - min_n) / ps);
    const double C = static_cast<double>(g.cols()), R = static_cast<double>(g.rows());
    const double cc0 = std::max(c0, 0.0), cc1 = std::min(c1, C), rr0 = std::max(r0, 0.0), rr1 = std::min(r1, R);
    if (!(cc0 < cc1 && rr0 < rr1)) fail(ErrorCode::InvalidArgument, "extent does not intersect the raster");
    return {static_cast<std::size_t>(rr0), static_cast<std::size_t>(cc0), static_cast<std::size_t>(rr1 - rr0),
            static_cast<std::size_t>(cc1 - cc0)};
}

void DeskDataConfig::check() const {
    if (tile_px < 8) fail(ErrorCode::InvalidArgument, "tile_px must be >= 8");
    if (!(resolution > 0.0)) fail(ErrorCode::InvalidArgument, "resolution must be > 0");
    auto range = [](double lo, double hi, const char* what) {
        if (!(lo > 0.0 && lo <= hi)) fail(ErrorCode::InvalidArgument, std::string(what) + " range must satisfy 0 < min <= max");
    };
    range(length_min, length_max, "length");
    range(beam_min, beam_max, "beam");
    range(height_min, height_max, "height");
    range(depth_min, depth_max, "depth");
    range(roughness_min, roughness_max, "roughness");
}

synth::DatasetInputs desk_inputs(const DeskDataConfig& c) {
    c.check();
    synth::DatasetInputs in;
    Rng rng(c.seed);
    for (std::size_t i = 0; i < c.terrains; ++i) {
        const double base = rng.uniform(c.depth_min, c.depth_max);
        const double rough = rng.uniform(c.roughness_min, c.roughness_max);
        in.terrains.push_back(synth::generate_terrain(c.tile_px, c.tile_px, c.resolution, base, rough, rng.below(1u << 30)));
    }
    for (std::size_t i = 0; i < c.ships; ++i) {
        synth::HullSpec h{rng.uniform(c.length_min, c.length_max), rng.uniform(c.beam_min, c.beam_max),
                          rng.uniform(c.height_min, c.height_max)};
        in.ships.push_back(synth::make_ship_patch(h, c.resolution, rng.below(1u << 30), "ship-" + std::to_string(i)));
    }
    return in;
}

Mask detection_mask(const detect::ProbabilityMap& p, const post::PostParams& pp) {
    return post::postprocess(p, pp).mask;
}

Predictor tile_predictor(const InferSettings& s, const post::PostParams& pp) {
    return [s, pp](const GeoGrid& g, const synth::ManifestEntry&) {
        InferSettings t = s;
        t.infer.chunker.chunk_extent = static_cast<double>(std::max(g.rows(), g.cols())) * g.geo.pixel_size;
        t.infer.chunker.stride.reset();
        return detection_mask(predict(g, std::nullopt, t), pp);
    };
}

metrics::MetricsReport evaluate(const synth::DatasetManifest& m, const Predictor& predict_mask, const EvalOptions& o) {
    metrics::ConfusionCounts pooled;
    std::vector<metrics::PerWreck> wrecks;
    std::size_t n = 0;
    for (const auto& e : m.entries) {
        if (e.split != o.split) continue;
        ++n;
        const GeoGrid g = io::read_grid_file(m.sample_file(e), io::RasterFormat::InternalBinary);
        const LabelMask gt = io::grid_to_label(io::read_grid_file(m.label_file(e), io::RasterFormat::InternalBinary));
        const Mask pred = predict_mask(g, e);
        const auto c = metrics::confusion(pred, gt, g.valid);
        pooled += c;
        bool ship = false;
        for (std::size_t i = 0; i < gt.size() && !ship; ++i) ship = gt.data[i] && g.valid.data[i];
        if (ship) wrecks.push_back(metrics::make_per_wreck(e.sample_path, e.source_id, c, e.resolution, e.mean_depth));
    }
    if (n == 0) fail(ErrorCode::EmptyManifest, std::string("no entries in the ") + std::string(synth::split_name(o.split)) + " split");
    if (o.per_site) wrecks = metrics::aggregate_sites(wrecks);
    auto r = metrics::report(pooled, std::move(wrecks), o.tau);
    if (o.group) r.groups = metrics::group_by(r.per_wreck, *o.group, o.edges, o.tau);
    return r;
}

}  // namespace wreckseg::pipeline
