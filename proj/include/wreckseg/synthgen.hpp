#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wreckseg/geogrid.hpp"
#include "wreckseg/rng.hpp"

namespace wreckseg::synth {

inline constexpr double kDepthRatioMean = 0.91;
inline constexpr double kDepthRatioSigma = 0.02;
inline constexpr std::array<double, 3> kSplitFractions = {0.65, 0.05, 0.30};

// Ship relief relative to the ship's own mean depth (metres, positive down).
struct ShipPatch {
    Raster<float> relief;
    Mask footprint;
    double pixel_size = 1.0;
    std::string source_id;

    std::size_t footprint_count() const;
    void check() const;
};

struct SynthConfig {
    double depth_ratio_mean = kDepthRatioMean;
    double depth_ratio_sigma = kDepthRatioSigma;
    int max_attempts = 100;
    std::uint64_t seed = 0;
    void check() const;
};

// Relief = depth - mean depth over ship pixels, cropped to the label's bounding box.
ShipPatch extract_ship(const GeoGrid& grid, const LabelMask& label, std::string source_id = {});

// Bilinear relief / nearest footprint resampling to another pixel size.
ShipPatch resample_patch(const ShipPatch& ship, double pixel_size);

// Rotation about the patch centre by `theta_deg` (clockwise on the map). The
// relief is re-centred so its mean over the rotated footprint is zero.
struct RotatedPatch {
    Raster<float> relief;
    Mask footprint;
};
RotatedPatch rotate_patch(const ShipPatch& ship, double theta_deg);

struct Composite {
    GeoGrid grid;
    LabelMask label;
    double theta_deg = 0.0;
    std::size_t row_off = 0;
    std::size_t col_off = 0;
    double terrain_mean = 0.0;
    double target_depth = 0.0;  // mean ship depth after compositing
};

// Deterministic placement: the rotated patch's top-left lands at (row_off,
// col_off). Throws NoValidPlacement if any ship pixel misses valid terrain.
Composite composite_at(const ShipPatch& ship, const GeoGrid& terrain, double theta_deg, std::size_t row_off,
                       std::size_t col_off, double target_depth);

// Random rotation, position and target depth ~ Normal(mean_ratio * m, sigma * m)
// where m is the terrain's mean valid depth. Throws NoValidPlacement after
// cfg.max_attempts failed placements.
Composite composite(const ShipPatch& ship, const GeoGrid& terrain, const SynthConfig& cfg, Rng& rng);

// Diamond-square fractal surface, mean base_depth, standard deviation roughness.
GeoGrid generate_terrain(std::size_t rows, std::size_t cols, double pixel_size, double base_depth, double roughness,
                         std::uint64_t seed);

// Procedural hull for desk-scale runs: a tapered footprint standing
// `height_m` proud of the seafloor at its keel line.
struct HullSpec {
    double length_m = 40.0;
    double beam_m = 9.0;
    double height_m = 4.0;
};
ShipPatch make_ship_patch(const HullSpec& hull, double pixel_size, std::uint64_t seed, std::string source_id);

enum class SampleKind { RealWreck, SyntheticWreck, Terrain };
enum class Split { Train, Val, Test };

std::string_view kind_name(SampleKind k);
std::string_view split_name(Split s);

struct ManifestEntry {
    std::string sample_path;  // relative to the manifest directory
    std::string label_path;
    SampleKind kind = SampleKind::Terrain;
    double resolution = 0.0;  // m/px
    double mean_depth = 0.0;  // m; ship pixels for wreck entries, valid pixels otherwise
    Split split = Split::Train;
    std::string source_id;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::array<double, 3> split_fractions = kSplitFractions;
    std::filesystem::path root;  // directory that entry paths are relative to

    std::size_t count(Split s) const;
    std::filesystem::path sample_file(const ManifestEntry& e) const { return root / e.sample_path; }
    std::filesystem::path label_file(const ManifestEntry& e) const { return root / e.label_path; }
};

// Largest-remainder apportionment of n items.
std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions);

// Group-atomic seeded split: entries sharing a source_id share a split.
void assign_splits(std::vector<ManifestEntry>& entries, const std::array<double, 3>& fractions, std::uint64_t seed);

struct LabeledGrid {
    GeoGrid grid;
    LabelMask label;
    std::string source_id;
};

struct DatasetInputs {
    std::vector<LabeledGrid> real;
    std::vector<ShipPatch> ships;
    std::vector<GeoGrid> terrains;
};

struct DatasetCounts {
    std::size_t real = 0;
    std::size_t synthetic = 0;
    std::size_t terrain = 0;
};

// Writes samples/ and labels/ (InternalBinary) plus manifest.tsv under out_dir.
DatasetManifest build_dataset(const DatasetInputs& inputs, const DatasetCounts& counts, const SynthConfig& cfg,
                              const std::filesystem::path& out_dir);

inline constexpr std::string_view kManifestFile = "manifest.tsv";
std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& manifest_file);
// Checks that every file exists and that sample and label dimensions agree.
void verify_manifest(const DatasetManifest& m);

}  // namespace wreckseg::synth
