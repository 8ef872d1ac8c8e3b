#include "wreckseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <unordered_map>

#include "text_util.hpp"
#include "wreckseg/grid_io.hpp"

namespace wreckseg::synth {

namespace {

double footprint_mean(const Raster<float>& relief, const Mask& fp) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < fp.size(); ++i) {
        if (!fp.data[i]) continue;
        sum += relief.data[i];
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

void recentre(Raster<float>& relief, const Mask& fp) {
    const double m = footprint_mean(relief, fp);
    for (std::size_t i = 0; i < fp.size(); ++i) {
        relief.data[i] = fp.data[i] ? static_cast<float>(relief.data[i] - m) : 0.0f;
    }
}

// Bilinear sample with edge clamping. Integer coordinates return the stored value exactly.
double bilinear(const Raster<float>& a, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(a.rows - 1));
    x = std::clamp(x, 0.0, static_cast<double>(a.cols - 1));
    const auto r0 = static_cast<std::size_t>(std::floor(y));
    const auto c0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t r1 = std::min(r0 + 1, a.rows - 1);
    const std::size_t c1 = std::min(c0 + 1, a.cols - 1);
    const double fy = y - static_cast<double>(r0);
    const double fx = x - static_cast<double>(c0);
    if (fy == 0.0 && fx == 0.0) return a(r0, c0);
    const double top = a(r0, c0) * (1.0 - fx) + a(r0, c1) * fx;
    const double bot = a(r1, c0) * (1.0 - fx) + a(r1, c1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

bool nearest_in(const Mask& m, double y, double x) {
    const double ry = std::round(y);
    const double rx = std::round(x);
    if (ry < 0 || rx < 0 || ry > static_cast<double>(m.rows - 1) || rx > static_cast<double>(m.cols - 1)) return false;
    return m(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx)) != 0;
}

std::string entry_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.bgrd", i);
    return buf;
}

}  // namespace

std::size_t ShipPatch::footprint_count() const {
    std::size_t n = 0;
    for (auto v : footprint.data) n += v != 0;
    return n;
}

void ShipPatch::check() const {
    if (relief.rows == 0 || relief.cols == 0 || !footprint.same_shape(relief))
        fail(ErrorCode::InconsistentDimensions, "ship relief and footprint shapes differ");
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "ship pixel_size must be positive");
    if (footprint_count() == 0) fail(ErrorCode::EmptyLabel, "ship footprint is empty");
}

void SynthConfig::check() const {
    if (!(depth_ratio_mean > 0.0 && depth_ratio_mean < 1.0)) fail(ErrorCode::InvalidArgument, "depth_ratio_mean must be in (0, 1)");
    if (!(depth_ratio_sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "depth_ratio_sigma must be >= 0");
    if (max_attempts < 1) fail(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
}

ShipPatch extract_ship(const GeoGrid& grid, const LabelMask& label, std::string source_id) {
    if (!label.same_shape(grid.depth)) fail(ErrorCode::InconsistentDimensions, "label shape differs from grid");
    std::size_t r0 = SIZE_MAX, r1 = 0, c0 = SIZE_MAX, c1 = 0;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < label.rows; ++r) {
        for (std::size_t c = 0; c < label.cols; ++c) {
            if (!label(r, c)) continue;
            if (!grid.is_valid(r, c)) fail(ErrorCode::ShipOnNodata, "ship label covers a nodata pixel");
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, c);
            c1 = std::max(c1, c);
            sum += grid.depth(r, c);
            ++n;
        }
    }
    if (n == 0) fail(ErrorCode::EmptyLabel, "label has no ship pixels");
    const double mean = sum / static_cast<double>(n);
    ShipPatch s;
    s.pixel_size = grid.geo.pixel_size;
    s.source_id = std::move(source_id);
    s.relief = Raster<float>(r1 - r0 + 1, c1 - c0 + 1, 0.0f);
    s.footprint = Mask(r1 - r0 + 1, c1 - c0 + 1, 0);
    for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t c = c0; c <= c1; ++c) {
            if (!label(r, c)) continue;
            s.footprint(r - r0, c - c0) = 1;
            s.relief(r - r0, c - c0) = static_cast<float>(grid.depth(r, c) - mean);
        }
    }
    return s;
}

ShipPatch resample_patch(const ShipPatch& ship, double pixel_size) {
    ship.check();
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "pixel_size must be positive");
    const double k = ship.pixel_size / pixel_size;
    const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(ship.relief.rows) * k)));
    const auto cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(ship.relief.cols) * k)));
    ShipPatch out;
    out.pixel_size = pixel_size;
    out.source_id = ship.source_id;
    out.relief = Raster<float>(rows, cols, 0.0f);
    out.footprint = Mask(rows, cols, 0);
    // Pixel-centre alignment between the two lattices.
    const double sy = static_cast<double>(ship.relief.rows) / static_cast<double>(rows);
    const double sx = static_cast<double>(ship.relief.cols) / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
            const double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
            out.footprint(r, c) = nearest_in(ship.footprint, y, x) ? 1 : 0;
            out.relief(r, c) = static_cast<float>(bilinear(ship.relief, y, x));
        }
    }
    if (out.footprint_count() == 0) out.footprint(rows / 2, cols / 2) = 1;
    recentre(out.relief, out.footprint);
    return out;
}

RotatedPatch rotate_patch(const ShipPatch& ship, double theta_deg) {
    const double h = static_cast<double>(ship.relief.rows);
    const double w = static_cast<double>(ship.relief.cols);
    const double t = theta_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(t);
    const double st = std::sin(t);
    auto extent = [](double v) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v - 1e-9))); };
    const std::size_t H = extent(std::abs(h * ct) + std::abs(w * st));
    const std::size_t W = extent(std::abs(w * ct) + std::abs(h * st));
    const double cy = (h - 1.0) / 2.0, cx = (w - 1.0) / 2.0;
    const double oy = (static_cast<double>(H) - 1.0) / 2.0, ox = (static_cast<double>(W) - 1.0) / 2.0;
    RotatedPatch out{Raster<float>(H, W, 0.0f), Mask(H, W, 0)};
    const bool identity = theta_deg == 0.0;
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const double dy = static_cast<double>(i) - oy;
            const double dx = static_cast<double>(j) - ox;
            const double sx = identity ? static_cast<double>(j) : cx + ct * dx + st * dy;
            const double sy = identity ? static_cast<double>(i) : cy - st * dx + ct * dy;
            if (!nearest_in(ship.footprint, sy, sx)) continue;
            out.footprint(i, j) = 1;
            out.relief(i, j) = static_cast<float>(bilinear(ship.relief, sy, sx));
        }
    }
    recentre(out.relief, out.footprint);
    return out;
}

namespace {

bool fits(const RotatedPatch& p, const GeoGrid& terrain, std::size_t row_off, std::size_t col_off) {
    if (row_off + p.footprint.rows > terrain.rows() || col_off + p.footprint.cols > terrain.cols()) return false;
    bool any = false;
    for (std::size_t r = 0; r < p.footprint.rows; ++r) {
        for (std::size_t c = 0; c < p.footprint.cols; ++c) {
            if (!p.footprint(r, c)) continue;
            if (!terrain.is_valid(row_off + r, col_off + c)) return false;
            any = true;
        }
    }
    return any;
}

Composite paste(const RotatedPatch& p, const GeoGrid& terrain, double theta, std::size_t row_off, std::size_t col_off,
                double target) {
    Composite out;
    out.grid = terrain;
    out.label = LabelMask(terrain.rows(), terrain.cols(), 0);
    out.theta_deg = theta;
    out.row_off = row_off;
    out.col_off = col_off;
    out.terrain_mean = depth_stats(terrain).mean;
    out.target_depth = target;
    for (std::size_t r = 0; r < p.footprint.rows; ++r) {
        for (std::size_t c = 0; c < p.footprint.cols; ++c) {
            if (!p.footprint(r, c)) continue;
            out.grid.depth(row_off + r, col_off + c) = static_cast<float>(target + p.relief(r, c));
            out.label(row_off + r, col_off + c) = 1;
        }
    }
    return out;
}

const ShipPatch& at_resolution(const ShipPatch& ship, double pixel_size, ShipPatch& scratch) {
    if (std::abs(ship.pixel_size - pixel_size) <= 1e-9 * pixel_size) return ship;
    scratch = resample_patch(ship, pixel_size);
    return scratch;
}

}  // namespace

Composite composite_at(const ShipPatch& ship, const GeoGrid& terrain, double theta_deg, std::size_t row_off,
                       std::size_t col_off, double target_depth) {
    ship.check();
    terrain.check();
    ShipPatch scratch;
    const ShipPatch& s = at_resolution(ship, terrain.geo.pixel_size, scratch);
    const RotatedPatch p = rotate_patch(s, theta_deg);
    if (!fits(p, terrain, row_off, col_off)) fail(ErrorCode::NoValidPlacement, "ship does not fit on valid terrain at that position");
    return paste(p, terrain, theta_deg, row_off, col_off, target_depth);
}

Composite composite(const ShipPatch& ship, const GeoGrid& terrain, const SynthConfig& cfg, Rng& rng) {
    cfg.check();
    ship.check();
    terrain.check();
    const DepthRange st = depth_stats(terrain);
    if (st.count == 0) fail(ErrorCode::AllNodata, "terrain has no valid pixels");
    ShipPatch scratch;
    const ShipPatch& s = at_resolution(ship, terrain.geo.pixel_size, scratch);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const double theta = rng.uniform(0.0, 360.0);
        const RotatedPatch p = rotate_patch(s, theta);
        if (p.footprint.rows > terrain.rows() || p.footprint.cols > terrain.cols()) continue;
        const std::size_t row = rng.below(terrain.rows() - p.footprint.rows + 1);
        const std::size_t col = rng.below(terrain.cols() - p.footprint.cols + 1);
        if (!fits(p, terrain, row, col)) continue;
        const double d = rng.normal(cfg.depth_ratio_mean * st.mean, cfg.depth_ratio_sigma * st.mean);
        return paste(p, terrain, theta, row, col, d);
    }
    fail(ErrorCode::NoValidPlacement, "no valid placement after " + std::to_string(cfg.max_attempts) + " attempts");
}

GeoGrid generate_terrain(std::size_t rows, std::size_t cols, double pixel_size, double base_depth, double roughness,
                         std::uint64_t seed) {
    if (rows == 0 || cols == 0) fail(ErrorCode::InconsistentDimensions, "terrain must be at least 1x1");
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "pixel_size must be positive");
    if (!(roughness >= 0.0)) fail(ErrorCode::InvalidArgument, "roughness must be >= 0");
    GeoTransform geo;
    geo.pixel_size = pixel_size;
    geo.origin_northing = static_cast<double>(rows) * pixel_size;
    GeoGrid g(rows, cols, geo, static_cast<float>(base_depth));
    if (roughness == 0.0) return g;

    std::size_t n = 2;
    while (n + 1 < std::max(rows, cols)) n *= 2;
    ++n;
    Rng rng(seed);
    Raster<double> h(n, n, 0.0);
    h(0, 0) = rng.normal();
    h(0, n - 1) = rng.normal();
    h(n - 1, 0) = rng.normal();
    h(n - 1, n - 1) = rng.normal();
    constexpr double kDecay = 0.6;  // per-octave amplitude falloff
    double scale = 1.0;
    for (std::size_t step = n - 1; step > 1; step /= 2) {
        const std::size_t half = step / 2;
        for (std::size_t y = half; y < n; y += step) {
            for (std::size_t x = half; x < n; x += step) {
                const double avg = (h(y - half, x - half) + h(y - half, x + half) + h(y + half, x - half) + h(y + half, x + half)) / 4.0;
                h(y, x) = avg + scale * rng.normal();
            }
        }
        for (std::size_t y = 0; y < n; y += half) {
            for (std::size_t x = (y / half) % 2 == 0 ? half : 0; x < n; x += step) {
                double sum = 0.0;
                int k = 0;
                if (y >= half) sum += h(y - half, x), ++k;
                if (y + half < n) sum += h(y + half, x), ++k;
                if (x >= half) sum += h(y, x - half), ++k;
                if (x + half < n) sum += h(y, x + half), ++k;
                h(y, x) = sum / k + scale * rng.normal();
            }
        }
        scale *= kDecay;
    }

    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) mean += h(r, c);
    mean /= static_cast<double>(rows * cols);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) var += (h(r, c) - mean) * (h(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(rows * cols));
    if (sd == 0.0) return g;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            g.depth(r, c) = static_cast<float>(base_depth + roughness * (h(r, c) - mean) / sd);
    return g;
}

ShipPatch make_ship_patch(const HullSpec& hull, double pixel_size, std::uint64_t seed, std::string source_id) {
    if (!(hull.length_m > 0.0 && hull.beam_m > 0.0 && hull.height_m >= 0.0))
        fail(ErrorCode::InvalidArgument, "hull dimensions must be positive");
    if (!(pixel_size > 0.0)) fail(ErrorCode::InvalidArgument, "pixel_size must be positive");
    Rng rng(seed);
    const auto rows = static_cast<std::size_t>(std::ceil(hull.beam_m / pixel_size)) + 1;
    const auto cols = static_cast<std::size_t>(std::ceil(hull.length_m / pixel_size)) + 1;
    ShipPatch s;
    s.pixel_size = pixel_size;
    s.source_id = std::move(source_id);
    s.relief = Raster<float>(rows, cols, 0.0f);
    s.footprint = Mask(rows, cols, 0);
    const double deck = rng.uniform(0.3, 0.7);  // superstructure position along the hull
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = (static_cast<double>(c) - (static_cast<double>(cols) - 1) / 2) * pixel_size;
            const double y = (static_cast<double>(r) - (static_cast<double>(rows) - 1) / 2) * pixel_size;
            const double u = x / (hull.length_m / 2);  // -1 stern, +1 bow
            if (std::abs(u) > 1.0) continue;
            double hw = hull.beam_m / 2;
            if (u > 0.5) hw *= std::sqrt(std::max(0.0, 1.0 - (u - 0.5) * (u - 0.5) / 0.25));
            if (u < -0.9) hw *= 0.8;
            if (std::abs(y) > hw) continue;
            const double across = hw > 0 ? std::sqrt(std::max(0.0, 1.0 - (y / hw) * (y / hw))) : 0.0;
            const double super = std::abs((u + 1) / 2 - deck) < 0.12 ? 0.35 : 0.0;
            const double height = hull.height_m * ((0.65 + super) * across + 0.1) + 0.05 * hull.height_m * rng.normal();
            s.footprint(r, c) = 1;
            s.relief(r, c) = static_cast<float>(-height);
        }
    }
    if (s.footprint_count() == 0) s.footprint(rows / 2, cols / 2) = 1;
    recentre(s.relief, s.footprint);
    return s;
}

std::string_view kind_name(SampleKind k) {
    switch (k) {
        case SampleKind::RealWreck: return "real-wreck";
        case SampleKind::SyntheticWreck: return "synthetic-wreck";
        case SampleKind::Terrain: return "terrain";
    }
    return "?";
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& f) {
    double total = 0.0;
    for (double v : f) {
        if (!(v >= 0.0)) fail(ErrorCode::InvalidArgument, "split fractions must be non-negative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::InvalidArgument, "split fractions must sum to 1");
    std::array<std::size_t, 3> out{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double q = static_cast<double>(n) * f[i];
        // Guard against 0.65 * 1000 landing at 649.999...
        const double fl = std::floor(q + 1e-9);
        out[i] = static_cast<std::size_t>(fl);
        rem[i] = q - fl;
        assigned += out[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % 3]];
    return out;
}

void assign_splits(std::vector<ManifestEntry>& entries, const std::array<double, 3>& fractions, std::uint64_t seed) {
    const auto target = split_counts(entries.size(), fractions);
    std::vector<std::vector<std::size_t>> groups;
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string& id = entries[i].source_id;
        if (id.empty()) {
            groups.push_back({i});
            continue;
        }
        auto [it, inserted] = by_id.try_emplace(id, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    rng.shuffle(groups.begin(), groups.end());
    std::array<std::ptrdiff_t, 3> left{};
    for (int s = 0; s < 3; ++s) left[s] = static_cast<std::ptrdiff_t>(target[s]);
    for (const auto& g : groups) {
        int best = 0;
        for (int s = 1; s < 3; ++s)
            if (left[s] > left[best]) best = s;
        left[best] -= static_cast<std::ptrdiff_t>(g.size());
        for (std::size_t i : g) entries[i].split = static_cast<Split>(best);
    }
}

DatasetManifest build_dataset(const DatasetInputs& in, const DatasetCounts& counts, const SynthConfig& cfg,
                              const std::filesystem::path& out_dir) {
    cfg.check();
    if (counts.real > 0 && in.real.empty()) fail(ErrorCode::InsufficientInputs, "real wreck entries requested without real samples");
    if (counts.synthetic > 0 && (in.ships.empty() || in.terrains.empty()))
        fail(ErrorCode::InsufficientInputs, "synthetic entries need at least one ship and one terrain");
    if (counts.terrain > 0 && in.terrains.empty()) fail(ErrorCode::InsufficientInputs, "terrain entries need terrain grids");

    std::filesystem::create_directories(out_dir / "samples");
    std::filesystem::create_directories(out_dir / "labels");
    DatasetManifest m;
    m.root = out_dir;
    const std::size_t total = counts.real + counts.synthetic + counts.terrain;
    m.entries.reserve(total);

    auto emit = [&](std::size_t idx, const GeoGrid& grid, const LabelMask& label, SampleKind kind, std::string source_id) {
        ManifestEntry e;
        e.sample_path = "samples/" + entry_name(idx);
        e.label_path = "labels/" + entry_name(idx);
        e.kind = kind;
        e.resolution = grid.geo.pixel_size;
        e.source_id = std::move(source_id);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (label.data[i] && grid.valid.data[i]) sum += grid.depth.data[i], ++n;
        }
        e.mean_depth = n ? sum / static_cast<double>(n) : depth_stats(grid).mean;
        io::write_file_atomic(out_dir / e.sample_path, io::write_internal_binary(grid));
        io::write_file_atomic(out_dir / e.label_path, io::write_internal_binary(io::label_to_grid(label, grid.geo)));
        m.entries.push_back(std::move(e));
    };

    std::size_t idx = 0;
    for (std::size_t i = 0; i < counts.real; ++i, ++idx) {
        const LabeledGrid& lg = in.real[i % in.real.size()];
        if (!lg.label.same_shape(lg.grid.depth)) fail(ErrorCode::InconsistentDimensions, "real sample label shape differs");
        emit(idx, lg.grid, lg.label, SampleKind::RealWreck,
             lg.source_id.empty() ? "real-" + std::to_string(i % in.real.size()) : lg.source_id);
    }
    for (std::size_t i = 0; i < counts.synthetic; ++i, ++idx) {
        Rng rng(cfg.seed ^ idx);
        const std::size_t si = i % in.ships.size();
        const GeoGrid& terrain = in.terrains[rng.below(in.terrains.size())];
        const Composite c = composite(in.ships[si], terrain, cfg, rng);
        const ShipPatch& ship = in.ships[si];
        emit(idx, c.grid, c.label, SampleKind::SyntheticWreck, ship.source_id.empty() ? "ship-" + std::to_string(si) : ship.source_id);
    }
    for (std::size_t i = 0; i < counts.terrain; ++i, ++idx) {
        const std::size_t ti = i % in.terrains.size();
        const GeoGrid& t = in.terrains[ti];
        emit(idx, t, LabelMask(t.rows(), t.cols(), 0), SampleKind::Terrain, "terrain-" + std::to_string(ti));
    }

    assign_splits(m.entries, m.split_fractions, cfg.seed);
    io::write_file_atomic(out_dir / kManifestFile, format_manifest(m));
    return m;
}

std::string format_manifest(const DatasetManifest& m) {
    std::string out = "# sample_path\tlabel_path\tkind\tresolution_m\tmean_depth_m\tsplit\tsource_id\n";
    out += "# split_fractions\t" + detail::shortest(m.split_fractions[0]) + "\t" + detail::shortest(m.split_fractions[1]) + "\t" +
           detail::shortest(m.split_fractions[2]) + "\n";
    for (const auto& e : m.entries) {
        out += e.sample_path + "\t" + e.label_path + "\t" + std::string(kind_name(e.kind)) + "\t" + detail::shortest(e.resolution) +
               "\t" + detail::shortest(e.mean_depth) + "\t" + std::string(split_name(e.split)) + "\t" + e.source_id + "\n";
    }
    return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    std::size_t line_no = 0;
    for (std::string_view line : detail::split(text, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (detail::trim(line).empty()) continue;
        auto bad = [&](const std::string& why) {
            fail(ErrorCode::MalformedHeader, "manifest line " + std::to_string(line_no) + ": " + why);
        };
        if (line.front() == '#') {
            auto f = detail::split(line, '\t');
            if (detail::trim(f[0]) == "# split_fractions") {
                if (f.size() != 4) bad("split_fractions needs three values");
                for (int i = 0; i < 3; ++i) {
                    auto v = detail::parse_double(f[i + 1]);
                    if (!v) bad("bad split fraction");
                    m.split_fractions[i] = *v;
                }
                split_counts(0, m.split_fractions);  // validates the sum
            }
            continue;
        }
        auto f = detail::split(line, '\t');
        if (f.size() != 6 && f.size() != 7) bad("expected 6 or 7 tab-separated fields");
        ManifestEntry e;
        e.sample_path = std::string(f[0]);
        e.label_path = std::string(f[1]);
        if (e.sample_path.empty() || e.label_path.empty()) bad("empty path");
        if (f[2] == "real-wreck") e.kind = SampleKind::RealWreck;
        else if (f[2] == "synthetic-wreck") e.kind = SampleKind::SyntheticWreck;
        else if (f[2] == "terrain") e.kind = SampleKind::Terrain;
        else bad("unknown kind");
        auto res = detail::parse_double(f[3]);
        auto dep = detail::parse_double(f[4]);
        if (!res || !(*res > 0.0)) bad("bad resolution");
        if (!dep) bad("bad mean depth");
        e.resolution = *res;
        e.mean_depth = *dep;
        if (f[5] == "train") e.split = Split::Train;
        else if (f[5] == "val") e.split = Split::Val;
        else if (f[5] == "test") e.split = Split::Test;
        else bad("unknown split");
        if (f.size() == 7) e.source_id = std::string(f[6]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_file) {
    const io::Bytes b = io::read_file(manifest_file);
    return parse_manifest(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()), manifest_file.parent_path());
}

void verify_manifest(const DatasetManifest& m) {
    for (const auto& e : m.entries) {
        const GeoGrid s = io::read_grid_file(m.sample_file(e));
        const GeoGrid l = io::read_grid_file(m.label_file(e));
        if (s.rows() != l.rows() || s.cols() != l.cols())
            fail(ErrorCode::InconsistentDimensions, "sample and label dimensions differ for " + e.sample_path);
    }
}

}  // namespace wreckseg::synth
