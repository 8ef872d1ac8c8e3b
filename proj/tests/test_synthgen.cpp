#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "wreckseg/grid_io.hpp"
#include "wreckseg/synthgen.hpp"

using namespace wreckseg;
using namespace wreckseg::synth;

namespace {

GeoGrid flat_terrain(std::size_t rows, std::size_t cols, double ps, float depth) {
    return GeoGrid(rows, cols, GeoTransform{500.0, 9000.0, ps, 32619}, depth);
}

ShipPatch small_ship() {
    // 3x5 L-shaped footprint with uneven relief.
    ShipPatch s;
    s.pixel_size = 1.0;
    s.relief = Raster<float>(3, 5, 0.0f);
    s.footprint = Mask(3, 5, 0);
    const float rel[3][5] = {{-1, -2, -3, -2, 0}, {-1, -4, -5, -2, -1}, {0, 0, 0, 0, -1}};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 5; ++c) {
            const bool on = r < 2 || c == 4;
            s.footprint(r, c) = on;
            s.relief(r, c) = on ? rel[r][c] : 0.0f;
        }
    double m = 0;
    int n = 0;
    for (std::size_t i = 0; i < 15; ++i)
        if (s.footprint.data[i]) m += s.relief.data[i], ++n;
    for (std::size_t i = 0; i < 15; ++i)
        if (s.footprint.data[i]) s.relief.data[i] = static_cast<float>(s.relief.data[i] - m / n);
    return s;
}

double relief_mean(const Raster<float>& relief, const Mask& fp) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < fp.size(); ++i)
        if (fp.data[i]) s += relief.data[i], ++n;
    return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("extract_ship: constant ship has zero relief") {
    auto g = flat_terrain(3, 3, 1.0, 50.0f);
    LabelMask lab(3, 3, 1);
    auto s = extract_ship(g, lab, "w1");
    CHECK(s.relief.rows == 3);
    CHECK(s.relief.cols == 3);
    for (auto v : s.relief.data) CHECK(v == 0.0f);
    for (auto v : s.footprint.data) CHECK(v == 1);
    CHECK(s.source_id == "w1");
}

TEST_CASE("extract_ship: two pixels at 49 and 51 give relief -1 and +1 cropped to bbox") {
    auto g = flat_terrain(4, 4, 2.0, 10.0f);
    g.depth(1, 1) = 49.0f;
    g.depth(1, 2) = 51.0f;
    LabelMask lab(4, 4, 0);
    lab(1, 1) = lab(1, 2) = 1;
    auto s = extract_ship(g, lab);
    REQUIRE(s.relief.rows == 1);
    REQUIRE(s.relief.cols == 2);
    CHECK(s.relief(0, 0) == -1.0f);
    CHECK(s.relief(0, 1) == 1.0f);
    CHECK(s.pixel_size == 2.0);
}

TEST_CASE("extract_ship: preconditions") {
    auto g = flat_terrain(4, 4, 1.0, 10.0f);
    LabelMask lab(4, 4, 0);
    CHECK_THROWS_AS(extract_ship(g, lab), Error);
    try {
        extract_ship(g, lab);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyLabel);
    }
    lab(2, 2) = 1;
    g.valid(2, 2) = 0;
    try {
        extract_ship(g, lab);
        FAIL("expected ShipOnNodata");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShipOnNodata);
    }
}

TEST_CASE("extract_ship: relief mean over footprint is zero for random ships") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        auto g = flat_terrain(12, 12, 1.0, 0.0f);
        for (auto& v : g.depth.data) v = static_cast<float>(rng.uniform(20.0, 200.0));
        LabelMask lab(12, 12, 0);
        for (auto& v : lab.data) v = rng.uniform() < 0.3;
        lab(5, 5) = 1;
        auto s = extract_ship(g, lab);
        CHECK(std::abs(relief_mean(s.relief, s.footprint)) <= 1e-6 * 200);
    }
}

TEST_CASE("composite_at: identity rotation on flat terrain translates the footprint exactly") {
    auto ship = small_ship();
    auto terrain = flat_terrain(9, 11, 1.0, 100.0f);
    auto out = composite_at(ship, terrain, 0.0, 3, 3, 91.0);
    for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t c = 0; c < 11; ++c) {
            const bool inside = r >= 3 && r < 6 && c >= 3 && c < 8 && ship.footprint(r - 3, c - 3);
            CHECK(out.label(r, c) == (inside ? 1 : 0));
            if (inside) {
                CHECK(out.grid.depth(r, c) == doctest::Approx(91.0 + ship.relief(r - 3, c - 3)).epsilon(1e-6));
            } else {
                CHECK(out.grid.depth(r, c) == 100.0f);
            }
        }
    }
    CHECK(out.grid.geo == terrain.geo);
}

TEST_CASE("composite: ship larger than terrain has no valid placement") {
    auto ship = small_ship();
    auto terrain = flat_terrain(2, 2, 1.0, 100.0f);
    Rng rng(1);
    try {
        composite(ship, terrain, SynthConfig{}, rng);
        FAIL("expected NoValidPlacement");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoValidPlacement);
    }
    CHECK_THROWS_AS(composite_at(ship, terrain, 0.0, 0, 0, 90.0), Error);
}

TEST_CASE("composite: mean depth ratio follows the 0.91 rule over 1000 draws") {
    auto ship = make_ship_patch(HullSpec{12.0, 4.0, 2.0}, 1.0, 5, "hull");
    auto terrain = generate_terrain(32, 32, 1.0, 100.0, 1.0, 17);
    const double tmean = depth_stats(terrain).mean;
    Rng rng(2024);
    double sum = 0.0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        auto c = composite(ship, terrain, SynthConfig{}, rng);
        double s = 0;
        std::size_t k = 0;
        for (std::size_t p = 0; p < c.label.size(); ++p)
            if (c.label.data[p]) s += c.grid.depth.data[p], ++k;
        REQUIRE(k > 0);
        sum += (s / k) / tmean;
    }
    const double band = 3.0 * 0.02 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / n - 0.91) <= band);
}

TEST_CASE("composite: conservation, label consistency and determinism") {
    auto ship = make_ship_patch(HullSpec{10.0, 3.0, 1.5}, 0.5, 9, "h");
    auto terrain = generate_terrain(48, 40, 0.5, 60.0, 0.8, 3);
    // Knock out a nodata patch; placements must avoid it.
    for (std::size_t r = 10; r < 20; ++r)
        for (std::size_t c = 5; c < 15; ++c) terrain.valid(r, c) = 0;
    Rng a(77), b(77);
    for (int t = 0; t < 100; ++t) {
        auto c1 = composite(ship, terrain, SynthConfig{}, a);
        auto c2 = composite(ship, terrain, SynthConfig{}, b);
        REQUIRE(c1.grid.bit_equal(c2.grid));
        REQUIRE(c1.label == c2.label);
        CHECK(c1.grid.valid == terrain.valid);
        for (std::size_t p = 0; p < terrain.size(); ++p) {
            if (c1.label.data[p]) {
                CHECK(terrain.valid.data[p] == 1);
            } else {
                REQUIRE(std::memcmp(&c1.grid.depth.data[p], &terrain.depth.data[p], sizeof(float)) == 0);
            }
        }
    }
}

TEST_CASE("composite: ship at a different pixel size is resampled first") {
    auto ship = make_ship_patch(HullSpec{20.0, 6.0, 2.0}, 0.5, 1, "h");
    auto terrain = flat_terrain(40, 40, 1.0, 80.0f);
    auto out = composite_at(ship, terrain, 0.0, 5, 5, 70.0);
    std::size_t n = 0;
    double s = 0;
    for (std::size_t p = 0; p < out.label.size(); ++p)
        if (out.label.data[p]) s += out.grid.depth.data[p], ++n;
    // Footprint area shrinks by the square of the scale factor.
    CHECK(static_cast<double>(n) == doctest::Approx(ship.footprint_count() / 4.0).epsilon(0.15));
    CHECK(s / n == doctest::Approx(70.0).epsilon(1e-6));
}

TEST_CASE("rotate_patch: quarter turn keeps the footprint area and zero-mean relief") {
    auto ship = small_ship();
    auto r90 = rotate_patch(ship, 90.0);
    CHECK(r90.footprint.rows == 5);
    CHECK(r90.footprint.cols == 3);
    std::size_t n = 0;
    for (auto v : r90.footprint.data) n += v;
    CHECK(n == ship.footprint_count());
    CHECK(std::abs(relief_mean(r90.relief, r90.footprint)) < 1e-6);
    for (double th : {13.0, 45.0, 181.0, 300.0}) {
        auto r = rotate_patch(ship, th);
        CHECK(std::abs(relief_mean(r.relief, r.footprint)) < 1e-6);
    }
}

TEST_CASE("generate_terrain: zero roughness is constant") {
    auto g = generate_terrain(20, 30, 2.0, 42.5, 0.0, 9);
    CHECK(g.rows() == 20);
    CHECK(g.cols() == 30);
    for (auto v : g.depth.data) CHECK(v == 42.5f);
    CHECK(g.valid_count() == 600);
}

TEST_CASE("generate_terrain: deterministic per seed") {
    auto a = generate_terrain(33, 17, 1.0, 30.0, 1.5, 123);
    auto b = generate_terrain(33, 17, 1.0, 30.0, 1.5, 123);
    auto c = generate_terrain(33, 17, 1.0, 30.0, 1.5, 124);
    CHECK(a.bit_equal(b));
    CHECK(!a.bit_equal(c));
}

TEST_CASE("generate_terrain: 128x128 at roughness 2 has sample std in [1, 3] over 50 seeds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto g = generate_terrain(128, 128, 1.0, 50.0, 2.0, seed);
        CHECK(g.valid_count() == g.size());
        double m = 0;
        for (auto v : g.depth.data) m += v;
        m /= g.size();
        double var = 0;
        for (auto v : g.depth.data) var += (v - m) * (v - m);
        const double sd = std::sqrt(var / (g.size() - 1));
        CHECK(sd >= 1.0);
        CHECK(sd <= 3.0);
        CHECK(m == doctest::Approx(50.0).epsilon(1e-4));
    }
}

TEST_CASE("split_counts: largest remainder") {
    CHECK(split_counts(1000, kSplitFractions) == std::array<std::size_t, 3>{650, 50, 300});
    CHECK(split_counts(1784, kSplitFractions) == std::array<std::size_t, 3>{1160, 89, 535});
    CHECK(split_counts(1, kSplitFractions) == std::array<std::size_t, 3>{1, 0, 0});
    CHECK(split_counts(0, kSplitFractions) == std::array<std::size_t, 3>{0, 0, 0});
    for (std::size_t n = 0; n < 300; ++n) {
        auto s = split_counts(n, kSplitFractions);
        CHECK(s[0] + s[1] + s[2] == n);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(static_cast<double>(s[i]) - n * kSplitFractions[i]) < 1.0);
    }
    CHECK_THROWS_AS(split_counts(10, {0.5, 0.5, 0.5}), Error);
}

TEST_CASE("assign_splits: singletons hit the targets, groups never straddle splits") {
    std::vector<ManifestEntry> single(1000);
    for (std::size_t i = 0; i < single.size(); ++i) single[i].source_id = "s" + std::to_string(i);
    assign_splits(single, kSplitFractions, 5);
    std::array<std::size_t, 3> got{};
    for (const auto& e : single) ++got[static_cast<int>(e.split)];
    CHECK(got == std::array<std::size_t, 3>{650, 50, 300});

    Rng rng(8);
    std::vector<ManifestEntry> grouped(700);
    for (auto& e : grouped) e.source_id = "w" + std::to_string(rng.below(60));
    assign_splits(grouped, kSplitFractions, 5);
    std::map<std::string, std::set<int>> seen;
    for (const auto& e : grouped) seen[e.source_id].insert(static_cast<int>(e.split));
    for (const auto& [id, s] : seen) CHECK(s.size() == 1);
}

TEST_CASE("build_dataset: terrain-only entries carry all-zero labels") {
    test::TempDir dir("synth");
    DatasetInputs in;
    for (int i = 0; i < 3; ++i) in.terrains.push_back(generate_terrain(16, 16, 1.0, 40.0, 0.5, i));
    auto m = build_dataset(in, DatasetCounts{0, 0, 10}, SynthConfig{}, dir.path());
    REQUIRE(m.entries.size() == 10);
    for (const auto& e : m.entries) {
        CHECK(e.kind == SampleKind::Terrain);
        auto lab = io::grid_to_label(io::read_grid_file(m.label_file(e)));
        for (auto v : lab.data) CHECK(v == 0);
    }
    verify_manifest(m);
}

TEST_CASE("build_dataset: 162/455/1167 gives 1784 entries with leak-free splits") {
    test::TempDir dir("synth");
    DatasetInputs in;
    for (int i = 0; i < 20; ++i) in.terrains.push_back(generate_terrain(12, 12, 1.0, 40.0 + i, 0.5, 100 + i));
    for (int i = 0; i < 4; ++i) in.ships.push_back(make_ship_patch(HullSpec{6.0, 2.0, 1.0}, 1.0, i, "ship" + std::to_string(i)));
    for (int i = 0; i < 30; ++i) {
        Rng rng(i);
        auto c = composite(in.ships[i % 4], in.terrains[i % 20], SynthConfig{}, rng);
        in.real.push_back(LabeledGrid{c.grid, c.label, "wreck" + std::to_string(i)});
    }
    SynthConfig cfg;
    cfg.seed = 99;
    auto m = build_dataset(in, DatasetCounts{162, 455, 1167}, cfg, dir.path());
    REQUIRE(m.entries.size() == 1784);
    std::map<SampleKind, std::size_t> kinds;
    std::map<std::string, std::set<int>> seen;
    for (const auto& e : m.entries) {
        ++kinds[e.kind];
        seen[e.source_id].insert(static_cast<int>(e.split));
    }
    CHECK(kinds[SampleKind::RealWreck] == 162);
    CHECK(kinds[SampleKind::SyntheticWreck] == 455);
    CHECK(kinds[SampleKind::Terrain] == 1167);
    for (const auto& [id, s] : seen) CHECK(s.size() == 1);
    CHECK(m.count(Split::Train) + m.count(Split::Val) + m.count(Split::Test) == 1784);

    auto back = read_manifest(dir / std::string(kManifestFile));
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].sample_path == m.entries[i].sample_path);
        CHECK(back.entries[i].label_path == m.entries[i].label_path);
        CHECK(back.entries[i].kind == m.entries[i].kind);
        CHECK(back.entries[i].split == m.entries[i].split);
        CHECK(back.entries[i].resolution == m.entries[i].resolution);
        CHECK(back.entries[i].mean_depth == m.entries[i].mean_depth);
        CHECK(back.entries[i].source_id == m.entries[i].source_id);
    }
    CHECK(back.split_fractions == m.split_fractions);
}

TEST_CASE("build_dataset: same seed gives byte-identical output") {
    test::TempDir d1("synth"), d2("synth");
    DatasetInputs in;
    in.terrains.push_back(generate_terrain(24, 24, 1.0, 30.0, 0.5, 1));
    in.ships.push_back(make_ship_patch(HullSpec{8.0, 3.0, 1.0}, 1.0, 2, "a"));
    SynthConfig cfg;
    cfg.seed = 4;
    auto m1 = build_dataset(in, DatasetCounts{0, 6, 4}, cfg, d1.path());
    auto m2 = build_dataset(in, DatasetCounts{0, 6, 4}, cfg, d2.path());
    CHECK(format_manifest(m1) == format_manifest(m2));
    for (const auto& e : m1.entries) {
        CHECK(io::read_file(m1.sample_file(e)) == io::read_file(m2.sample_file(e)));
        CHECK(io::read_file(m1.label_file(e)) == io::read_file(m2.label_file(e)));
    }
}

TEST_CASE("build_dataset: missing inputs") {
    test::TempDir dir("synth");
    DatasetInputs in;
    for (DatasetCounts c : {DatasetCounts{1, 0, 0}, DatasetCounts{0, 1, 0}, DatasetCounts{0, 0, 1}}) {
        try {
            build_dataset(in, c, SynthConfig{}, dir.path());
            FAIL("expected InsufficientInputs");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InsufficientInputs);
        }
    }
}

TEST_CASE("parse_manifest: malformed lines are rejected") {
    CHECK_THROWS_AS(parse_manifest("a\tb\tterrain\t1\t2\n", "."), Error);
    CHECK_THROWS_AS(parse_manifest("a\tb\tboat\t1\t2\ttrain\n", "."), Error);
    CHECK_THROWS_AS(parse_manifest("a\tb\tterrain\t-1\t2\ttrain\n", "."), Error);
    CHECK_THROWS_AS(parse_manifest("a\tb\tterrain\t1\t2\tholdout\n", "."), Error);
    auto m = parse_manifest("# comment\n\na\tb\tterrain\t1\t2\ttest\n", "/x");
    REQUIRE(m.entries.size() == 1);
    CHECK(m.entries[0].source_id.empty());
    CHECK(m.sample_file(m.entries[0]) == std::filesystem::path("/x/a"));
}
