#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "wreckseg/detect.hpp"
#include "wreckseg/synthgen.hpp"

using namespace wreckseg;
using namespace wreckseg::detect;

namespace {

GeoGrid flat(std::size_t rows, std::size_t cols, double ps, float depth) {
    return GeoGrid(rows, cols, GeoTransform{1000.0, 5000.0, ps, 32630}, depth);
}

Piece tile(std::size_t r, std::size_t c, std::size_t h, std::size_t w, float v) {
    Piece p;
    p.row_off = r;
    p.col_off = c;
    p.prob = Raster<float>(h, w, v);
    return p;
}

// Independent spill-level oracle: relax W(c) = max(z(c), min over neighbours W)
// from +inf until nothing changes, with draining cells pinned to z.
Raster<double> minimax_oracle(const GeoGrid& g) {
    const std::size_t R = g.rows(), C = g.cols();
    const double inf = std::numeric_limits<double>::infinity();
    Raster<double> w(R, C, inf);
    auto drains = [&](std::size_t r, std::size_t c) {
        if (r == 0 || c == 0 || r + 1 == R || c + 1 == C) return true;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc)
                if (!g.is_valid(r + dr, c + dc)) return true;
        return false;
    };
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            if (g.is_valid(r, c) && drains(r, c)) w(r, c) = g.depth(r, c);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) {
                if (!g.is_valid(r, c) || drains(r, c)) continue;
                double m = inf;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc)
                        if ((dr || dc) && g.is_valid(r + dr, c + dc)) m = std::min(m, w(r + dr, c + dc));
                const double v = std::max(static_cast<double>(g.depth(r, c)), m);
                if (v < w(r, c)) {
                    w(r, c) = v;
                    changed = true;
                }
            }
    }
    return w;
}

// Oracle detection mask: recursive labelling of positive-depth cells, then the
// keep rules and a square dilation.
Raster<float> depression_oracle(const GeoGrid& g, const DepressionParams& p) {
    const auto w = minimax_oracle(g);
    const std::size_t R = g.rows(), C = g.cols();
    Raster<int> lab(R, C, -1);
    auto depth = [&](std::size_t r, std::size_t c) { return g.is_valid(r, c) ? w(r, c) - g.depth(r, c) : 0.0; };
    int next = 0;
    std::vector<std::pair<std::size_t, std::size_t>> todo;
    std::vector<double> maxd;
    std::vector<std::size_t> cnt;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            if (lab(r, c) >= 0 || !(depth(r, c) > 0)) continue;
            maxd.push_back(0);
            cnt.push_back(0);
            todo.assign(1, {r, c});
            lab(r, c) = next;
            while (!todo.empty()) {
                auto [a, b] = todo.back();
                todo.pop_back();
                maxd[next] = std::max(maxd[next], depth(a, b));
                ++cnt[next];
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const long na = static_cast<long>(a) + dr, nb = static_cast<long>(b) + dc;
                        if (na < 0 || nb < 0 || na >= static_cast<long>(R) || nb >= static_cast<long>(C)) continue;
                        if (lab(na, nb) >= 0 || !(depth(na, nb) > 0)) continue;
                        lab(na, nb) = next;
                        todo.push_back({static_cast<std::size_t>(na), static_cast<std::size_t>(nb)});
                    }
            }
            ++next;
        }
    const double need = p.min_depress * 0.25 / (g.geo.pixel_size * g.geo.pixel_size);
    Raster<float> out(R, C, 0.0f);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            const int l = lab(r, c);
            if (l < 0 || maxd[l] < p.min_depth || cnt[l] < need) continue;
            for (long dr = -p.buffer; dr <= p.buffer; ++dr)
                for (long dc = -p.buffer; dc <= p.buffer; ++dc) {
                    const long a = static_cast<long>(r) + dr, b = static_cast<long>(c) + dc;
                    if (a >= 0 && b >= 0 && a < static_cast<long>(R) && b < static_cast<long>(C) && g.is_valid(a, b)) out(a, b) = 1.0f;
                }
        }
    return out;
}

GeoGrid mound_grid(double proud, double ps) {
    auto g = flat(40, 40, ps, 100.0f);
    for (std::size_t r = 15; r < 25; ++r)
        for (std::size_t c = 12; c < 22; ++c) g.depth(r, c) = static_cast<float>(100.0 - proud);
    return g;
}

}  // namespace

TEST_CASE("merge: non-overlapping tiles form the mosaic") {
    std::vector<Piece> ps;
    Raster<float> expect(9, 9);
    for (int i = 0; i < 9; ++i) {
        const float v = 0.1f * i;
        ps.push_back(tile((i / 3) * 3, (i % 3) * 3, 3, 3, v));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) expect((i / 3) * 3 + r, (i % 3) * 3 + c) = v;
    }
    auto m = merge_chunks(ps, 9, 9, GeoTransform{});
    for (std::size_t i = 0; i < 81; ++i) {
        CHECK(m.prob.data[i] == expect.data[i]);
        CHECK(m.valid.data[i] == 1);
    }
}

TEST_CASE("merge: overlap is averaged") {
    auto m = merge_chunks({tile(0, 0, 2, 3, 0.2f), tile(0, 1, 2, 3, 0.6f)}, 2, 4, GeoTransform{});
    CHECK(m.prob(0, 0) == 0.2f);
    CHECK(m.prob(0, 1) == 0.4f);
    CHECK(m.prob(1, 2) == 0.4f);
    CHECK(m.prob(0, 3) == 0.6f);
}

TEST_CASE("merge: uncovered and masked pixels are invalid") {
    Piece p = tile(0, 0, 2, 2, 0.7f);
    p.valid = Mask(2, 2, 1);
    p.valid(1, 1) = 0;
    auto m = merge_chunks({p}, 3, 3, GeoTransform{});
    CHECK(m.valid(0, 0) == 1);
    CHECK(m.valid(1, 1) == 0);
    CHECK(m.valid(2, 2) == 0);
    CHECK(m.prob(2, 2) == 0.0f);
}

TEST_CASE("merge: placement outside the extent") {
    try {
        merge_chunks({tile(3, 3, 2, 2, 0.5f)}, 4, 4, GeoTransform{});
        FAIL("expected PlacementOutOfBounds");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PlacementOutOfBounds);
    }
}

TEST_CASE("merge: 1200 overlapping pieces, limit 500, equal the direct merge bit for bit") {
    Rng rng(42);
    std::vector<Piece> ps;
    for (int i = 0; i < 1200; ++i) {
        const std::size_t h = 4 + rng.below(8), w = 4 + rng.below(8);
        Piece p = tile(rng.below(120 - h + 1), rng.below(90 - w + 1), h, w, 0.0f);
        for (auto& v : p.prob.data) v = static_cast<float>(rng.uniform());
        ps.push_back(p);
    }
    MergeStats rs, ds;
    auto rec = merge_chunks(ps, 120, 90, GeoTransform{}, 500, &rs);
    auto dir = merge_chunks(ps, 120, 90, GeoTransform{}, 5000, &ds);
    CHECK(std::memcmp(rec.prob.data.data(), dir.prob.data.data(), rec.prob.size() * 4) == 0);
    CHECK(rec.valid == dir.valid);
    CHECK(rs.partials_per_level == std::vector<std::size_t>{3, 1});
    CHECK(ds.partials_per_level == std::vector<std::size_t>{1});
    CHECK(rs.max_live_tiles <= 500 + rs.levels());
    // Reversed order gives the same layer too.
    std::reverse(ps.begin(), ps.end());
    auto rev = merge_chunks(ps, 120, 90, GeoTransform{}, 7, nullptr);
    CHECK(std::memcmp(rev.prob.data.data(), dir.prob.data.data(), rev.prob.size() * 4) == 0);
}

TEST_CASE("merge: deep recursion keeps the live-tile bound") {
    Rng rng(3);
    std::vector<Piece> ps;
    for (int i = 0; i < 700; ++i) ps.push_back(tile(rng.below(30), rng.below(30), 3, 3, static_cast<float>(rng.uniform())));
    MergeStats s;
    auto a = merge_chunks(ps, 32, 32, GeoTransform{}, 4, &s);
    auto b = merge_chunks(ps, 32, 32, GeoTransform{}, 1000, nullptr);
    CHECK(a.prob == b.prob);
    CHECK(s.levels() >= 4);
    CHECK(s.max_live_tiles <= 4 + s.levels());
    CHECK(s.partials_per_level[0] == 175);
}

TEST_CASE("infer_cnn: grid smaller than one chunk, zero weights give 0.5 on valid pixels") {
    auto g = flat(30, 20, 1.0, 40.0f);
    for (std::size_t r = 0; r < 30; ++r) g.depth(r, 5) = 41.0f;
    g.valid(3, 3) = 0;
    auto w = nn::init_model(nn::NetConfig{}, 1);
    for (auto& t : w.tensors) std::fill(t.data.begin(), t.data.end(), 0.0f);
    auto p = infer_cnn(g, std::nullopt, w, false);
    CHECK(p.rows() == 30);
    CHECK(p.cols() == 20);
    CHECK(p.geo == g.geo);
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t c = 0; c < 20; ++c) {
            if (r == 3 && c == 3) {
                CHECK(p.valid(r, c) == 0);
                CHECK(p.prob(r, c) == 0.0f);
            } else {
                CHECK(p.prob(r, c) == 0.5f);
            }
        }
}

TEST_CASE("infer_cnn: channel mismatch") {
    auto g = flat(16, 16, 1.0, 40.0f);
    auto w = nn::init_model(nn::NetConfig{}, 1);
    try {
        infer_cnn(g, std::nullopt, w, true);
        FAIL("expected WeightsChannelMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::WeightsChannelMismatch);
    }
}

TEST_CASE("infer_cnn: outputs stay in [0, 1] for large random weights, tiling and jobs agree") {
    nn::NetConfig cfg;
    cfg.base_channels = 2;
    cfg.in_channels = 2;
    auto w = nn::init_model(cfg, 9);
    for (auto& t : w.tensors)
        for (auto& v : t.data) v *= 40.0f;
    auto g = synth::generate_terrain(70, 90, 10.0, 50.0, 3.0, 4);
    g.valid(10, 10) = 0;
    InferOptions o;
    o.chunker.chunk_extent = 320.0;
    o.chunker.stride = 160.0;
    auto a = infer_cnn(g, std::nullopt, w, true, o);
    for (float v : a.prob.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    o.jobs = 3;
    std::size_t calls = 0;
    o.progress = [&](std::size_t done, std::size_t total) {
        ++calls;
        CHECK(done <= total);
    };
    auto b = infer_cnn(g, std::nullopt, w, true, o);
    CHECK(a.prob == b.prob);
    CHECK(calls == 5 * 6);  // ceil(70 / 16) x ceil(90 / 16)
}

TEST_CASE("infer_cnn: extent crops the grid and the georeferencing") {
    auto g = synth::generate_terrain(40, 40, 2.0, 50.0, 1.0, 4);
    auto w = nn::init_model(nn::NetConfig{1, 2, 2, 2}, 2);
    auto p = infer_cnn(g, PixelRect{5, 7, 20, 10}, w, false);
    CHECK(p.rows() == 20);
    CHECK(p.cols() == 10);
    CHECK(p.geo.origin_easting == g.geo.easting_of_col(7));
    CHECK(p.geo.origin_northing == g.geo.northing_of_row(5));
    CHECK_THROWS_AS(infer_cnn(g, PixelRect{30, 30, 20, 20}, w, false), Error);
}

TEST_CASE("infer_cnn: a briefly trained net ranks wreck pixels above terrain") {
    const double ps = 2.0;
    Rng rng(5);
    std::vector<nn::TrainSample> tr;
    for (int i = 0; i < 24; ++i) {
        auto t = synth::generate_terrain(32, 32, ps, rng.uniform(20, 50), 0.3, 200 + i);
        auto ship = synth::make_ship_patch({rng.uniform(16, 30), rng.uniform(4, 8), 2.0}, ps, i, "s");
        auto c = synth::composite(ship, t, synth::SynthConfig{}, rng);
        tr.push_back({nn::prepare_tile(c.grid), c.label});
    }
    nn::NetConfig cfg{1, 2, 4, 2};
    nn::TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 4;
    tc.learning_rate = 3e-3;
    tc.seed = 1;
    auto model = nn::train_samples(tr, {tr[0]}, cfg, tc).weights;

    auto terrain = flat(32, 32, ps, 40.0f);
    auto ship = synth::make_ship_patch({24, 6, 2}, ps, 77, "x");
    auto comp = synth::composite_at(ship, terrain, 30.0, 8, 6, 0.91 * 40.0);
    InferOptions o;
    o.chunker.chunk_extent = 64.0;
    auto p = infer_cnn(comp.grid, std::nullopt, model, false, o);
    double on = 0, off = 0;
    std::size_t n_on = 0, n_off = 0;
    for (std::size_t i = 0; i < p.prob.size(); ++i) {
        if (comp.label.data[i]) on += p.prob.data[i], ++n_on;
        else off += p.prob.data[i], ++n_off;
    }
    MESSAGE("mean probability on wreck " << on / n_on << ", on terrain " << off / n_off);
    CHECK(on / n_on > off / n_off + 0.3);
}

TEST_CASE("depression: flat grid has no detections") {
    auto r = infer_depression(flat(20, 20, 0.5, 100.0f));
    CHECK(r.regions.empty());
    for (float v : r.map.prob.data) CHECK(v == 0.0f);
    CHECK(r.base == 100.0);
}

TEST_CASE("depression: 0.5 m mound detected, 0.1 m mound rejected") {
    auto g = mound_grid(0.5, 0.5);
    auto r = infer_depression(g);
    REQUIRE(r.regions.size() == 1);
    CHECK(r.regions[0].cells == 100);
    CHECK(r.regions[0].max_depth == doctest::Approx(0.5));
    CHECK(r.regions[0].spill_level == 100.0);
    CHECK(r.base == 99.5);
    CHECK(r.regions[0].contour_levels == std::vector<double>{99.5, 99.7, 99.9});
    for (std::size_t rr = 15; rr < 25; ++rr)
        for (std::size_t c = 12; c < 22; ++c) CHECK(r.map.prob(rr, c) == 1.0f);
    CHECK(r.map.prob(14, 11) == 1.0f);  // buffer ring
    CHECK(r.map.prob(13, 11) == 0.0f);
    CHECK(r.map.prob == depression_oracle(g, DepressionParams{}));

    auto low = infer_depression(mound_grid(0.1, 0.5));
    CHECK(low.regions.empty());
    for (float v : low.map.prob.data) CHECK(v == 0.0f);
}

TEST_CASE("depression: minimum size scales with resolution") {
    // 100 cells at 0.5 m/px is 25 m^2; at 1 m/px the bar is 25 cells.
    auto g = flat(30, 30, 1.0, 50.0f);
    for (std::size_t r = 10; r < 15; ++r)
        for (std::size_t c = 10; c < 15; ++c) g.depth(r, c) = 49.0f;
    CHECK(infer_depression(g).regions.size() == 1);
    g.depth(14, 14) = 50.0f;  // 24 cells
    CHECK(infer_depression(g).regions.empty());
}

TEST_CASE("depression: priority flood matches the minimax oracle on random grids") {
    Rng rng(17);
    for (int t = 0; t < 60; ++t) {
        const std::size_t R = 3 + rng.below(62), C = 3 + rng.below(62);
        auto g = flat(R, C, 0.5, 0.0f);
        for (auto& v : g.depth.data) v = static_cast<float>(std::round(rng.uniform(95.0, 100.0) * 10.0) / 10.0);
        for (auto& v : g.valid.data) v = rng.uniform() < 0.95;
        if (g.valid_count() == 0) continue;
        const auto fill = priority_flood(g);
        const auto oracle = minimax_oracle(g);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.valid.data[i]) REQUIRE(fill.data[i] == oracle.data[i]);
        DepressionParams p;
        p.min_depress = static_cast<double>(rng.below(8));
        CHECK(infer_depression(g, p).map.prob == depression_oracle(g, p));
    }
}

TEST_CASE("depression: shifting the origin changes only georeferencing") {
    auto g = mound_grid(0.6, 0.5);
    auto a = infer_depression(g);
    g.geo.origin_easting += 12345.5;
    g.geo.origin_northing -= 777.0;
    auto b = infer_depression(g);
    CHECK(a.map.prob == b.map.prob);
    CHECK(b.map.geo == g.geo);
}

TEST_CASE("depression: all nodata") {
    auto g = flat(5, 5, 1.0, 10.0f);
    std::fill(g.valid.data.begin(), g.valid.data.end(), 0);
    try {
        infer_depression(g);
        FAIL("expected AllNodata");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllNodata);
    }
}
