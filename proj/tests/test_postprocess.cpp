#include <cmath>
#include <functional>
#include <limits>

#include "doctest.h"
#include "json.hpp"
#include "wreckseg/postprocess.hpp"
#include "wreckseg/rng.hpp"

using namespace wreckseg;
using namespace wreckseg::post;
using nlohmann::json;

namespace {

detect::ProbabilityMap pmap(std::size_t rows, std::size_t cols, std::vector<float> v, double ps = 1.0) {
    detect::ProbabilityMap p;
    p.geo = GeoTransform{1000.0, 5000.0, ps, 32619};
    p.prob = Raster<float>(rows, cols);
    p.prob.data = std::move(v);
    p.valid = Mask(rows, cols, 1);
    return p;
}

Mask random_mask(Rng& rng, std::size_t r, std::size_t c, double density) {
    Mask m(r, c, 0);
    for (auto& v : m.data) v = rng.uniform() < density;
    return m;
}

// Recursive flood fill labelling: label ids in order of first scan hit.
Raster<int> oracle_labels(const Mask& m, int connectivity) {
    Raster<int> lab(m.rows, m.cols, -1);
    std::function<void(long, long, int)> fill = [&](long r, long c, int id) {
        if (r < 0 || c < 0 || r >= static_cast<long>(m.rows) || c >= static_cast<long>(m.cols)) return;
        if (!m(r, c) || lab(r, c) >= 0) return;
        lab(r, c) = id;
        for (long dr = -1; dr <= 1; ++dr)
            for (long dc = -1; dc <= 1; ++dc)
                if ((dr || dc) && (connectivity == 8 || !(dr && dc))) fill(r + dr, c + dc, id);
    };
    int next = 0;
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            if (m(r, c) && lab(r, c) < 0) fill(r, c, next++);
    return lab;
}

double world_ring_area(const json& ring) {
    double a = 0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
        a += ring[i][0].get<double>() * ring[i + 1][1].get<double>() - ring[i + 1][0].get<double>() * ring[i][1].get<double>();
    return a / 2;
}

}  // namespace

TEST_CASE("threshold: boundary conventions") {
    auto p = pmap(1, 3, {0.3f, 0.5f, 0.7f});
    CHECK(threshold(p, 0.5).data == std::vector<std::uint8_t>{0, 1, 1});
    p.valid(0, 2) = 0;
    CHECK(threshold(p, 0.0).data == p.valid.data);
    CHECK(threshold(p, 0.5).data == std::vector<std::uint8_t>{0, 1, 0});
    auto q = pmap(1, 3, {1.0f, 0.9999999f, 0.0f});
    CHECK(threshold(q, 1.0).data == std::vector<std::uint8_t>{1, 0, 0});
    CHECK_THROWS_AS(threshold(q, 1.5), Error);
    CHECK_THROWS_AS(threshold(q, -0.1), Error);
}

TEST_CASE("threshold: raising t shrinks the mask") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        std::vector<float> v(64);
        for (auto& x : v) x = static_cast<float>(std::round(rng.uniform() * 20) / 20);
        auto p = pmap(8, 8, v);
        const double t1 = rng.uniform(), t2 = rng.uniform(t1, 1.0);
        auto a = threshold(p, t1), b = threshold(p, t2);
        for (std::size_t i = 0; i < 64; ++i) CHECK(b.data[i] <= a.data[i]);
    }
}

TEST_CASE("components: diagonal pixels join under 8 and split under 4") {
    Mask m(2, 2, 0);
    m(0, 0) = m(1, 1) = 1;
    CHECK(extract_components(m, 8).size() == 1);
    auto four = extract_components(m, 4);
    REQUIRE(four.size() == 2);
    CHECK(four[0].pixels == std::vector<Pixel>{{0, 0}});
    CHECK(four[1].pixels == std::vector<Pixel>{{1, 1}});
    CHECK_THROWS_AS(extract_components(m, 6), Error);
}

TEST_CASE("components: random 16x16 masks match the flood-fill oracle and partition the mask") {
    Rng rng(7);
    for (int t = 0; t < 300; ++t) {
        const int conn = t % 2 ? 4 : 8;
        auto m = random_mask(rng, 16, 16, rng.uniform(0.1, 0.7));
        auto comps = extract_components(m, conn);
        auto lab = oracle_labels(m, conn);
        Raster<int> mine(16, 16, -1);
        Mask un(16, 16, 0);
        for (const auto& c : comps) {
            CHECK(c.area_px == c.pixels.size());
            BBox b{99, 99, 0, 0};
            for (const auto& p : c.pixels) {
                CHECK(mine(p.row, p.col) == -1);
                mine(p.row, p.col) = static_cast<int>(c.id);
                un(p.row, p.col) = 1;
                b = {std::min(b.row0, p.row), std::min(b.col0, p.col), std::max(b.row1, p.row), std::max(b.col1, p.col)};
            }
            CHECK(c.bbox_px == b);
        }
        CHECK(mine == lab);
        CHECK(un == m);
    }
}

TEST_CASE("filter: area rules") {
    Mask m(20, 20, 0);
    m(0, 0) = m(0, 1) = m(0, 2) = 1;
    auto three = extract_components(m, 8, nullptr, 1.0);
    CHECK(filter_components(three, 20, 20, {}, 5.0).components.empty());
    CHECK(filter_components(three, 20, 20, {}, 0.0).mask == m);
    CHECK(filter_components(three, 20, 20, {}, 3.0, AreaUnit::Pixels).components.size() == 1);

    Mask sq(20, 20, 0);
    for (std::size_t r = 5; r < 15; ++r)
        for (std::size_t c = 5; c < 15; ++c) sq(r, c) = 1;
    auto hundred = extract_components(sq, 8, nullptr, 0.5);
    CHECK(hundred[0].area_m2 == 25.0);
    CHECK(filter_components(hundred, 20, 20, {}, 25.0).components.size() == 1);
    CHECK(filter_components(hundred, 20, 20, {}, 25.0001).components.empty());
}

TEST_CASE("postprocess: renumbered ids and mean probability") {
    auto p = pmap(3, 5, {0.9f, 0.7f, 0, 0, 0.6f,  //
                         0, 0, 0, 0, 0,          //
                         0.8f, 0, 0, 0.6f, 0.6f});
    PostParams pp;
    pp.min_area = 2.0;
    auto set = postprocess(p, pp);
    REQUIRE(set.components.size() == 2);
    CHECK(set.components[0].mean_probability == doctest::Approx(0.8));
    CHECK(set.components[1].id == 1);
    CHECK(set.components[1].bbox_px == BBox{2, 3, 2, 4});
    CHECK(set.mask(0, 4) == 0);
}

TEST_CASE("geojson: box corners in world coordinates") {
    DetectionSet set;
    set.geo = GeoTransform{1000.0, 5000.0, 2.0, 32630};
    set.mask = Mask(4, 4, 0);
    set.mask(0, 0) = set.mask(1, 1) = 1;
    set.components = extract_components(set.mask, 8, nullptr, 2.0);
    auto doc = json::parse(to_geojson(set, GeoJsonMode::Boxes));
    CHECK(doc["type"] == "FeatureCollection");
    CHECK(doc["crs_id"] == 32630);
    REQUIRE(doc["features"].size() == 1);
    const auto& f = doc["features"][0];
    CHECK(f["properties"]["area_m2"] == 8.0);
    CHECK(f["properties"]["id"] == 0);
    const auto ring = f["geometry"]["coordinates"][0];
    CHECK(ring == json::parse("[[1000,5000],[1000,4996],[1004,4996],[1004,5000],[1000,5000]]"));
    CHECK(world_ring_area(ring) > 0);
}

TEST_CASE("geojson: empty set and missing georeferencing") {
    DetectionSet set;
    set.mask = Mask(3, 3, 0);
    auto doc = json::parse(to_geojson(set, GeoJsonMode::Outlines));
    CHECK(doc["features"].empty());
    set.geo.pixel_size = 0.0;
    try {
        to_geojson(set, GeoJsonMode::Boxes);
        FAIL("expected MissingGeoreference");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingGeoreference);
    }
    set.geo.pixel_size = 1.0;
    set.geo.origin_easting = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(to_geojson(set, GeoJsonMode::Boxes), Error);
}

TEST_CASE("outline: single pixel is a four-vertex closed ring") {
    DetectionSet set;
    set.geo = GeoTransform{10.0, 20.0, 1.0, 0};
    set.mask = Mask(3, 3, 0);
    set.mask(1, 1) = 1;
    set.components = extract_components(set.mask);
    auto doc = json::parse(to_geojson(set, GeoJsonMode::Outlines));
    const auto& g = doc["features"][0]["geometry"];
    CHECK(g["type"] == "Polygon");
    REQUIRE(g["coordinates"].size() == 1);
    const auto& ring = g["coordinates"][0];
    CHECK(ring.size() == 5);
    CHECK(ring.front() == ring.back());
    CHECK(world_ring_area(ring) == 1.0);
}

TEST_CASE("outline: annulus has a hole, diagonal pair is one ring under 8") {
    Mask m(5, 5, 0);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 5; ++c) m(r, c) = r == 0 || c == 0 || r == 4 || c == 4;
    auto rings = trace_outline(extract_components(m)[0], 5, 5);
    REQUIRE(rings.size() == 2);
    CHECK(rings[0].xy.size() == 5);
    CHECK(rings[1].xy.size() == 5);

    Mask d(2, 2, 0);
    d(0, 0) = d(1, 1) = 1;
    auto one = trace_outline(extract_components(d, 8)[0], 2, 2, 8);
    REQUIRE(one.size() == 1);
    CHECK(one[0].xy.size() == 9);
}

TEST_CASE("outline: random masks give one exterior per component and exact areas") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const int conn = t % 2 ? 4 : 8;
        DetectionSet set;
        set.geo = GeoTransform{500.0, 900.0, 0.5, 1};
        set.mask = random_mask(rng, 12, 12, rng.uniform(0.2, 0.8));
        set.components = extract_components(set.mask, conn, nullptr, 0.5);
        auto doc = json::parse(to_geojson(set, GeoJsonMode::Outlines, conn));
        REQUIRE(doc["features"].size() == set.components.size());
        for (std::size_t i = 0; i < set.components.size(); ++i) {
            const auto& g = doc["features"][i]["geometry"];
            CHECK(g["type"] == "Polygon");
            double area = 0;
            for (std::size_t k = 0; k < g["coordinates"].size(); ++k) {
                const double a = world_ring_area(g["coordinates"][k]);
                CHECK((k == 0 ? a > 0 : a < 0));
                area += a;
            }
            CHECK(area == doctest::Approx(set.components[i].area_m2));
        }
    }
}

TEST_CASE("geojson: boxes round-trip to supersets of component pixels") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        DetectionSet set;
        set.geo = GeoTransform{rng.uniform(-1e5, 1e5), rng.uniform(1e6, 2e6), 0.25 * (1 + rng.below(8)), 4326};
        set.mask = random_mask(rng, 20, 24, 0.3);
        set.components = extract_components(set.mask, 8, nullptr, set.geo.pixel_size);
        auto doc = json::parse(to_geojson(set, GeoJsonMode::Boxes));
        for (std::size_t i = 0; i < set.components.size(); ++i) {
            const auto& ring = doc["features"][i]["geometry"]["coordinates"][0];
            double e0 = 1e300, e1 = -1e300, n0 = -1e300, n1 = 1e300;
            for (const auto& v : ring) {
                e0 = std::min(e0, v[0].get<double>());
                e1 = std::max(e1, v[0].get<double>());
                n0 = std::max(n0, v[1].get<double>());
                n1 = std::min(n1, v[1].get<double>());
            }
            const auto ps = set.geo.pixel_size;
            const long c0 = std::lround((e0 - set.geo.origin_easting) / ps), c1 = std::lround((e1 - set.geo.origin_easting) / ps);
            const long r0 = std::lround((set.geo.origin_northing - n0) / ps), r1 = std::lround((set.geo.origin_northing - n1) / ps);
            for (const auto& p : set.components[i].pixels) {
                CHECK(static_cast<long>(p.row) >= r0);
                CHECK(static_cast<long>(p.row) < r1);
                CHECK(static_cast<long>(p.col) >= c0);
                CHECK(static_cast<long>(p.col) < c1);
            }
        }
    }
}
