#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include <zlib.h>

#include "doctest.h"
#include "json.hpp"
#include "wreckseg/grid_io.hpp"

using namespace wreckseg;
using namespace wreckseg::io;

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

GeoGrid random_grid(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dim(1, 40);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GeoTransform geo;
    geo.origin_easting = 1e6 * u(rng) - 5e5;
    geo.origin_northing = 1e7 * u(rng);
    geo.pixel_size = 0.25 + 10 * u(rng);
    geo.crs_id = static_cast<std::uint32_t>(rng() % 40000);
    GeoGrid g(dim(rng), dim(rng), geo);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.depth.data[i] = static_cast<float>(2000.0 * u(rng) - 20.0);
        g.valid.data[i] = u(rng) < 0.85 ? 1 : 0;
    }
    return g;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("esri ascii: header transcription with one nodata cell") {
    const std::string text =
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n5 5\n5 -9999\n";
    GeoGrid g = read_grid(as_bytes(text), RasterFormat::EsriAscii);
    CHECK(g.rows() == 2);
    CHECK(g.cols() == 2);
    CHECK(g.valid_count() == 3);
    CHECK(g.depth(0, 0) == 5.0f);
    CHECK(g.depth(1, 0) == 5.0f);
    CHECK_FALSE(g.is_valid(1, 1));
    CHECK(g.geo.origin_northing == 2.0);
    CHECK(g.geo.origin_easting == 0.0);
}

TEST_CASE("esri ascii: cell-centre registration and case-insensitive keys") {
    const std::string text = "NCOLS 1\nNROWS 2\nXLLCENTER 10\nYLLCENTER 20\nCELLSIZE 2\n1.5\n2.5\n";
    GeoGrid g = read_esri_ascii(text);
    CHECK(g.geo.origin_easting == 9.0);
    CHECK(g.geo.origin_northing == 23.0);
    CHECK(g.valid_count() == 2);
}

TEST_CASE("esri ascii: writer output") {
    GeoGrid g(1, 1, GeoTransform{100, 200, 2, 0});
    g.depth(0, 0) = 7.25f;
    const std::string text = write_esri_ascii(g);
    CHECK(text.find("7.25") != std::string::npos);

    GeoGrid empty(3, 2, GeoTransform{1, 2, 0.5, 0}, 0.0f, false);
    GeoGrid back = read_esri_ascii(write_esri_ascii(empty));
    CHECK(back.valid_count() == 0);
    CHECK(back.valid == empty.valid);
}

TEST_CASE("esri ascii: nodata sentinel never collides with data") {
    GeoGrid g(1, 2, GeoTransform{0, 2, 1, 0});
    g.depth(0, 0) = -9999.0f;
    g.valid(0, 1) = 0;
    GeoGrid back = read_esri_ascii(write_esri_ascii(g));
    CHECK(back.is_valid(0, 0));
    CHECK(back.depth(0, 0) == -9999.0f);
    CHECK_FALSE(back.is_valid(0, 1));
}

TEST_CASE("esri ascii: malformed inputs") {
    CHECK(code_of([] { read_esri_ascii("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n1 2 3 4\n"); }) ==
          ErrorCode::MalformedHeader);
    CHECK(code_of([] { read_esri_ascii("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n"); }) ==
          ErrorCode::InconsistentDimensions);
    CHECK(code_of([] { read_esri_ascii("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n"); }) ==
          ErrorCode::InconsistentDimensions);
    CHECK(code_of([] { read_esri_ascii("ncols x\n"); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { read_esri_ascii("   \n"); }) == ErrorCode::EmptyInput);
}

TEST_CASE("xyz: one point per cell") {
    const std::string text = "0 0 10\n1 0 12\n0 1 11\n1 1 13\n";
    GeoGrid g = read_grid(as_bytes(text), RasterFormat::XyzPoints);
    REQUIRE(g.rows() == 2);
    REQUIRE(g.cols() == 2);
    CHECK(g.geo.pixel_size == 1.0);
    CHECK(g.valid_count() == 4);
    // row 0 is the northern row (y = 1)
    CHECK(g.depth(0, 0) == 11.0f);
    CHECK(g.depth(0, 1) == 13.0f);
    CHECK(g.depth(1, 0) == 10.0f);
    CHECK(g.depth(1, 1) == 12.0f);
    CHECK(g.geo.origin_easting == -0.5);
    CHECK(g.geo.origin_northing == 1.5);
}

TEST_CASE("xyz: mean aggregation, empty cells, header and comma separators") {
    const std::string text = "x,y,z\n0,0,10\n0,0,20\n2,0,5\n# comment\n2,2,7\n";
    auto b = bin_xyz_points(text);
    CHECK(b.grid.geo.pixel_size == 2.0);
    CHECK(b.grid.rows() == 2);
    CHECK(b.grid.cols() == 2);
    CHECK(b.grid.depth(1, 0) == 15.0f);
    CHECK_FALSE(b.grid.is_valid(0, 0));
    CHECK(b.point_count == 4);
}

TEST_CASE("xyz: binning conserves point count") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        std::uniform_int_distribution<int> ix(0, 12), n(3, 200);
        std::string text;
        const int count = n(rng);
        for (int i = 0; i < count; ++i)
            text += std::to_string(ix(rng) * 0.5 + 1000) + " " + std::to_string(ix(rng) * 0.5) + " " + std::to_string(i) + "\n";
        auto b = bin_xyz_points(text);
        std::size_t sum = 0;
        for (auto c : b.counts.data) sum += c;
        CHECK(sum == static_cast<std::size_t>(count));
        std::size_t nonempty = 0;
        for (auto c : b.counts.data) nonempty += c > 0;
        CHECK(nonempty == b.grid.valid_count());
    }
}

TEST_CASE("xyz: too few points") {
    CHECK(code_of([] { read_xyz_points("0 0 1\n1 1 2\n"); }) == ErrorCode::EmptyInput);
    CHECK(code_of([] { read_xyz_points("0 0 1\n1 1 2\nfoo\n"); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("internal binary: randomized round trip is bit exact") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 100; ++i) {
        GeoGrid g = random_grid(rng);
        GeoGrid back = read_grid(write_grid(g, RasterFormat::InternalBinary), RasterFormat::InternalBinary);
        REQUIRE(back.bit_equal(g));
    }
}

TEST_CASE("internal binary: layout") {
    GeoGrid g(1, 2, GeoTransform{1.5, -2.5, 0.5, 32617});
    g.depth(0, 0) = 1.0f;
    g.valid(0, 1) = 0;
    auto b = write_internal_binary(g);
    REQUIRE(b.size() == 4 + 2 + 4 + 4 + 24 + 4 + 2 * 4 + 2);
    CHECK(std::memcmp(b.data(), "BGRD", 4) == 0);
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 1);  // rows, little endian
    CHECK(b[10] == 2);
    CHECK(b[b.size() - 2] == 1);
    CHECK(b[b.size() - 1] == 0);
}

TEST_CASE("internal binary: truncation and corruption give typed errors") {
    std::mt19937_64 rng(5);
    GeoGrid g = random_grid(rng);
    auto b = write_internal_binary(g);
    for (std::size_t n = 0; n < b.size(); ++n) {
        std::span<const std::uint8_t> s(b.data(), n);
        CHECK_THROWS_AS(read_internal_binary(s), Error);
    }
    for (int trial = 0; trial < 2000; ++trial) {
        auto c = b;
        const std::size_t pos = rng() % c.size();
        c[pos] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        try {
            GeoGrid out = read_internal_binary(c);
            out.check();
        } catch (const Error&) {
        }
    }
}

TEST_CASE("all readers are total on random bytes") {
    std::mt19937_64 rng(99);
    const RasterFormat formats[] = {RasterFormat::InternalBinary, RasterFormat::EsriAscii, RasterFormat::XyzPoints,
                                    RasterFormat::GeoTiffSubset};
    for (int trial = 0; trial < 400; ++trial) {
        Bytes b(rng() % 200);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        if (trial % 4 == 0 && b.size() >= 4) { b[0] = 'I'; b[1] = 'I'; b[2] = 42; b[3] = 0; }
        for (auto f : formats) {
            try {
                (void)read_grid(b, f);
            } catch (const Error&) {
            }
        }
    }
}

TEST_CASE("write_grid rejects read-only formats") {
    GeoGrid g(1, 1, GeoTransform{});
    CHECK(code_of([&] { write_grid(g, RasterFormat::XyzPoints); }) == ErrorCode::UnwritableFormat);
    CHECK(code_of([&] { write_grid(g, RasterFormat::GeoTiffSubset); }) == ErrorCode::UnwritableFormat);
}

TEST_CASE("geotiff: fixtures written by tifffile match field by field") {
    std::ifstream f(std::string(WRECKSEG_TEST_DATA) + "/geotiff_fixtures.json");
    REQUIRE(f.good());
    const auto expected = nlohmann::json::parse(f);
    REQUIRE(expected.size() == 3);
    for (const auto& [name, e] : expected.items()) {
        CAPTURE(name);
        GeoGrid g = read_grid_file(std::string(WRECKSEG_TEST_DATA) + "/" + name);
        CHECK(g.rows() == e["rows"].get<std::size_t>());
        CHECK(g.cols() == e["cols"].get<std::size_t>());
        CHECK(g.geo.origin_easting == e["origin_easting"].get<double>());
        CHECK(g.geo.origin_northing == e["origin_northing"].get<double>());
        CHECK(g.geo.pixel_size == e["pixel_size"].get<double>());
        CHECK(g.geo.crs_id == e["crs_id"].get<std::uint32_t>());
        const auto& depth = e["depth"];
        const auto& valid = e["valid"];
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(g.valid.data[i] == valid[i].get<int>());
            if (valid[i].get<int>()) CHECK(g.depth.data[i] == depth[i].get<float>());
        }
    }
}

TEST_CASE("geotiff: unsupported features") {
    auto code = [](const char* name) {
        return code_of([&] { read_grid_file(std::string(WRECKSEG_TEST_DATA) + "/" + name, RasterFormat::GeoTiffSubset); });
    };
    CHECK(code("deflate.tif") == ErrorCode::UnsupportedTiffFeature);
    CHECK(code("two_band.tif") == ErrorCode::UnsupportedTiffFeature);
    CHECK(code("int16.tif") == ErrorCode::UnsupportedTiffFeature);
}

TEST_CASE("geotiff: truncated fixture never yields a grid") {
    auto b = read_file(std::string(WRECKSEG_TEST_DATA) + "/tiled_be.tif");
    for (std::size_t n = 0; n + 1 < b.size(); n += 7) {
        std::span<const std::uint8_t> s(b.data(), n);
        CHECK_THROWS_AS(read_geotiff(s), Error);
    }
}

TEST_CASE("render_grayscale") {
    GeoGrid g(1, 3, GeoTransform{});
    g.depth(0, 0) = 10.0f;
    g.depth(0, 1) = 15.0f;
    g.valid(0, 2) = 0;
    auto img = render_grayscale(g, 10.0, 20.0);
    CHECK(img.pixels[0] == 0);
    CHECK(img.pixels[1] == 255);
    CHECK(img.pixels[2] == 128);
    CHECK(img.pixels[5] == 0);

    GeoGrid low(2, 2, GeoTransform{}, 10.0f);
    auto black = render_grayscale(low, 10.0, 20.0);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(black.pixels[2 * i] == 0);
        CHECK(black.pixels[2 * i + 1] == 255);
    }
    GeoGrid deep(1, 1, GeoTransform{}, 99.0f);
    CHECK(render_grayscale(deep, 10.0, 20.0).pixels[0] == 255);
    CHECK(code_of([&] { render_grayscale(g, 5.0, 5.0); }) == ErrorCode::DegenerateRange);
}

TEST_CASE("png encoding is lossless") {
    GrayAlphaImage img;
    img.rows = 3;
    img.cols = 4;
    for (int i = 0; i < 24; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 10));
    auto png = encode_png_gray_alpha(img);
    REQUIRE(png.size() > 33);
    CHECK(std::memcmp(png.data(), "\x89PNG\r\n\x1a\n", 8) == 0);
    CHECK(png[25] == 4);  // colour type gray + alpha
    // IDAT follows the 25-byte IHDR chunk
    const std::size_t idat = 8 + 25;
    const std::uint32_t len = (png[idat] << 24) | (png[idat + 1] << 16) | (png[idat + 2] << 8) | png[idat + 3];
    CHECK(std::memcmp(&png[idat + 4], "IDAT", 4) == 0);
    std::vector<std::uint8_t> raw(3 * (1 + 8));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, &png[idat + 8], len) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (int r = 0; r < 3; ++r) {
        CHECK(raw[r * 9] == 0);
        for (int c = 0; c < 8; ++c) CHECK(raw[r * 9 + 1 + c] == img.pixels[r * 8 + c]);
    }
}
