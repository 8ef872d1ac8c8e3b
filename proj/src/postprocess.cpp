#include "wreckseg/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"

namespace wreckseg::post {

namespace {

void check_connectivity(int connectivity) {
    if (connectivity != 4 && connectivity != 8) fail(ErrorCode::InvalidArgument, "connectivity must be 4 or 8");
}

}  // namespace

Mask threshold(const detect::ProbabilityMap& p, double t) {
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must be in [0, 1]");
    if (!p.valid.same_shape(p.prob)) fail(ErrorCode::InconsistentDimensions, "probability and valid mask differ in shape");
    Mask m(p.rows(), p.cols(), 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data[i] = p.valid.data[i] && static_cast<double>(p.prob.data[i]) >= t;
    return m;
}

std::vector<Component> extract_components(const Mask& mask, int connectivity, const Raster<float>* prob,
                                          double pixel_size) {
    check_connectivity(connectivity);
    if (prob && !prob->same_shape(mask)) fail(ErrorCode::ShapeMismatch, "probability and mask differ in shape");
    const std::size_t R = mask.rows, C = mask.cols;
    Mask seen(R, C, 0);
    std::vector<Component> out;
    std::vector<Pixel> stack;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            if (!mask(r, c) || seen(r, c)) continue;
            Component comp;
            comp.id = out.size();
            comp.bbox_px = {r, c, r, c};
            seen(r, c) = 1;
            stack.assign(1, {r, c});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                comp.pixels.push_back(p);
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!dr && !dc) continue;
                        if (connectivity == 4 && dr && dc) continue;
                        if ((dr < 0 && p.row == 0) || (dc < 0 && p.col == 0)) continue;
                        const std::size_t nr = p.row + dr, nc = p.col + dc;
                        if (nr >= R || nc >= C || !mask(nr, nc) || seen(nr, nc)) continue;
                        seen(nr, nc) = 1;
                        stack.push_back({nr, nc});
                    }
            }
            std::sort(comp.pixels.begin(), comp.pixels.end(),
                      [](const Pixel& a, const Pixel& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
            double sum = 0.0;
            for (const auto& p : comp.pixels) {
                auto& b = comp.bbox_px;
                b.row0 = std::min(b.row0, p.row);
                b.row1 = std::max(b.row1, p.row);
                b.col0 = std::min(b.col0, p.col);
                b.col1 = std::max(b.col1, p.col);
                if (prob) sum += (*prob)(p.row, p.col);
            }
            comp.area_px = comp.pixels.size();
            comp.area_m2 = static_cast<double>(comp.area_px) * pixel_size * pixel_size;
            comp.mean_probability = prob ? sum / static_cast<double>(comp.area_px) : 0.0;
            out.push_back(std::move(comp));
        }
    return out;
}

DetectionSet filter_components(std::vector<Component> components, std::size_t rows, std::size_t cols,
                               const GeoTransform& geo, double min_area, AreaUnit unit) {
    if (!(min_area >= 0.0)) fail(ErrorCode::InvalidArgument, "min_area must be >= 0");
    DetectionSet set;
    set.geo = geo;
    set.mask = Mask(rows, cols, 0);
    for (auto& c : components) {
        const double area = unit == AreaUnit::Pixels ? static_cast<double>(c.area_px) : c.area_m2;
        if (area < min_area) continue;
        for (const auto& p : c.pixels) {
            if (p.row >= rows || p.col >= cols) fail(ErrorCode::ShapeMismatch, "component pixel outside the mask");
            set.mask(p.row, p.col) = 1;
        }
        c.id = set.components.size();
        set.components.push_back(std::move(c));
    }
    return set;
}

void PostParams::check() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must be in [0, 1]");
    if (!(min_area >= 0.0)) fail(ErrorCode::InvalidArgument, "min_area must be >= 0");
    check_connectivity(connectivity);
}

DetectionSet postprocess(const detect::ProbabilityMap& p, const PostParams& params) {
    params.check();
    auto comps = extract_components(threshold(p, params.threshold), params.connectivity, &p.prob, p.geo.pixel_size);
    return filter_components(std::move(comps), p.rows(), p.cols(), p.geo, params.min_area, params.unit);
}

std::string_view mode_name(GeoJsonMode m) { return m == GeoJsonMode::Boxes ? "boxes" : "outlines"; }

std::vector<Ring> trace_outline(const Component& comp, std::size_t rows, std::size_t cols, int connectivity) {
    check_connectivity(connectivity);
    if (comp.pixels.empty()) return {};
    const auto& b = comp.bbox_px;
    if (b.row1 >= rows || b.col1 >= cols) fail(ErrorCode::ShapeMismatch, "component outside the grid");
    const std::size_t h = b.row1 - b.row0 + 1, w = b.col1 - b.col0 + 1;
    Mask in(h, w, 0);
    for (const auto& p : comp.pixels) in(p.row - b.row0, p.col - b.col0) = 1;
    auto filled = [&](long r, long c) {
        return r >= 0 && c >= 0 && r < static_cast<long>(h) && c < static_cast<long>(w) && in(r, c);
    };

    // Boundary cracks, clockwise around each pixel with y pointing down.
    struct Edge {
        std::size_t from, to, owner;
        bool used = false;
    };
    const std::size_t W1 = w + 1;
    auto vid = [&](std::size_t x, std::size_t y) { return y * W1 + x; };
    std::vector<Edge> edges;
    std::vector<std::array<long, 2>> out((h + 1) * W1, {-1, -1});
    auto add = [&](std::size_t from, std::size_t to, std::size_t owner) {
        auto& slot = out[from];
        slot[slot[0] < 0 ? 0 : 1] = static_cast<long>(edges.size());
        edges.push_back({from, to, owner});
    };
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            if (!in(r, c)) continue;
            const long R = static_cast<long>(r), C = static_cast<long>(c);
            const std::size_t own = r * w + c;
            if (!filled(R - 1, C)) add(vid(c, r), vid(c + 1, r), own);
            if (!filled(R, C + 1)) add(vid(c + 1, r), vid(c + 1, r + 1), own);
            if (!filled(R + 1, C)) add(vid(c + 1, r + 1), vid(c, r + 1), own);
            if (!filled(R, C - 1)) add(vid(c, r + 1), vid(c, r), own);
        }

    std::vector<Ring> rings;
    for (std::size_t start = 0; start < edges.size(); ++start) {
        if (edges[start].used) continue;
        std::vector<std::size_t> verts;
        std::size_t e = start;
        while (!edges[e].used) {
            edges[e].used = true;
            verts.push_back(edges[e].from);
            const auto& slot = out[edges[e].to];
            long next = slot[0];
            if (slot[1] >= 0) {
                // Saddle: 8-connectivity crosses to the diagonal pixel, 4 stays.
                const bool first_other = edges[slot[0]].owner != edges[e].owner;
                next = (first_other == (connectivity == 8)) ? slot[0] : slot[1];
                if (edges[next].used) next = slot[0] == next ? slot[1] : slot[0];
            }
            e = static_cast<std::size_t>(next);
        }
        // Drop collinear vertices.
        const std::size_t n = verts.size();
        Ring ring;
        auto xy = [&](std::size_t v) { return std::pair<long, long>(v % W1, v / W1); };
        for (std::size_t i = 0; i < n; ++i) {
            auto [px, py] = xy(verts[(i + n - 1) % n]);
            auto [cx, cy] = xy(verts[i]);
            auto [nx, ny] = xy(verts[(i + 1) % n]);
            if ((cx - px) * (ny - cy) - (cy - py) * (nx - cx) == 0) continue;
            ring.xy.push_back({static_cast<std::size_t>(cx) + b.col0, static_cast<std::size_t>(cy) + b.row0});
        }
        // Clockwise on screen is clockwise in world too; flip to counter-clockwise.
        std::reverse(ring.xy.begin(), ring.xy.end());
        ring.xy.push_back(ring.xy.front());
        rings.push_back(std::move(ring));
    }
    return rings;
}

namespace {

using nlohmann::json;

// Twice the signed area with y pointing down; negative for exterior rings.
long long twice_area(const Ring& r) {
    long long a = 0;
    for (std::size_t i = 0; i + 1 < r.xy.size(); ++i)
        a += static_cast<long long>(r.xy[i].first) * static_cast<long long>(r.xy[i + 1].second) -
             static_cast<long long>(r.xy[i + 1].first) * static_cast<long long>(r.xy[i].second);
    return a;
}

bool contains(const Ring& r, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = r.xy.size() - 2; i + 1 < r.xy.size(); j = i++) {
        const double xi = r.xy[i].first, yi = r.xy[i].second, xj = r.xy[j].first, yj = r.xy[j].second;
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

json world_ring(const Ring& r, const GeoTransform& g) {
    json out = json::array();
    for (const auto& [x, y] : r.xy)
        out.push_back({g.easting_of_col(static_cast<double>(x)), g.northing_of_row(static_cast<double>(y))});
    return out;
}

json box_geometry(const BBox& b, const GeoTransform& g) {
    const double e0 = g.easting_of_col(static_cast<double>(b.col0));
    const double e1 = g.easting_of_col(static_cast<double>(b.col1 + 1));
    const double n0 = g.northing_of_row(static_cast<double>(b.row0));
    const double n1 = g.northing_of_row(static_cast<double>(b.row1 + 1));
    json ring = json::array({{e0, n0}, {e0, n1}, {e1, n1}, {e1, n0}, {e0, n0}});
    return {{"type", "Polygon"}, {"coordinates", json::array({ring})}};
}

json outline_geometry(const Component& c, const DetectionSet& set, int connectivity) {
    auto rings = trace_outline(c, set.mask.rows, set.mask.cols, connectivity);
    std::vector<std::vector<const Ring*>> polys;
    std::vector<const Ring*> holes;
    for (const auto& r : rings) {
        if (twice_area(r) < 0) polys.push_back({&r});
        else holes.push_back(&r);
    }
    for (const Ring* h : holes) {
        // A hole's first corner touches its exterior at most at corners, so test
        // the centre of its first crack instead.
        const double x = 0.5 * (static_cast<double>(h->xy[0].first) + h->xy[1].first);
        const double y = 0.5 * (static_cast<double>(h->xy[0].second) + h->xy[1].second);
        std::size_t k = 0;
        for (std::size_t i = 0; i < polys.size(); ++i)
            if (contains(*polys[i][0], x + 1e-3, y + 1e-3) || contains(*polys[i][0], x - 1e-3, y - 1e-3)) k = i;
        polys[k].push_back(h);
    }
    auto poly_json = [&](const std::vector<const Ring*>& p) {
        json out = json::array();
        for (const Ring* r : p) out.push_back(world_ring(*r, set.geo));
        return out;
    };
    if (polys.size() == 1) return {{"type", "Polygon"}, {"coordinates", poly_json(polys[0])}};
    json multi = json::array();
    for (const auto& p : polys) multi.push_back(poly_json(p));
    return {{"type", "MultiPolygon"}, {"coordinates", multi}};
}

}  // namespace

std::string to_geojson(const DetectionSet& set, GeoJsonMode mode, int connectivity) {
    const auto& g = set.geo;
    if (!std::isfinite(g.origin_easting) || !std::isfinite(g.origin_northing) || !std::isfinite(g.pixel_size) ||
        !(g.pixel_size > 0.0))
        fail(ErrorCode::MissingGeoreference, "detection set has no usable georeferencing");
    json features = json::array();
    for (const auto& c : set.components) {
        json f;
        f["type"] = "Feature";
        f["id"] = c.id;
        f["geometry"] = mode == GeoJsonMode::Boxes ? box_geometry(c.bbox_px, g) : outline_geometry(c, set, connectivity);
        f["properties"] = {
            {"id", c.id},
            {"area_m2", c.area_m2},
            {"area_px", c.area_px},
            {"mean_probability", c.mean_probability},
            {"bbox_px", {c.bbox_px.row0, c.bbox_px.col0, c.bbox_px.row1, c.bbox_px.col1}},
        };
        features.push_back(std::move(f));
    }
    json doc = {{"type", "FeatureCollection"}, {"crs_id", g.crs_id}, {"features", features}};
    return doc.dump() + "\n";
}

}  // namespace wreckseg::post
