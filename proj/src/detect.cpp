#include "wreckseg/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <thread>

namespace wreckseg::detect {

namespace {

Piece infer_chunk(const prep::Chunk& ch, const nn::NetConfig& cfg, const std::vector<std::vector<float>>& params,
                  const prep::InpaintConfig& ic) {
    Piece piece;
    piece.row_off = ch.row_off;
    piece.col_off = ch.col_off;
    const std::size_t rr = ch.real_rows(), rc = ch.real_cols();
    piece.prob = Raster<float>(rr, rc, 0.0f);
    piece.valid = Mask(rr, rc, 0);
    bool any = false;
    for (std::size_t r = 0; r < rr; ++r)
        for (std::size_t c = 0; c < rc; ++c) {
            piece.valid(r, c) = ch.valid(r, c);
            any = any || ch.valid(r, c);
        }
    if (!any) return piece;
    const nn::TileInput tile = nn::prepare_tile(prep::normalize_chunk(ch), ic);
    nn::Tensor4 x(1, static_cast<std::size_t>(cfg.in_channels), ch.size(), ch.size());
    nn::fill_input(tile, cfg.in_channels, x, 0);
    const auto prob = nn::ship_probability(nn::forward_t(cfg, params, x));
    for (std::size_t r = 0; r < rr; ++r)
        for (std::size_t c = 0; c < rc; ++c) piece.prob(r, c) = prob[0](r, c);
    return piece;
}

}  // namespace

ProbabilityMap infer_cnn(const GeoGrid& grid, const std::optional<PixelRect>& extent, const nn::ModelWeights& weights,
                         bool use_hillshade, const InferOptions& opt) {
    grid.check();
    const int want = use_hillshade ? 2 : 1;
    if (weights.config.in_channels != want)
        fail(ErrorCode::WeightsChannelMismatch, "weights expect " + std::to_string(weights.config.in_channels) +
                                                    " input channel(s), backend provides " + std::to_string(want));
    GeoGrid g;
    if (extent) {
        const auto& e = *extent;
        if (e.rows == 0 || e.cols == 0 || e.row0 + e.rows > grid.rows() || e.col0 + e.cols > grid.cols())
            fail(ErrorCode::InvalidArgument, "extent lies outside the grid");
        g = crop(grid, e.row0, e.col0, e.rows, e.cols);
    } else {
        g = grid;
    }
    if (g.valid_count() == 0) fail(ErrorCode::AllNodata, "no valid pixels in the extent");
    const prep::ChunkLayout layout = prep::plan_chunks(g.rows(), g.cols(), g.geo.pixel_size, opt.chunker);
    const auto params = nn::params_of(weights);
    Merger merger(g.rows(), g.cols(), opt.batch_limit);
    const std::size_t total = layout.count();
    const std::size_t jobs = static_cast<std::size_t>(std::max(1, opt.jobs));

    // Chunks are computed in waves of `jobs` and merged in placement order.
    std::vector<Piece> wave(jobs);
    for (std::size_t start = 0; start < total; start += jobs) {
        const std::size_t n = std::min(jobs, total - start);
        auto work = [&](std::size_t k) {
            const std::size_t idx = start + k;
            const prep::Chunk ch = prep::cut_chunk(g, layout, idx / layout.chunk_cols, idx % layout.chunk_cols, opt.chunker.edge_policy);
            wave[k] = infer_chunk(ch, weights.config, params, opt.inpaint);
        };
        if (n == 1) {
            work(0);
        } else {
            std::vector<std::thread> threads;
            std::vector<std::exception_ptr> errors(n);
            for (std::size_t k = 0; k < n; ++k)
                threads.emplace_back([&, k] {
                    try {
                        work(k);
                    } catch (...) {
                        errors[k] = std::current_exception();
                    }
                });
            for (auto& t : threads) t.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        for (std::size_t k = 0; k < n; ++k) {
            merger.add(std::move(wave[k]));
            if (opt.progress) opt.progress(start + k + 1, total);
        }
    }
    ProbabilityMap out = merger.finish(g.geo);
    if (opt.stats) *opt.stats = merger.stats();
    for (std::size_t i = 0; i < out.prob.size(); ++i) {
        if (!g.valid.data[i]) {
            out.valid.data[i] = 0;
            out.prob.data[i] = 0.0f;
        }
    }
    return out;
}

void DepressionParams::check() const {
    if (!(interval > 0.0)) fail(ErrorCode::InvalidArgument, "interval must be > 0");
    if (!(min_depth >= 0.0)) fail(ErrorCode::InvalidArgument, "min_depth must be >= 0");
    if (!(min_depress >= 0.0)) fail(ErrorCode::InvalidArgument, "min_depress must be >= 0");
    if (buffer < 0) fail(ErrorCode::InvalidArgument, "buffer must be >= 0");
}

namespace {

constexpr int kDr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

}  // namespace

Raster<double> priority_flood(const GeoGrid& grid) {
    const std::size_t R = grid.rows(), C = grid.cols();
    Raster<double> filled(R, C, 0.0);
    Mask done(R, C, 0);
    using Item = std::tuple<double, std::uint64_t, std::size_t>;  // level, insertion order, index
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    std::uint64_t order = 0;
    auto drains = [&](std::size_t r, std::size_t c) {
        if (r == 0 || c == 0 || r + 1 == R || c + 1 == C) return true;
        for (int k = 0; k < 8; ++k)
            if (!grid.is_valid(r + kDr[k], c + kDc[k])) return true;
        return false;
    };
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            if (!grid.is_valid(r, c) || !drains(r, c)) continue;
            filled(r, c) = grid.depth(r, c);
            done(r, c) = 1;
            pq.emplace(filled(r, c), order++, r * C + c);
        }
    }
    while (!pq.empty()) {
        const auto [level, ord, idx] = pq.top();
        (void)ord;
        pq.pop();
        const std::size_t r = idx / C, c = idx % C;
        for (int k = 0; k < 8; ++k) {
            const long nr = static_cast<long>(r) + kDr[k], nc = static_cast<long>(c) + kDc[k];
            if (nr < 0 || nc < 0 || nr >= static_cast<long>(R) || nc >= static_cast<long>(C)) continue;
            const auto ur = static_cast<std::size_t>(nr), uc = static_cast<std::size_t>(nc);
            if (done(ur, uc) || !grid.is_valid(ur, uc)) continue;
            done(ur, uc) = 1;
            filled(ur, uc) = std::max(static_cast<double>(grid.depth(ur, uc)), level);
            pq.emplace(filled(ur, uc), order++, ur * C + uc);
        }
    }
    return filled;
}

DepressionResult infer_depression(const GeoGrid& grid, const DepressionParams& p) {
    grid.check();
    p.check();
    const DepthRange st = depth_stats(grid);
    if (st.count == 0) fail(ErrorCode::AllNodata, "grid has no valid pixels");
    const std::size_t R = grid.rows(), C = grid.cols();
    const Raster<double> filled = priority_flood(grid);
    Raster<double> dep(R, C, 0.0);
    for (std::size_t i = 0; i < dep.size(); ++i)
        if (grid.valid.data[i]) dep.data[i] = filled.data[i] - grid.depth.data[i];

    DepressionResult res;
    res.base = p.base ? *p.base : std::round(st.min * 10.0) / 10.0;
    const double ps = grid.geo.pixel_size;
    const double need = p.min_depress * (0.5 / ps) * (0.5 / ps);

    Mask seen(R, C, 0), keep(R, C, 0);
    std::vector<std::size_t> stack, cells;
    for (std::size_t start = 0; start < dep.size(); ++start) {
        if (seen.data[start] || !(dep.data[start] > 0.0)) continue;
        cells.clear();
        stack.assign(1, start);
        seen.data[start] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            cells.push_back(i);
            const std::size_t r = i / C, c = i % C;
            for (int k = 0; k < 8; ++k) {
                const long nr = static_cast<long>(r) + kDr[k], nc = static_cast<long>(c) + kDc[k];
                if (nr < 0 || nc < 0 || nr >= static_cast<long>(R) || nc >= static_cast<long>(C)) continue;
                const std::size_t j = static_cast<std::size_t>(nr) * C + static_cast<std::size_t>(nc);
                if (seen.data[j] || !(dep.data[j] > 0.0)) continue;
                seen.data[j] = 1;
                stack.push_back(j);
            }
        }
        double maxd = 0.0, spill = -std::numeric_limits<double>::infinity(), zmin = std::numeric_limits<double>::infinity();
        std::size_t r0 = R, c0 = C, r1 = 0, c1 = 0;
        for (std::size_t i : cells) {
            maxd = std::max(maxd, dep.data[i]);
            spill = std::max(spill, filled.data[i]);
            zmin = std::min(zmin, static_cast<double>(grid.depth.data[i]));
            r0 = std::min(r0, i / C), r1 = std::max(r1, i / C);
            c0 = std::min(c0, i % C), c1 = std::max(c1, i % C);
        }
        if (maxd < p.min_depth || static_cast<double>(cells.size()) < need) continue;
        for (std::size_t i : cells) keep.data[i] = 1;
        DepressionRegion reg;
        reg.id = res.regions.size();
        reg.cells = cells.size();
        reg.max_depth = maxd;
        reg.spill_level = spill;
        reg.bbox = PixelRect{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
        const double k0 = std::ceil((zmin - res.base) / p.interval - 1e-9);
        const double k1 = std::floor((spill - res.base) / p.interval + 1e-9);
        for (double k = k0; k <= k1 && reg.contour_levels.size() < 10000; k += 1.0) reg.contour_levels.push_back(res.base + k * p.interval);
        res.regions.push_back(std::move(reg));
    }

    res.map.geo = grid.geo;
    res.map.valid = grid.valid;
    res.map.prob = Raster<float>(R, C, 0.0f);
    const long b = p.buffer;
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            if (!keep(r, c)) continue;
            for (long dr = -b; dr <= b; ++dr)
                for (long dc = -b; dc <= b; ++dc) {
                    const long nr = static_cast<long>(r) + dr, nc = static_cast<long>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<long>(R) || nc >= static_cast<long>(C)) continue;
                    if (grid.is_valid(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc)))
                        res.map.prob(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc)) = 1.0f;
                }
        }
    }
    return res;
}

}  // namespace wreckseg::detect
