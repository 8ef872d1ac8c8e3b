// Hole filling for normalized chunks.
//
// 1. Every hole pixel gets a first estimate by onion peeling: rings are filled
//    from the hole boundary inward, each pixel taking the inverse-square-distance
//    weighted mean of already-known pixels within `radius`.
// 2. Pixels within `radius` rings of the boundary are then relaxed with an
//    explicit Navier-Stokes-style update: smoothness (the Laplacian) is
//    transported along isophotes, plus edge-stopping diffusion.
// Every update is clamped to the [min, max] of the hole's boundary values, so
// the result obeys the maximum principle and constant fields are fixed points.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "wreckseg/preprocess.hpp"

namespace wreckseg::prep {

void InpaintConfig::check() const {
    if (radius < 1) fail(ErrorCode::InvalidArgument, "inpaint radius must be >= 1");
    if (!(tolerance > 0.0)) fail(ErrorCode::InvalidArgument, "inpaint tolerance must be > 0");
    if (max_iterations < 0) fail(ErrorCode::InvalidArgument, "max_iterations must be >= 0");
}

namespace {

constexpr double kTimeStep = 0.2;
constexpr double kTransportWeight = 0.5;
constexpr double kEdgeScale = 0.1;  // diffusivity halves at a 0.1 step (normalized units)

constexpr int kDr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

}  // namespace

InpaintStats inpaint_field(Raster<float>& data, Mask& valid, const InpaintConfig& cfg) {
    cfg.check();
    if (!data.same_shape(valid)) fail(ErrorCode::ShapeMismatch, "data and mask shapes differ");
    const auto R = static_cast<std::ptrdiff_t>(data.rows), C = static_cast<std::ptrdiff_t>(data.cols);
    const std::size_t n = data.size();
    InpaintStats stats;

    std::size_t n_valid = 0;
    for (auto v : valid.data) n_valid += v != 0;
    if (n_valid == 0) fail(ErrorCode::AllNodata, "nothing to inpaint from");
    if (n_valid == n) return stats;
    stats.hole_pixels = n - n_valid;

    auto inside = [&](std::ptrdiff_t r, std::ptrdiff_t c) { return r >= 0 && c >= 0 && r < R && c < C; };
    auto idx = [&](std::ptrdiff_t r, std::ptrdiff_t c) { return static_cast<std::size_t>(r * C + c); };

    // Hole labelling (8-connected) and per-hole boundary range.
    std::vector<int> hole(n, -1);
    std::vector<double> lo, hi;
    for (std::size_t s = 0; s < n; ++s) {
        if (valid.data[s] || hole[s] >= 0) continue;
        const int id = static_cast<int>(lo.size());
        lo.push_back(std::numeric_limits<double>::infinity());
        hi.push_back(-std::numeric_limits<double>::infinity());
        std::deque<std::size_t> q{s};
        hole[s] = id;
        while (!q.empty()) {
            const std::size_t p = q.front();
            q.pop_front();
            const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
            for (int k = 0; k < 8; ++k) {
                const auto r = pr + kDr8[k], c = pc + kDc8[k];
                if (!inside(r, c)) continue;
                const std::size_t j = idx(r, c);
                if (valid.data[j]) {
                    lo[id] = std::min(lo[id], static_cast<double>(data.data[j]));
                    hi[id] = std::max(hi[id], static_cast<double>(data.data[j]));
                } else if (hole[j] < 0) {
                    hole[j] = id;
                    q.push_back(j);
                }
            }
        }
    }
    stats.holes = lo.size();

    // Ring index: Chebyshev distance (in pixels) from the known region.
    std::vector<int> ring(n, 0);
    std::vector<std::vector<std::size_t>> rings(1);
    {
        std::deque<std::size_t> q;
        for (std::size_t p = 0; p < n; ++p)
            if (valid.data[p]) q.push_back(p);
        while (!q.empty()) {
            const std::size_t p = q.front();
            q.pop_front();
            const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
            for (int k = 0; k < 8; ++k) {
                const auto r = pr + kDr8[k], c = pc + kDc8[k];
                if (!inside(r, c)) continue;
                const std::size_t j = idx(r, c);
                if (valid.data[j] || ring[j] != 0) continue;
                ring[j] = ring[p] + 1;
                if (rings.size() <= static_cast<std::size_t>(ring[j])) rings.resize(ring[j] + 1);
                rings[ring[j]].push_back(j);
                q.push_back(j);
            }
        }
    }

    std::vector<double> u(n);
    for (std::size_t p = 0; p < n; ++p) u[p] = data.data[p];

    // Onion-peel initial estimate. Only pixels from earlier rings count as known,
    // so the result does not depend on visiting order within a ring.
    const int rad = cfg.radius;
    for (std::size_t k = 1; k < rings.size(); ++k) {
        for (std::size_t p : rings[k]) {
            const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
            double wsum = 0.0, vsum = 0.0;
            for (int dr = -rad; dr <= rad; ++dr) {
                for (int dc = -rad; dc <= rad; ++dc) {
                    const int d2 = dr * dr + dc * dc;
                    if (d2 == 0 || d2 > rad * rad) continue;
                    const auto r = pr + dr, c = pc + dc;
                    if (!inside(r, c)) continue;
                    const std::size_t j = idx(r, c);
                    if (!valid.data[j] && ring[j] >= static_cast<int>(k)) continue;
                    const double w = 1.0 / d2;
                    wsum += w;
                    vsum += w * u[j];
                }
            }
            u[p] = std::clamp(vsum / wsum, lo[hole[p]], hi[hole[p]]);
        }
    }

    // Relaxation band.
    std::vector<std::size_t> band;
    for (std::size_t k = 1; k < rings.size() && k <= static_cast<std::size_t>(rad); ++k)
        band.insert(band.end(), rings[k].begin(), rings[k].end());
    std::sort(band.begin(), band.end());

    std::vector<char> needs_lap(n, 0);
    std::vector<std::size_t> lap_set;
    for (std::size_t p : band) {
        const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
        const std::ptrdiff_t nr[5] = {pr, pr - 1, pr + 1, pr, pr}, nc[5] = {pc, pc, pc, pc - 1, pc + 1};
        for (int k = 0; k < 5; ++k) {
            if (!inside(nr[k], nc[k])) continue;
            const std::size_t j = idx(nr[k], nc[k]);
            if (!needs_lap[j]) {
                needs_lap[j] = 1;
                lap_set.push_back(j);
            }
        }
    }

    // Replicated-border neighbour access.
    auto at = [&](const std::vector<double>& f, std::ptrdiff_t r, std::ptrdiff_t c) {
        return f[idx(std::clamp<std::ptrdiff_t>(r, 0, R - 1), std::clamp<std::ptrdiff_t>(c, 0, C - 1))];
    };
    auto edge_stop = [](double s) { return 1.0 / (1.0 + (s / kEdgeScale) * (s / kEdgeScale)); };

    std::vector<double> lap(n, 0.0), next = u;
    for (int it = 0; it < cfg.max_iterations && !band.empty(); ++it) {
        for (std::size_t p : lap_set) {
            const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
            lap[p] = at(u, pr - 1, pc) + at(u, pr + 1, pc) + at(u, pr, pc - 1) + at(u, pr, pc + 1) - 4.0 * u[p];
        }
        double residual = 0.0;
        for (std::size_t p : band) {
            const auto pr = static_cast<std::ptrdiff_t>(p) / C, pc = static_cast<std::ptrdiff_t>(p) % C;
            const double ux = 0.5 * (at(u, pr, pc + 1) - at(u, pr, pc - 1));
            const double uy = 0.5 * (at(u, pr + 1, pc) - at(u, pr - 1, pc));
            const double lx = 0.5 * (at(lap, pr, pc + 1) - at(lap, pr, pc - 1));
            const double ly = 0.5 * (at(lap, pr + 1, pc) - at(lap, pr - 1, pc));
            const double transport = lx * (-uy) + ly * ux;  // grad(L) . isophote direction
            double diffusion = 0.0;
            for (auto [dr, dc] : {std::pair{-1, 0}, std::pair{1, 0}, std::pair{0, -1}, std::pair{0, 1}}) {
                const double diff = at(u, pr + dr, pc + dc) - u[p];
                diffusion += edge_stop(std::abs(diff)) * diff;
            }
            const double v = std::clamp(u[p] + kTimeStep * (diffusion + kTransportWeight * transport), lo[hole[p]], hi[hole[p]]);
            residual = std::max(residual, std::abs(v - u[p]));
            next[p] = v;
        }
        for (std::size_t p : band) u[p] = next[p];
        stats.iterations = it + 1;
        stats.residual = residual;
        if (residual < cfg.tolerance) break;
    }
    stats.converged = band.empty() || stats.residual < cfg.tolerance;

    for (std::size_t p = 0; p < n; ++p) {
        if (valid.data[p]) continue;
        data.data[p] = static_cast<float>(u[p]);
        valid.data[p] = 1;
    }
    return stats;
}

NormalizedChunk inpaint(const NormalizedChunk& chunk, const InpaintConfig& cfg, InpaintStats* stats) {
    NormalizedChunk out = chunk;
    InpaintStats s = inpaint_field(out.data, out.valid, cfg);
    if (stats) *stats = s;
    return out;
}

}  // namespace wreckseg::prep
