#include <algorithm>
#include <cmath>
#include <optional>

#include "wreckseg/detect.hpp"

namespace wreckseg::detect {

namespace {

constexpr double kFixedScale = 4503599627370496.0;  // 2^52

// Fixed-point sum and count over a growable window of the target extent.
struct Acc {
    std::size_t r0 = 0, c0 = 0, rows = 0, cols = 0;
    std::vector<std::uint64_t> sum;
    std::vector<std::uint32_t> count;

    bool empty() const { return rows == 0; }

    void grow(std::size_t nr0, std::size_t nc0, std::size_t nrows, std::size_t ncols) {
        if (empty()) {
            r0 = nr0, c0 = nc0, rows = nrows, cols = ncols;
            sum.assign(rows * cols, 0);
            count.assign(rows * cols, 0);
            return;
        }
        const std::size_t a0 = std::min(r0, nr0), b0 = std::min(c0, nc0);
        const std::size_t a1 = std::max(r0 + rows, nr0 + nrows), b1 = std::max(c0 + cols, nc0 + ncols);
        if (a0 == r0 && b0 == c0 && a1 == r0 + rows && b1 == c0 + cols) return;
        Acc bigger;
        bigger.grow(a0, b0, a1 - a0, b1 - b0);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t dst = (r + r0 - a0) * bigger.cols + (c0 - b0);
            std::copy_n(sum.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, bigger.sum.begin() + static_cast<std::ptrdiff_t>(dst));
            std::copy_n(count.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, bigger.count.begin() + static_cast<std::ptrdiff_t>(dst));
        }
        *this = std::move(bigger);
    }

    void add(const Piece& p) {
        grow(p.row_off, p.col_off, p.prob.rows, p.prob.cols);
        const bool all = p.valid.size() == 0;
        for (std::size_t r = 0; r < p.prob.rows; ++r) {
            const std::size_t base = (p.row_off + r - r0) * cols + (p.col_off - c0);
            for (std::size_t c = 0; c < p.prob.cols; ++c) {
                if (!all && !p.valid(r, c)) continue;
                const double v = std::clamp(static_cast<double>(p.prob(r, c)), 0.0, 1.0);
                sum[base + c] += static_cast<std::uint64_t>(std::llround(v * kFixedScale));
                count[base + c] += 1;
            }
        }
    }

    void add(const Acc& o) {
        if (o.empty()) return;
        grow(o.r0, o.c0, o.rows, o.cols);
        for (std::size_t r = 0; r < o.rows; ++r) {
            const std::size_t base = (o.r0 + r - r0) * cols + (o.c0 - c0);
            for (std::size_t c = 0; c < o.cols; ++c) {
                sum[base + c] += o.sum[r * o.cols + c];
                count[base + c] += o.count[r * o.cols + c];
            }
        }
    }
};

}  // namespace

struct Merger::Impl {
    std::size_t rows, cols, limit;
    std::vector<Piece> buffer;
    std::vector<std::optional<Acc>> level;  // index k >= 1 used
    std::vector<std::size_t> absorbed;
    std::size_t pieces = 0;
    std::size_t in_flight = 0;
    MergeStats* stats;

    std::size_t live_accs() const {
        std::size_t n = in_flight;
        for (const auto& a : level) n += a.has_value();
        return n;
    }
    void note_live() { stats->max_live_tiles = std::max(stats->max_live_tiles, buffer.size() + live_accs()); }

    void count_partial(std::size_t k) {
        if (stats->partials_per_level.size() <= k) stats->partials_per_level.resize(k + 1, 0);
        ++stats->partials_per_level[k];
    }

    void push(std::size_t k, Acc a) {
        if (level.size() <= k) {
            level.resize(k + 1);
            absorbed.resize(k + 1, 0);
        }
        if (!level[k]) {
            level[k] = std::move(a);
        } else {
            level[k]->add(a);
        }
        in_flight = 0;
        note_live();
        if (++absorbed[k] == limit) {
            Acc out = std::move(*level[k]);
            level[k].reset();
            absorbed[k] = 0;
            count_partial(k);
            in_flight = 1;
            push(k + 1, std::move(out));
        }
    }

    void flush_buffer() {
        if (buffer.empty()) return;
        Acc p;
        in_flight = 1;
        for (const auto& piece : buffer) {
            p.add(piece);
            note_live();
        }
        buffer.clear();
        count_partial(0);
        push(1, std::move(p));
    }
};

Merger::Merger(std::size_t rows, std::size_t cols, std::size_t batch_limit) : impl_(new Impl{rows, cols, batch_limit, {}, {}, {}, 0, 0, &stats_}) {
    if (batch_limit < 2) fail(ErrorCode::InvalidArgument, "batch_limit must be >= 2");
    if (rows == 0 || cols == 0) fail(ErrorCode::InvalidArgument, "merge target is empty");
}

Merger::~Merger() { delete impl_; }

void Merger::add(Piece piece) {
    if (piece.prob.rows == 0 || piece.prob.cols == 0 || piece.row_off + piece.prob.rows > impl_->rows ||
        piece.col_off + piece.prob.cols > impl_->cols)
        fail(ErrorCode::PlacementOutOfBounds, "piece at (" + std::to_string(piece.row_off) + ", " + std::to_string(piece.col_off) +
                                                  ") extends past the target extent");
    if (piece.valid.size() != 0 && !piece.valid.same_shape(piece.prob))
        fail(ErrorCode::InconsistentDimensions, "piece validity mask shape differs");
    impl_->buffer.push_back(std::move(piece));
    ++impl_->pieces;
    impl_->note_live();
    if (impl_->buffer.size() == impl_->limit) impl_->flush_buffer();
}

ProbabilityMap Merger::finish(const GeoTransform& geo) {
    Impl& m = *impl_;
    m.flush_buffer();
    // Fold what is left upward. The highest level that received anything holds
    // the final layer.
    Acc result;
    for (std::size_t k = 1; k < m.level.size(); ++k) {
        if (!m.level[k]) continue;
        const bool top = std::none_of(m.level.begin() + static_cast<std::ptrdiff_t>(k) + 1, m.level.end(),
                                      [](const auto& a) { return a.has_value(); });
        if (top) {
            if (m.absorbed[k] > 1) m.count_partial(k);
            result = std::move(*m.level[k]);
            m.level[k].reset();
            break;
        }
        Acc out = std::move(*m.level[k]);
        m.level[k].reset();
        m.absorbed[k] = 0;
        m.count_partial(k);
        m.in_flight = 1;
        m.push(k + 1, std::move(out));
    }
    if (stats_.partials_per_level.empty()) stats_.partials_per_level.push_back(0);

    ProbabilityMap out;
    out.geo = geo;
    out.prob = Raster<float>(m.rows, m.cols, 0.0f);
    out.valid = Mask(m.rows, m.cols, 0);
    for (std::size_t r = 0; r < result.rows; ++r) {
        for (std::size_t c = 0; c < result.cols; ++c) {
            const std::size_t i = r * result.cols + c;
            if (!result.count[i]) continue;
            const double v = static_cast<double>(result.sum[i]) / kFixedScale / result.count[i];
            out.prob(result.r0 + r, result.c0 + c) = static_cast<float>(v);
            out.valid(result.r0 + r, result.c0 + c) = 1;
        }
    }
    return out;
}

ProbabilityMap merge_chunks(std::vector<Piece> pieces, std::size_t rows, std::size_t cols, const GeoTransform& geo,
                            std::size_t batch_limit, MergeStats* stats) {
    Merger m(rows, cols, batch_limit);
    for (auto& p : pieces) m.add(std::move(p));
    auto out = m.finish(geo);
    if (stats) *stats = m.stats();
    return out;
}

}  // namespace wreckseg::detect
