#include "wreckseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"

namespace wreckseg::metrics {

ConfusionCounts confusion(const Mask& pred, const LabelMask& gt, const Mask& valid) {
    if (!pred.same_shape(gt)) fail(ErrorCode::ShapeMismatch, "prediction and label differ in shape");
    const bool all = valid.size() == 0;
    if (!all && !valid.same_shape(gt)) fail(ErrorCode::ShapeMismatch, "valid mask differs in shape");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!all && !valid.data[i]) continue;
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, const char* name, std::vector<std::string>& degenerate) {
    if (den == 0) {
        degenerate.emplace_back(name);
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Scores scores(const ConfusionCounts& c) {
    Scores s;
    s.iou_ship = ratio(c.tp, c.tp + c.fp + c.fn, "iou_ship", s.degenerate);
    s.iou_terrain = ratio(c.tn, c.tn + c.fp + c.fn, "iou_terrain", s.degenerate);
    s.precision = ratio(c.tp, c.tp + c.fp, "precision", s.degenerate);
    s.recall = ratio(c.tp, c.tp + c.fn, "recall", s.degenerate);
    // 2PR / (P + R) in integer form, exact to one rounding.
    s.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1", s.degenerate);
    return s;
}

PerWreck make_per_wreck(std::string id, std::string site, const ConfusionCounts& c, double resolution,
                        double mean_depth) {
    PerWreck w;
    w.id = std::move(id);
    w.site = std::move(site);
    w.counts = c;
    w.iou_ship = scores(c).iou_ship;
    w.resolution = resolution;
    w.mean_depth = mean_depth;
    return w;
}

double wreck_count_pct(const std::vector<double>& ious, double tau) {
    if (ious.empty()) fail(ErrorCode::EmptyList, "no per-wreck IoU values");
    std::size_t hit = 0;
    for (double v : ious) hit += v >= tau;
    return static_cast<double>(hit) / static_cast<double>(ious.size());
}

namespace {

std::optional<double> wreck_pct_of(const std::vector<PerWreck>& w, double tau) {
    if (w.empty()) return std::nullopt;
    std::vector<double> v;
    for (const auto& x : w) v.push_back(x.iou_ship);
    return wreck_count_pct(v, tau);
}

}  // namespace

MetricsReport report(const ConfusionCounts& counts, std::vector<PerWreck> per_wreck, double tau) {
    MetricsReport r;
    r.counts = counts;
    const auto s = scores(counts);
    r.iou_ship = s.iou_ship;
    r.iou_terrain = s.iou_terrain;
    r.f1 = s.f1;
    r.precision = s.precision;
    r.recall = s.recall;
    r.degenerate = s.degenerate;
    r.wreck_count_pct = wreck_pct_of(per_wreck, tau);
    r.per_wreck = std::move(per_wreck);
    return r;
}

double runtime_per_mb(const std::vector<RuntimeRecord>& records) {
    if (records.empty()) fail(ErrorCode::EmptyList, "no runtime records");
    double sum = 0.0;
    for (const auto& r : records) {
        if (!(r.size_mb > 0.0)) fail(ErrorCode::InvalidArgument, "size_mb must be > 0");
        if (!(r.runtime_s >= 0.0)) fail(ErrorCode::InvalidArgument, "runtime_s must be >= 0");
        sum += r.runtime_s / r.size_mb;
    }
    return sum / static_cast<double>(records.size());
}

std::string group_key_name(GroupKey k) { return k == GroupKey::Resolution ? "resolution" : "depth"; }

GroupKey parse_group_key(const std::string& s) {
    if (s == "resolution") return GroupKey::Resolution;
    if (s == "depth") return GroupKey::Depth;
    fail(ErrorCode::InvalidArgument, "group key must be resolution or depth");
}

std::vector<double> decile_edges(std::vector<double> v) {
    if (v.empty()) fail(ErrorCode::EmptyList, "no values to bucket");
    std::sort(v.begin(), v.end());
    std::vector<double> e;
    for (int k = 0; k <= 10; ++k) {
        // Nearest-rank quantile.
        const std::size_t i = static_cast<std::size_t>(std::llround(k / 10.0 * static_cast<double>(v.size() - 1)));
        if (e.empty() || v[i] > e.back()) e.push_back(v[i]);
    }
    if (e.size() == 1) e.push_back(e[0]);
    return e;
}

std::vector<GroupReport> group_by(const std::vector<PerWreck>& per_wreck, GroupKey key,
                                  std::optional<std::vector<double>> edges, double tau) {
    auto value = [&](const PerWreck& w) { return key == GroupKey::Resolution ? w.resolution : w.mean_depth; };
    if (per_wreck.empty()) return {};
    if (!edges) {
        std::vector<double> v;
        for (const auto& w : per_wreck) v.push_back(value(w));
        edges = decile_edges(std::move(v));
    }
    const auto& e = *edges;
    if (e.size() < 2 || !std::is_sorted(e.begin(), e.end()))
        fail(ErrorCode::InvalidArgument, "bucket edges must be at least two sorted values");
    std::vector<GroupReport> out;
    for (std::size_t b = 0; b + 1 < e.size(); ++b) {
        const bool last = b + 2 == e.size();
        std::vector<PerWreck> in;
        ConfusionCounts c;
        for (const auto& w : per_wreck) {
            const double v = value(w);
            if (v >= e[b] && (v < e[b + 1] || (last && v == e[b + 1]))) {
                in.push_back(w);
                c += w.counts;
            }
        }
        if (in.empty()) continue;
        GroupReport g;
        g.key = group_key_name(key);
        g.lo = e[b];
        g.hi = e[b + 1];
        g.wrecks = in.size();
        g.counts = c;
        g.scores = scores(c);
        g.wreck_count_pct = wreck_pct_of(in, tau);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<PerWreck> aggregate_sites(const std::vector<PerWreck>& per_wreck) {
    std::map<std::string, std::vector<const PerWreck*>> by_site;
    std::vector<std::string> order;
    for (const auto& w : per_wreck) {
        auto& v = by_site[w.site];
        if (v.empty()) order.push_back(w.site);
        v.push_back(&w);
    }
    std::vector<PerWreck> out;
    for (const auto& s : order) {
        ConfusionCounts c;
        double res = 0, depth = 0;
        for (const auto* w : by_site[s]) {
            c += w->counts;
            res += w->resolution;
            depth += w->mean_depth;
        }
        const double n = static_cast<double>(by_site[s].size());
        out.push_back(make_per_wreck(s, s, c, res / n, depth / n));
    }
    return out;
}

namespace {

using nlohmann::json;

json counts_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

std::string format_table(const MetricsReport& r) {
    std::string s;
    s += "metric            value\n";
    s += "iou_ship          " + fmt("%.4f", r.iou_ship) + "\n";
    s += "iou_terrain       " + fmt("%.4f", r.iou_terrain) + "\n";
    s += "f1                " + fmt("%.4f", r.f1) + "\n";
    s += "precision         " + fmt("%.4f", r.precision) + "\n";
    s += "recall            " + fmt("%.4f", r.recall) + "\n";
    s += "wreck_count_pct   " + (r.wreck_count_pct ? fmt("%.4f", *r.wreck_count_pct) : std::string("n/a")) + "\n";
    s += "wrecks            " + std::to_string(r.per_wreck.size()) + "\n";
    s += "pixels            " + std::to_string(r.counts.total()) + "\n";
    for (const auto& d : r.degenerate) s += "degenerate        " + d + "\n";
    if (!r.groups.empty()) {
        s += "\ngroup        range                 wrecks  iou_ship  f1      wreck_pct\n";
        for (const auto& g : r.groups) {
            char line[160];
            std::snprintf(line, sizeof line, "%-12s [%8.3f, %8.3f]  %6zu  %.4f    %.4f  %s\n", g.key.c_str(), g.lo, g.hi,
                          g.wrecks, g.scores.iou_ship, g.scores.f1,
                          g.wreck_count_pct ? fmt("%.4f", *g.wreck_count_pct).c_str() : "n/a");
            s += line;
        }
    }
    return s;
}

std::string format_records(const MetricsReport& r) {
    std::string out;
    json summary = {{"record", "summary"},
                    {"iou_ship", r.iou_ship},
                    {"iou_terrain", r.iou_terrain},
                    {"f1", r.f1},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"wreck_count_pct", r.wreck_count_pct ? json(*r.wreck_count_pct) : json(nullptr)},
                    {"degenerate", r.degenerate},
                    {"counts", counts_json(r.counts)}};
    out += summary.dump() + "\n";
    for (const auto& w : r.per_wreck) {
        json j = {{"record", "wreck"},      {"id", w.id},           {"site", w.site},
                  {"iou_ship", w.iou_ship}, {"resolution", w.resolution}, {"mean_depth", w.mean_depth},
                  {"counts", counts_json(w.counts)}};
        out += j.dump() + "\n";
    }
    for (const auto& g : r.groups) {
        json j = {{"record", "group"},
                  {"key", g.key},
                  {"lo", g.lo},
                  {"hi", g.hi},
                  {"wrecks", g.wrecks},
                  {"iou_ship", g.scores.iou_ship},
                  {"iou_terrain", g.scores.iou_terrain},
                  {"f1", g.scores.f1},
                  {"precision", g.scores.precision},
                  {"recall", g.scores.recall},
                  {"wreck_count_pct", g.wreck_count_pct ? json(*g.wreck_count_pct) : json(nullptr)},
                  {"counts", counts_json(g.counts)}};
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace wreckseg::metrics
