#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wreckseg/geogrid.hpp"

namespace wreckseg::metrics {

inline constexpr double kWreckIouTau = 0.2;

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Counts over valid pixels, ship = positive. An empty valid mask means all
// pixels count. Throws ShapeMismatch.
ConfusionCounts confusion(const Mask& pred, const LabelMask& gt, const Mask& valid = {});

struct PerWreck {
    std::string id;
    std::string site;  // groups several images of one wreck
    double iou_ship = 0.0;
    double resolution = 0.0;  // m/px
    double mean_depth = 0.0;  // m
    ConfusionCounts counts;
};

// Builds a per-wreck record; iou_ship follows the report convention.
PerWreck make_per_wreck(std::string id, std::string site, const ConfusionCounts& c, double resolution, double mean_depth);

struct Scores {
    double iou_ship = 0.0;
    double iou_terrain = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<std::string> degenerate;  // metrics whose denominator was 0 (reported as 0)
};

Scores scores(const ConfusionCounts& c);

struct GroupReport;

struct MetricsReport {
    ConfusionCounts counts;
    double iou_ship = 0.0;
    double iou_terrain = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<std::string> degenerate;
    std::optional<double> wreck_count_pct;  // absent without wrecks
    std::vector<PerWreck> per_wreck;
    std::vector<GroupReport> groups;
};

struct GroupReport {
    std::string key;  // "resolution" or "depth"
    double lo = 0.0;
    double hi = 0.0;  // inclusive for the last bucket
    std::size_t wrecks = 0;
    ConfusionCounts counts;
    Scores scores;
    std::optional<double> wreck_count_pct;
};

MetricsReport report(const ConfusionCounts& counts, std::vector<PerWreck> per_wreck, double tau = kWreckIouTau);

// |{iou >= tau}| / N. Throws EmptyList.
double wreck_count_pct(const std::vector<double>& per_wreck_ious, double tau = kWreckIouTau);

struct RuntimeRecord {
    std::string layer_id;
    double runtime_s = 0.0;
    double size_mb = 0.0;
};

// Mean of runtime_s / size_mb. Throws EmptyList, InvalidArgument.
double runtime_per_mb(const std::vector<RuntimeRecord>& records);

enum class GroupKey { Resolution, Depth };
std::string group_key_name(GroupKey k);
GroupKey parse_group_key(const std::string& s);

// Deciles of the observed values, deduplicated; always includes min and max.
std::vector<double> decile_edges(std::vector<double> values);

// Bucketed sub-reports over per-wreck records. Bucket i holds lo <= v < hi,
// the last bucket also takes v == hi. Empty buckets are skipped.
std::vector<GroupReport> group_by(const std::vector<PerWreck>& per_wreck, GroupKey key,
                                  std::optional<std::vector<double>> edges = std::nullopt, double tau = kWreckIouTau);

// Sums counts per site; the site's IoU comes from the pooled counts.
std::vector<PerWreck> aggregate_sites(const std::vector<PerWreck>& per_wreck);

std::string format_table(const MetricsReport& r);
// One JSON object per line: a "summary" record, then "wreck" and "group" records.
std::string format_records(const MetricsReport& r);

}  // namespace wreckseg::metrics
