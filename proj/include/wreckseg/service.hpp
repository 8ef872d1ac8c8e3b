#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wreckseg/grid_io.hpp"
#include "wreckseg/metrics.hpp"
#include "wreckseg/pipeline.hpp"

namespace httplib {
class Server;
}

namespace wreckseg::service {

inline constexpr std::size_t kQueueDepth = 16;

// Failure with an HTTP status and a stable code string.
struct HttpError : std::runtime_error {
    int status;
    std::string code;
    HttpError(int s, std::string c, const std::string& msg) : std::runtime_error(msg), status(s), code(std::move(c)) {}
};

struct ServiceConfig {
    std::filesystem::path store_dir;    // rasters/ and jobs/ live here
    std::filesystem::path weights_dir;  // *.swnn files, id = file stem
    prep::ChunkerConfig chunker;
    detect::DepressionParams depression;
    int jobs = 1;               // worker threads inside one inference
    bool start_paused = false;  // jobs queue up until resume()
};

struct RasterMeta {
    std::string id;  // SHA-256 of the canonical InternalBinary encoding
    std::size_t rows = 0;
    std::size_t cols = 0;
    double resolution = 0.0;
    double depth_min = 0.0;
    double depth_max = 0.0;
    std::array<double, 4> bounds{};  // min easting, min northing, max easting, max northing
    std::uint32_t crs_id = 0;
};

struct JobSpec {
    std::string raster_id;
    std::optional<std::array<double, 4>> extent;  // world rectangle, same order as bounds
    pipeline::Backend backend = pipeline::Backend::Cnn;
    std::string weights_id;
    double threshold = post::kDefaultThreshold;
    double min_area_m2 = post::kDefaultMinAreaM2;
};

enum class JobState { Queued, Running, Done, Failed };
std::string_view state_name(JobState s);

struct JobStatus {
    std::string id;
    JobState state = JobState::Queued;
    double progress = 0.0;
    std::optional<std::string> error;
    metrics::RuntimeRecord timings;
};

struct WeightsInfo {
    std::string id;
    nn::NetConfig config;
};

inline constexpr std::array<std::string_view, 5> kArtifacts = {"probability", "mask", "boxes", "outlines", "preview"};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// Raster registry plus a single-flight FIFO job runner, persisted under
// store_dir. Jobs left queued or running by an earlier process are marked
// failed on startup.
class Service {
public:
    explicit Service(ServiceConfig cfg);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Throws HttpError 400 with the grid-io code on parse failure.
    RasterMeta register_raster(std::span<const std::uint8_t> bytes, io::RasterFormat format);
    std::vector<RasterMeta> rasters() const;
    RasterMeta raster(const std::string& id) const;  // 404
    io::Bytes raster_preview(const std::string& id) const;

    // 400 invalid spec, 404 unknown raster or weights, 409 queue full.
    std::string create_job(const JobSpec& spec);
    JobStatus job(const std::string& id) const;                                // 404
    io::Bytes artifact(const std::string& id, const std::string& name) const;  // 404, 409
    std::vector<WeightsInfo> weights() const;

    void pause();
    void resume();
    // Blocks until nothing is queued or running.
    void wait_idle();

    // Registers the /api routes.
    void mount(httplib::Server& server);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace wreckseg::service
