#include "wreckseg/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace wreckseg::service {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorCode::Io, "SHA-256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string_view state_name(JobState s) {
    switch (s) {
        case JobState::Queued: return "queued";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "?";
}

namespace {

JobState parse_state(const std::string& s) {
    if (s == "queued") return JobState::Queued;
    if (s == "running") return JobState::Running;
    if (s == "done") return JobState::Done;
    return JobState::Failed;
}

[[noreturn]] void http_fail(int status, std::string code, const std::string& msg) { throw HttpError(status, std::move(code), msg); }

RasterMeta describe(const std::string& id, const GeoGrid& g) {
    RasterMeta m;
    m.id = id;
    m.rows = g.rows();
    m.cols = g.cols();
    m.resolution = g.geo.pixel_size;
    const auto st = depth_stats(g);
    m.depth_min = st.min;
    m.depth_max = st.max;
    m.bounds = {g.geo.origin_easting, g.geo.northing_of_row(static_cast<double>(g.rows())),
                g.geo.easting_of_col(static_cast<double>(g.cols())), g.geo.origin_northing};
    m.crs_id = g.geo.crs_id;
    return m;
}

json meta_json(const RasterMeta& m) {
    return {{"id", m.id},
            {"dims", {m.rows, m.cols}},
            {"resolution", m.resolution},
            {"depth_range", {m.depth_min, m.depth_max}},
            {"bounds", m.bounds},
            {"crs_id", m.crs_id}};
}

json spec_json(const JobSpec& s) {
    return {{"raster_id", s.raster_id},
            {"extent", s.extent ? json(*s.extent) : json(nullptr)},
            {"backend", pipeline::backend_name(s.backend)},
            {"weights_id", s.weights_id},
            {"threshold", s.threshold},
            {"min_area_m2", s.min_area_m2}};
}

json status_json(const JobStatus& s) {
    return {{"id", s.id},
            {"state", state_name(s.state)},
            {"progress", s.progress},
            {"error", s.error ? json(*s.error) : json(nullptr)},
            {"timings", {{"layer_id", s.timings.layer_id}, {"runtime_s", s.timings.runtime_s}, {"size_mb", s.timings.size_mb}}}};
}

JobStatus parse_status(const json& j) {
    JobStatus s;
    s.id = j.at("id").get<std::string>();
    s.state = parse_state(j.at("state").get<std::string>());
    s.progress = j.at("progress").get<double>();
    if (j.contains("error") && j["error"].is_string()) s.error = j["error"].get<std::string>();
    const auto& t = j.at("timings");
    s.timings = {t.at("layer_id").get<std::string>(), t.at("runtime_s").get<double>(), t.at("size_mb").get<double>()};
    return s;
}

JobSpec parse_spec(const json& j) {
    if (!j.is_object()) http_fail(400, "InvalidArgument", "job spec must be a JSON object");
    JobSpec s;
    try {
        s.raster_id = j.at("raster_id").get<std::string>();
        if (j.contains("extent") && !j["extent"].is_null()) {
            const auto& e = j["extent"];
            if (!e.is_array() || e.size() != 4) http_fail(400, "InvalidArgument", "extent must be [min_e, min_n, max_e, max_n]");
            s.extent = std::array<double, 4>{e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()};
        }
        if (j.contains("backend")) s.backend = pipeline::parse_backend(j["backend"].get<std::string>());
        if (j.contains("weights_id") && !j["weights_id"].is_null()) s.weights_id = j["weights_id"].get<std::string>();
        if (j.contains("threshold")) s.threshold = j["threshold"].get<double>();
        if (j.contains("min_area_m2")) s.min_area_m2 = j["min_area_m2"].get<double>();
    } catch (const json::exception& e) {
        http_fail(400, "InvalidArgument", std::string("bad job spec: ") + e.what());
    }
    return s;
}

// Hillshade in gray with an optional half-opacity red overlay; nodata is transparent.
io::Bytes render_preview(const GeoGrid& g, const Mask* overlay) {
    const auto st = depth_stats(g);
    Raster<float> d = g.depth;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!g.valid.data[i]) d.data[i] = static_cast<float>(st.mean);
    const auto hs = prep::hillshade(d, g.geo.pixel_size);
    std::vector<std::uint8_t> rgba(g.size() * 4);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = std::clamp(static_cast<double>(hs.data[i]), 0.0, 255.0);
        double r = v, gr = v, b = v;
        if (overlay && overlay->data[i]) r = 0.5 * v + 127.5, gr = 0.5 * v, b = 0.5 * v;
        rgba[4 * i] = static_cast<std::uint8_t>(std::lround(r));
        rgba[4 * i + 1] = static_cast<std::uint8_t>(std::lround(gr));
        rgba[4 * i + 2] = static_cast<std::uint8_t>(std::lround(b));
        rgba[4 * i + 3] = g.valid.data[i] ? 255 : 0;
    }
    return io::encode_png_rgba(g.rows(), g.cols(), rgba);
}

bool safe_id(const std::string& s) {
    static const std::regex re("[A-Za-z0-9._-]+");
    return !s.empty() && s.size() < 200 && s.front() != '.' && std::regex_match(s, re);
}

}  // namespace

struct Service::Impl {
    ServiceConfig cfg;

    mutable std::mutex mu;
    std::condition_variable cv;
    std::map<std::string, std::shared_ptr<const GeoGrid>> grids;
    std::map<std::string, RasterMeta> metas;
    struct Job {
        JobStatus status;
        JobSpec spec;
    };
    std::map<std::string, Job> jobs;
    std::deque<std::string> queue;
    bool active = false;
    bool paused = false;
    bool stop = false;
    std::size_t next_job = 1;

    mutable std::mutex weights_mu;
    mutable std::map<std::string, std::shared_ptr<const nn::ModelWeights>> weight_cache;

    std::thread worker;

    fs::path raster_dir() const { return cfg.store_dir / "rasters"; }
    fs::path job_dir(const std::string& id) const { return cfg.store_dir / "jobs" / id; }

    void persist(const std::string& id) const {
        const auto& j = jobs.at(id);
        json doc = status_json(j.status);
        doc["spec"] = spec_json(j.spec);
        io::write_file_atomic(job_dir(id) / "status.json", doc.dump(2) + "\n");
    }

    void load_store() {
        fs::create_directories(raster_dir());
        fs::create_directories(cfg.store_dir / "jobs");
        for (const auto& e : fs::directory_iterator(raster_dir())) {
            if (e.path().extension() != ".bgrd") continue;
            try {
                const auto bytes = io::read_file(e.path());
                auto g = std::make_shared<GeoGrid>(io::read_internal_binary(bytes));
                const std::string id = sha256_hex(bytes);
                metas[id] = describe(id, *g);
                grids[id] = std::move(g);
            } catch (const std::exception&) {
                // Unreadable leftovers are skipped, never served.
            }
        }
        for (const auto& e : fs::directory_iterator(cfg.store_dir / "jobs")) {
            const auto sf = e.path() / "status.json";
            if (!fs::exists(sf)) continue;
            try {
                const auto bytes = io::read_file(sf);
                const json doc = json::parse(bytes.begin(), bytes.end());
                Job j;
                j.status = parse_status(doc);
                if (doc.contains("spec")) j.spec = parse_spec(doc["spec"]);
                if (j.status.state == JobState::Queued || j.status.state == JobState::Running) {
                    j.status.state = JobState::Failed;
                    j.status.error = "interrupted by a service restart";
                }
                const std::string id = j.status.id;
                unsigned long n = 0;
                if (std::sscanf(id.c_str(), "job-%lu", &n) == 1) next_job = std::max<std::size_t>(next_job, n + 1);
                jobs[id] = std::move(j);
                persist(id);
            } catch (const std::exception&) {
            }
        }
    }

    std::shared_ptr<const nn::ModelWeights> load_weights_id(const std::string& id) const {
        if (!safe_id(id)) http_fail(404, "NotFound", "unknown weights id");
        std::lock_guard lk(weights_mu);
        if (auto it = weight_cache.find(id); it != weight_cache.end()) return it->second;
        const fs::path p = cfg.weights_dir / (id + ".swnn");
        if (cfg.weights_dir.empty() || !fs::exists(p)) http_fail(404, "NotFound", "unknown weights id " + id);
        auto w = std::make_shared<const nn::ModelWeights>(nn::load_weights(io::read_file(p)));
        weight_cache[id] = w;
        return w;
    }

    void run(const std::string& id) {
        JobSpec spec;
        std::shared_ptr<const GeoGrid> grid;
        {
            std::lock_guard lk(mu);
            spec = jobs.at(id).spec;
            grid = grids.at(spec.raster_id);
        }
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<std::string> error;
        metrics::RuntimeRecord timing{spec.raster_id, 0.0, 0.0};
        try {
            std::optional<detect::PixelRect> rect;
            if (spec.extent) {
                const auto& e = *spec.extent;
                rect = pipeline::world_to_pixels(*grid, e[0], e[1], e[2], e[3]);
            }
            const detect::PixelRect r = rect.value_or(detect::PixelRect{0, 0, grid->rows(), grid->cols()});
            const GeoGrid region = crop(*grid, r.row0, r.col0, r.rows, r.cols);
            timing.size_mb = static_cast<double>(io::write_internal_binary(region).size()) / 1e6;

            std::shared_ptr<const nn::ModelWeights> w;
            if (spec.backend != pipeline::Backend::Depression) w = load_weights_id(spec.weights_id);
            pipeline::InferSettings s;
            s.backend = spec.backend;
            s.weights = w.get();
            s.infer.chunker = cfg.chunker;
            s.infer.jobs = cfg.jobs;
            s.depression = cfg.depression;
            s.infer.progress = [&](std::size_t done, std::size_t total) {
                std::lock_guard lk(mu);
                auto& p = jobs.at(id).status.progress;
                p = std::max(p, 0.9 * static_cast<double>(done) / static_cast<double>(total));
            };
            const auto prob = pipeline::predict(region, std::nullopt, s);
            post::PostParams pp;
            pp.threshold = spec.threshold;
            pp.min_area = spec.min_area_m2;
            const auto set = post::postprocess(prob, pp);

            GeoGrid pg(prob.rows(), prob.cols(), prob.geo);
            pg.depth = prob.prob;
            pg.valid = prob.valid;
            const fs::path dir = job_dir(id);
            io::write_file_atomic(dir / "probability.bgrd", io::write_internal_binary(pg));
            io::write_file_atomic(dir / "mask.bgrd", io::write_internal_binary(io::label_to_grid(set.mask, prob.geo)));
            io::write_file_atomic(dir / "boxes.geojson", post::to_geojson(set, post::GeoJsonMode::Boxes));
            io::write_file_atomic(dir / "outlines.geojson", post::to_geojson(set, post::GeoJsonMode::Outlines));
            io::write_file_atomic(dir / "preview.png", render_preview(region, &set.mask));
        } catch (const Error& e) {
            error = e.what();
        } catch (const HttpError& e) {
            error = e.code + ": " + e.what();
        } catch (const std::exception& e) {
            error = std::string("Internal: ") + e.what();
        }
        timing.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lk(mu);
        auto& st = jobs.at(id).status;
        st.timings = timing;
        if (error) {
            st.state = JobState::Failed;
            st.error = error;
        } else {
            st.state = JobState::Done;
            st.progress = 1.0;
        }
        persist(id);
    }

    void loop() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lk(mu);
                cv.wait(lk, [&] { return stop || (!paused && !queue.empty()); });
                if (stop) return;
                id = queue.front();
                queue.pop_front();
                active = true;
                jobs.at(id).status.state = JobState::Running;
                persist(id);
            }
            run(id);
            {
                std::lock_guard lk(mu);
                active = false;
            }
            cv.notify_all();
        }
    }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>()) {
    if (cfg.store_dir.empty()) fail(ErrorCode::InvalidArgument, "service needs a store directory");
    cfg.chunker.check();
    cfg.depression.check();
    impl_->cfg = std::move(cfg);
    impl_->paused = impl_->cfg.start_paused;
    impl_->load_store();
    impl_->worker = std::thread([this] { impl_->loop(); });
}

Service::~Service() {
    {
        std::lock_guard lk(impl_->mu);
        impl_->stop = true;
    }
    impl_->cv.notify_all();
    impl_->worker.join();
}

RasterMeta Service::register_raster(std::span<const std::uint8_t> bytes, io::RasterFormat format) {
    if (bytes.empty()) http_fail(400, std::string(code_name(ErrorCode::EmptyInput)), "empty upload");
    GeoGrid g;
    try {
        g = io::read_grid(bytes, format);
        g.check();
    } catch (const Error& e) {
        http_fail(400, std::string(code_name(e.code())), e.what());
    }
    const io::Bytes canon = io::write_internal_binary(g);
    const std::string id = sha256_hex(canon);
    std::lock_guard lk(impl_->mu);
    if (auto it = impl_->metas.find(id); it != impl_->metas.end()) return it->second;
    io::write_file_atomic(impl_->raster_dir() / (id + ".bgrd"), canon);
    auto meta = describe(id, g);
    impl_->metas[id] = meta;
    impl_->grids[id] = std::make_shared<const GeoGrid>(std::move(g));
    return meta;
}

std::vector<RasterMeta> Service::rasters() const {
    std::lock_guard lk(impl_->mu);
    std::vector<RasterMeta> out;
    for (const auto& [id, m] : impl_->metas) out.push_back(m);
    return out;
}

RasterMeta Service::raster(const std::string& id) const {
    std::lock_guard lk(impl_->mu);
    auto it = impl_->metas.find(id);
    if (it == impl_->metas.end()) http_fail(404, "NotFound", "unknown raster " + id);
    return it->second;
}

io::Bytes Service::raster_preview(const std::string& id) const {
    std::shared_ptr<const GeoGrid> g;
    {
        std::lock_guard lk(impl_->mu);
        auto it = impl_->grids.find(id);
        if (it == impl_->grids.end()) http_fail(404, "NotFound", "unknown raster " + id);
        g = it->second;
    }
    return render_preview(*g, nullptr);
}

std::string Service::create_job(const JobSpec& spec) {
    std::shared_ptr<const GeoGrid> grid;
    {
        std::lock_guard lk(impl_->mu);
        auto it = impl_->grids.find(spec.raster_id);
        if (it == impl_->grids.end()) http_fail(404, "NotFound", "unknown raster " + spec.raster_id);
        grid = it->second;
    }
    if (!(spec.threshold >= 0.0 && spec.threshold <= 1.0)) http_fail(400, "InvalidArgument", "threshold must be in [0, 1]");
    if (!(spec.min_area_m2 >= 0.0)) http_fail(400, "InvalidArgument", "min_area_m2 must be >= 0");
    if (spec.backend != pipeline::Backend::Depression) {
        const auto w = impl_->load_weights_id(spec.weights_id);
        const int want = spec.backend == pipeline::Backend::CnnHillshade ? 2 : 1;
        if (w->config.in_channels != want)
            http_fail(400, std::string(code_name(ErrorCode::WeightsChannelMismatch)),
                      "weights " + spec.weights_id + " do not match backend " + std::string(pipeline::backend_name(spec.backend)));
    }
    if (spec.extent) {
        const auto& e = *spec.extent;
        try {
            pipeline::world_to_pixels(*grid, e[0], e[1], e[2], e[3]);
        } catch (const Error& err) {
            http_fail(400, std::string(code_name(err.code())), err.what());
        }
    }
    std::lock_guard lk(impl_->mu);
    if (impl_->queue.size() + (impl_->active ? 1 : 0) >= kQueueDepth) http_fail(409, "QueueFull", "job queue is full");
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06zu", impl_->next_job++);
    const std::string id = buf;
    Impl::Job j;
    j.spec = spec;
    j.status.id = id;
    j.status.timings.layer_id = spec.raster_id;
    impl_->jobs[id] = j;
    fs::create_directories(impl_->job_dir(id));
    impl_->persist(id);
    impl_->queue.push_back(id);
    impl_->cv.notify_all();
    return id;
}

JobStatus Service::job(const std::string& id) const {
    std::lock_guard lk(impl_->mu);
    auto it = impl_->jobs.find(id);
    if (it == impl_->jobs.end()) http_fail(404, "NotFound", "unknown job " + id);
    return it->second.status;
}

io::Bytes Service::artifact(const std::string& id, const std::string& name) const {
    static const std::map<std::string, std::string> files = {{"probability", "probability.bgrd"},
                                                             {"mask", "mask.bgrd"},
                                                             {"boxes", "boxes.geojson"},
                                                             {"outlines", "outlines.geojson"},
                                                             {"preview", "preview.png"}};
    const JobStatus st = job(id);
    auto f = files.find(name);
    if (f == files.end()) http_fail(404, "NotFound", "unknown artifact " + name);
    if (st.state != JobState::Done)
        http_fail(409, "NotFinished", "job " + id + " is " + std::string(state_name(st.state)) + (st.error ? ": " + *st.error : ""));
    return io::read_file(impl_->job_dir(id) / f->second);
}

std::vector<WeightsInfo> Service::weights() const {
    std::vector<WeightsInfo> out;
    if (impl_->cfg.weights_dir.empty() || !fs::is_directory(impl_->cfg.weights_dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(impl_->cfg.weights_dir))
        if (e.path().extension() == ".swnn") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        const std::string id = p.stem().string();
        if (!safe_id(id)) continue;
        try {
            out.push_back({id, impl_->load_weights_id(id)->config});
        } catch (const std::exception&) {
        }
    }
    return out;
}

void Service::pause() {
    std::lock_guard lk(impl_->mu);
    impl_->paused = true;
}

void Service::resume() {
    {
        std::lock_guard lk(impl_->mu);
        impl_->paused = false;
    }
    impl_->cv.notify_all();
}

void Service::wait_idle() {
    std::unique_lock lk(impl_->mu);
    impl_->cv.wait(lk, [&] { return impl_->queue.empty() && !impl_->active; });
}

namespace {

void send_json(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const HttpError& e) {
            send_json(res, e.status, {{"error", e.code}, {"message", e.what()}});
        } catch (const Error& e) {
            send_json(res, 400, {{"error", code_name(e.code())}, {"message", e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
        }
    };
}

}  // namespace

void Service::mount(httplib::Server& s) {
    s.Post("/api/rasters", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string fmt = req.has_param("format") ? req.get_param_value("format") : "bgrd";
               const auto format = io::parse_format(fmt);
               const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
               send_json(res, 200, meta_json(register_raster({p, req.body.size()}, format)));
           }));
    s.Get("/api/rasters", guarded([this](const httplib::Request&, httplib::Response& res) {
              json arr = json::array();
              for (const auto& m : rasters()) arr.push_back(meta_json(m));
              send_json(res, 200, arr);
          }));
    s.Get(R"(/api/rasters/([^/]+)/meta)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, meta_json(raster(req.matches[1])));
          }));
    s.Get(R"(/api/rasters/([^/]+)/preview)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto png = raster_preview(req.matches[1]);
              res.set_content(std::string(png.begin(), png.end()), "image/png");
          }));
    s.Post("/api/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
               json body;
               try {
                   body = json::parse(req.body);
               } catch (const json::exception& e) {
                   http_fail(400, "InvalidArgument", std::string("job spec is not JSON: ") + e.what());
               }
               const std::string id = create_job(parse_spec(body));
               send_json(res, 202, status_json(job(id)));
           }));
    s.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, status_json(job(req.matches[1])));
          }));
    s.Get(R"(/api/jobs/([^/]+)/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string name = req.matches[2];
              const auto bytes = artifact(req.matches[1], name);
              const char* type = name == "boxes" || name == "outlines" ? "application/geo+json"
                                 : name == "preview"                  ? "image/png"
                                                                      : "application/octet-stream";
              res.set_content(std::string(bytes.begin(), bytes.end()), type);
          }));
    s.Get("/api/weights", guarded([this](const httplib::Request&, httplib::Response& res) {
              json arr = json::array();
              for (const auto& w : weights()) {
                  arr.push_back({{"id", w.id},
                                 {"in_channels", w.config.in_channels},
                                 {"stages", w.config.stages},
                                 {"base_channels", w.config.base_channels},
                                 {"backend", w.config.in_channels == 2 ? "cnn-hillshade" : "cnn"}});
              }
              send_json(res, 200, arr);
          }));
}

}  // namespace wreckseg::service
