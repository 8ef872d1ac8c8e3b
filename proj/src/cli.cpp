#include "wreckseg/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "text_util.hpp"
#include "wreckseg/grid_io.hpp"
#include "wreckseg/pipeline.hpp"
#include "wreckseg/service.hpp"

namespace wreckseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot read config file " + p.string());
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const std::string t{detail::trim(line)};
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
        std::string key{detail::trim(std::string_view(t).substr(0, eq))};
        const std::string val{detail::trim(std::string_view(t).substr(eq + 1))};
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        if (key.empty()) throw UsageError("config line " + std::to_string(n) + ": empty key");
        kv.emplace_back(key, val);
    }
    return kv;
}

// Pulls --config out of the arguments and lets its entries replace flags of
// the same name.
std::vector<std::string> apply_config(std::vector<std::string> args) {
    std::optional<std::string> cfg;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file");
            cfg = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            cfg = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!cfg) return rest;
    const auto kv = read_config(*cfg);
    std::map<std::string, bool> keys;
    for (const auto& [k, v] : kv) keys[k] = true;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        const std::string& a = rest[i];
        if (a.rfind("--", 0) == 0) {
            const std::string name = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
            if (keys.count(name)) {
                // Drop the flag and its separate value, if any.
                if (a.find('=') == std::string::npos && i + 1 < rest.size() && rest[i + 1].rfind("--", 0) != 0) ++i;
                continue;
            }
        }
        out.push_back(a);
    }
    for (const auto& [k, v] : kv) out.push_back("--" + k + "=" + v);
    return out;
}

fs::path resolve_input(const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !fs::exists(path)) {
        if (const char* dir = std::getenv(kDataDirEnv); dir && *dir && fs::exists(fs::path(dir) / path)) return fs::path(dir) / path;
    }
    return path;
}

synth::DatasetManifest load_manifest(const std::string& p) {
    fs::path path = resolve_input(p);
    if (fs::is_directory(path)) path /= std::string(synth::kManifestFile);
    return synth::read_manifest(path);
}

std::vector<double> parse_list(const std::string& s, std::size_t want, const char* what) {
    std::vector<double> v;
    for (auto part : detail::split(s, ',')) {
        const auto x = detail::parse_double(detail::trim(part));
        if (!x) throw UsageError(std::string(what) + ": not a number list");
        v.push_back(*x);
    }
    if (want && v.size() != want) throw UsageError(std::string(what) + ": expected " + std::to_string(want) + " values");
    return v;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Options shared by the inference-running subcommands.
struct InferFlags {
    std::string backend = "cnn";
    std::string weights;
    double chunk_extent = prep::kDefaultChunkExtentM;
    double stride = 0.0;
    int jobs = 1;
    std::size_t batch_limit = detect::kDefaultBatchLimit;
    detect::DepressionParams dep;
    double base = std::numeric_limits<double>::quiet_NaN();

    void add(CLI::App* app) {
        app->add_option("--backend", backend, "cnn, cnn-hillshade or depression")
            ->check(CLI::IsMember({"cnn", "cnn-hillshade", "depression"}))
            ->capture_default_str();
        app->add_option("--weights", weights, "Network weights (.swnn)");
        app->add_option("--chunk-extent", chunk_extent, "Chunk side in metres")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--stride", stride, "Chunk stride in metres (default: chunk extent)")->check(CLI::NonNegativeNumber);
        app->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
        app->add_option("--batch-limit", batch_limit, "Chunks merged per batch")->check(CLI::Range(1, 1 << 30))->capture_default_str();
        app->add_option("--min-depress", dep.min_depress, "Depression: minimum cells at 0.5 m/px")->check(CLI::NonNegativeNumber)->capture_default_str();
        app->add_option("--buffer", dep.buffer, "Depression: dilation in cells")->check(CLI::Range(0, 1000))->capture_default_str();
        app->add_option("--interval", dep.interval, "Depression: contour interval (m)")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--min-depth", dep.min_depth, "Depression: minimum depth (m)")->check(CLI::NonNegativeNumber)->capture_default_str();
        app->add_option("--base", base, "Depression: base level (m)");
    }
    void validate() const {
        if (backend != "depression" && weights.empty()) throw UsageError("--weights is required for backend " + backend);
    }
    pipeline::InferSettings settings(std::shared_ptr<nn::ModelWeights>& holder) {
        pipeline::InferSettings s;
        s.backend = pipeline::parse_backend(backend);
        if (s.backend != pipeline::Backend::Depression) {
            holder = std::make_shared<nn::ModelWeights>(nn::load_weights(io::read_file(resolve_input(weights))));
            s.weights = holder.get();
        }
        s.infer.chunker.chunk_extent = chunk_extent;
        if (stride > 0) s.infer.chunker.stride = stride;
        s.infer.jobs = jobs;
        s.infer.batch_limit = batch_limit;
        s.depression = dep;
        if (!std::isnan(base)) s.depression.base = base;
        return s;
    }
};

struct PostFlags {
    double threshold = post::kDefaultThreshold;
    double min_area = post::kDefaultMinAreaM2;
    std::string unit = "m2";
    int connectivity = 8;

    void add(CLI::App* app, double default_area) {
        min_area = default_area;
        app->add_option("--threshold", threshold, "Probability threshold (p >= t)")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        app->add_option("--min-area", min_area, "Minimum component area")->check(CLI::NonNegativeNumber)->capture_default_str();
        app->add_option("--area-unit", unit, "m2 or px")->check(CLI::IsMember({"m2", "px"}))->capture_default_str();
        app->add_option("--connectivity", connectivity, "4 or 8")->check(CLI::IsMember({4, 8}))->capture_default_str();
    }
    post::PostParams params() const {
        post::PostParams p;
        p.threshold = threshold;
        p.min_area = min_area;
        p.unit = unit == "px" ? post::AreaUnit::Pixels : post::AreaUnit::SquareMetres;
        p.connectivity = connectivity;
        return p;
    }
};

GeoGrid probability_grid(const detect::ProbabilityMap& p) {
    GeoGrid g(p.rows(), p.cols(), p.geo);
    g.depth = p.prob;
    g.valid = p.valid;
    return g;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    auto diag = [&](std::string_view code, const std::string& msg) { err << "wreckseg: error: " << code << ": " << msg << "\n"; };

    CLI::App app("Shipwreck detection in multibeam bathymetry", "wreckseg");
    app.require_subcommand(1);
    app.set_version_flag("--version", "wreckseg 1.0.0");
    app.add_option("--config", "key = value file; its entries override flags of the same name");

    // convert
    auto* convert = app.add_subcommand("convert", "Convert between raster formats");
    std::string c_in, c_out, c_from, c_to;
    convert->add_option("--input", c_in, "Input raster")->required();
    convert->add_option("--output", c_out, "Output raster")->required();
    convert->add_option("--from", c_from, "Input format (bgrd, asc, xyz, tif); default from extension");
    convert->add_option("--to", c_to, "Output format (bgrd, asc); default from extension");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Build a synthetic training dataset");
    std::string s_out;
    pipeline::DeskDataConfig desk;
    std::size_t s_synthetic = 300, s_terrain = 150;
    std::optional<std::size_t> s_real_count;
    std::vector<std::string> s_real, s_terrain_files;
    synth::SynthConfig s_cfg;
    synth_cmd->add_option("--out", s_out, "Output directory")->required();
    synth_cmd->add_option("--seed", desk.seed, "Seed")->capture_default_str();
    synth_cmd->add_option("--tile-px", desk.tile_px, "Generated tile side in pixels")->check(CLI::Range(8, 4096))->capture_default_str();
    synth_cmd->add_option("--resolution", desk.resolution, "Generated tile resolution (m/px)")->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--ships", desk.ships, "Procedural hulls")->capture_default_str();
    synth_cmd->add_option("--terrains", desk.terrains, "Procedural terrain tiles")->capture_default_str();
    synth_cmd->add_option("--synthetic", s_synthetic, "Synthetic wreck samples")->capture_default_str();
    synth_cmd->add_option("--terrain-samples", s_terrain, "Terrain-only samples")->capture_default_str();
    synth_cmd->add_option("--real", s_real, "Real wreck as SAMPLE,LABEL (repeatable)");
    synth_cmd->add_option("--real-count", s_real_count, "Real wreck samples (default: one per --real)");
    synth_cmd->add_option("--terrain-file", s_terrain_files, "Extra terrain raster (repeatable)");
    synth_cmd->add_option("--depth-ratio", s_cfg.depth_ratio_mean, "Mean wreck depth over terrain depth")->capture_default_str();
    synth_cmd->add_option("--depth-ratio-sigma", s_cfg.depth_ratio_sigma, "Spread of the depth ratio")->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the segmentation network");
    std::string t_manifest, t_out, t_schedule = "onecycle", t_history;
    nn::NetConfig t_net;
    nn::TrainConfig t_cfg;
    bool t_hillshade = false, t_no_augment = false;
    double t_ship_weight = 5.0;
    train_cmd->add_option("--manifest", t_manifest, "Dataset manifest or its directory")->required();
    train_cmd->add_option("--out", t_out, "Output weights (.swnn)")->required();
    train_cmd->add_option("--epochs", t_cfg.epochs, "Epochs")->check(CLI::Range(0, 100000))->capture_default_str();
    train_cmd->add_option("--lr", t_cfg.learning_rate, "Learning rate (peak for onecycle)")->check(CLI::NonNegativeNumber)->capture_default_str();
    train_cmd->add_option("--batch", t_cfg.batch_size, "Batch size")->check(CLI::Range(1, 1 << 20))->capture_default_str();
    train_cmd->add_option("--schedule", t_schedule, "constant, plateau or onecycle")
        ->check(CLI::IsMember({"constant", "plateau", "onecycle"}))
        ->capture_default_str();
    train_cmd->add_option("--base-channels", t_net.base_channels, "Channels of the first stage")->check(CLI::Range(1, 1024))->capture_default_str();
    train_cmd->add_option("--stages", t_net.stages, "Encoder stages")->check(CLI::Range(1, 8))->capture_default_str();
    train_cmd->add_flag("--hillshade", t_hillshade, "Add the hillshade input channel");
    train_cmd->add_flag("--no-augment", t_no_augment, "Disable flips and quarter turns");
    train_cmd->add_option("--ship-weight", t_ship_weight, "Loss weight of the ship class")->check(CLI::PositiveNumber)->capture_default_str();
    train_cmd->add_option("--seed", t_cfg.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--history", t_history, "Write per-epoch JSON lines here");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Detect wrecks in a raster");
    std::string i_in, i_prefix, i_extent;
    InferFlags i_flags;
    PostFlags i_post;
    infer_cmd->add_option("--input", i_in, "Input raster")->required();
    infer_cmd->add_option("--out-prefix", i_prefix, "Output prefix")->required();
    infer_cmd->add_option("--extent", i_extent, "World window min_e,min_n,max_e,max_n");
    i_flags.add(infer_cmd);
    i_post.add(infer_cmd, post::kDefaultMinAreaM2);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a manifest split");
    std::string e_manifest, e_split = "test", e_pred_dir, e_group, e_edges, e_records;
    InferFlags e_flags;
    PostFlags e_post;
    bool e_per_site = false;
    double e_tau = metrics::kWreckIouTau;
    eval_cmd->add_option("--manifest", e_manifest, "Dataset manifest or its directory")->required();
    eval_cmd->add_option("--split", e_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    eval_cmd->add_option("--pred-dir", e_pred_dir, "Precomputed probability or mask grids named like the samples");
    eval_cmd->add_option("--group-by", e_group, "resolution or depth")->check(CLI::IsMember({"resolution", "depth"}));
    eval_cmd->add_option("--edges", e_edges, "Bucket edges a,b,c (default: deciles)");
    eval_cmd->add_flag("--per-site", e_per_site, "Pool per-wreck scores by source site");
    eval_cmd->add_option("--tau", e_tau, "Per-wreck IoU needed to count a wreck")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    eval_cmd->add_option("--records", e_records, "Write JSON-lines records here");
    e_flags.add(eval_cmd);
    e_post.add(eval_cmd, 0.0);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time inference and report seconds per MB");
    std::vector<std::string> b_inputs;
    InferFlags b_flags;
    int b_repeat = 1;
    std::string b_records;
    bench_cmd->add_option("--input", b_inputs, "Input raster (repeatable)")->required();
    bench_cmd->add_option("--repeat", b_repeat, "Timed runs per layer (fastest kept)")->check(CLI::Range(1, 1000))->capture_default_str();
    bench_cmd->add_option("--records", b_records, "Write JSON-lines records here");
    b_flags.add(bench_cmd);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
    std::string v_host = "127.0.0.1", v_store, v_weights;
    int v_port = 8080;
    InferFlags v_flags;
    serve_cmd->add_option("--host", v_host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", v_port, "Port")->check(CLI::Range(0, 65535))->capture_default_str();
    serve_cmd->add_option("--store", v_store, "Raster and job store (default: $" + std::string(kDataDirEnv) + "/store or ./wreckseg-store)");
    serve_cmd->add_option("--weights-dir", v_weights, "Directory of .swnn files");
    serve_cmd->add_option("--chunk-extent", v_flags.chunk_extent, "Chunk side in metres")->check(CLI::PositiveNumber)->capture_default_str();
    serve_cmd->add_option("--jobs", v_flags.jobs, "Worker threads per job")->check(CLI::Range(1, 256))->capture_default_str();

    // Parse and validate; nothing touches the file system before this block ends.
    try {
        std::vector<std::string> args = apply_config(std::vector<std::string>(raw_args.begin() + (raw_args.empty() ? 0 : 1), raw_args.end()));
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (infer_cmd->parsed()) i_flags.validate();
        if (bench_cmd->parsed()) b_flags.validate();
        if (eval_cmd->parsed()) {
            if (e_pred_dir.empty() == e_flags.weights.empty() && e_flags.backend != "depression")
                throw UsageError("eval needs exactly one of --weights or --pred-dir");
            if (!e_edges.empty()) {
                if (e_group.empty()) throw UsageError("--edges needs --group-by");
                parse_list(e_edges, 0, "--edges");
            }
        }
        if (!i_extent.empty()) {
            const auto e = parse_list(i_extent, 4, "--extent");
            if (!(e[0] < e[2] && e[1] < e[3])) throw UsageError("--extent must be min_e,min_n,max_e,max_n");
        }
        if (convert->parsed()) {
            if (!c_from.empty()) io::parse_format(c_from);
            if (!c_to.empty()) io::parse_format(c_to);
        }
        for (const auto& r : s_real)
            if (detail::split(r, ',').size() != 2) throw UsageError("--real expects SAMPLE,LABEL");
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return kExitOk;
    } catch (const CLI::Success&) {
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        diag("Usage", e.what());
        return kExitUsage;
    } catch (const UsageError& e) {
        diag("Usage", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        diag("Usage", e.what());
        return kExitUsage;
    }

    try {
        if (convert->parsed()) {
            const fs::path in = resolve_input(c_in);
            const GeoGrid g = c_from.empty() ? io::read_grid_file(in) : io::read_grid_file(in, io::parse_format(c_from));
            const auto to = c_to.empty() ? io::format_from_path(c_out) : io::parse_format(c_to);
            io::write_file_atomic(c_out, io::write_grid(g, to));
            out << "wrote " << c_out << " (" << g.rows() << "x" << g.cols() << ", " << io::format_name(to) << ")\n";
        } else if (synth_cmd->parsed()) {
            auto inputs = pipeline::desk_inputs(desk);
            for (const auto& r : s_real) {
                const auto parts = detail::split(r, ',');
                synth::LabeledGrid lg;
                lg.grid = io::read_grid_file(resolve_input(std::string(detail::trim(parts[0]))));
                lg.label = io::grid_to_label(io::read_grid_file(resolve_input(std::string(detail::trim(parts[1])))));
                lg.source_id = fs::path(std::string(detail::trim(parts[0]))).stem().string();
                inputs.ships.push_back(synth::resample_patch(synth::extract_ship(lg.grid, lg.label, lg.source_id), desk.resolution));
                inputs.real.push_back(std::move(lg));
            }
            for (const auto& f : s_terrain_files) inputs.terrains.push_back(io::read_grid_file(resolve_input(f)));
            s_cfg.seed = desk.seed;
            synth::DatasetCounts counts{s_real_count.value_or(s_real.size()), s_synthetic, s_terrain};
            const auto m = synth::build_dataset(inputs, counts, s_cfg, s_out);
            out << "wrote " << m.entries.size() << " samples to " << s_out << " (train " << m.count(synth::Split::Train)
                << ", val " << m.count(synth::Split::Val) << ", test " << m.count(synth::Split::Test) << ")\n";
        } else if (train_cmd->parsed()) {
            const auto m = load_manifest(t_manifest);
            t_net.in_channels = t_hillshade ? 2 : 1;
            t_cfg.schedule = nn::parse_schedule(t_schedule);
            t_cfg.augment = !t_no_augment;
            t_cfg.loss.class_weights = {1.0, t_ship_weight};
            std::string history;
            const auto res = nn::train(m, t_net, t_cfg, [&](const nn::EpochStats& e) {
                out << "epoch " << e.epoch << " train_loss " << fmt("%.5f", e.train_loss) << " val_loss " << fmt("%.5f", e.val_loss)
                    << " val_iou_ship " << fmt("%.4f", e.val_iou_ship) << " lr " << fmt("%.3g", e.learning_rate) << "\n";
                out.flush();
                history += json{{"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"val_loss", e.val_loss},
                                {"val_iou_ship", e.val_iou_ship},
                                {"learning_rate", e.learning_rate}}
                               .dump() +
                           "\n";
            });
            io::write_file_atomic(t_out, nn::save_weights(res.weights));
            if (!t_history.empty()) io::write_file_atomic(t_history, history);
            out << "best epoch " << res.best_epoch << ", wrote " << t_out << "\n";
        } else if (infer_cmd->parsed()) {
            std::shared_ptr<nn::ModelWeights> w;
            const auto s = i_flags.settings(w);
            const GeoGrid g = io::read_grid_file(resolve_input(i_in));
            std::optional<detect::PixelRect> rect;
            if (!i_extent.empty()) {
                const auto e = parse_list(i_extent, 4, "--extent");
                rect = pipeline::world_to_pixels(g, e[0], e[1], e[2], e[3]);
            }
            const auto prob = pipeline::predict(g, rect, s);
            const auto set = post::postprocess(prob, i_post.params());
            // Everything is encoded before the first file is written.
            const auto prob_bytes = io::write_internal_binary(probability_grid(prob));
            const auto mask_bytes = io::write_internal_binary(io::label_to_grid(set.mask, prob.geo));
            const auto boxes = post::to_geojson(set, post::GeoJsonMode::Boxes, i_post.connectivity);
            const auto outlines = post::to_geojson(set, post::GeoJsonMode::Outlines, i_post.connectivity);
            io::write_file_atomic(i_prefix + ".prob.bgrd", prob_bytes);
            io::write_file_atomic(i_prefix + ".mask.bgrd", mask_bytes);
            io::write_file_atomic(i_prefix + ".boxes.geojson", boxes);
            io::write_file_atomic(i_prefix + ".outlines.geojson", outlines);
            out << set.components.size() << " detection(s); wrote " << i_prefix << ".{prob.bgrd,mask.bgrd,boxes.geojson,outlines.geojson}\n";
        } else if (eval_cmd->parsed()) {
            const auto m = load_manifest(e_manifest);
            pipeline::EvalOptions eo;
            eo.split = e_split == "train" ? synth::Split::Train : e_split == "val" ? synth::Split::Val : synth::Split::Test;
            eo.tau = e_tau;
            eo.per_site = e_per_site;
            if (!e_group.empty()) eo.group = metrics::parse_group_key(e_group);
            if (!e_edges.empty()) eo.edges = parse_list(e_edges, 0, "--edges");
            const auto pp = e_post.params();
            pipeline::Predictor pred;
            std::shared_ptr<nn::ModelWeights> w;
            if (!e_pred_dir.empty()) {
                const fs::path dir = resolve_input(e_pred_dir);
                pred = [dir, pp](const GeoGrid& sample, const synth::ManifestEntry& e) {
                    const GeoGrid p = io::read_grid_file(dir / fs::path(e.sample_path).filename(), io::RasterFormat::InternalBinary);
                    if (!p.depth.same_shape(sample.depth)) fail(ErrorCode::ShapeMismatch, "prediction " + e.sample_path + " differs in shape");
                    detect::ProbabilityMap pm{p.geo, p.depth, p.valid};
                    for (std::size_t i = 0; i < pm.valid.size(); ++i) pm.valid.data[i] &= sample.valid.data[i];
                    return pipeline::detection_mask(pm, pp);
                };
            } else {
                pred = pipeline::tile_predictor(e_flags.settings(w), pp);
            }
            const auto r = pipeline::evaluate(m, pred, eo);
            out << metrics::format_table(r);
            if (!e_records.empty()) io::write_file_atomic(e_records, metrics::format_records(r));
        } else if (bench_cmd->parsed()) {
            std::shared_ptr<nn::ModelWeights> w;
            const auto s = b_flags.settings(w);
            std::vector<metrics::RuntimeRecord> recs;
            for (const auto& f : b_inputs) {
                const fs::path p = resolve_input(f);
                const double mb = static_cast<double>(fs::file_size(p)) / 1e6;
                double best = std::numeric_limits<double>::infinity();
                for (int k = 0; k < b_repeat; ++k) {
                    const auto t0 = std::chrono::steady_clock::now();
                    const GeoGrid g = io::read_grid_file(p);
                    const auto prob = pipeline::predict(g, std::nullopt, s);
                    post::postprocess(prob);
                    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
                }
                recs.push_back({p.filename().string(), best, mb});
                out << p.filename().string() << "  " << fmt("%.4f", best) << " s  " << fmt("%.4f", mb) << " MB  "
                    << fmt("%.4f", best / mb) << " s/MB\n";
            }
            const double R = metrics::runtime_per_mb(recs);
            out << "runtime_per_mb " << fmt("%.4f", R) << "\n";
            if (!b_records.empty()) {
                std::string text;
                for (const auto& r : recs)
                    text += json{{"layer_id", r.layer_id}, {"runtime_s", r.runtime_s}, {"size_mb", r.size_mb}}.dump() + "\n";
                text += json{{"runtime_per_mb", R}}.dump() + "\n";
                io::write_file_atomic(b_records, text);
            }
        } else if (serve_cmd->parsed()) {
            service::ServiceConfig cfg;
            if (!v_store.empty()) cfg.store_dir = v_store;
            else if (const char* d = std::getenv(kDataDirEnv); d && *d) cfg.store_dir = fs::path(d) / "store";
            else cfg.store_dir = "wreckseg-store";
            if (!v_weights.empty()) cfg.weights_dir = resolve_input(v_weights);
            cfg.chunker.chunk_extent = v_flags.chunk_extent;
            cfg.jobs = v_flags.jobs;
            service::Service svc(cfg);
            httplib::Server server;
            svc.mount(server);
            if (!server.bind_to_port(v_host, v_port)) {
                diag("Io", "cannot bind " + v_host + ":" + std::to_string(v_port));
                return kExitData;
            }
            out << "listening on http://" << v_host << ":" << v_port << "\n";
            out.flush();
            server.listen_after_bind();
        }
    } catch (const Error& e) {
        err << "wreckseg: error: " << e.what() << "\n";
        return kExitData;
    } catch (const service::HttpError& e) {
        diag(e.code, e.what());
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        diag("Io", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        diag("Internal", e.what());
        return kExitData;
    }
    return kExitOk;
}

}  // namespace wreckseg::cli
