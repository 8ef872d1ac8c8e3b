#include <algorithm>
#include <cmath>
#include <numbers>

#include "byte_io.hpp"
#include "wreckseg/grid_io.hpp"
#include "wreckseg/segnet.hpp"

namespace wreckseg::nn {

std::vector<std::uint8_t> save_weights(const ModelWeights& w) {
    std::vector<std::uint8_t> out;
    detail::ByteWriter bw(out);
    bw.raw(std::string("SWNN"));
    bw.u16(w.format_version);
    bw.u16(static_cast<std::uint16_t>(w.config.in_channels));
    bw.u16(static_cast<std::uint16_t>(w.config.stages));
    bw.u16(static_cast<std::uint16_t>(w.config.base_channels));
    bw.u16(static_cast<std::uint16_t>(w.config.classes));
    bw.u32(static_cast<std::uint32_t>(w.tensors.size()));
    for (const auto& t : w.tensors) {
        bw.u16(static_cast<std::uint16_t>(t.name.size()));
        bw.raw(t.name);
        bw.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) bw.u32(d);
        for (float v : t.data) bw.f32(v);
    }
    return out;
}

ModelWeights load_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "SWNN")
        fail(ErrorCode::BadMagic, "not a weights file");
    detail::ByteReader br(bytes, ErrorCode::MalformedHeader);
    br.seek(4);
    ModelWeights w;
    w.format_version = br.u16();
    if (w.format_version != kWeightsVersion)
        fail(ErrorCode::VersionUnsupported, "weights format version " + std::to_string(w.format_version));
    w.config.in_channels = br.u16();
    w.config.stages = br.u16();
    w.config.base_channels = br.u16();
    w.config.classes = br.u16();
    try {
        w.config.check();
    } catch (const Error& e) {
        fail(ErrorCode::ShapeMismatchWithConfig, e.what());
    }
    const auto layout = tensor_layout(w.config);
    const std::uint32_t count = br.u32();
    if (count != layout.size())
        fail(ErrorCode::ShapeMismatchWithConfig, "expected " + std::to_string(layout.size()) + " tensors, found " + std::to_string(count));
    for (const auto& spec : layout) {
        NamedTensor t;
        const auto len = br.u16();
        auto name = br.bytes(len);
        t.name.assign(name.begin(), name.end());
        const auto nd = br.u8();
        std::size_t n = 1;
        for (int d = 0; d < nd; ++d) {
            t.shape.push_back(br.u32());
            n *= t.shape.back();
        }
        if (t.name != spec.name || t.shape != spec.shape)
            fail(ErrorCode::ShapeMismatchWithConfig, "tensor '" + t.name + "' does not match the config layout");
        br.need(n * 4);
        t.data.resize(n);
        for (auto& v : t.data) {
            v = br.f32();
            if (!std::isfinite(v)) fail(ErrorCode::ShapeMismatchWithConfig, "non-finite value in '" + t.name + "'");
        }
        w.tensors.push_back(std::move(t));
    }
    if (br.remaining() != 0) fail(ErrorCode::MalformedHeader, "trailing bytes after the last tensor");
    return w;
}

TileInput prepare_tile(const prep::NormalizedChunk& chunk, const prep::InpaintConfig& ic) {
    TileInput t;
    t.valid = chunk.valid;
    t.depth_min = chunk.depth_min;
    t.depth_max = chunk.depth_max;
    t.pixel_size = chunk.pixel_size;
    t.depth01 = prep::inpaint(chunk, ic).data;
    return t;
}

TileInput prepare_tile(const GeoGrid& tile, const prep::InpaintConfig& ic) {
    prep::Chunk ch;
    ch.data = tile.depth;
    ch.valid = tile.valid;
    ch.pixel_size = tile.geo.pixel_size;
    return prepare_tile(prep::normalize_chunk(ch), ic);
}

void fill_input(const TileInput& t, int in_channels, Tensor4& x, std::size_t i) {
    if (x.c != static_cast<std::size_t>(in_channels) || !t.depth01.same_shape(x.h, x.w) || i >= x.n)
        fail(ErrorCode::ShapeMismatch, "tile does not fit the input tensor");
    std::copy(t.depth01.data.begin(), t.depth01.data.end(), x.sample(i));
    if (in_channels == 2) {
        Raster<float> metres(t.depth01.rows, t.depth01.cols);
        const double range = t.depth_max - t.depth_min;
        for (std::size_t p = 0; p < metres.size(); ++p) metres.data[p] = static_cast<float>(t.depth01.data[p] * range + t.depth_min);
        const Raster<float> hs = prep::hillshade(metres, t.pixel_size);
        float* dst = x.sample(i) + x.plane();
        for (std::size_t p = 0; p < hs.size(); ++p) dst[p] = hs.data[p] / 255.0f;
    }
}

std::string_view schedule_name(Schedule s) {
    switch (s) {
        case Schedule::Constant: return "constant";
        case Schedule::Plateau: return "plateau";
        case Schedule::OneCycle: return "onecycle";
    }
    return "?";
}

Schedule parse_schedule(std::string_view s) {
    if (s == "constant") return Schedule::Constant;
    if (s == "plateau") return Schedule::Plateau;
    if (s == "onecycle" || s == "one-cycle") return Schedule::OneCycle;
    fail(ErrorCode::InvalidArgument, "unknown schedule '" + std::string(s) + "'");
}

void TrainConfig::check() const {
    if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail(ErrorCode::InvalidArgument, "learning_rate must be >= 0");
    if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) fail(ErrorCode::InvalidArgument, "bad Adam parameters");
    if (plateau_patience < 1) fail(ErrorCode::InvalidArgument, "plateau_patience must be >= 1");
    if (!(loss.class_weights[0] >= 0 && loss.class_weights[1] >= 0)) fail(ErrorCode::InvalidArgument, "class weights must be >= 0");
}

namespace {

// One of the eight symmetries of the square: bit 0 transposes, bit 1 flips
// rows, bit 2 flips columns.
template <typename V>
Raster<V> dihedral(const Raster<V>& a, int d) {
    const bool tr = d & 1;
    Raster<V> out(tr ? a.cols : a.rows, tr ? a.rows : a.cols);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) {
            std::size_t sr = tr ? c : r, sc = tr ? r : c;
            if (d & 2) sr = a.rows - 1 - sr;
            if (d & 4) sc = a.cols - 1 - sc;
            out(r, c) = a(sr, sc);
        }
    }
    return out;
}

TrainSample transformed(const TrainSample& s, int d) {
    if (d == 0) return s;
    TrainSample t = s;
    t.input.depth01 = dihedral(s.input.depth01, d);
    t.input.valid = dihedral(s.input.valid, d);
    t.label = dihedral(s.label, d);
    return t;
}

struct Batch {
    Tensor4 x;
    Targets y;
};

Batch make_batch(const std::vector<const TrainSample*>& items, int in_channels) {
    Batch b;
    const auto& first = items.front()->input.depth01;
    b.x = Tensor4(items.size(), static_cast<std::size_t>(in_channels), first.rows, first.cols);
    for (std::size_t i = 0; i < items.size(); ++i) {
        fill_input(items[i]->input, in_channels, b.x, i);
        b.y.labels.push_back(items[i]->label);
        b.y.valid.push_back(items[i]->input.valid);
    }
    return b;
}

struct ValScore {
    double loss = 0.0;
    double iou = 0.0;
};

ValScore evaluate(const NetConfig& net, const std::vector<std::vector<float>>& params, const std::vector<TrainSample>& val,
                  const LossConfig& lc) {
    double num = 0.0, den = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : val) {
        Batch b = make_batch({&s}, net.in_channels);
        const Tensor4 logits = forward_t(net, params, b.x);
        const auto prob = ship_probability(logits);
        for (std::size_t p = 0; p < s.label.size(); ++p) {
            if (!s.input.valid.data[p]) continue;
            const bool pred = prob[0].data[p] >= 0.5f;
            const bool gt = s.label.data[p] != 0;
            tp += pred && gt;
            fp += pred && !gt;
            fn += !pred && gt;
        }
        const auto lr = loss_and_grad_t(net, params, b.x, b.y, lc, false);
        num += lr.per_sample_loss[0] * lr.weight_sum;
        den += lr.weight_sum;
    }
    ValScore v;
    v.loss = den > 0 ? num / den : 0.0;
    v.iou = tp + fp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn) : 0.0;
    return v;
}

double onecycle_lr(double peak, std::size_t step, std::size_t total) {
    const double start = peak / 25.0;
    const double end = start / 1e4;
    const std::size_t warm = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(total))));
    if (step < warm) return start + (peak - start) * static_cast<double>(step) / static_cast<double>(warm);
    const std::size_t rest = std::max<std::size_t>(1, total - warm);
    const double f = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(rest));
    return end + (peak - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

}  // namespace

TrainResult train_samples(const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set, const NetConfig& net,
                          const TrainConfig& tc, const EpochCallback& on_epoch) {
    net.check();
    tc.check();
    if (train_set.empty() || val_set.empty()) fail(ErrorCode::EmptyManifest, "training needs at least one train and one val sample");
    for (const auto* set : {&train_set, &val_set})
        for (const auto& s : *set)
            if (!s.label.same_shape(s.input.depth01) || !s.input.valid.same_shape(s.input.depth01))
                fail(ErrorCode::ShapeMismatch, "sample label or mask shape differs from its input");

    ModelWeights model = init_model(net, tc.seed);
    auto params = params_of(model);
    std::vector<std::vector<float>> m1, m2;
    for (const auto& p : params) {
        m1.emplace_back(p.size(), 0.0f);
        m2.emplace_back(p.size(), 0.0f);
    }
    Rng rng(tc.seed ^ 0x7a11ULL);
    const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
    const std::size_t steps_per_epoch = (train_set.size() + bs - 1) / bs;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(tc.epochs);
    double lr = tc.learning_rate;
    std::size_t step = 0;
    int stagnant = 0;

    TrainResult res;
    res.weights = model;
    double best_iou = -1.0, best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double num = 0.0, den = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<TrainSample> aug;
            aug.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const int d = tc.augment ? static_cast<int>(rng.below(8)) : 0;
                aug.push_back(transformed(train_set[order[k]], d));
            }
            // Samples of differing shape go through in separate passes; the
            // weighted-mean normalisation spans the whole batch.
            std::vector<std::vector<float>> grads;
            double batch_num = 0.0, batch_den = 0.0;
            std::vector<bool> done(aug.size(), false);
            for (std::size_t a = 0; a < aug.size(); ++a) {
                if (done[a]) continue;
                std::vector<const TrainSample*> group;
                for (std::size_t k = a; k < aug.size(); ++k) {
                    if (!done[k] && aug[k].label.same_shape(aug[a].label)) {
                        group.push_back(&aug[k]);
                        done[k] = true;
                    }
                }
                Batch b = make_batch(group, net.in_channels);
                auto lr_res = loss_and_grad_t(net, params, b.x, b.y, tc.loss, true);
                for (std::size_t k = 0; k < group.size(); ++k) batch_num += lr_res.per_sample_loss[k] * lr_res.per_sample_weight[k];
                batch_den += lr_res.weight_sum;
                if (grads.empty()) {
                    grads = std::move(lr_res.grads);
                    for (auto& g : grads)
                        for (auto& v : g) v *= static_cast<float>(lr_res.weight_sum);
                } else {
                    for (std::size_t t = 0; t < grads.size(); ++t)
                        for (std::size_t j = 0; j < grads[t].size(); ++j) grads[t][j] += lr_res.grads[t][j] * static_cast<float>(lr_res.weight_sum);
                }
            }
            num += batch_num;
            den += batch_den;
            if (batch_den > 0) {
                const float inv = static_cast<float>(1.0 / batch_den);
                for (auto& g : grads)
                    for (auto& v : g) v *= inv;
            }

            const double rate = tc.schedule == Schedule::OneCycle ? onecycle_lr(tc.learning_rate, step, total_steps) : lr;
            ++step;
            const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
            const float b1 = static_cast<float>(tc.beta1), b2 = static_cast<float>(tc.beta2);
            for (std::size_t t = 0; t < params.size(); ++t) {
                for (std::size_t j = 0; j < params[t].size(); ++j) {
                    const float g = grads[t][j];
                    m1[t][j] = b1 * m1[t][j] + (1.0f - b1) * g;
                    m2[t][j] = b2 * m2[t][j] + (1.0f - b2) * g * g;
                    const double mh = m1[t][j] / bc1;
                    const double vh = m2[t][j] / bc2;
                    params[t][j] = static_cast<float>(params[t][j] - rate * mh / (std::sqrt(vh) + tc.epsilon));
                }
            }
        }

        const ValScore vs = evaluate(net, params, val_set, tc.loss);
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = den > 0 ? num / den : 0.0;
        st.val_loss = vs.loss;
        st.val_iou_ship = vs.iou;
        const bool improved = vs.iou > best_iou || (vs.iou == best_iou && vs.loss < best_loss);
        if (improved) {
            best_iou = vs.iou;
            best_loss = vs.loss;
            res.best_epoch = epoch;
            for (std::size_t t = 0; t < params.size(); ++t) res.weights.tensors[t].data = params[t];
            stagnant = 0;
        } else if (++stagnant >= tc.plateau_patience && tc.schedule == Schedule::Plateau) {
            lr *= 0.5;
            stagnant = 0;
        }
        st.learning_rate = tc.schedule == Schedule::OneCycle ? onecycle_lr(tc.learning_rate, step, total_steps) : lr;
        res.history.push_back(st);
        if (on_epoch) on_epoch(st);
    }
    return res;
}

TrainSample load_sample(const synth::DatasetManifest& m, const synth::ManifestEntry& e, const prep::InpaintConfig& ic) {
    const GeoGrid g = io::read_grid_file(m.sample_file(e));
    const LabelMask l = io::grid_to_label(io::read_grid_file(m.label_file(e)));
    if (!l.same_shape(g.depth)) fail(ErrorCode::InconsistentDimensions, "label shape differs for " + e.sample_path);
    TrainSample s;
    s.input = prepare_tile(g, ic);
    s.label = l;
    return s;
}

TrainResult train(const synth::DatasetManifest& manifest, const NetConfig& net, const TrainConfig& tc, const EpochCallback& on_epoch) {
    std::vector<TrainSample> tr, va;
    for (const auto& e : manifest.entries) {
        if (e.split == synth::Split::Train) tr.push_back(load_sample(manifest, e, tc.inpaint));
        else if (e.split == synth::Split::Val) va.push_back(load_sample(manifest, e, tc.inpaint));
    }
    if (tr.empty() || va.empty()) fail(ErrorCode::EmptyManifest, "manifest needs at least one train and one val entry");
    return train_samples(tr, va, net, tc, on_epoch);
}

}  // namespace wreckseg::nn
