#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wreckseg/geogrid.hpp"
#include "wreckseg/preprocess.hpp"
#include "wreckseg/synthgen.hpp"

namespace wreckseg::nn {

inline constexpr std::uint16_t kWeightsVersion = 1;
inline constexpr double kDefaultLearningRate = 5e-4;
inline constexpr double kDefaultShipWeight = 5.0;

struct NetConfig {
    int in_channels = 1;  // 1 = depth, 2 = depth + hillshade
    int stages = 3;
    int base_channels = 16;
    int classes = 2;

    int multiple() const { return 1 << stages; }
    void check() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// batch x channels x height x width, row-major.
template <typename T>
struct Tensor4T {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4T() = default;
    Tensor4T(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, T fill = T{})
        : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

    std::size_t plane() const { return h * w; }
    T* sample(std::size_t i) { return data.data() + i * c * h * w; }
    const T* sample(std::size_t i) const { return data.data() + i * c * h * w; }
    T& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) { return data[((i * c + ch) * h + y) * w + x]; }
    const T& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const { return data[((i * c + ch) * h + y) * w + x]; }
};
using Tensor4 = Tensor4T<float>;

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> data;
};

struct ModelWeights {
    NetConfig config;
    std::uint16_t format_version = kWeightsVersion;
    std::vector<NamedTensor> tensors;  // canonical order, see tensor_layout

    const NamedTensor& get(const std::string& name) const;
    NamedTensor& get(const std::string& name);
};

// Names and shapes every model of this config carries, in storage order.
struct TensorSpec {
    std::string name;
    std::vector<std::uint32_t> shape;
};
std::vector<TensorSpec> tensor_layout(const NetConfig& cfg);
std::size_t parameter_count(const NetConfig& cfg);

// He-normal kernels, zero biases.
ModelWeights init_model(const NetConfig& cfg, std::uint64_t seed);

// Logits with `classes` channels and the input's spatial size. Throws ShapeMismatch.
Tensor4 forward(const ModelWeights& w, const Tensor4& x);

// Softmax over the class axis; returns the ship (class 1) channel as n rasters.
std::vector<Raster<float>> ship_probability(const Tensor4& logits);

struct LossConfig {
    std::array<double, 2> class_weights = {1.0, kDefaultShipWeight};
};

// Per-sample targets. `valid` may be empty (all pixels count).
struct Targets {
    std::vector<LabelMask> labels;
    std::vector<Mask> valid;
};

template <typename T>
struct LossResult {
    T loss = 0;                            // weighted mean cross-entropy over counted pixels
    std::vector<std::vector<T>> grads;     // one per tensor, tensor_layout order
    std::vector<double> per_sample_loss;   // each sample's own weighted mean
    std::vector<double> per_sample_weight; // each sample's denominator
    double weight_sum = 0.0;               // denominator of `loss`
};

// Generic-precision core used for training (float) and gradient checks (double).
// `params` holds the tensors in tensor_layout order.
template <typename T>
LossResult<T> loss_and_grad_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x,
                              const Targets& y, const LossConfig& lc, bool want_grads = true);

template <typename T>
Tensor4T<T> forward_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x);

// ReLU on/off state of every unit plus every max-pool choice, for all samples.
// Two parameter points with equal patterns lie on the same smooth piece.
template <typename T>
std::vector<std::uint8_t> activation_pattern(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x);

// Loss with every ReLU and pool decision forced to `pattern`: the smooth piece
// of the loss surface that contains the point the pattern was recorded at.
template <typename T>
T loss_on_pattern_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x, const Targets& y,
                    const LossConfig& lc, const std::vector<std::uint8_t>& pattern);

LossResult<float> loss_and_grad(const ModelWeights& w, const Tensor4& x, const Targets& y, const LossConfig& lc = {});

std::vector<std::vector<float>> params_of(const ModelWeights& w);
std::vector<std::vector<double>> params_f64(const ModelWeights& w);

// Weights file (.swnn).
std::vector<std::uint8_t> save_weights(const ModelWeights& w);
ModelWeights load_weights(std::span<const std::uint8_t> bytes);

// Network input for one tile: channel 0 = normalized, inpainted depth; channel
// 1 (when in_channels == 2) = hillshade of the denormalized depth scaled to [0, 1].
struct TileInput {
    Raster<float> depth01;  // normalized and inpainted
    Mask valid;             // original validity
    double depth_min = 0.0;
    double depth_max = 0.0;
    double pixel_size = 1.0;
};
TileInput prepare_tile(const GeoGrid& tile, const prep::InpaintConfig& ic = {});
TileInput prepare_tile(const prep::NormalizedChunk& chunk, const prep::InpaintConfig& ic = {});
// Writes the channels of `t` into sample i of x (x.c must equal in_channels).
void fill_input(const TileInput& t, int in_channels, Tensor4& x, std::size_t i);

enum class Schedule { Constant, Plateau, OneCycle };
std::string_view schedule_name(Schedule s);
Schedule parse_schedule(std::string_view s);

struct TrainConfig {
    int epochs = 40;
    double learning_rate = kDefaultLearningRate;  // peak rate for OneCycle
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Schedule schedule = Schedule::OneCycle;
    int batch_size = 64;
    int plateau_patience = 10;
    bool augment = true;  // random flips and quarter turns
    LossConfig loss;
    std::uint64_t seed = 0;
    prep::InpaintConfig inpaint;
    void check() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou_ship = 0.0;
    double learning_rate = 0.0;  // at the end of the epoch
};

struct TrainResult {
    ModelWeights weights;  // best validation IoU
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

struct TrainSample {
    TileInput input;
    LabelMask label;
};

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train_samples(const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
                          const NetConfig& net, const TrainConfig& tc, const EpochCallback& on_epoch = {});

// Loads train and val entries of the manifest. Throws EmptyManifest.
TrainResult train(const synth::DatasetManifest& manifest, const NetConfig& net, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

TrainSample load_sample(const synth::DatasetManifest& m, const synth::ManifestEntry& e, const prep::InpaintConfig& ic = {});

}  // namespace wreckseg::nn
