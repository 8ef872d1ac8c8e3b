#include "wreckseg/segnet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace wreckseg::nn {

void NetConfig::check() const {
    if (in_channels != 1 && in_channels != 2) fail(ErrorCode::InvalidArgument, "in_channels must be 1 or 2");
    if (stages < 1 || stages > 8) fail(ErrorCode::InvalidArgument, "stages must be in [1, 8]");
    if (base_channels < 1 || (static_cast<long>(base_channels) << stages) > 4096)
        fail(ErrorCode::InvalidArgument, "base_channels out of range");
    if (classes != 2) fail(ErrorCode::InvalidArgument, "only two classes are supported");
}

std::vector<TensorSpec> tensor_layout(const NetConfig& cfg) {
    cfg.check();
    std::vector<TensorSpec> out;
    const auto u = [](int v) { return static_cast<std::uint32_t>(v); };
    auto conv = [&](const std::string& name, int out_c, int in_c, int k) {
        out.push_back({name + ".weight", {u(out_c), u(in_c), u(k), u(k)}});
        out.push_back({name + ".bias", {u(out_c)}});
    };
    const int S = cfg.stages;
    const int b = cfg.base_channels;
    for (int s = 0; s < S; ++s) {
        const int in_c = s == 0 ? cfg.in_channels : b << (s - 1);
        conv("enc" + std::to_string(s) + ".conv0", b << s, in_c, 3);
        conv("enc" + std::to_string(s) + ".conv1", b << s, b << s, 3);
    }
    conv("mid.conv0", b << S, b << (S - 1), 3);
    conv("mid.conv1", b << S, b << S, 3);
    for (int s = S - 1; s >= 0; --s) {
        conv("dec" + std::to_string(s) + ".conv0", b << s, (b << (s + 1)) + (b << s), 3);
        conv("dec" + std::to_string(s) + ".conv1", b << s, b << s, 3);
    }
    conv("head", cfg.classes, b, 1);
    return out;
}

std::size_t parameter_count(const NetConfig& cfg) {
    std::size_t n = 0;
    for (const auto& t : tensor_layout(cfg)) {
        std::size_t k = 1;
        for (auto d : t.shape) k *= d;
        n += k;
    }
    return n;
}

const NamedTensor& ModelWeights::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    fail(ErrorCode::ShapeMismatchWithConfig, "missing tensor '" + name + "'");
}

NamedTensor& ModelWeights::get(const std::string& name) {
    return const_cast<NamedTensor&>(static_cast<const ModelWeights&>(*this).get(name));
}

ModelWeights init_model(const NetConfig& cfg, std::uint64_t seed) {
    ModelWeights w;
    w.config = cfg;
    Rng rng(seed);
    for (auto& spec : tensor_layout(cfg)) {
        NamedTensor t;
        t.name = spec.name;
        t.shape = spec.shape;
        std::size_t n = 1;
        for (auto d : t.shape) n *= d;
        t.data.assign(n, 0.0f);
        if (t.shape.size() == 4) {
            const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
            const double sd = std::sqrt(2.0 / fan_in);
            for (auto& v : t.data) v = static_cast<float>(rng.normal(0.0, sd));
        }
        w.tensors.push_back(std::move(t));
    }
    return w;
}

std::vector<std::vector<float>> params_of(const ModelWeights& w) {
    std::vector<std::vector<float>> p;
    for (const auto& t : w.tensors) p.push_back(t.data);
    return p;
}

std::vector<std::vector<double>> params_f64(const ModelWeights& w) {
    std::vector<std::vector<double>> p;
    for (const auto& t : w.tensors) p.emplace_back(t.data.begin(), t.data.end());
    return p;
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

// C x H x W activation.
template <typename T>
struct Act {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<T> v;
    Act() = default;
    Act(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, T{}) {}
    std::size_t hw() const { return h * w; }
};

template <typename T>
void im2col3(const Act<T>& x, std::vector<T>& col) {
    const std::size_t H = x.h, W = x.w, HW = H * W;
    col.assign(x.c * 9 * HW, T{});
    for (std::size_t c = 0; c < x.c; ++c) {
        const T* src = x.v.data() + c * HW;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = col.data() + (c * 9 + ky * 3 + kx) * HW;
                for (std::size_t y = 0; y < H; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    const T* row = src + sy * W;
                    T* out = dst + y * W;
                    // x + kx - 1 in [0, W)
                    const std::size_t x0 = kx == 0 ? 1 : 0;
                    const std::size_t x1 = kx == 2 ? W - 1 : W;
                    for (std::size_t xx = x0; xx < x1; ++xx) out[xx] = row[xx + kx - 1];
                }
            }
        }
    }
}

template <typename T>
void col2im3(const std::vector<T>& col, Act<T>& dx) {
    const std::size_t H = dx.h, W = dx.w, HW = H * W;
    for (std::size_t c = 0; c < dx.c; ++c) {
        T* dst = dx.v.data() + c * HW;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = col.data() + (c * 9 + ky * 3 + kx) * HW;
                for (std::size_t y = 0; y < H; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    T* row = dst + sy * W;
                    const T* in = src + y * W;
                    const std::size_t x0 = kx == 0 ? 1 : 0;
                    const std::size_t x1 = kx == 2 ? W - 1 : W;
                    for (std::size_t xx = x0; xx < x1; ++xx) row[xx + kx - 1] += in[xx];
                }
            }
        }
    }
}

// Records, or replays, every ReLU keep/drop decision and pool choice in
// evaluation order.
struct Tape {
    std::vector<std::uint8_t> bits;
    std::size_t pos = 0;
    bool replay = false;

    std::uint8_t take(std::uint8_t computed) {
        if (!replay) {
            bits.push_back(computed);
            return computed;
        }
        if (pos >= bits.size()) fail(ErrorCode::ShapeMismatch, "activation pattern too short");
        return bits[pos++];
    }
};

template <typename T>
struct Net {
    const NetConfig& cfg;
    const std::vector<std::vector<T>>& P;
    int S;
    Tape* tape = nullptr;

    std::size_t enc(int s, int k) const { return 4 * s + 2 * k; }
    std::size_t mid(int k) const { return 4 * S + 2 * k; }
    std::size_t dec(int s, int k) const { return 4 * S + 4 + 4 * (S - 1 - s) + 2 * k; }
    std::size_t head() const { return 8 * S + 4; }

    Act<T> conv(const Act<T>& x, std::size_t pi, bool k3, bool relu, std::vector<T>& scratch) const {
        const auto& Wt = P[pi];
        const auto& b = P[pi + 1];
        const std::size_t O = b.size();
        Act<T> y(O, x.h, x.w);
        const std::size_t K = k3 ? x.c * 9 : x.c;
        MapM<T> Y(y.v.data(), O, x.hw());
        if (k3) {
            im2col3(x, scratch);
            Y.noalias() = CMapM<T>(Wt.data(), O, K) * CMapM<T>(scratch.data(), K, x.hw());
        } else {
            Y.noalias() = CMapM<T>(Wt.data(), O, K) * CMapM<T>(x.v.data(), K, x.hw());
        }
        for (std::size_t o = 0; o < O; ++o) {
            T* row = y.v.data() + o * x.hw();
            for (std::size_t i = 0; i < x.hw(); ++i) {
                row[i] += b[o];
                if (!relu) continue;
                if (tape) {
                    if (!tape->take(row[i] > T{})) row[i] = T{};
                } else if (row[i] < T{}) {
                    row[i] = T{};
                }
            }
        }
        return y;
    }

    // dy is the gradient w.r.t. the layer output; it is overwritten with the
    // pre-activation gradient. Returns dx when wanted.
    Act<T> conv_back(const Act<T>& x, const Act<T>& y, Act<T>& dy, std::size_t pi, bool k3, bool relu,
                     std::vector<std::vector<T>>& G, bool want_dx, std::vector<T>& scratch) const {
        const auto& Wt = P[pi];
        const std::size_t O = P[pi + 1].size();
        const std::size_t HW = x.hw();
        const std::size_t K = k3 ? x.c * 9 : x.c;
        if (relu) {
            for (std::size_t i = 0; i < dy.v.size(); ++i)
                if (!(y.v[i] > T{})) dy.v[i] = T{};
        }
        CMapM<T> dZ(dy.v.data(), O, HW);
        auto& gb = G[pi + 1];
        for (std::size_t o = 0; o < O; ++o) {
            T s{};
            const T* row = dy.v.data() + o * HW;
            for (std::size_t i = 0; i < HW; ++i) s += row[i];
            gb[o] += s;
        }
        MapM<T> gW(G[pi].data(), O, K);
        if (k3) {
            im2col3(x, scratch);
            gW.noalias() += dZ * CMapM<T>(scratch.data(), K, HW).transpose();
        } else {
            gW.noalias() += dZ * CMapM<T>(x.v.data(), K, HW).transpose();
        }
        Act<T> dx;
        if (!want_dx) return dx;
        dx = Act<T>(x.c, x.h, x.w);
        if (k3) {
            std::vector<T> dcol(K * HW);
            MapM<T>(dcol.data(), K, HW).noalias() = CMapM<T>(Wt.data(), O, K).transpose() * dZ;
            col2im3(dcol, dx);
        } else {
            MapM<T>(dx.v.data(), K, HW).noalias() = CMapM<T>(Wt.data(), O, K).transpose() * dZ;
        }
        return dx;
    }
};

template <typename T>
Act<T> maxpool(const Act<T>& x, std::vector<std::uint8_t>& arg, Tape* tape) {
    Act<T> y(x.c, x.h / 2, x.w / 2);
    arg.assign(y.v.size(), 0);
    for (std::size_t c = 0; c < x.c; ++c) {
        for (std::size_t i = 0; i < y.h; ++i) {
            for (std::size_t j = 0; j < y.w; ++j) {
                const T* p = x.v.data() + (c * x.h + 2 * i) * x.w + 2 * j;
                const T cand[4] = {p[0], p[1], p[x.w], p[x.w + 1]};
                std::uint8_t best = 0;
                for (std::uint8_t k = 1; k < 4; ++k)
                    if (cand[k] > cand[best]) best = k;
                if (tape) best = tape->take(best);
                const std::size_t o = (c * y.h + i) * y.w + j;
                y.v[o] = cand[best];
                arg[o] = best;
            }
        }
    }
    return y;
}

template <typename T>
void maxpool_back(const Act<T>& dy, const std::vector<std::uint8_t>& arg, Act<T>& dx) {
    for (std::size_t c = 0; c < dy.c; ++c) {
        for (std::size_t i = 0; i < dy.h; ++i) {
            for (std::size_t j = 0; j < dy.w; ++j) {
                const std::size_t o = (c * dy.h + i) * dy.w + j;
                const std::size_t k = arg[o];
                dx.v[(c * dx.h + 2 * i + k / 2) * dx.w + 2 * j + k % 2] += dy.v[o];
            }
        }
    }
}

// 2x bilinear taps with half-pixel centres and edge clamping.
struct Tap {
    std::size_t i0, i1;
    double w0, w1;
};

std::vector<Tap> up_taps(std::size_t n) {
    std::vector<Tap> t(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
        if (src < 0) src = 0;
        const auto i0 = std::min(static_cast<std::size_t>(src), n - 1);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const double f = src - static_cast<double>(i0);
        t[i] = {i0, i1, 1.0 - f, f};
    }
    return t;
}

template <typename T>
Act<T> upsample(const Act<T>& x) {
    const auto ty = up_taps(x.h);
    const auto tx = up_taps(x.w);
    Act<T> y(x.c, 2 * x.h, 2 * x.w);
    std::vector<T> tmp(x.h * y.w);
    for (std::size_t c = 0; c < x.c; ++c) {
        const T* src = x.v.data() + c * x.hw();
        for (std::size_t r = 0; r < x.h; ++r)
            for (std::size_t j = 0; j < y.w; ++j)
                tmp[r * y.w + j] = static_cast<T>(tx[j].w0) * src[r * x.w + tx[j].i0] + static_cast<T>(tx[j].w1) * src[r * x.w + tx[j].i1];
        T* dst = y.v.data() + c * y.hw();
        for (std::size_t i = 0; i < y.h; ++i)
            for (std::size_t j = 0; j < y.w; ++j)
                dst[i * y.w + j] = static_cast<T>(ty[i].w0) * tmp[ty[i].i0 * y.w + j] + static_cast<T>(ty[i].w1) * tmp[ty[i].i1 * y.w + j];
    }
    return y;
}

// Adjoint of upsample; dx must be zero-initialised with the source shape.
template <typename T>
void upsample_back(const T* dy, Act<T>& dx) {
    const auto ty = up_taps(dx.h);
    const auto tx = up_taps(dx.w);
    const std::size_t H2 = 2 * dx.h, W2 = 2 * dx.w;
    std::vector<T> tmp(dx.h * W2);
    for (std::size_t c = 0; c < dx.c; ++c) {
        std::fill(tmp.begin(), tmp.end(), T{});
        const T* g = dy + c * H2 * W2;
        for (std::size_t i = 0; i < H2; ++i)
            for (std::size_t j = 0; j < W2; ++j) {
                tmp[ty[i].i0 * W2 + j] += static_cast<T>(ty[i].w0) * g[i * W2 + j];
                tmp[ty[i].i1 * W2 + j] += static_cast<T>(ty[i].w1) * g[i * W2 + j];
            }
        T* d = dx.v.data() + c * dx.hw();
        for (std::size_t r = 0; r < dx.h; ++r)
            for (std::size_t j = 0; j < W2; ++j) {
                d[r * dx.w + tx[j].i0] += static_cast<T>(tx[j].w0) * tmp[r * W2 + j];
                d[r * dx.w + tx[j].i1] += static_cast<T>(tx[j].w1) * tmp[r * W2 + j];
            }
    }
}

template <typename T>
Act<T> concat(const Act<T>& a, const Act<T>& b) {
    Act<T> y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return y;
}

std::size_t reflect(std::size_t i, std::size_t n) {
    if (i < n) return i;
    if (n == 1) return 0;
    const std::size_t period = 2 * (n - 1);
    const std::size_t m = i % period;
    return m < n ? m : period - m;
}

template <typename T>
struct Cache {
    Act<T> input;
    std::vector<Act<T>> enc_a, enc_b, pooled, cat, dec_a, dec_b;
    std::vector<std::vector<std::uint8_t>> arg;
    Act<T> mid_a, mid_b, logits;
};

template <typename T>
void run_forward(const Net<T>& net, Cache<T>& k, std::vector<T>& scratch) {
    const int S = net.S;
    k.enc_a.resize(S);
    k.enc_b.resize(S);
    k.pooled.resize(S);
    k.arg.resize(S);
    k.cat.resize(S);
    k.dec_a.resize(S);
    k.dec_b.resize(S);
    const Act<T>* in = &k.input;
    for (int s = 0; s < S; ++s) {
        k.enc_a[s] = net.conv(*in, net.enc(s, 0), true, true, scratch);
        k.enc_b[s] = net.conv(k.enc_a[s], net.enc(s, 1), true, true, scratch);
        k.pooled[s] = maxpool(k.enc_b[s], k.arg[s], net.tape);
        in = &k.pooled[s];
    }
    k.mid_a = net.conv(*in, net.mid(0), true, true, scratch);
    k.mid_b = net.conv(k.mid_a, net.mid(1), true, true, scratch);
    const Act<T>* prev = &k.mid_b;
    for (int s = S - 1; s >= 0; --s) {
        k.cat[s] = concat(upsample(*prev), k.enc_b[s]);
        k.dec_a[s] = net.conv(k.cat[s], net.dec(s, 0), true, true, scratch);
        k.dec_b[s] = net.conv(k.dec_a[s], net.dec(s, 1), true, true, scratch);
        prev = &k.dec_b[s];
    }
    k.logits = net.conv(*prev, net.head(), false, false, scratch);
}

// dlogits in padded coordinates; gradients accumulate into G.
template <typename T>
void run_backward(const Net<T>& net, const Cache<T>& k, Act<T>& dlogits, std::vector<std::vector<T>>& G, std::vector<T>& scratch) {
    const int S = net.S;
    Act<T> d = net.conv_back(k.dec_b[0], k.logits, dlogits, net.head(), false, false, G, true, scratch);
    std::vector<Act<T>> dskip(S);
    for (int s = 0; s < S; ++s) {
        Act<T> da = net.conv_back(k.dec_a[s], k.dec_b[s], d, net.dec(s, 1), true, true, G, true, scratch);
        Act<T> dcat = net.conv_back(k.cat[s], k.dec_a[s], da, net.dec(s, 0), true, true, G, true, scratch);
        const Act<T>& below = s == S - 1 ? k.mid_b : k.dec_b[s + 1];
        const std::size_t up_elems = below.c * dcat.hw();
        dskip[s] = Act<T>(k.enc_b[s].c, k.enc_b[s].h, k.enc_b[s].w);
        std::copy(dcat.v.begin() + static_cast<std::ptrdiff_t>(up_elems), dcat.v.end(), dskip[s].v.begin());
        Act<T> dbelow(below.c, below.h, below.w);
        upsample_back(dcat.v.data(), dbelow);
        d = std::move(dbelow);
    }
    Act<T> dma = net.conv_back(k.mid_a, k.mid_b, d, net.mid(1), true, true, G, true, scratch);
    d = net.conv_back(k.pooled[S - 1], k.mid_a, dma, net.mid(0), true, true, G, true, scratch);
    for (int s = S - 1; s >= 0; --s) {
        Act<T> db = std::move(dskip[s]);
        maxpool_back(d, k.arg[s], db);
        Act<T> da = net.conv_back(k.enc_a[s], k.enc_b[s], db, net.enc(s, 1), true, true, G, true, scratch);
        const Act<T>& in = s == 0 ? k.input : k.pooled[s - 1];
        d = net.conv_back(in, k.enc_a[s], da, net.enc(s, 0), true, true, G, s > 0, scratch);
    }
}

template <typename T>
void check_params(const NetConfig& cfg, const std::vector<std::vector<T>>& params) {
    const auto layout = tensor_layout(cfg);
    if (params.size() != layout.size()) fail(ErrorCode::ShapeMismatchWithConfig, "parameter count differs from config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        std::size_t n = 1;
        for (auto d : layout[i].shape) n *= d;
        if (params[i].size() != n) fail(ErrorCode::ShapeMismatchWithConfig, "tensor '" + layout[i].name + "' has the wrong size");
    }
}

template <typename T>
Act<T> padded_input(const NetConfig& cfg, const Tensor4T<T>& x, std::size_t i) {
    const std::size_t m = static_cast<std::size_t>(cfg.multiple());
    const std::size_t H = (x.h + m - 1) / m * m;
    const std::size_t W = (x.w + m - 1) / m * m;
    Act<T> a(x.c, H, W);
    for (std::size_t c = 0; c < x.c; ++c)
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t q = 0; q < W; ++q) a.v[(c * H + r) * W + q] = x.at(i, c, reflect(r, x.h), reflect(q, x.w));
    return a;
}

template <typename T>
void check_input(const NetConfig& cfg, const Tensor4T<T>& x) {
    if (x.n < 1 || x.h < 1 || x.w < 1) fail(ErrorCode::ShapeMismatch, "input tensor is empty");
    if (x.c != static_cast<std::size_t>(cfg.in_channels)) fail(ErrorCode::ShapeMismatch, "input channels differ from in_channels");
    if (x.data.size() != x.n * x.c * x.h * x.w) fail(ErrorCode::ShapeMismatch, "input buffer size mismatch");
}

}  // namespace

template <typename T>
Tensor4T<T> forward_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x) {
    cfg.check();
    check_params(cfg, params);
    check_input(cfg, x);
    Net<T> net{cfg, params, cfg.stages};
    Tensor4T<T> out(x.n, static_cast<std::size_t>(cfg.classes), x.h, x.w);
    std::vector<T> scratch;
    for (std::size_t i = 0; i < x.n; ++i) {
        Cache<T> k;
        k.input = padded_input(cfg, x, i);
        run_forward(net, k, scratch);
        for (std::size_t c = 0; c < out.c; ++c)
            for (std::size_t r = 0; r < x.h; ++r)
                for (std::size_t q = 0; q < x.w; ++q) out.at(i, c, r, q) = k.logits.v[(c * k.logits.h + r) * k.logits.w + q];
    }
    return out;
}

namespace {

template <typename T>
LossResult<T> loss_impl(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x, const Targets& y,
                        const LossConfig& lc, bool want_grads, Tape* tape) {
    cfg.check();
    check_params(cfg, params);
    check_input(cfg, x);
    if (y.labels.size() != x.n) fail(ErrorCode::ShapeMismatch, "one label per sample required");
    if (!y.valid.empty() && y.valid.size() != x.n) fail(ErrorCode::ShapeMismatch, "one validity mask per sample required");
    for (std::size_t i = 0; i < x.n; ++i) {
        if (!y.labels[i].same_shape(x.h, x.w)) fail(ErrorCode::ShapeMismatch, "label shape differs from input");
        if (!y.valid.empty() && !y.valid[i].same_shape(x.h, x.w)) fail(ErrorCode::ShapeMismatch, "mask shape differs from input");
    }
    const auto counted = [&](std::size_t i, std::size_t p) { return y.valid.empty() || y.valid[i].data[p] != 0; };
    const auto weight = [&](std::size_t i, std::size_t p) { return lc.class_weights[y.labels[i].data[p] ? 1 : 0]; };

    double total_w = 0.0;
    for (std::size_t i = 0; i < x.n; ++i)
        for (std::size_t p = 0; p < x.plane(); ++p)
            if (counted(i, p)) total_w += weight(i, p);

    LossResult<T> res;
    res.weight_sum = total_w;
    res.per_sample_loss.assign(x.n, 0.0);
    res.per_sample_weight.assign(x.n, 0.0);
    if (want_grads) {
        res.grads.resize(params.size());
        for (std::size_t t = 0; t < params.size(); ++t) res.grads[t].assign(params[t].size(), T{});
    }
    Net<T> net{cfg, params, cfg.stages, tape};
    std::vector<T> scratch;
    double loss_num = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
        Cache<T> k;
        k.input = padded_input(cfg, x, i);
        run_forward(net, k, scratch);
        const std::size_t Hp = k.logits.h, Wp = k.logits.w, HWp = Hp * Wp;
        Act<T> dlog(2, Hp, Wp);
        double num = 0.0, den = 0.0;
        for (std::size_t r = 0; r < x.h; ++r) {
            for (std::size_t q = 0; q < x.w; ++q) {
                const std::size_t p = r * x.w + q;
                if (!counted(i, p)) continue;
                const T z0 = k.logits.v[r * Wp + q];
                const T z1 = k.logits.v[HWp + r * Wp + q];
                const T mx = std::max(z0, z1);
                const T lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
                const int cls = y.labels[i].data[p] ? 1 : 0;
                const double wgt = lc.class_weights[cls];
                num += wgt * static_cast<double>(lse - (cls ? z1 : z0));
                den += wgt;
                if (want_grads && total_w > 0) {
                    const T p1 = std::exp(z1 - lse);
                    const T scale = static_cast<T>(wgt / total_w);
                    const T g1 = (p1 - static_cast<T>(cls)) * scale;
                    dlog.v[r * Wp + q] = -g1;
                    dlog.v[HWp + r * Wp + q] = g1;
                }
            }
        }
        res.per_sample_loss[i] = den > 0 ? num / den : 0.0;
        res.per_sample_weight[i] = den;
        loss_num += num;
        if (want_grads && total_w > 0) run_backward(net, k, dlog, res.grads, scratch);
    }
    res.loss = static_cast<T>(total_w > 0 ? loss_num / total_w : 0.0);
    return res;
}

}  // namespace

template <typename T>
LossResult<T> loss_and_grad_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x,
                              const Targets& y, const LossConfig& lc, bool want_grads) {
    return loss_impl(cfg, params, x, y, lc, want_grads, nullptr);
}

template Tensor4T<float> forward_t(const NetConfig&, const std::vector<std::vector<float>>&, const Tensor4T<float>&);
template Tensor4T<double> forward_t(const NetConfig&, const std::vector<std::vector<double>>&, const Tensor4T<double>&);
template LossResult<float> loss_and_grad_t(const NetConfig&, const std::vector<std::vector<float>>&, const Tensor4T<float>&,
                                           const Targets&, const LossConfig&, bool);
template LossResult<double> loss_and_grad_t(const NetConfig&, const std::vector<std::vector<double>>&, const Tensor4T<double>&,
                                            const Targets&, const LossConfig&, bool);

template <typename T>
std::vector<std::uint8_t> activation_pattern(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x) {
    cfg.check();
    check_params(cfg, params);
    check_input(cfg, x);
    Tape tape;
    Net<T> net{cfg, params, cfg.stages, &tape};
    std::vector<T> scratch;
    for (std::size_t i = 0; i < x.n; ++i) {
        Cache<T> k;
        k.input = padded_input(cfg, x, i);
        run_forward(net, k, scratch);
    }
    return std::move(tape.bits);
}

template <typename T>
T loss_on_pattern_t(const NetConfig& cfg, const std::vector<std::vector<T>>& params, const Tensor4T<T>& x, const Targets& y,
                    const LossConfig& lc, const std::vector<std::uint8_t>& pattern) {
    Tape tape;
    tape.bits = pattern;
    tape.replay = true;
    return loss_impl(cfg, params, x, y, lc, false, &tape).loss;
}

template std::vector<std::uint8_t> activation_pattern(const NetConfig&, const std::vector<std::vector<double>>&, const Tensor4T<double>&);
template std::vector<std::uint8_t> activation_pattern(const NetConfig&, const std::vector<std::vector<float>>&, const Tensor4T<float>&);
template double loss_on_pattern_t(const NetConfig&, const std::vector<std::vector<double>>&, const Tensor4T<double>&, const Targets&,
                                  const LossConfig&, const std::vector<std::uint8_t>&);
Tensor4 forward(const ModelWeights& w, const Tensor4& x) {
    if (x.c != static_cast<std::size_t>(w.config.in_channels) && x.n > 0)
        fail(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.c) + " channels, model expects " +
                                           std::to_string(w.config.in_channels));
    return forward_t(w.config, params_of(w), x);
}

LossResult<float> loss_and_grad(const ModelWeights& w, const Tensor4& x, const Targets& y, const LossConfig& lc) {
    return loss_and_grad_t(w.config, params_of(w), x, y, lc, true);
}

std::vector<Raster<float>> ship_probability(const Tensor4& logits) {
    if (logits.c != 2) fail(ErrorCode::ShapeMismatch, "expected two logit channels");
    std::vector<Raster<float>> out;
    for (std::size_t i = 0; i < logits.n; ++i) {
        Raster<float> p(logits.h, logits.w);
        for (std::size_t r = 0; r < logits.h; ++r)
            for (std::size_t q = 0; q < logits.w; ++q) {
                const double d = static_cast<double>(logits.at(i, 0, r, q)) - logits.at(i, 1, r, q);
                p(r, q) = static_cast<float>(1.0 / (1.0 + std::exp(d)));
            }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace wreckseg::nn
