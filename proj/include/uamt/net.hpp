#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uamt/array.hpp"
#include "uamt/common.hpp"
#include "uamt/kernels.hpp"
#include "uamt/rng.hpp"

namespace uamt {

// Encoder/decoder segmentation backbone. Each encoder stage is one 3x3x3
// conv block followed by a strided 2x2x2 down-convolution; the decoder
// mirrors it with nearest-neighbor upsampling, a skip concatenation and one
// conv block per stage. Plain conv blocks, no intra-block residuals.
// Dropout sites sit after the bottleneck block and after the first
// (coarsest) decoder block.
struct NetConfig {
    int in_channels = 1;
    int num_classes = 2;
    int base_width = 8;
    int num_stages = 3;
    double dropout_rate = 0.5;

    bool operator==(const NetConfig&) const = default;

    void validate() const {
        if (in_channels < 1) throw ConfigError("net: in_channels must be >= 1");
        if (num_classes < 2) throw ConfigError("net: num_classes must be >= 2");
        if (base_width < 1) throw ConfigError("net: base_width must be >= 1");
        if (num_stages < 1) throw ConfigError("net: num_stages must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("net: dropout_rate must lie in [0, 1)");
    }
};

// Perturbation switches for one forward pass. With noise_sigma == 0 and
// dropout_on == false the pass is a deterministic function of (params,
// input). Noise and dropout realizations are pure functions of `seed`, so
// repeated passes with one mode are identical, including across backward.
struct ForwardMode {
    bool dropout_on = false;
    double noise_sigma = 0.0;
    double noise_clip = 0.0;
    uint64_t seed = 0;
};

using Fingerprint = std::vector<std::pair<std::string, std::vector<int64_t>>>;

template <typename T>
struct ParamSet {
    struct Entry {
        std::string name;
        Array<T> value;
    };
    std::vector<Entry> entries;

    Fingerprint fingerprint() const {
        Fingerprint fp;
        fp.reserve(entries.size());
        for (const auto& e : entries) fp.emplace_back(e.name, e.value.shape);
        return fp;
    }

    int64_t total_size() const {
        int64_t n = 0;
        for (const auto& e : entries) n += e.value.size();
        return n;
    }

    ParamSet zeros_like() const {
        ParamSet z;
        z.entries.reserve(entries.size());
        for (const auto& e : entries) z.entries.push_back({e.name, Array<T>(e.value.shape)});
        return z;
    }

    bool all_finite() const {
        for (const auto& e : entries)
            if (!kernels::all_finite(e.value.size(), e.value.data())) return false;
        return true;
    }

    const Entry& at(std::string_view name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw ConfigError("param set: no parameter named " + std::string(name));
    }
    Entry& at(std::string_view name) {
        return const_cast<Entry&>(std::as_const(*this).at(name));
    }
};

// Reusable per-pass buffers; holds every layer output so skips and backward
// can read them. `mode` and `batch` snapshot the pass that filled it.
template <typename T>
struct Workspace {
    Array<T> net_input;
    std::vector<Array<T>> outs;
    ForwardMode mode;
    int batch = 0;
    std::array<int64_t, 3> spatial{};
};

template <typename T>
struct BackwardWorkspace {
    std::vector<Array<T>> grads;
};

namespace detail {
template <typename T>
void ensure_shape(Array<T>& a, std::vector<int64_t> s) {
    if (a.shape != s) a = Array<T>(std::move(s));
}
}  // namespace detail

template <typename T>
class Net {
public:
    explicit Net(NetConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
    }

    const NetConfig& config() const { return cfg_; }
    int spatial_divisor() const { return 1 << cfg_.num_stages; }

    ParamSet<T> init_params(uint64_t seed) const {
        Rng rng(seed);
        ParamSet<T> p;
        p.entries.reserve(specs_.size());
        for (const auto& s : specs_) {
            Array<T> a(s.shape);
            if (s.fan_in > 0) {  // conv kernel: fan-in scaled normal
                const double std = std::sqrt(2.0 / double(s.fan_in));
                for (int64_t i = 0; i < a.size(); ++i) a[i] = T(std * rng.normal());
            }
            p.entries.push_back({s.name, std::move(a)});
        }
        return p;
    }

    Fingerprint fingerprint() const {
        Fingerprint fp;
        fp.reserve(specs_.size());
        for (const auto& s : specs_) fp.emplace_back(s.name, s.shape);
        return fp;
    }

    // input: (B, in_channels, D, H, W); returns logits (B, num_classes, D, H, W)
    // living inside `ws` until the next pass.
    const Array<T>& forward(const ParamSet<T>& params, const Array<T>& input, const ForwardMode& mode,
                            Workspace<T>& ws) const {
        check_input(input);
        if (params.fingerprint() != fingerprint())
            throw ShapeError("net: parameter fingerprint does not match this architecture");

        const int B = int(input.dim(0));
        const int64_t D = input.dim(2), H = input.dim(3), W = input.dim(4);
        ws.mode = mode;
        ws.batch = B;
        ws.spatial = {D, H, W};
        detail::ensure_shape(ws.net_input, input.shape);
        const int64_t item = input.size() / B;
        if (mode.noise_sigma > 0.0) {
            for (int b = 0; b < B; ++b)
                kernels::add_clipped_noise(item, input.data() + b * item, ws.net_input.data() + b * item,
                                           mix_seed(mode.seed, kNoiseTag, uint64_t(b)), mode.noise_sigma,
                                           mode.noise_clip);
        } else {
            ws.net_input.v = input.v;
        }

        ws.outs.resize(layers_.size());
        for (size_t li = 0; li < layers_.size(); ++li) {
            const LayerDef& L = layers_[li];
            const Array<T>& src = L.input < 0 ? ws.net_input : ws.outs[size_t(L.input)];
            Array<T>& dst = ws.outs[li];
            const auto [d, h, w] = spatial_at(L.level, D, H, W);
            detail::ensure_shape(dst, {B, int64_t(L.out_channels), d, h, w});
            switch (L.op) {
                case Op::Conv: {
                    const auto cd = conv_dims(L, B, src);
                    kernels::conv3d_forward(cd, src.data(), params.entries[size_t(2 * L.param)].value.data(),
                                            params.entries[size_t(2 * L.param + 1)].value.data(), dst.data());
                    break;
                }
                case Op::Elu:
                    kernels::elu_forward(src.size(), src.data(), dst.data());
                    break;
                case Op::Dropout:
                    if (mode.dropout_on) {
                        const double keep = 1.0 - cfg_.dropout_rate;
                        const int64_t per = src.size() / B;
                        for (int b = 0; b < B; ++b)
                            kernels::dropout_forward(per, src.data() + b * per, dst.data() + b * per,
                                                     mix_seed(mode.seed, kDropTag, uint64_t(L.site), uint64_t(b)),
                                                     keep);
                    } else {
                        dst.v = src.v;
                    }
                    break;
                case Op::Upsample:
                    kernels::upsample2_forward(B, L.out_channels, int(src.dim(2)), int(src.dim(3)),
                                               int(src.dim(4)), src.data(), dst.data());
                    break;
                case Op::Concat: {
                    const Array<T>& skip = ws.outs[size_t(L.skip)];
                    const int c1 = int(src.dim(1)), c2 = int(skip.dim(1));
                    kernels::concat_channels(B, c1, c2, d * h * w, src.data(), skip.data(), dst.data());
                    break;
                }
            }
        }
        return ws.outs.back();
    }

    // Gradient of a scalar objective w.r.t. params, given d(objective)/d(logits).
    // `ws` must hold the forward pass the gradient refers to.
    void backward(const ParamSet<T>& params, const Workspace<T>& ws, const Array<T>& dlogits,
                  ParamSet<T>& grad_out, BackwardWorkspace<T>& bws) const {
        if (params.fingerprint() != fingerprint() || grad_out.fingerprint() != fingerprint())
            throw ShapeError("net: gradient fingerprint does not match this architecture");
        if (dlogits.shape != ws.outs.back().shape)
            throw ShapeError("net: dlogits shape " + dlogits.shape_str() + " does not match logits " +
                             ws.outs.back().shape_str());

        for (auto& e : grad_out.entries) e.value.fill(T(0));
        bws.grads.resize(layers_.size());
        for (size_t li = 0; li < layers_.size(); ++li) {
            detail::ensure_shape(bws.grads[li], ws.outs[li].shape);
            bws.grads[li].fill(T(0));
        }
        bws.grads.back().v = dlogits.v;

        const int B = ws.batch;
        for (size_t li = layers_.size(); li-- > 0;) {
            const LayerDef& L = layers_[li];
            const Array<T>& gout = bws.grads[li];
            const Array<T>& src = L.input < 0 ? ws.net_input : ws.outs[size_t(L.input)];
            switch (L.op) {
                case Op::Conv: {
                    const auto cd = conv_dims(L, B, src);
                    kernels::conv3d_backward_params(cd, src.data(), gout.data(),
                                                    grad_out.entries[size_t(2 * L.param)].value.data(),
                                                    grad_out.entries[size_t(2 * L.param + 1)].value.data());
                    if (L.input >= 0)
                        kernels::conv3d_backward_input(cd, params.entries[size_t(2 * L.param)].value.data(),
                                                       gout.data(), bws.grads[size_t(L.input)].data());
                    break;
                }
                case Op::Elu:
                    kernels::elu_backward(gout.size(), ws.outs[li].data(), gout.data(),
                                          bws.grads[size_t(L.input)].data());
                    break;
                case Op::Dropout:
                    if (ws.mode.dropout_on) {
                        const double keep = 1.0 - cfg_.dropout_rate;
                        const int64_t per = gout.size() / B;
                        for (int b = 0; b < B; ++b)
                            kernels::dropout_backward(per, gout.data() + b * per,
                                                      bws.grads[size_t(L.input)].data() + b * per,
                                                      mix_seed(ws.mode.seed, kDropTag, uint64_t(L.site), uint64_t(b)),
                                                      keep);
                    } else {
                        kernels::add_inplace(gout.size(), gout.data(), bws.grads[size_t(L.input)].data());
                    }
                    break;
                case Op::Upsample: {
                    const Array<T>& below = ws.outs[size_t(L.input)];
                    kernels::upsample2_backward(B, L.out_channels, int(below.dim(2)), int(below.dim(3)),
                                                int(below.dim(4)), gout.data(), bws.grads[size_t(L.input)].data());
                    break;
                }
                case Op::Concat: {
                    const Array<T>& skip = ws.outs[size_t(L.skip)];
                    const int c1 = int(src.dim(1)), c2 = int(skip.dim(1));
                    kernels::concat_channels_backward(B, c1, c2, gout.size() / (int64_t(B) * (c1 + c2)),
                                                      gout.data(), bws.grads[size_t(L.input)].data(),
                                                      bws.grads[size_t(L.skip)].data());
                    break;
                }
            }
        }
    }

    ParamSet<T> backward(const ParamSet<T>& params, const Workspace<T>& ws, const Array<T>& dlogits) const {
        ParamSet<T> g = params.zeros_like();
        BackwardWorkspace<T> bws;
        backward(params, ws, dlogits, g, bws);
        return g;
    }

private:
    enum class Op { Conv, Elu, Dropout, Upsample, Concat };

    struct LayerDef {
        Op op;
        int input = -1;  // producer layer index; -1 is the (perturbed) net input
        int skip = -1;   // Concat only
        int param = -1;  // Conv only: param pair index pp -> entries[2pp], [2pp+1]
        int k = 0, stride = 1, pad = 0;
        int out_channels = 0;
        int level = 0;  // log2 downsampling of the output grid
        int site = -1;  // Dropout site id
    };

    struct ParamSpec {
        std::string name;
        std::vector<int64_t> shape;
        int64_t fan_in;  // 0 for biases
    };

    static constexpr uint64_t kNoiseTag = 0x6e6f697365ULL;  // per-item input noise
    static constexpr uint64_t kDropTag = 0x64726f70ULL;     // per-site, per-item masks

    void build() {
        const int S = cfg_.num_stages;
        auto width = [&](int i) { return cfg_.base_width << i; };
        std::vector<int> skip_of(static_cast<size_t>(S), -1);
        std::vector<int> skip_ch(static_cast<size_t>(S), 0);
        int cur = -1, ch = cfg_.in_channels, level = 0;

        auto add_conv = [&](const std::string& name, int k, int s, int p, int co, int out_level) {
            const int pp = int(specs_.size()) / 2;
            specs_.push_back({name + ".w", {co, ch, k, k, k}, int64_t(ch) * k * k * k});
            specs_.push_back({name + ".b", {co}, 0});
            layers_.push_back({Op::Conv, cur, -1, pp, k, s, p, co, out_level, -1});
            cur = int(layers_.size()) - 1;
            ch = co;
            level = out_level;
        };
        auto add_elu = [&] {
            layers_.push_back({Op::Elu, cur, -1, -1, 0, 1, 0, ch, level, -1});
            cur = int(layers_.size()) - 1;
        };
        auto add_dropout = [&](int site) {
            layers_.push_back({Op::Dropout, cur, -1, -1, 0, 1, 0, ch, level, site});
            cur = int(layers_.size()) - 1;
        };

        for (int i = 0; i < S; ++i) {
            add_conv("enc" + std::to_string(i), 3, 1, 1, width(i), level);
            add_elu();
            skip_of[size_t(i)] = cur;
            skip_ch[size_t(i)] = ch;
            add_conv("down" + std::to_string(i), 2, 2, 0, width(i + 1), level + 1);
            add_elu();
        }
        add_conv("bott", 3, 1, 1, width(S), level);
        add_elu();
        add_dropout(0);
        for (int j = S - 1; j >= 0; --j) {
            layers_.push_back({Op::Upsample, cur, -1, -1, 0, 1, 0, ch, level - 1, -1});
            cur = int(layers_.size()) - 1;
            level -= 1;
            layers_.push_back(
                {Op::Concat, cur, skip_of[size_t(j)], -1, 0, 1, 0, ch + skip_ch[size_t(j)], level, -1});
            cur = int(layers_.size()) - 1;
            ch += skip_ch[size_t(j)];
            add_conv("dec" + std::to_string(j), 3, 1, 1, width(j), level);
            add_elu();
            if (j == S - 1) add_dropout(1);
        }
        add_conv("head", 1, 1, 0, cfg_.num_classes, level);
    }

    void check_input(const Array<T>& input) const {
        if (input.rank() != 5)
            throw ShapeError("net: expected a (B, C, D, H, W) input, got rank " + std::to_string(input.rank()));
        if (input.dim(1) != cfg_.in_channels)
            throw ShapeError("net: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                             std::to_string(input.dim(1)));
        const char* axis_name[3] = {"depth", "height", "width"};
        const int div = spatial_divisor();
        for (int a = 0; a < 3; ++a) {
            const int64_t n = input.dim(2 + a);
            if (n % div != 0)
                throw ShapeError("net: input " + std::string(axis_name[a]) + " " + std::to_string(n) +
                                 " is not divisible by " + std::to_string(div));
        }
    }

    static std::tuple<int64_t, int64_t, int64_t> spatial_at(int level, int64_t D, int64_t H, int64_t W) {
        return {D >> level, H >> level, W >> level};
    }

    kernels::ConvDims conv_dims(const LayerDef& L, int B, const Array<T>& src) const {
        return kernels::ConvDims::make(B, int(src.dim(1)), int(src.dim(2)), int(src.dim(3)), int(src.dim(4)),
                                       L.out_channels, L.k, L.stride, L.pad);
    }

    NetConfig cfg_;
    std::vector<LayerDef> layers_;
    std::vector<ParamSpec> specs_;
};

}  // namespace uamt
