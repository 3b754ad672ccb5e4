#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bandsel/layers.hpp"
#include "bandsel/rng.hpp"
#include "bandsel/tensor.hpp"

namespace bandsel {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class HeadKind { GAP, FC };

struct ModelConfig {
    int input_bands = 3;                 // C, first-layer filter depth
    int input_h = 32;
    int input_w = 32;
    std::vector<std::pair<int, int>> blocks{{16, 2}, {32, 2}};  // (filters, conv layers)
    int kernel = 3;
    bool batchnorm = true;
    HeadKind head = HeadKind::GAP;
    int head_dim = 0;                    // FC head width; 0 -> 8x last filter count
    int num_classes = 2;

    void validate() const {
        if (input_bands < 1) throw ConfigError("model: input_bands must be >= 1");
        if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
        if (kernel < 1 || kernel % 2 == 0)
            throw ConfigError("model: kernel size must be odd and positive");
        if (blocks.empty()) throw ConfigError("model: at least one conv block required");
        int h = input_h, w = input_w;
        for (const auto& b : blocks) {
            if (b.first < 1 || b.second < 1)
                throw ConfigError("model: block filter/layer counts must be positive");
            if (h % 2 != 0 || w % 2 != 0)
                throw ConfigError("model: input " + std::to_string(input_h) + "x" +
                                  std::to_string(input_w) + " not divisible by 2^" +
                                  std::to_string(blocks.size()) + " pooling stages");
            h /= 2;
            w /= 2;
        }
    }

    int resolved_head_dim() const {
        if (head != HeadKind::FC) return 0;
        return head_dim > 0 ? head_dim : 8 * blocks.back().first;
    }
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct ParamRef {
    TensorT<T>* value;
    TensorT<T>* grad;
};

template <typename T>
class LayerBase {
   public:
    virtual ~LayerBase() = default;
    virtual TensorT<T> forward(const TensorT<T>& x, bool training) = 0;
    virtual TensorT<T> backward(const TensorT<T>& gy) = 0;
    virtual void collect_params(std::vector<ParamRef<T>>& out) { (void)out; }
    // Tensors persisted in checkpoints, in order: parameters plus any
    // running state (batch norm statistics).
    virtual void collect_state(std::vector<TensorT<T>*>& out) { (void)out; }
    virtual std::string kind() const = 0;
};

template <typename T>
class ConvLayer : public LayerBase<T> {
   public:
    ConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t k, int stride, int pad)
        : bank_(out_ch, in_ch, k, k), bias_({out_ch}), gbias_({out_ch}),
          stride_(stride), pad_(pad) {}

    TensorT<T> forward(const TensorT<T>& x, bool) override {
        x_ = x;
        return conv2d(x, bank_.weights, bias_, stride_, pad_);
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        TensorT<T> gx;
        conv2d_backward(x_, bank_.weights, gy, stride_, pad_, gx, bank_.grad, gbias_);
        return gx;
    }
    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({&bank_.weights, &bank_.grad});
        out.push_back({&bias_, &gbias_});
    }
    void collect_state(std::vector<TensorT<T>*>& out) override {
        out.push_back(&bank_.weights);
        out.push_back(&bias_);
    }
    std::string kind() const override { return "conv"; }

    FilterBank4T<T>& bank() { return bank_; }
    const FilterBank4T<T>& bank() const { return bank_; }

   private:
    FilterBank4T<T> bank_;
    TensorT<T> bias_, gbias_;
    int stride_, pad_;
    TensorT<T> x_;
};

template <typename T>
class BatchNormLayer : public LayerBase<T> {
   public:
    explicit BatchNormLayer(std::size_t channels, T momentum = T(0.9), T eps = T(1e-5))
        : gamma_({channels}, T(1)), beta_({channels}), ggamma_({channels}),
          gbeta_({channels}), running_mean_({channels}), running_var_({channels}, T(1)),
          momentum_(momentum), eps_(eps) {}

    TensorT<T> forward(const TensorT<T>& x, bool training) override {
        return batchnorm(x, gamma_, beta_, running_mean_, running_var_, training,
                         momentum_, eps_, &cache_);
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        TensorT<T> gx;
        batchnorm_backward(gy, gamma_, cache_, gx, ggamma_, gbeta_);
        return gx;
    }
    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({&gamma_, &ggamma_});
        out.push_back({&beta_, &gbeta_});
    }
    void collect_state(std::vector<TensorT<T>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
        out.push_back(&running_mean_);
        out.push_back(&running_var_);
    }
    std::string kind() const override { return "batchnorm"; }

   private:
    TensorT<T> gamma_, beta_, ggamma_, gbeta_, running_mean_, running_var_;
    T momentum_, eps_;
    BatchNormCache<T> cache_;
};

template <typename T>
class ReluLayer : public LayerBase<T> {
   public:
    TensorT<T> forward(const TensorT<T>& x, bool) override {
        x_ = x;
        return relu(x);
    }
    TensorT<T> backward(const TensorT<T>& gy) override { return relu_backward(x_, gy); }
    std::string kind() const override { return "relu"; }

   private:
    TensorT<T> x_;
};

template <typename T>
class MaxPoolLayer : public LayerBase<T> {
   public:
    TensorT<T> forward(const TensorT<T>& x, bool) override {
        in_shape_ = x.shape;
        return maxpool2(x, &argmax_);
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        TensorT<T> dummy(in_shape_);
        return maxpool2_backward(dummy, gy, argmax_);
    }
    std::string kind() const override { return "maxpool"; }

   private:
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

template <typename T>
class FlattenLayer : public LayerBase<T> {
   public:
    TensorT<T> forward(const TensorT<T>& x, bool) override {
        in_shape_ = x.shape;
        TensorT<T> y = x;
        y.reshape({x.dim(0), x.size() / x.dim(0)});
        return y;
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        TensorT<T> gx = gy;
        gx.reshape(in_shape_);
        return gx;
    }
    std::string kind() const override { return "flatten"; }

   private:
    std::vector<std::size_t> in_shape_;
};

template <typename T>
class GapLayer : public LayerBase<T> {
   public:
    TensorT<T> forward(const TensorT<T>& x, bool) override {
        in_shape_ = x.shape;
        return global_avg_pool(x);
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        return global_avg_pool_backward(in_shape_, gy);
    }
    std::string kind() const override { return "gap"; }

   private:
    std::vector<std::size_t> in_shape_;
};

template <typename T>
class FcLayer : public LayerBase<T> {
   public:
    FcLayer(std::size_t in, std::size_t out)
        : W_({out, in}), b_({out}), gW_({out, in}), gb_({out}) {}

    TensorT<T> forward(const TensorT<T>& x, bool) override {
        x_ = x;
        return fully_connected(x, W_, b_);
    }
    TensorT<T> backward(const TensorT<T>& gy) override {
        TensorT<T> gx;
        fully_connected_backward(x_, W_, gy, gx, gW_, gb_);
        return gx;
    }
    void collect_params(std::vector<ParamRef<T>>& out) override {
        out.push_back({&W_, &gW_});
        out.push_back({&b_, &gb_});
    }
    void collect_state(std::vector<TensorT<T>*>& out) override {
        out.push_back(&W_);
        out.push_back(&b_);
    }
    std::string kind() const override { return "fc"; }

    TensorT<T>& weights() { return W_; }

   private:
    TensorT<T> W_, b_, gW_, gb_;
    TensorT<T> x_;
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

// A view into one first-layer band group: all weights w1(:, band, :, :).
template <typename T>
struct BandGroupView {
    FilterBank4T<T>* bank;
    std::size_t band;

    std::size_t size() const {
        return bank->filters() * bank->weights.dim(2) * bank->weights.dim(3);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {  // fn(T& weight)
        auto& w = bank->weights;
        const std::size_t L = w.dim(0), P = w.dim(2), Q = w.dim(3);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t q = 0; q < Q; ++q)
                    fn(w.at4(l, band, p, q));
    }
    double norm() const {
        double acc = 0.0;
        for_each([&](T& v) { acc += static_cast<double>(v) * static_cast<double>(v); });
        return std::sqrt(acc);
    }
};

template <typename T>
struct ForwardResult {
    TensorT<T> features;  // penultimate activations, input of the classifier FC
    TensorT<T> logits;
};

template <typename T>
class NetworkT {
   public:
    ModelConfig config;
    std::vector<std::unique_ptr<LayerBase<T>>> layers;
    std::vector<std::uint8_t> active_bands;  // 1 = band alive, 0 = pruned
    std::size_t feature_dim = 0;

    // Forward through every layer; features are the input of the last
    // (classifier) layer.
    ForwardResult<T> forward(const TensorT<T>& batch, bool training) {
        if (batch.dim(1) != static_cast<std::size_t>(config.input_bands))
            throw ConfigError("forward: batch has " + std::to_string(batch.dim(1)) +
                              " bands, network expects " +
                              std::to_string(config.input_bands));
        TensorT<T> a = batch;
        for (std::size_t i = 0; i + 1 < layers.size(); ++i)
            a = layers[i]->forward(a, training);
        ForwardResult<T> r;
        r.features = a;
        r.logits = layers.back()->forward(a, training);
        return r;
    }

    // Reverse pass. grad_features (if non-empty) is added at the feature
    // node, alongside what flows back from the logits.
    void backward(const TensorT<T>& grad_logits, const TensorT<T>& grad_features) {
        TensorT<T> g = layers.back()->backward(grad_logits);
        if (grad_features.size()) {
            for (std::size_t i = 0; i < g.size(); ++i)
                g.data[i] += grad_features.data[i];
        }
        for (std::size_t i = layers.size() - 1; i-- > 0;)
            g = layers[i]->backward(g);
    }

    std::vector<ParamRef<T>> parameters() {
        std::vector<ParamRef<T>> out;
        for (auto& l : layers) l->collect_params(out);
        return out;
    }

    std::vector<TensorT<T>*> state_tensors() {
        std::vector<TensorT<T>*> out;
        for (auto& l : layers) l->collect_state(out);
        return out;
    }

    ConvLayer<T>& first_conv() {
        return *static_cast<ConvLayer<T>*>(layers.front().get());
    }

    std::size_t active_band_count() const {
        std::size_t n = 0;
        for (auto b : active_bands) n += b;
        return n;
    }
};

using Network = NetworkT<double>;
using NetworkF = NetworkT<float>;

// One group per spectral band: group g = first_layer.weights[:, g, :, :].
// The groups partition w1 exactly.
template <typename T>
std::vector<BandGroupView<T>> band_groups(NetworkT<T>& net) {
    auto& bank = net.first_conv().bank();
    std::vector<BandGroupView<T>> groups;
    groups.reserve(bank.channels());
    for (std::size_t c = 0; c < bank.channels(); ++c)
        groups.push_back(BandGroupView<T>{&bank, c});
    return groups;
}

template <typename T>
std::vector<double> band_group_norms(NetworkT<T>& net) {
    std::vector<double> norms;
    for (auto& g : band_groups(net)) norms.push_back(g.norm());
    return norms;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Duplication init for a C-band first layer from an RGB-depth base bank:
// channel c copies base channel (c mod 3), scaled by 3/C so that inputs
// constant across bands produce the same activations as the base bank.
template <typename T>
FilterBank4T<T> init_first_layer_by_duplication(const FilterBank4T<T>& base, std::size_t C) {
    if (base.channels() != 3)
        throw ConfigError("duplication init: base bank must have 3 channels");
    const std::size_t L = base.filters(), P = base.weights.dim(2), Q = base.weights.dim(3);
    FilterBank4T<T> out(L, C, P, Q);
    const T scale = static_cast<T>(3.0 / static_cast<double>(C));
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t q = 0; q < Q; ++q)
                    out.weights.at4(l, c, p, q) = scale * base.weights.at4(l, c % 3, p, q);
    return out;
}

namespace detail {
template <typename T>
void he_fill(TensorT<T>& w, std::size_t fan_in, Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std));
}
}  // namespace detail

// Deterministic build: same config and seed give bit-identical weights.
// All layers use He fan-in init except the first conv layer, which is
// duplicated from a 3-channel He-initialized base bank.
template <typename T>
NetworkT<T> build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);

    NetworkT<T> net;
    net.config = config;
    net.active_bands.assign(static_cast<std::size_t>(config.input_bands), 1);

    const std::size_t k = static_cast<std::size_t>(config.kernel);
    const int pad = (config.kernel - 1) / 2;
    std::size_t in_ch = static_cast<std::size_t>(config.input_bands);
    int h = config.input_h, w = config.input_w;

    bool first = true;
    for (const auto& [filters, reps] : config.blocks) {
        for (int r = 0; r < reps; ++r) {
            auto conv = std::make_unique<ConvLayer<T>>(in_ch, filters, k, 1, pad);
            if (first) {
                FilterBank4T<T> base(static_cast<std::size_t>(filters), 3, k, k);
                detail::he_fill(base.weights, 3 * k * k, rng);
                conv->bank() = init_first_layer_by_duplication(base, in_ch);
                first = false;
            } else {
                detail::he_fill(conv->bank().weights, in_ch * k * k, rng);
            }
            net.layers.push_back(std::move(conv));
            if (config.batchnorm)
                net.layers.push_back(std::make_unique<BatchNormLayer<T>>(filters));
            net.layers.push_back(std::make_unique<ReluLayer<T>>());
            in_ch = static_cast<std::size_t>(filters);
        }
        net.layers.push_back(std::make_unique<MaxPoolLayer<T>>());
        h /= 2;
        w /= 2;
    }

    const std::size_t spatial = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    if (config.head == HeadKind::GAP) {
        net.layers.push_back(std::make_unique<GapLayer<T>>());
        net.feature_dim = in_ch;
    } else {
        const std::size_t hd = static_cast<std::size_t>(config.resolved_head_dim());
        net.layers.push_back(std::make_unique<FlattenLayer<T>>());
        auto fc = std::make_unique<FcLayer<T>>(in_ch * spatial, hd);
        detail::he_fill(fc->weights(), in_ch * spatial, rng);
        net.layers.push_back(std::move(fc));
        if (config.batchnorm)
            net.layers.push_back(std::make_unique<BatchNormLayer<T>>(hd));
        net.layers.push_back(std::make_unique<ReluLayer<T>>());
        net.feature_dim = hd;
    }
    auto cls = std::make_unique<FcLayer<T>>(net.feature_dim,
                                            static_cast<std::size_t>(config.num_classes));
    detail::he_fill(cls->weights(), net.feature_dim, rng);
    net.layers.push_back(std::move(cls));
    return net;
}

// Zero the weights (and moments, handled by the caller) of a pruned band.
template <typename T>
void zero_band(NetworkT<T>& net, std::size_t band) {
    BandGroupView<T> view{&net.first_conv().bank(), band};
    view.for_each([](T& v) { v = T(0); });
}

}  // namespace bandsel
