#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bandsel/losses.hpp"
#include "bandsel/model.hpp"
#include "bandsel/optimizer.hpp"
#include "bandsel/rng.hpp"
#include "bandsel/trace.hpp"

namespace bandsel {

enum class SslMode { Prox, Subgradient };

struct TrainOptions {
    LossWeights loss;
    AdamConfig adam;
    PruneSchedule prune;
    SslMode ssl_mode = SslMode::Prox;
    int batch_size = 32;
    int epochs = 100;
    std::uint64_t seed = 1;
    double center_update_scale = 0.001;
};

template <typename T>
struct TrainSet {
    TensorT<T> inputs;        // (N, C, H, W), already normalized
    std::vector<int> labels;  // subject indices in [0, num_classes)

    std::size_t size() const { return labels.size(); }
};

// Deterministic epoch schedule: a Fisher-Yates shuffle of [0, n) chunked
// into batches; a trailing singleton is folded into the previous batch so
// batch norm always sees at least two samples.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

// The shuffle stream is decoupled from the weight-init stream so that model
// seeding and data ordering can be reproduced independently.
inline std::uint64_t shuffle_seed(std::uint64_t seed) {
    return seed ^ 0x9E3779B97F4A7C15ULL;
}

template <typename T>
TensorT<T> gather_batch(const TensorT<T>& inputs, const std::vector<std::size_t>& idx) {
    const std::size_t C = inputs.dim(1), H = inputs.dim(2), W = inputs.dim(3);
    TensorT<T> batch({idx.size(), C, H, W});
    const std::size_t stride = C * H * W;
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(inputs.ptr() + idx[i] * stride, stride, batch.ptr() + i * stride);
    return batch;
}

template <typename T>
struct TrainResult {
    std::vector<TraceRow> trace;
    CenterBankT<T> centers;
    std::vector<double> final_norms;
};

namespace detail {

// Pruned bands stay inert: their gradients are blocked before the step and
// their weights and Adam moments are re-zeroed after it.
template <typename T>
void enforce_band_mask(NetworkT<T>& net, AdamStateT<T>* adam) {
    auto& bank = net.first_conv().bank();
    const std::size_t L = bank.filters(), C = bank.channels();
    const std::size_t PQ = bank.weights.dim(2) * bank.weights.dim(3);
    for (std::size_t c = 0; c < C; ++c) {
        if (net.active_bands[c]) continue;
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t base = (l * C + c) * PQ;
            for (std::size_t i = 0; i < PQ; ++i) {
                bank.weights.data[base + i] = T(0);
                bank.grad.data[base + i] = T(0);
                if (adam) {
                    // First-layer weights are parameter tensor 0 by build order.
                    adam->m[0].data[base + i] = T(0);
                    adam->v[0].data[base + i] = T(0);
                }
            }
        }
    }
}

}  // namespace detail

// Joint training of the classifier and the band selector: Adam on the smooth
// recognition loss, followed each step by the proximal group shrinkage on the
// first-layer band groups (or, in comparison mode, a plain subgradient of the
// penalty added to the gradient). Losses are averaged over the batch, so the
// penalty enters each step as lambda_g / batch_n, keeping the optimum aligned
// with the batch-sum objective the reports quote lambda_g against.
template <typename T>
TrainResult<T> train(NetworkT<T>& net, const TrainSet<T>& data, const TrainOptions& opts,
                     const std::string& trace_path = "") {
    opts.loss.validate();
    opts.prune.validate();
    if (opts.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (opts.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (data.size() < 2) throw ConfigError("train: need at least 2 training samples");
    data.inputs.require_finite("training inputs");

    const std::size_t k = static_cast<std::size_t>(net.config.num_classes);
    TrainResult<T> result;
    result.centers = CenterBankT<T>(k, net.feature_dim);
    result.centers.update_scale = opts.center_update_scale;

    auto params = net.parameters();
    AdamStateT<T> adam(params, opts.adam);
    Rng order_rng(shuffle_seed(opts.seed));
    auto groups = band_groups(net);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto batches = make_batches(data.size(), opts.batch_size, order_rng);
        double loss_acc = 0.0, rec_acc = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& idx = batches[step];
            const double n = static_cast<double>(idx.size());

            TensorT<T> batch = gather_batch(data.inputs, idx);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];

            auto out = net.forward(batch, true);
            auto ce = softmax_ce(out.logits, one_hot<T>(labels, k));
            auto cl = center_loss(out.features, labels, result.centers, opts.loss.gamma);

            const double step_rec = (ce.loss + cl.loss) / n;
            const double step_obj =
                step_rec + (opts.loss.lambda_g / n) * group_lasso(groups).penalty;
            if (!std::isfinite(step_obj))
                throw NumericalError("training loss is not finite at epoch " +
                                     std::to_string(epoch) + " step " +
                                     std::to_string(step + 1));
            rec_acc += step_rec;
            loss_acc += step_obj;

            const T inv_n = static_cast<T>(1.0 / n);
            for (auto& g : ce.grad.data) g *= inv_n;
            for (auto& g : cl.grad.data) g *= inv_n;
            net.backward(ce.grad, cl.grad);

            if (opts.ssl_mode == SslMode::Subgradient && opts.loss.lambda_g > 0.0)
                add_group_subgradient(groups, opts.loss.lambda_g / n);

            detail::enforce_band_mask(net, &adam);
            adam_step(params, adam);
            if (opts.ssl_mode == SslMode::Prox)
                prox_group_shrink(groups, opts.adam.lr * opts.loss.lambda_g / n);
            detail::enforce_band_mask(net, &adam);

            update_centers(result.centers, out.features, labels);
        }

        auto norms = band_group_norms(net);
        if (opts.prune.due(epoch)) {
            prune_bands(net, norms, opts.prune, epoch);
            detail::enforce_band_mask(net, &adam);
            norms = band_group_norms(net);
        }

        TraceRow row;
        row.epoch = epoch;
        row.loss = loss_acc / static_cast<double>(batches.size());
        row.recognition_loss = rec_acc / static_cast<double>(batches.size());
        row.band_norms = norms;
        for (double v : norms) row.group_penalty += v;
        row.active_bands = net.active_band_count();
        result.trace.push_back(std::move(row));
    }

    result.final_norms = band_group_norms(net);
    if (!trace_path.empty()) write_trace(trace_path, result.trace);
    return result;
}

// Inference-mode feature extraction in fixed-size chunks.
template <typename T>
TensorT<T> extract_features(NetworkT<T>& net, const TensorT<T>& inputs, int chunk = 32) {
    const std::size_t N = inputs.dim(0);
    TensorT<T> features({N, net.feature_dim});
    for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(N, start + static_cast<std::size_t>(chunk));
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        auto out = net.forward(gather_batch(inputs, idx), false);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(out.features.ptr() + i * net.feature_dim, net.feature_dim,
                        features.ptr() + (start + i) * net.feature_dim);
    }
    return features;
}

}  // namespace bandsel
