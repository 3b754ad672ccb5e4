#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bandsel/layers.hpp"
#include "bandsel/model.hpp"
#include "bandsel/tensor.hpp"

namespace bandsel {

// Hyperparameters of the total objective: lambda_g scales the group-Lasso
// penalty on the first conv layer, gamma the center-loss term.
struct LossWeights {
    double lambda_g = 0.01;
    double gamma = 0.01;

    void validate() const {
        if (!(lambda_g >= 0.0) || !std::isfinite(lambda_g))
            throw ConfigError("lambda_g must be finite and >= 0");
        if (!(gamma >= 0.0) || !std::isfinite(gamma))
            throw ConfigError("gamma must be finite and >= 0");
    }
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy, summed over the batch. grad_logits is p - y per row.
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    double loss = 0.0;
    TensorT<T> grad;
};

template <typename T>
LossResult<T> softmax_ce(const TensorT<T>& logits, const TensorT<T>& onehot) {
    if (logits.rank() != 2 || onehot.shape != logits.shape)
        throw ConfigError("softmax_ce: logits/labels shape mismatch");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    for (std::size_t n = 0; n < N; ++n) {
        int ones = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const T v = onehot.at2(n, k);
            if (v == T(1))
                ++ones;
            else if (v != T(0))
                throw ConfigError("softmax_ce: label row " + std::to_string(n) +
                                  " is not one-hot");
        }
        if (ones != 1)
            throw ConfigError("softmax_ce: label row " + std::to_string(n) +
                              " is not one-hot");
    }

    TensorT<T> p = softmax(logits);
    LossResult<T> r;
    r.grad = TensorT<T>(logits.shape);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
            const T pk = p.at2(n, k);
            if (onehot.at2(n, k) == T(1))
                r.loss -= std::log(static_cast<double>(pk));
            r.grad.at2(n, k) = pk - onehot.at2(n, k);
        }
    }
    return r;
}

template <typename T>
TensorT<T> one_hot(const std::vector<int>& labels, std::size_t num_classes) {
    TensorT<T> y({labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw ConfigError("one_hot: label out of range");
        y.at2(i, static_cast<std::size_t>(labels[i])) = T(1);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Center loss: (gamma/2) * sum_i ||f_i - c_{y_i}||^2, summed over the batch.
// Centers are constants inside the backward pass; they move only through
// update_centers below.
// ---------------------------------------------------------------------------

template <typename T>
struct CenterBankT {
    TensorT<T> centers;          // (k, feature_dim)
    double update_scale = 0.001;
    std::size_t k = 0;

    CenterBankT() = default;
    CenterBankT(std::size_t classes, std::size_t feature_dim)
        : centers({classes, feature_dim}), k(classes) {}
};

using CenterBank = CenterBankT<double>;
using CenterBankF = CenterBankT<float>;

template <typename T>
LossResult<T> center_loss(const TensorT<T>& features, const std::vector<int>& labels,
                          const CenterBankT<T>& bank, double gamma) {
    const std::size_t N = features.dim(0), D = features.dim(1);
    if (labels.size() != N)
        throw ConfigError("center_loss: label count mismatch");
    if (bank.centers.dim(1) != D)
        throw ConfigError("center_loss: feature dim mismatch");
    LossResult<T> r;
    r.grad = TensorT<T>(features.shape);
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t y = static_cast<std::size_t>(labels[n]);
        if (y >= bank.k) throw ConfigError("center_loss: label out of range");
        for (std::size_t d = 0; d < D; ++d) {
            const double diff = static_cast<double>(features.at2(n, d)) -
                                static_cast<double>(bank.centers.at2(y, d));
            r.loss += 0.5 * gamma * diff * diff;
            r.grad.at2(n, d) = static_cast<T>(gamma * diff);
        }
    }
    return r;
}

// Mini-batch center update: for each class present, the center moves toward
// the mean of that class's features, scaled by update_scale (0.001).
template <typename T>
void update_centers(CenterBankT<T>& bank, const TensorT<T>& features,
                    const std::vector<int>& labels) {
    const std::size_t N = features.dim(0), D = features.dim(1);
    std::vector<std::size_t> counts(bank.k, 0);
    TensorT<T> delta({bank.k, D});
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t y = static_cast<std::size_t>(labels[n]);
        counts[y]++;
        for (std::size_t d = 0; d < D; ++d)
            delta.at2(y, d) += bank.centers.at2(y, d) - features.at2(n, d);
    }
    for (std::size_t j = 0; j < bank.k; ++j) {
        if (counts[j] == 0) continue;
        const T scale = static_cast<T>(bank.update_scale / static_cast<double>(counts[j]));
        for (std::size_t d = 0; d < D; ++d)
            bank.centers.at2(j, d) -= scale * delta.at2(j, d);
    }
}

// ---------------------------------------------------------------------------
// Group Lasso on the first-layer bank: sum over bands of the l2 norm of
// that band's weight group.
// ---------------------------------------------------------------------------

struct GroupLassoResult {
    double penalty = 0.0;
    std::vector<double> per_group_norms;
};

template <typename T>
GroupLassoResult group_lasso(std::vector<BandGroupView<T>>& groups) {
    GroupLassoResult r;
    r.per_group_norms.reserve(groups.size());
    for (auto& g : groups) {
        const double n = g.norm();
        r.per_group_norms.push_back(n);
        r.penalty += n;
    }
    return r;
}

template <typename T>
GroupLassoResult group_lasso(NetworkT<T>& net) {
    auto groups = band_groups(net);
    return group_lasso(groups);
}

// Total objective: recognition loss plus lambda_g times the group penalty.
inline double total_loss(double recognition_loss, double penalty, const LossWeights& w) {
    return recognition_loss + w.lambda_g * penalty;
}

}  // namespace bandsel
