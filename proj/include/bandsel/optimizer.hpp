#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bandsel/model.hpp"
#include "bandsel/tensor.hpp"

namespace bandsel {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

// The stated optimizer settings: lr 0.001, beta1 0.9, beta2 0.999 and
// eps 1e-3. That eps is unusually large for Adam, so a conventional 1e-8
// mode is available as well.
struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-3;

    static constexpr double kStandardEps = 1e-8;
};

template <typename T>
struct AdamStateT {
    long t = 0;
    std::vector<TensorT<T>> m;
    std::vector<TensorT<T>> v;
    AdamConfig config;

    AdamStateT() = default;
    AdamStateT(const std::vector<ParamRef<T>>& params, AdamConfig cfg) : config(cfg) {
        for (const auto& p : params) {
            m.push_back(TensorT<T>(p.value->shape));
            v.push_back(TensorT<T>(p.value->shape));
        }
    }
};

using AdamState = AdamStateT<double>;
using AdamStateF = AdamStateT<float>;

// One bias-corrected Adam step over all parameter tensors.
template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, AdamStateT<T>& state) {
    state.t += 1;
    const double b1 = state.config.beta1, b2 = state.config.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    const double lr = state.config.lr, eps = state.config.eps;
    for (std::size_t i = 0; i < params.size(); ++i) {
        T* w = params[i].value->ptr();
        const T* g = params[i].grad->ptr();
        T* m = state.m[i].ptr();
        T* v = state.v[i].ptr();
        const std::size_t n = params[i].value->size();
        for (std::size_t j = 0; j < n; ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
            const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / corr1;
            const double vhat = vj / corr2;
            w[j] = static_cast<T>(static_cast<double>(w[j]) -
                                  lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Proximal step for the group-Lasso subproblem
// ---------------------------------------------------------------------------

// Multiplicative shrinkage toward zero: w_g <- max(0, 1 - kappa/||w_g||) w_g.
// Groups with norm <= kappa land exactly on zero, which is what makes band
// pruning well defined. kappa = 0 is the identity, bit for bit.
template <typename T>
void prox_group_shrink(std::vector<BandGroupView<T>>& groups, double kappa) {
    if (kappa < 0.0) throw ConfigError("prox_group_shrink: kappa must be >= 0");
    if (kappa == 0.0) return;
    for (auto& g : groups) {
        const double norm = g.norm();
        if (norm <= kappa) {
            g.for_each([](T& v) { v = T(0); });
        } else {
            const T scale = static_cast<T>(1.0 - kappa / norm);
            g.for_each([scale](T& v) { v *= scale; });
        }
    }
}

// Subgradient alternative (comparison mode): adds lambda * w / max(||w_g||, 1e-12)
// to the first-layer gradient instead of shrinking after the step.
template <typename T>
void add_group_subgradient(std::vector<BandGroupView<T>>& groups, double lambda) {
    for (auto& g : groups) {
        const double norm = std::max(g.norm(), 1e-12);
        const double scale = lambda / norm;
        auto& w = g.bank->weights;
        auto& grad = g.bank->grad;
        const std::size_t L = w.dim(0), P = w.dim(2), Q = w.dim(3);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t q = 0; q < Q; ++q)
                    grad.at4(l, g.band, p, q) +=
                        static_cast<T>(scale * static_cast<double>(w.at4(l, g.band, p, q)));
    }
}

// ---------------------------------------------------------------------------
// Band pruning schedule
// ---------------------------------------------------------------------------

struct PruneSchedule {
    bool enabled = true;
    int start_epoch = 5;
    double threshold_rel = 1e-3;
    int check_every = 1;

    void validate() const {
        if (start_epoch < 1) throw ConfigError("prune: start_epoch must be >= 1");
        if (!(threshold_rel > 0.0 && threshold_rel < 1.0))
            throw ConfigError("prune: threshold_rel must lie in (0,1)");
        if (check_every < 1) throw ConfigError("prune: check_every must be >= 1");
    }

    bool due(int epoch) const {
        return enabled && epoch >= start_epoch &&
               (epoch - start_epoch) % check_every == 0;
    }
};

// Permanently masks any band whose group norm falls below
// threshold_rel * max(norms). Returns the indices pruned this call.
// Masking is monotone: a pruned band never revives.
template <typename T>
std::vector<std::size_t> prune_bands(NetworkT<T>& net, const std::vector<double>& norms,
                                     const PruneSchedule& schedule, int epoch) {
    std::vector<std::size_t> pruned;
    if (!schedule.due(epoch)) return pruned;
    double max_norm = 0.0;
    for (double n : norms) max_norm = std::max(max_norm, n);
    const double cutoff = schedule.threshold_rel * max_norm;
    for (std::size_t c = 0; c < norms.size(); ++c) {
        if (net.active_bands[c] && norms[c] < cutoff) {
            net.active_bands[c] = 0;
            zero_band(net, c);
            pruned.push_back(c);
        }
    }
    return pruned;
}

}  // namespace bandsel
