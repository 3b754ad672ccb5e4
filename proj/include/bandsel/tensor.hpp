#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "bandsel/errors.hpp"

namespace bandsel {

// Dense row-major tensor (last axis fastest). TensorT<double> is the
// oracle/test carrier, TensorT<float> the training one.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(numel(shape), fill);
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    static TensorT zeros_like(const TensorT& other) { return TensorT(other.shape); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // 2-d and 4-d indexed access; callers guarantee the rank.
    T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    void reshape(std::vector<std::size_t> s) {
        if (numel(s) != data.size())
            throw ConfigError("reshape: element count mismatch");
        shape = std::move(s);
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void require_finite(const std::string& context) const {
        if (!all_finite())
            throw NumericalError("non-finite value in " + context);
    }
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& src) {
    TensorT<To> out(src.shape);
    for (std::size_t i = 0; i < src.size(); ++i)
        out.data[i] = static_cast<To>(src.data[i]);
    return out;
}

// 4-D conv weight bank indexed (filter L, channel C, height P, width Q),
// with its gradient buffer.
template <typename T>
struct FilterBank4T {
    TensorT<T> weights;
    TensorT<T> grad;

    FilterBank4T() = default;
    FilterBank4T(std::size_t l, std::size_t c, std::size_t p, std::size_t q)
        : weights({l, c, p, q}), grad({l, c, p, q}) {}

    std::size_t filters() const { return weights.dim(0); }
    std::size_t channels() const { return weights.dim(1); }
};

using FilterBank4 = FilterBank4T<double>;
using FilterBank4F = FilterBank4T<float>;

}  // namespace bandsel
