// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/random.hpp"

namespace pfusion {

/// Dense row-major matrix. Vectors are 1xN, scalars 1x1.
template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {
        if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }

    static Tensor full(int r, int c, T v) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(T v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    static Tensor row(std::vector<T> v) {
        Tensor t;
        t.rows = 1;
        t.cols = static_cast<int>(v.size());
        t.data = std::move(v);
        return t;
    }

    static Tensor randn(int r, int c, std::mt19937_64& rng, T stddev = T(1), T mean = T(0)) {
        Tensor t(r, c);
        for (auto& x : t.data) x = normal_draw<T>(rng, mean, stddev);
        return t;
    }

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    T at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    int numel() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    std::string shape_str() const {
        std::ostringstream os;
        os << rows << "x" << cols;
        return os.str();
    }
};

inline uint64_t fnv1a64(const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
uint64_t checksum(const Tensor<T>& t) {
    return fnv1a64(t.data.data(), t.data.size() * sizeof(T));
}

/// Named trainable (or frozen) tensor with gradient storage.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor<T> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols), trainable(train) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }

    void reset(Tensor<T> v) {
        value = std::move(v);
        grad = Tensor<T>(value.rows, value.cols);
    }
};

}  // namespace pfusion
