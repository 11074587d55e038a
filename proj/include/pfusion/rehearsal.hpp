// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/dataset.hpp"
#include "pfusion/random.hpp"
#include "pfusion/tensor.hpp"

namespace pfusion {

/// Class-balanced exemplar buffer. Per-class counts differ by at most one;
/// selection and down-sampling are seeded uniform without replacement.
struct MemoryBuffer {
    struct Exemplar {
        Image image;
        int label = 0;
        uint64_t uid = 0;  // stable source id, used for determinism checks
    };

    int capacity = 0;
    std::vector<Exemplar> store;

    /// Rebalances for the classes seen so far and folds in the new task's
    /// items. Quota = floor(capacity / classes_seen), remainder spread to the
    /// lowest class ids.
    void update(const std::vector<Exemplar>& task_items, const std::vector<int>& classes_seen,
                uint64_t seed) {
        int n_classes = static_cast<int>(classes_seen.size());
        if (n_classes == 0) throw std::invalid_argument("buffer update: no classes seen");
        if (capacity < n_classes)
            throw std::invalid_argument("buffer update: capacity " + std::to_string(capacity) +
                                        " < classes seen " + std::to_string(n_classes));
        int base = capacity / n_classes;
        int rem = capacity % n_classes;
        std::vector<int> sorted_classes = classes_seen;
        std::sort(sorted_classes.begin(), sorted_classes.end());
        std::map<int, int> quota;
        for (int i = 0; i < n_classes; ++i) quota[sorted_classes[i]] = base + (i < rem ? 1 : 0);

        std::map<int, std::vector<Exemplar>> by_class;
        for (auto& e : store) by_class[e.label].push_back(e);
        for (auto& e : task_items) by_class[e.label].push_back(e);

        auto rng = make_rng(seed, SeedTag::Buffer, static_cast<uint64_t>(n_classes));
        store.clear();
        for (int k : sorted_classes) {
            auto& pool = by_class[k];
            int q = std::min<int>(quota[k], static_cast<int>(pool.size()));
            std::vector<int> idx(pool.size());
            for (size_t i = 0; i < pool.size(); ++i) idx[i] = static_cast<int>(i);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(q);
            std::sort(idx.begin(), idx.end());
            for (int i : idx) store.push_back(pool[i]);
        }
    }

    std::map<int, int> class_counts() const {
        std::map<int, int> c;
        for (auto& e : store) c[e.label]++;
        return c;
    }
};

/// Per-(class, branch) Gaussian feature statistics with shrinkage, for
/// memory-free feature rehearsal.
enum class Branch { Stabilizer, Booster };

template <typename T>
struct ClassFeatureStats {
    struct Entry {
        Tensor<T> mu;   // 1 x d
        Tensor<T> cov;  // d x d, symmetric PD after shrinkage
        int count = 0;
    };

    static constexpr T kVarianceFloor = T(1e-6);
    static constexpr T kShrinkage = T(1e-4);  // times trace/d

    std::map<std::pair<int, int>, Entry> entries;  // (class, branch)

    static std::pair<int, int> key(int cls, Branch b) { return {cls, static_cast<int>(b)}; }

    bool has(int cls, Branch b) const { return entries.count(key(cls, b)) > 0; }
    const Entry& get(int cls, Branch b) const { return entries.at(key(cls, b)); }

    /// Records per-class sample mean and covariance (unbiased, shrunk toward
    /// a scaled identity). Classes with fewer samples than dimensions fall
    /// back to a diagonal covariance.
    void record(const Tensor<T>& features, const std::vector<int>& labels, Branch branch) {
        if (features.rows != static_cast<int>(labels.size()))
            throw std::invalid_argument("record_stats: feature rows " + std::to_string(features.rows) +
                                        " != labels " + std::to_string(labels.size()));
        int d = features.cols;
        std::map<int, std::vector<int>> rows_by_class;
        for (size_t i = 0; i < labels.size(); ++i) rows_by_class[labels[i]].push_back(static_cast<int>(i));

        for (auto& [cls, rows] : rows_by_class) {
            int n = static_cast<int>(rows.size());
            Entry e;
            e.count = n;
            e.mu = Tensor<T>(1, d);
            for (int r : rows)
                for (int c = 0; c < d; ++c) e.mu.data[c] += features.at(r, c);
            for (int c = 0; c < d; ++c) e.mu.data[c] /= n;

            e.cov = Tensor<T>(d, d);
            if (n >= 2) {
                bool diagonal_only = n < d;  // too few samples for a full estimate
                for (int r : rows)
                    for (int i = 0; i < d; ++i) {
                        T di = features.at(r, i) - e.mu.data[i];
                        if (diagonal_only) {
                            e.cov.at(i, i) += di * di;
                        } else {
                            for (int j = 0; j < d; ++j)
                                e.cov.at(i, j) += di * (features.at(r, j) - e.mu.data[j]);
                        }
                    }
                for (auto& v : e.cov.data) v /= (n - 1);
            }
            T trace = 0;
            for (int i = 0; i < d; ++i) trace += e.cov.at(i, i);
            T eps = kShrinkage * trace / d + kVarianceFloor;
            for (int i = 0; i < d; ++i) e.cov.at(i, i) += eps;
            entries[key(cls, branch)] = std::move(e);
        }
    }

    std::vector<int> recorded_classes(Branch b) const {
        std::vector<int> out;
        for (auto& [k, v] : entries)
            if (k.second == static_cast<int>(b)) out.push_back(k.first);
        return out;
    }
};

/// Lower-triangular Cholesky factor; throws if the matrix is not PD.
template <typename T>
Tensor<T> cholesky(const Tensor<T>& a) {
    if (a.rows != a.cols) throw std::invalid_argument("cholesky: matrix not square");
    int n = a.rows;
    Tensor<T> l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            T acc = a.at(i, j);
            for (int k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (acc <= T(0)) throw std::runtime_error("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(acc);
            } else {
                l.at(i, j) = acc / l.at(j, j);
            }
        }
    }
    return l;
}

/// Labeled synthetic features drawn from recorded class Gaussians.
template <typename T>
struct SampledFeatures {
    Tensor<T> features;       // n x d
    std::vector<int> labels;  // n
};

template <typename T>
SampledFeatures<T> sample_features(const ClassFeatureStats<T>& stats, Branch branch,
                                   const std::vector<int>& classes, int n_per_class,
                                   std::mt19937_64& rng) {
    if (classes.empty() || n_per_class <= 0)
        throw std::invalid_argument("sample_features: nothing to sample");
    for (int k : classes)
        if (!stats.has(k, branch))
            throw std::invalid_argument("sample_features: no stats recorded for class " +
                                        std::to_string(k));
    int d = stats.get(classes[0], branch).mu.cols;
    SampledFeatures<T> out;
    out.features = Tensor<T>(static_cast<int>(classes.size()) * n_per_class, d);
    int r = 0;
    for (int k : classes) {
        const auto& e = stats.get(k, branch);
        Tensor<T> l = cholesky(e.cov);
        for (int s = 0; s < n_per_class; ++s, ++r) {
            std::vector<T> z(d);
            for (auto& v : z) v = normal_draw<T>(rng);
            for (int i = 0; i < d; ++i) {
                T acc = e.mu.data[i];
                for (int j = 0; j <= i; ++j) acc += l.at(i, j) * z[j];
                out.features.at(r, i) = acc;
            }
            out.labels.push_back(k);
        }
    }
    return out;
}

}  // namespace pfusion
