// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pfusion {

/// Lower-triangular accuracy matrix: R[T][i] = accuracy on task i's test set
/// after training task T (0-based storage, defined for i <= T).
struct MetricsMatrix {
    std::vector<std::vector<double>> rows;

    void push_row(std::vector<double> row) {
        if (row.size() != rows.size() + 1)
            throw std::invalid_argument("MetricsMatrix: row " + std::to_string(rows.size()) +
                                        " must have " + std::to_string(rows.size() + 1) + " entries");
        for (double v : row)
            if (v < 0.0 || v > 1.0) throw std::invalid_argument("MetricsMatrix: accuracy out of [0,1]");
        rows.push_back(std::move(row));
    }

    int n_tasks() const { return static_cast<int>(rows.size()); }

    double at(int T, int i) const {
        if (T < 0 || T >= n_tasks() || i < 0 || i > T)
            throw std::out_of_range("MetricsMatrix: R[" + std::to_string(T) + "][" + std::to_string(i) + "]");
        return rows[T][i];
    }
};

/// A_T = (1/T) sum_i R[T][i], with T counted 1-based over trained tasks.
inline double average_accuracy(const MetricsMatrix& r, int T) {
    if (T < 1 || T > r.n_tasks()) throw std::invalid_argument("average_accuracy: bad T");
    const auto& row = r.rows[T - 1];
    if (static_cast<int>(row.size()) != T)
        throw std::invalid_argument("average_accuracy: row not fully populated");
    double acc = 0;
    for (double v : row) acc += v;
    return acc / T;
}

struct ForgettingProfile {
    std::vector<double> drops;  // drop_i = R[i][i] - R[T][i] for i < T
    double mean_drop = 0;
};

inline ForgettingProfile forgetting_profile(const MetricsMatrix& r) {
    int T = r.n_tasks();
    if (T < 2) throw std::invalid_argument("forgetting_profile: need at least 2 tasks");
    ForgettingProfile fp;
    for (int i = 0; i < T - 1; ++i) fp.drops.push_back(r.at(i, i) - r.at(T - 1, i));
    for (double d : fp.drops) fp.mean_drop += d;
    fp.mean_drop /= static_cast<double>(fp.drops.size());
    return fp;
}

}  // namespace pfusion
