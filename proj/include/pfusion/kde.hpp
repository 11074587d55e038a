// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pfusion/random.hpp"
#include "pfusion/tensor.hpp"

namespace pfusion {

/// Feature-drift statistic: both feature sets are projected to 1-D along a
/// fixed seeded random direction, a Gaussian KDE with Scott's-rule bandwidth
/// is fit to each, and the result is the total variation distance between the
/// two densities on a shared evaluation grid.
struct KdeShiftResult {
    double divergence = 0;
    std::vector<double> grid;
    std::vector<double> density_before;
    std::vector<double> density_after;
};

namespace detail {

inline std::vector<double> project_1d(const Tensor<double>& feats, const std::vector<double>& dir) {
    std::vector<double> out(feats.rows, 0.0);
    for (int r = 0; r < feats.rows; ++r) {
        double acc = 0;
        for (int c = 0; c < feats.cols; ++c) acc += feats.at(r, c) * dir[c];
        out[r] = acc;
    }
    return out;
}

inline double scott_bandwidth(const std::vector<double>& x) {
    size_t n = x.size();
    double mu = 0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(n);
    double var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
    double sigma = std::sqrt(var);
    double h = 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);
    return std::max(h, 1e-9);
}

inline std::vector<double> kde_on_grid(const std::vector<double>& x, const std::vector<double>& grid,
                                       double h) {
    const double inv = 1.0 / (h * std::sqrt(2.0 * 3.14159265358979323846));
    std::vector<double> dens(grid.size(), 0.0);
    for (size_t gi = 0; gi < grid.size(); ++gi) {
        double acc = 0;
        for (double xi : x) {
            double u = (grid[gi] - xi) / h;
            acc += std::exp(-0.5 * u * u);
        }
        dens[gi] = acc * inv / static_cast<double>(x.size());
    }
    return dens;
}

}  // namespace detail

inline KdeShiftResult kde_shift(const Tensor<double>& before, const Tensor<double>& after,
                                uint64_t seed = 0, int grid_points = 512) {
    if (before.rows == 0 || after.rows == 0) throw std::invalid_argument("kde_shift: empty feature set");
    if (before.cols != after.cols)
        throw std::invalid_argument("kde_shift: dimension mismatch " + before.shape_str() + " vs " +
                                    after.shape_str());
    auto rng = make_rng(seed, SeedTag::KdeDirection);
    std::vector<double> dir(before.cols);
    double norm = 0;
    for (auto& v : dir) {
        v = normal_draw<double>(rng);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : dir) v /= norm;

    auto xb = detail::project_1d(before, dir);
    auto xa = detail::project_1d(after, dir);
    double hb = detail::scott_bandwidth(xb);
    double ha = detail::scott_bandwidth(xa);
    double h = std::max(hb, ha);

    double lo = std::min(*std::min_element(xb.begin(), xb.end()),
                         *std::min_element(xa.begin(), xa.end())) -
                3.0 * h;
    double hi = std::max(*std::max_element(xb.begin(), xb.end()),
                         *std::max_element(xa.begin(), xa.end())) +
                3.0 * h;

    KdeShiftResult res;
    res.grid.resize(grid_points);
    double step = (hi - lo) / (grid_points - 1);
    for (int i = 0; i < grid_points; ++i) res.grid[i] = lo + step * i;
    res.density_before = detail::kde_on_grid(xb, res.grid, hb);
    res.density_after = detail::kde_on_grid(xa, res.grid, ha);
    double tv = 0;
    for (int i = 0; i < grid_points; ++i)
        tv += std::abs(res.density_before[i] - res.density_after[i]);
    res.divergence = 0.5 * tv * step;
    return res;
}

}  // namespace pfusion
