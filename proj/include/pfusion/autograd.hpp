// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/tensor.hpp"

namespace pfusion {

/// Reverse-mode tape over Tensor<T> values.
///
/// A graph is built fresh for each forward pass. Long-lived parameters enter
/// through leaf(); their gradients accumulate into Param::grad on backward().
/// Frozen parameters (trainable == false) participate in the forward pass but
/// never receive gradient, and gradient is not propagated past nodes that do
/// not require it.
template <typename T>
class Graph {
  public:
    using NodeId = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    NodeId constant(Tensor<T> v) { return push(std::move(v), false, nullptr, {}); }

    NodeId leaf(Param<T>& p) {
        NodeId id = push(p.value, p.trainable, &p, {});
        return id;
    }

    const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].val; }
    const Tensor<T>& grad(NodeId id) const { return nodes_[check(id)].grd; }
    bool requires_grad(NodeId id) const { return nodes_[check(id)].rq; }
    size_t size() const { return nodes_.size(); }

    // ---- elementwise ----

    NodeId add(NodeId a, NodeId b) {
        auto& ta = val(a);
        auto& tb = val(b);
        require(ta.same_shape(tb), "add", ta, tb);
        Tensor<T> out = ta;
        for (int i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
        NodeId id = push(std::move(out), rq(a) || rq(b), nullptr, {a, b});
        nodes_[id].back = [this, id, a, b] {
            auto& g = nodes_[id].grd;
            if (rq(a))
                for (int i = 0; i < g.numel(); ++i) gref(a).data[i] += g.data[i];
            if (rq(b))
                for (int i = 0; i < g.numel(); ++i) gref(b).data[i] += g.data[i];
        };
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        auto& ta = val(a);
        auto& tb = val(b);
        require(ta.same_shape(tb), "mul", ta, tb);
        Tensor<T> out = ta;
        for (int i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
        NodeId id = push(std::move(out), rq(a) || rq(b), nullptr, {a, b});
        nodes_[id].back = [this, id, a, b] {
            auto& g = nodes_[id].grd;
            if (rq(a))
                for (int i = 0; i < g.numel(); ++i) gref(a).data[i] += g.data[i] * val(b).data[i];
            if (rq(b))
                for (int i = 0; i < g.numel(); ++i) gref(b).data[i] += g.data[i] * val(a).data[i];
        };
        return id;
    }

    /// scale * x + shift, elementwise with compile-time constants.
    NodeId affine(NodeId x, T scale, T shift) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = scale * v + shift;
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x, scale] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i) gref(x).data[i] += scale * g.data[i];
        };
        return id;
    }

    NodeId pow_const(NodeId x, T c) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::pow(v, c);
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x, c] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i)
                gref(x).data[i] += g.data[i] * c * std::pow(val(x).data[i], c - T(1));
        };
        return id;
    }

    NodeId sigmoid(NodeId x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            auto& y = nodes_[id].val;
            for (int i = 0; i < g.numel(); ++i)
                gref(x).data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
        };
        return id;
    }

    NodeId tanh_(NodeId x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::tanh(v);
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            auto& y = nodes_[id].val;
            for (int i = 0; i < g.numel(); ++i)
                gref(x).data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
        };
        return id;
    }

    NodeId exp_(NodeId x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::exp(v);
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            auto& y = nodes_[id].val;
            for (int i = 0; i < g.numel(); ++i) gref(x).data[i] += g.data[i] * y.data[i];
        };
        return id;
    }

    NodeId log_(NodeId x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::log(v);
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i) gref(x).data[i] += g.data[i] / val(x).data[i];
        };
        return id;
    }

    NodeId softplus(NodeId x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) {
            // stable log(1+exp(v))
            v = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
        }
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i) {
                T s = T(1) / (T(1) + std::exp(-val(x).data[i]));
                gref(x).data[i] += g.data[i] * s;
            }
        };
        return id;
    }

    /// Elementwise max; gradient routes to a on ties.
    NodeId maximum(NodeId a, NodeId b) {
        auto& ta = val(a);
        auto& tb = val(b);
        require(ta.same_shape(tb), "maximum", ta, tb);
        Tensor<T> out = ta;
        for (int i = 0; i < out.numel(); ++i) out.data[i] = std::max(ta.data[i], tb.data[i]);
        NodeId id = push(std::move(out), rq(a) || rq(b), nullptr, {a, b});
        nodes_[id].back = [this, id, a, b] {
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i) {
                bool pick_a = val(a).data[i] >= val(b).data[i];
                if (pick_a && rq(a)) gref(a).data[i] += g.data[i];
                if (!pick_a && rq(b)) gref(b).data[i] += g.data[i];
            }
        };
        return id;
    }

    // ---- linear algebra ----

    NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false) {
        auto& ta = val(a);
        auto& tb = val(b);
        int m = trans_a ? ta.cols : ta.rows;
        int k = trans_a ? ta.rows : ta.cols;
        int k2 = trans_b ? tb.cols : tb.rows;
        int n = trans_b ? tb.rows : tb.cols;
        require(k == k2, "matmul", ta, tb);
        Tensor<T> out(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                T acc = 0;
                for (int t = 0; t < k; ++t) {
                    T av = trans_a ? ta.at(t, i) : ta.at(i, t);
                    T bv = trans_b ? tb.at(j, t) : tb.at(t, j);
                    acc += av * bv;
                }
                out.at(i, j) = acc;
            }
        NodeId id = push(std::move(out), rq(a) || rq(b), nullptr, {a, b});
        nodes_[id].back = [this, id, a, b, trans_a, trans_b, m, n, k] {
            auto& g = nodes_[id].grd;
            if (rq(a)) {
                auto& ga = gref(a);
                for (int i = 0; i < m; ++i)
                    for (int t = 0; t < k; ++t) {
                        T acc = 0;
                        for (int j = 0; j < n; ++j) {
                            T bv = trans_b ? val(b).at(j, t) : val(b).at(t, j);
                            acc += g.at(i, j) * bv;
                        }
                        if (trans_a)
                            ga.at(t, i) += acc;
                        else
                            ga.at(i, t) += acc;
                    }
            }
            if (rq(b)) {
                auto& gb = gref(b);
                for (int t = 0; t < k; ++t)
                    for (int j = 0; j < n; ++j) {
                        T acc = 0;
                        for (int i = 0; i < m; ++i) {
                            T av = trans_a ? val(a).at(t, i) : val(a).at(i, t);
                            acc += av * g.at(i, j);
                        }
                        if (trans_b)
                            gb.at(j, t) += acc;
                        else
                            gb.at(t, j) += acc;
                    }
            }
        };
        return id;
    }

    /// m (RxC) + v (1xC) broadcast over rows.
    NodeId add_row(NodeId m, NodeId v) {
        auto& tm = val(m);
        auto& tv = val(v);
        require(tv.rows == 1 && tv.cols == tm.cols, "add_row", tm, tv);
        Tensor<T> out = tm;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) += tv.data[c];
        NodeId id = push(std::move(out), rq(m) || rq(v), nullptr, {m, v});
        nodes_[id].back = [this, id, m, v] {
            auto& g = nodes_[id].grd;
            if (rq(m))
                for (int i = 0; i < g.numel(); ++i) gref(m).data[i] += g.data[i];
            if (rq(v)) {
                auto& gv = gref(v);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) gv.data[c] += g.at(r, c);
            }
        };
        return id;
    }

    /// x * s with s a 1x1 node broadcast to all entries.
    NodeId scale_by(NodeId x, NodeId s) {
        auto& ts = val(s);
        require(ts.is_scalar(), "scale_by", val(x), ts);
        Tensor<T> out = val(x);
        T sv = ts.data[0];
        for (auto& v : out.data) v *= sv;
        NodeId id = push(std::move(out), rq(x) || rq(s), nullptr, {x, s});
        nodes_[id].back = [this, id, x, s] {
            auto& g = nodes_[id].grd;
            if (rq(x)) {
                T sv = val(s).data[0];
                for (int i = 0; i < g.numel(); ++i) gref(x).data[i] += g.data[i] * sv;
            }
            if (rq(s)) {
                T acc = 0;
                for (int i = 0; i < g.numel(); ++i) acc += g.data[i] * val(x).data[i];
                gref(s).data[0] += acc;
            }
        };
        return id;
    }

    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        int cols = val(parts[0]).cols;
        int rows = 0;
        bool need = false;
        for (NodeId p : parts) {
            require(val(p).cols == cols, "concat_rows", val(parts[0]), val(p));
            rows += val(p).rows;
            need = need || rq(p);
        }
        Tensor<T> out(rows, cols);
        int r0 = 0;
        for (NodeId p : parts) {
            auto& tp = val(p);
            std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + static_cast<size_t>(r0) * cols);
            r0 += tp.rows;
        }
        NodeId id = push(std::move(out), need, nullptr, parts);
        nodes_[id].back = [this, id, parts, cols] {
            auto& g = nodes_[id].grd;
            int r = 0;
            for (NodeId p : parts) {
                int pr = val(p).rows;
                if (rq(p)) {
                    auto& gp = gref(p);
                    for (int i = 0; i < pr * cols; ++i)
                        gp.data[i] += g.data[static_cast<size_t>(r) * cols + i];
                }
                r += pr;
            }
        };
        return id;
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        int rows = val(parts[0]).rows;
        int cols = 0;
        bool need = false;
        for (NodeId p : parts) {
            require(val(p).rows == rows, "concat_cols", val(parts[0]), val(p));
            cols += val(p).cols;
            need = need || rq(p);
        }
        Tensor<T> out(rows, cols);
        int c0 = 0;
        for (NodeId p : parts) {
            auto& tp = val(p);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < tp.cols; ++c) out.at(r, c0 + c) = tp.at(r, c);
            c0 += tp.cols;
        }
        NodeId id = push(std::move(out), need, nullptr, parts);
        nodes_[id].back = [this, id, parts, rows] {
            auto& g = nodes_[id].grd;
            int c0 = 0;
            for (NodeId p : parts) {
                int pc = val(p).cols;
                if (rq(p)) {
                    auto& gp = gref(p);
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < pc; ++c) gp.at(r, c) += g.at(r, c0 + c);
                }
                c0 += pc;
            }
        };
        return id;
    }

    /// Rows [r0,r1) and columns [c0,c1).
    NodeId slice(NodeId x, int r0, int r1, int c0, int c1) {
        auto& tx = val(x);
        if (r0 < 0 || c0 < 0 || r1 > tx.rows || c1 > tx.cols || r0 >= r1 || c0 >= c1)
            throw std::invalid_argument("slice: bad range on " + tx.shape_str());
        Tensor<T> out(r1 - r0, c1 - c0);
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) = tx.at(r0 + r, c0 + c);
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x, r0, c0] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            auto& gx = gref(x);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) gx.at(r0 + r, c0 + c) += g.at(r, c);
        };
        return id;
    }

    // ---- normalizations and reductions ----

    NodeId softmax_rows(NodeId x) {
        Tensor<T> out = val(x);
        for (int r = 0; r < out.rows; ++r) {
            T mx = -std::numeric_limits<T>::infinity();
            for (int c = 0; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
            T sum = 0;
            for (int c = 0; c < out.cols; ++c) {
                T e = std::exp(out.at(r, c) - mx);
                out.at(r, c) = e;
                sum += e;
            }
            for (int c = 0; c < out.cols; ++c) out.at(r, c) /= sum;
        }
        NodeId id = push(std::move(out), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            auto& g = nodes_[id].grd;
            auto& y = nodes_[id].val;
            auto& gx = gref(x);
            for (int r = 0; r < g.rows; ++r) {
                T dot = 0;
                for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < g.cols; ++c)
                    gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
            }
        };
        return id;
    }

    /// Row-wise layer normalization with learned gain/bias (1xC each).
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, T eps = T(1e-5)) {
        auto& tx = val(x);
        auto& tg = val(gain);
        auto& tb = val(bias);
        require(tg.rows == 1 && tg.cols == tx.cols, "layer_norm", tx, tg);
        require(tb.rows == 1 && tb.cols == tx.cols, "layer_norm", tx, tb);
        int R = tx.rows, C = tx.cols;
        Tensor<T> out(R, C);
        Tensor<T> xhat(R, C);
        std::vector<T> inv_sigma(R);
        for (int r = 0; r < R; ++r) {
            T mu = 0;
            for (int c = 0; c < C; ++c) mu += tx.at(r, c);
            mu /= C;
            T var = 0;
            for (int c = 0; c < C; ++c) {
                T d = tx.at(r, c) - mu;
                var += d * d;
            }
            var /= C;
            T is = T(1) / std::sqrt(var + eps);
            inv_sigma[r] = is;
            for (int c = 0; c < C; ++c) {
                T xh = (tx.at(r, c) - mu) * is;
                xhat.at(r, c) = xh;
                out.at(r, c) = tg.data[c] * xh + tb.data[c];
            }
        }
        NodeId id = push(std::move(out), rq(x) || rq(gain) || rq(bias), nullptr, {x, gain, bias});
        nodes_[id].back = [this, id, x, gain, bias, xhat = std::move(xhat),
                           inv_sigma = std::move(inv_sigma)] {
            auto& g = nodes_[id].grd;
            int R = g.rows, C = g.cols;
            if (rq(gain)) {
                auto& gg = gref(gain);
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) gg.data[c] += g.at(r, c) * xhat.at(r, c);
            }
            if (rq(bias)) {
                auto& gb = gref(bias);
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) gb.data[c] += g.at(r, c);
            }
            if (rq(x)) {
                auto& gx = gref(x);
                auto& tg = val(gain);
                for (int r = 0; r < R; ++r) {
                    T mean_dxhat = 0, mean_dxhat_xhat = 0;
                    for (int c = 0; c < C; ++c) {
                        T dxh = g.at(r, c) * tg.data[c];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat.at(r, c);
                    }
                    mean_dxhat /= C;
                    mean_dxhat_xhat /= C;
                    for (int c = 0; c < C; ++c) {
                        T dxh = g.at(r, c) * tg.data[c];
                        gx.at(r, c) += inv_sigma[r] * (dxh - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat);
                    }
                }
            }
        };
        return id;
    }

    /// Sum of per-row cross-entropy between logits (NxK) and integer labels.
    NodeId cross_entropy_sum(NodeId logits, std::vector<int> labels) {
        auto& tz = val(logits);
        if (static_cast<int>(labels.size()) != tz.rows)
            throw std::invalid_argument("cross_entropy_sum: label count " +
                                        std::to_string(labels.size()) + " vs logits " + tz.shape_str());
        for (int r = 0; r < tz.rows; ++r)
            if (labels[r] < 0 || labels[r] >= tz.cols)
                throw std::invalid_argument("cross_entropy_sum: label " + std::to_string(labels[r]) +
                                            " out of range at row " + std::to_string(r));
        Tensor<T> probs(tz.rows, tz.cols);
        T total = 0;
        for (int r = 0; r < tz.rows; ++r) {
            T mx = -std::numeric_limits<T>::infinity();
            for (int c = 0; c < tz.cols; ++c) mx = std::max(mx, tz.at(r, c));
            T sum = 0;
            for (int c = 0; c < tz.cols; ++c) sum += std::exp(tz.at(r, c) - mx);
            T lse = mx + std::log(sum);
            total += lse - tz.at(r, labels[r]);
            for (int c = 0; c < tz.cols; ++c) probs.at(r, c) = std::exp(tz.at(r, c) - lse);
        }
        NodeId id = push(Tensor<T>::scalar(total), rq(logits), nullptr, {logits});
        nodes_[id].back = [this, id, logits, probs = std::move(probs), labels = std::move(labels)] {
            if (!rq(logits)) return;
            T g = nodes_[id].grd.data[0];
            auto& gz = gref(logits);
            for (int r = 0; r < probs.rows; ++r)
                for (int c = 0; c < probs.cols; ++c)
                    gz.at(r, c) += g * (probs.at(r, c) - (labels[r] == c ? T(1) : T(0)));
        };
        return id;
    }

    NodeId sum(NodeId x) {
        T acc = 0;
        for (T v : val(x).data) acc += v;
        NodeId id = push(Tensor<T>::scalar(acc), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x] {
            if (!rq(x)) return;
            T g = nodes_[id].grd.data[0];
            for (auto& v : gref(x).data) v += g;
        };
        return id;
    }

    NodeId mean(NodeId x) {
        int n = val(x).numel();
        T acc = 0;
        for (T v : val(x).data) acc += v;
        NodeId id = push(Tensor<T>::scalar(acc / n), rq(x), nullptr, {x});
        nodes_[id].back = [this, id, x, n] {
            if (!rq(x)) return;
            T g = nodes_[id].grd.data[0] / n;
            for (auto& v : gref(x).data) v += g;
        };
        return id;
    }

    /// Cosine similarity of each row of m (KxD) against v (1xD) -> 1xK.
    NodeId cosine_rows(NodeId m, NodeId v) {
        auto& tm = val(m);
        auto& tv = val(v);
        require(tv.rows == 1 && tv.cols == tm.cols, "cosine_rows", tm, tv);
        int K = tm.rows, D = tm.cols;
        T vnorm = 0;
        for (int c = 0; c < D; ++c) vnorm += tv.data[c] * tv.data[c];
        vnorm = std::sqrt(vnorm);
        Tensor<T> out(1, K);
        std::vector<T> mnorm(K), dot(K);
        for (int k = 0; k < K; ++k) {
            T n2 = 0, d = 0;
            for (int c = 0; c < D; ++c) {
                n2 += tm.at(k, c) * tm.at(k, c);
                d += tm.at(k, c) * tv.data[c];
            }
            mnorm[k] = std::sqrt(n2);
            dot[k] = d;
            out.data[k] = d / (mnorm[k] * vnorm);
        }
        NodeId id = push(std::move(out), rq(m) || rq(v), nullptr, {m, v});
        nodes_[id].back = [this, id, m, v, mnorm = std::move(mnorm), dot = std::move(dot), vnorm] {
            auto& g = nodes_[id].grd;
            auto& tm = val(m);
            auto& tv = val(v);
            int K = tm.rows, D = tm.cols;
            for (int k = 0; k < K; ++k) {
                T gk = g.data[k];
                if (gk == T(0)) continue;
                T denom = mnorm[k] * vnorm;
                T s = dot[k] / denom;
                if (rq(m)) {
                    auto& gm = gref(m);
                    for (int c = 0; c < D; ++c)
                        gm.at(k, c) += gk * (tv.data[c] / denom - s * tm.at(k, c) / (mnorm[k] * mnorm[k]));
                }
                if (rq(v)) {
                    auto& gv = gref(v);
                    for (int c = 0; c < D; ++c)
                        gv.data[c] += gk * (tm.at(k, c) / denom - s * tv.data[c] / (vnorm * vnorm));
                }
            }
        };
        return id;
    }

    /// Multi-head scaled dot-product attention over one sequence (NxE).
    /// q, k, v are projected inputs; composed from primitive ops so the
    /// adjoint is correct by construction.
    NodeId sdpa(NodeId q, NodeId k, NodeId v, int n_heads) {
        int e = val(q).cols;
        int n = val(q).rows;
        if (e % n_heads != 0) throw std::invalid_argument("sdpa: dim not divisible by heads");
        int dh = e / n_heads;
        T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
        std::vector<NodeId> heads;
        heads.reserve(n_heads);
        for (int h = 0; h < n_heads; ++h) {
            NodeId qh = slice(q, 0, n, h * dh, (h + 1) * dh);
            NodeId kh = slice(k, 0, n, h * dh, (h + 1) * dh);
            NodeId vh = slice(v, 0, n, h * dh, (h + 1) * dh);
            NodeId scores = affine(matmul(qh, kh, false, true), inv_sqrt, T(0));
            heads.push_back(matmul(softmax_rows(scores), vh));
        }
        return n_heads == 1 ? heads[0] : concat_cols(heads);
    }

    /// Forward takes hard's value; backward routes entirely into soft.
    NodeId straight_through(NodeId hard, NodeId soft) {
        auto& th = val(hard);
        auto& ts = val(soft);
        require(th.same_shape(ts), "straight_through", th, ts);
        NodeId id = push(th, rq(soft), nullptr, {soft});
        nodes_[id].back = [this, id, soft] {
            if (!rq(soft)) return;
            auto& g = nodes_[id].grd;
            for (int i = 0; i < g.numel(); ++i) gref(soft).data[i] += g.data[i];
        };
        return id;
    }

    NodeId detach(NodeId x) { return constant(val(x)); }

    /// Reverse sweep from a scalar loss. Populates Param::grad for trainable
    /// leaves; forward values are left untouched.
    void backward(NodeId loss) {
        auto& tl = val(loss);
        if (!tl.is_scalar())
            throw std::invalid_argument("backward: loss must be scalar, got " + tl.shape_str());
        for (auto& n : nodes_) {
            n.grd = Tensor<T>(n.val.rows, n.val.cols);
        }
        nodes_[loss].grd.data[0] = T(1);
        for (int id = loss; id >= 0; --id) {
            auto& n = nodes_[id];
            if (!n.rq) continue;
            if (n.back) n.back();
            if (n.leaf_param && n.leaf_param->trainable) {
                auto& pg = n.leaf_param->grad;
                for (int i = 0; i < n.grd.numel(); ++i) pg.data[i] += n.grd.data[i];
            }
        }
    }

  private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grd;
        bool rq = false;
        Param<T>* leaf_param = nullptr;
        std::function<void()> back;
    };

    std::vector<Node> nodes_;

    int check(NodeId id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw std::out_of_range("Graph: bad node id");
        return id;
    }

    const Tensor<T>& val(NodeId id) const { return nodes_[check(id)].val; }
    Tensor<T>& gref(NodeId id) { return nodes_[check(id)].grd; }
    bool rq(NodeId id) const { return nodes_[check(id)].rq; }

    NodeId push(Tensor<T> v, bool requires, Param<T>* p, std::vector<NodeId> /*inputs*/) {
        Node n;
        n.val = std::move(v);
        n.rq = requires;
        n.leaf_param = p;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    static void require(bool ok, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (!ok)
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                        " vs " + b.shape_str());
    }
};

/// Result of a finite-difference audit.
template <typename T>
struct GradCheckResult {
    T max_rel_error = 0;
    std::vector<std::string> frozen_in_wrt;  // frozen params that were requested
};

/// Central finite differences against analytic gradients.
/// build must construct the full forward graph and return the scalar loss id.
/// Error metric: |analytic - fd| / max(1, |fd|), maximized over coordinates.
template <typename T, typename BuildFn>
GradCheckResult<T> grad_check(BuildFn build, const std::vector<Param<T>*>& wrt, T eps) {
    if (eps <= T(0)) throw std::invalid_argument("grad_check: eps must be positive");
    GradCheckResult<T> res;

    for (Param<T>* p : wrt) p->zero_grad();
    {
        Graph<T> g;
        auto loss = build(g);
        g.backward(loss);
    }

    auto eval = [&]() -> T {
        Graph<T> g;
        auto loss = build(g);
        return g.value(loss).data[0];
    };

    for (Param<T>* p : wrt) {
        if (!p->trainable) {
            res.frozen_in_wrt.push_back(p->name);
            for (T gv : p->grad.data)
                if (gv != T(0)) throw std::logic_error("grad_check: frozen param has gradient: " + p->name);
            continue;
        }
        for (int i = 0; i < p->value.numel(); ++i) {
            T orig = p->value.data[i];
            p->value.data[i] = orig + eps;
            T up = eval();
            p->value.data[i] = orig - eps;
            T down = eval();
            p->value.data[i] = orig;
            T fd = (up - down) / (T(2) * eps);
            T rel = std::abs(p->grad.data[i] - fd) / std::max(T(1), std::abs(fd));
            res.max_rel_error = std::max(res.max_rel_error, rel);
        }
    }
    return res;
}

}  // namespace pfusion
