// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/autograd.hpp"
#include "pfusion/random.hpp"

namespace pfusion {

/// Per-input decision module for the Lite variant: a two-layer tanh MLP F
/// maps the raw image feature v_i to two positive scores; a straight-through
/// Gumbel-Softmax draw over them decides whether the Booster runs. F' is a
/// frozen copy of F taken at each task boundary for distillation.
template <typename T>
struct Gate {
    using NodeId = typename Graph<T>::NodeId;

    Param<T> w1, b1, w2, b2;                  // F
    Tensor<T> fw1, fb1, fw2, fb2;             // F' (frozen snapshot)
    bool has_snapshot = false;
    T tau = T(1);
    T rho = T(0.5);   // target activation fraction
    T zeta = T(0.1);  // usage penalty weight
    T delta = T(1);   // distillation weight
    int hidden = 64;

    static constexpr T kScoreFloor = T(1e-6);  // added after softplus before the log
    static constexpr T kLogGuard = T(1e-12);   // inside distillation logs

    void init(int feature_dim, int hidden_, T tau_, T rho_, T zeta_, T delta_, uint64_t seed) {
        if (tau_ <= T(0)) throw std::invalid_argument("gate: tau must be positive");
        hidden = hidden_;
        tau = tau_;
        rho = rho_;
        zeta = zeta_;
        delta = delta_;
        auto rng = make_rng(seed, SeedTag::GateInit);
        T s1 = T(1) / std::sqrt(static_cast<T>(feature_dim));
        T s2 = T(1) / std::sqrt(static_cast<T>(hidden));
        w1 = Param<T>("gate/w1", Tensor<T>::randn(feature_dim, hidden, rng, s1), true);
        b1 = Param<T>("gate/b1", Tensor<T>::zeros(1, hidden), true);
        w2 = Param<T>("gate/w2", Tensor<T>::randn(hidden, 2, rng, s2), true);
        b2 = Param<T>("gate/b2", Tensor<T>::zeros(1, 2), true);
        phase_ = Phase::Idle;
    }

    /// F(v): 1x2 strictly positive scores (softplus + floor).
    NodeId scores(Graph<T>& g, NodeId v) {
        auto h = g.tanh_(g.add_row(g.matmul(v, g.leaf(w1)), g.leaf(b1)));
        auto out = g.add_row(g.matmul(h, g.leaf(w2)), g.leaf(b2));
        return g.affine(g.softplus(out), T(1), kScoreFloor);
    }

    /// F'(v) as a constant (no graph dependence on F).
    Tensor<T> snapshot_scores(const Tensor<T>& v) const {
        if (!has_snapshot) throw std::logic_error("gate: no snapshot taken");
        Tensor<T> h(1, hidden);
        for (int j = 0; j < hidden; ++j) {
            T acc = fb1.data[j];
            for (int i = 0; i < v.cols; ++i) acc += v.data[i] * fw1.at(i, j);
            h.data[j] = std::tanh(acc);
        }
        Tensor<T> out(1, 2);
        for (int j = 0; j < 2; ++j) {
            T acc = fb2.data[j];
            for (int i = 0; i < hidden; ++i) acc += h.data[i] * fw2.at(i, j);
            out.data[j] = std::max(acc, T(0)) + std::log1p(std::exp(-std::abs(acc))) + kScoreFloor;
        }
        return out;
    }

    struct Decision {
        NodeId soft;  // 1x2 relaxed decision
        NodeId st;    // straight-through node: hard forward, soft backward
        bool use_booster;
    };

    static Tensor<T> gumbel_draw(std::mt19937_64& rng) {
        Tensor<T> gvec(1, 2);
        for (int k = 0; k < 2; ++k) {
            T u = uniform_draw<T>(rng, T(1e-12), T(1) - T(1e-12));
            gvec.data[k] = -std::log(-std::log(u));
        }
        return gvec;
    }

    /// M_soft = softmax((log F(v) + G) / tau); forward value of st is
    /// one-hot(argmax M_soft). Entry 0 means "use the Booster".
    Decision gumbel_decision(Graph<T>& g, NodeId v, const Tensor<T>& gumbel_noise, T tau_now,
                             bool soft_only = false) {
        if (tau_now <= T(0)) throw std::invalid_argument("gumbel_decision: tau must be positive");
        auto f = scores(g, v);
        auto logits = g.affine(g.add(g.log_(f), g.constant(gumbel_noise)), T(1) / tau_now, T(0));
        auto soft = g.softmax_rows(logits);
        const auto& sv = g.value(soft);
        int arg = sv.data[0] >= sv.data[1] ? 0 : 1;
        Tensor<T> hard(1, 2);
        hard.data[arg] = T(1);
        NodeId st = soft_only ? soft : g.straight_through(g.constant(std::move(hard)), soft);
        return {soft, st, arg == 0};
    }

    /// Deterministic inference decision: argmax of log F(v), no noise.
    bool decide(const Tensor<T>& v) {
        Graph<T> g;
        auto f = scores(g, g.constant(v));
        const auto& fv = g.value(f);
        return fv.data[0] >= fv.data[1];
    }

    /// KL(softmax(F'(v)) || softmax(F(v))) for one input, as a graph node.
    /// Zero exactly when the outputs match; gradient reaches F only.
    NodeId distill_term(Graph<T>& g, NodeId v, const Tensor<T>& v_value) {
        auto p_student = g.softmax_rows(g.log_(scores(g, v)));  // softmax over log F = normalize F
        Tensor<T> teacher_scores = snapshot_scores(v_value);
        Tensor<T> p_teacher(1, 2);
        T tsum = teacher_scores.data[0] + teacher_scores.data[1];
        p_teacher.data[0] = teacher_scores.data[0] / tsum;
        p_teacher.data[1] = teacher_scores.data[1] / tsum;
        // KL(p_t || p_s) = sum p_t (log p_t - log p_s)
        auto log_ps = g.log_(g.affine(p_student, T(1), kLogGuard));
        Tensor<T> log_pt(1, 2);
        log_pt.data[0] = std::log(p_teacher.data[0] + kLogGuard);
        log_pt.data[1] = std::log(p_teacher.data[1] + kLogGuard);
        auto diff = g.add(g.constant(std::move(log_pt)), g.affine(log_ps, T(-1), T(0)));
        return g.sum(g.mul(g.constant(std::move(p_teacher)), diff));
    }

    // Task phase bookkeeping: snapshot is legal exactly once per boundary,
    // after the task's final step.
    void begin_task() { phase_ = Phase::InTask; }

    void end_task() {
        if (phase_ != Phase::InTask) throw std::logic_error("gate end_task: no task in progress");
        phase_ = Phase::Boundary;
    }

    /// Freezes a deep copy of F. Valid only at a task boundary.
    void snapshot() {
        if (phase_ == Phase::InTask) throw std::logic_error("gate snapshot: called mid-task");
        if (phase_ != Phase::Boundary)
            throw std::logic_error("gate snapshot: no task boundary pending");
        fw1 = w1.value;
        fb1 = b1.value;
        fw2 = w2.value;
        fb2 = b2.value;
        has_snapshot = true;
        phase_ = Phase::Idle;
    }

    uint64_t snapshot_checksum() const {
        uint64_t h = checksum(fw1);
        h = splitmix64(h ^ checksum(fb1));
        h = splitmix64(h ^ checksum(fw2));
        return splitmix64(h ^ checksum(fb2));
    }

    void for_each_param(const std::function<void(Param<T>&)>& fn) {
        fn(w1);
        fn(b1);
        fn(w2);
        fn(b2);
    }

    std::vector<Param<T>*> trainable_params() { return {&w1, &b1, &w2, &b2}; }

  private:
    enum class Phase { Idle, InTask, Boundary };
    Phase phase_ = Phase::Idle;
};

/// Mean Booster activation over a decision log.
inline double activation_rate(const std::vector<bool>& decisions) {
    if (decisions.empty()) throw std::invalid_argument("activation_rate: empty decision log");
    double on = 0;
    for (bool d : decisions) on += d ? 1.0 : 0.0;
    return on / static_cast<double>(decisions.size());
}

}  // namespace pfusion
