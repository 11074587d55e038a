// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/dataset.hpp"
#include "pfusion/random.hpp"

namespace pfusion {

enum class StreamMode { ClassIncremental, DomainIncremental };

struct Task {
    Dataset train_slice;
    Dataset test_slice;
    std::set<int> class_ids;
    std::set<int> domain_ids;
};

struct TaskStream {
    std::vector<Task> tasks;
    StreamMode mode = StreamMode::ClassIncremental;
    int n_tasks = 0;
    std::vector<int> class_order;
    uint64_t seed = 0;
};

namespace detail {

constexpr double kTrainFraction = 0.8;  // per-class train share when the source is not pre-split

inline void check_permutation(const std::vector<int>& order, int n) {
    if (static_cast<int>(order.size()) != n)
        throw std::invalid_argument("class_order: size " + std::to_string(order.size()) +
                                    " != n_classes " + std::to_string(n));
    std::vector<bool> seen(n, false);
    for (int c : order) {
        if (c < 0 || c >= n) throw std::invalid_argument("class_order: id " + std::to_string(c) + " out of range");
        if (seen[c]) throw std::invalid_argument("class_order: duplicate class " + std::to_string(c));
        seen[c] = true;
    }
}

}  // namespace detail

inline std::vector<int> identity_order(int n) {
    std::vector<int> o(n);
    std::iota(o.begin(), o.end(), 0);
    return o;
}

inline std::vector<int> shuffled_order(int n, uint64_t seed) {
    auto o = identity_order(n);
    auto rng = make_rng(seed, SeedTag::ClassOrder);
    std::shuffle(o.begin(), o.end(), rng);
    return o;
}

/// Splits ds into n_tasks tasks with disjoint class sets taken in class_order.
/// Per-class items are split into train/test deterministically under seed.
inline TaskStream make_class_incremental_stream(const Dataset& ds, int n_tasks,
                                                const std::vector<int>& class_order, uint64_t seed) {
    ds.validate();
    if (n_tasks <= 0) throw std::invalid_argument("make_class_incremental_stream: n_tasks must be positive");
    if (ds.n_classes % n_tasks != 0)
        throw std::invalid_argument("make_class_incremental_stream: n_tasks " + std::to_string(n_tasks) +
                                    " does not divide n_classes " + std::to_string(ds.n_classes));
    detail::check_permutation(class_order, ds.n_classes);

    // per-class item indices, split train/test under the seed
    std::vector<std::vector<size_t>> by_class(ds.n_classes);
    for (size_t i = 0; i < ds.items.size(); ++i) by_class[ds.items[i].label].push_back(i);
    std::vector<std::vector<size_t>> train_idx(ds.n_classes), test_idx(ds.n_classes);
    for (int k = 0; k < ds.n_classes; ++k) {
        auto idx = by_class[k];
        auto rng = make_rng(seed, SeedTag::StreamSplit, static_cast<uint64_t>(k));
        std::shuffle(idx.begin(), idx.end(), rng);
        size_t n_train = static_cast<size_t>(idx.size() * detail::kTrainFraction);
        if (!idx.empty() && n_train == 0) n_train = 1;
        train_idx[k].assign(idx.begin(), idx.begin() + n_train);
        test_idx[k].assign(idx.begin() + n_train, idx.end());
        std::sort(train_idx[k].begin(), train_idx[k].end());
        std::sort(test_idx[k].begin(), test_idx[k].end());
    }

    TaskStream st;
    st.mode = StreamMode::ClassIncremental;
    st.n_tasks = n_tasks;
    st.class_order = class_order;
    st.seed = seed;
    int per_task = ds.n_classes / n_tasks;
    for (int t = 0; t < n_tasks; ++t) {
        Task task;
        task.train_slice.class_names = ds.class_names;
        task.train_slice.n_classes = ds.n_classes;
        task.test_slice.class_names = ds.class_names;
        task.test_slice.n_classes = ds.n_classes;
        for (int j = 0; j < per_task; ++j) {
            int k = class_order[t * per_task + j];
            task.class_ids.insert(k);
            for (size_t i : train_idx[k]) task.train_slice.items.push_back(ds.items[i]);
            for (size_t i : test_idx[k]) task.test_slice.items.push_back(ds.items[i]);
        }
        st.tasks.push_back(std::move(task));
    }
    return st;
}

/// One task per train domain over the full class set; a single fixed test set
/// drawn from test_domains is attached to every task.
inline TaskStream make_domain_incremental_stream(const Dataset& ds, const std::vector<int>& train_domains,
                                                 const std::vector<int>& test_domains) {
    ds.validate();
    if (train_domains.empty()) throw std::invalid_argument("make_domain_incremental_stream: no train domains");
    std::set<int> tr(train_domains.begin(), train_domains.end());
    std::set<int> te(test_domains.begin(), test_domains.end());
    for (int d : te)
        if (tr.count(d))
            throw std::invalid_argument("make_domain_incremental_stream: domain " + std::to_string(d) +
                                        " in both train and test");

    // every class must be present in every train domain
    for (int d : train_domains) {
        std::set<int> classes;
        for (auto& it : ds.items)
            if (it.domain && *it.domain == d) classes.insert(it.label);
        for (int k = 0; k < ds.n_classes; ++k)
            if (!classes.count(k))
                throw std::invalid_argument("make_domain_incremental_stream: class " + std::to_string(k) +
                                            " missing from domain " + std::to_string(d));
    }

    Dataset test;
    test.class_names = ds.class_names;
    test.n_classes = ds.n_classes;
    for (auto& it : ds.items)
        if (it.domain && te.count(*it.domain)) test.items.push_back(it);

    TaskStream st;
    st.mode = StreamMode::DomainIncremental;
    st.n_tasks = static_cast<int>(train_domains.size());
    st.class_order = identity_order(ds.n_classes);
    for (int d : train_domains) {
        Task task;
        task.train_slice.class_names = ds.class_names;
        task.train_slice.n_classes = ds.n_classes;
        for (auto& it : ds.items)
            if (it.domain && *it.domain == d) task.train_slice.items.push_back(it);
        task.test_slice = test;
        for (int k = 0; k < ds.n_classes; ++k) task.class_ids.insert(k);
        task.domain_ids.insert(d);
        st.tasks.push_back(std::move(task));
    }
    return st;
}

/// Classes of task t in arrival order (class_order order within the task).
inline std::vector<int> task_classes(const TaskStream& st, int t) {
    std::vector<int> out;
    if (st.mode == StreamMode::ClassIncremental) {
        int per_task = static_cast<int>(st.class_order.size()) / st.n_tasks;
        for (int j = 0; j < per_task; ++j) out.push_back(st.class_order[t * per_task + j]);
    } else {
        out = st.class_order;
    }
    return out;
}

}  // namespace pfusion
