/*
 * oracles.hpp -- independent reference implementations used only by tests:
 * brute-force subsequence enumeration, a naive reversed-prefix scanner,
 * direct set arithmetic, and a linear-scan max-overlap.
 */
#pragma once

#include <algorithm>
#include <set>
#include <span>
#include <vector>

#include "mobaudit/core.hpp"
#include "mobaudit/overlap.hpp"

namespace oracle {

using mobaudit::LocationId;
using mobaudit::Trajectory;

// Longest common subsequence by enumerating every subsequence of the
// shorter sequence (lengths <= ~16 only).
inline std::size_t lcs_bruteforce(std::span<const LocationId> a, std::span<const LocationId> b) {
    if (a.size() > b.size()) std::swap(a, b);
    auto is_subsequence = [&](const std::vector<LocationId>& sub) {
        std::size_t j = 0;
        for (std::size_t i = 0; i < b.size() && j < sub.size(); ++i)
            if (b[i] == sub[j]) ++j;
        return j == sub.size();
    };
    std::size_t best = 0;
    const std::size_t n = a.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        std::vector<LocationId> sub;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (std::size_t{1} << i)) sub.push_back(a[i]);
        if (sub.size() > best && is_subsequence(sub)) best = sub.size();
    }
    return best;
}

// Reverse both sequences, count matching prefix positions until the first
// mismatch.
inline std::size_t suffix_bruteforce(std::span<const LocationId> a, std::span<const LocationId> b) {
    std::vector<LocationId> ra(a.rbegin(), a.rend()), rb(b.rbegin(), b.rend());
    std::size_t count = 0;
    for (std::size_t k = 0; k < std::min(ra.size(), rb.size()); ++k) {
        if (ra[k] == rb[k]) ++count;
        else break;
    }
    return count;
}

inline double js_bruteforce(const Trajectory& test, const Trajectory& train) {
    std::set<LocationId> a, b, uni, inter;
    for (const auto& p : test.points) a.insert(p.loc);
    for (const auto& p : train.points) b.insert(p.loc);
    uni = a;
    uni.insert(b.begin(), b.end());
    for (LocationId x : a)
        if (b.count(x)) inter.insert(x);
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double lcst_bruteforce(const Trajectory& train, const Trajectory& test) {
    const auto p = train.locations();
    const auto r = test.locations();
    return static_cast<double>(lcs_bruteforce(p, r)) / static_cast<double>(r.size());
}

inline double ofe_bruteforce(const Trajectory& test, const Trajectory& train) {
    const auto p = train.locations();
    const auto r = test.locations();
    return static_cast<double>(suffix_bruteforce(p, r)) / static_cast<double>(r.size());
}

// Max-over-training by scanning every trajectory with the public metric
// functions; ties to the lowest trajectory id.
inline mobaudit::OverlapRecord max_overlap_fullscan(const Trajectory& test,
                                                    std::span<const Trajectory> train,
                                                    mobaudit::OverlapMetric metric) {
    std::vector<const Trajectory*> order;
    for (const auto& t : train) order.push_back(&t);
    std::sort(order.begin(), order.end(),
              [](const Trajectory* a, const Trajectory* b) { return a->id < b->id; });
    mobaudit::OverlapRecord rec;
    rec.test_id = test.id;
    rec.metric = metric;
    rec.score = -1.0;
    for (const auto* t : order) {
        double s = 0;
        switch (metric) {
            case mobaudit::OverlapMetric::js: s = mobaudit::js(test, *t); break;
            case mobaudit::OverlapMetric::lcst: s = mobaudit::lcst(*t, test); break;
            case mobaudit::OverlapMetric::ofe: s = mobaudit::ofe(test, *t); break;
        }
        if (s > rec.score) {
            rec.score = s;
            rec.argmax_train = t->id;
        }
    }
    rec.bin = mobaudit::bin_of(rec.score);
    return rec;
}

} // namespace oracle
