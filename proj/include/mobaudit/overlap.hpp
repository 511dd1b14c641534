/*
 * overlap.hpp -- the three test-train overlap metrics (set overlap,
 * longest common subsequence, common suffix), max-over-training
 * aggregation with inverted-index pruning, and bin stratification.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"
#include "mobaudit/csv.hpp"

namespace mobaudit {

enum class OverlapMetric { js, lcst, ofe };

inline std::string_view metric_name(OverlapMetric m) {
    switch (m) {
        case OverlapMetric::js: return "js";
        case OverlapMetric::lcst: return "lcst";
        case OverlapMetric::ofe: return "ofe";
    }
    return "?";
}

inline OverlapMetric parse_metric(std::string_view name) {
    if (name == "js") return OverlapMetric::js;
    if (name == "lcst") return OverlapMetric::lcst;
    if (name == "ofe") return OverlapMetric::ofe;
    throw input_error("unknown overlap metric: " + std::string(name));
}

inline constexpr std::array<std::string_view, 5> kBinLabels = {"0-20", "20-40", "40-60", "60-80", "80-100"};

/// Half-open bins [0,0.2) .. [0.6,0.8); the top bin [0.8,1.0] is closed
/// so that a full overlap lands in 80-100.
inline int bin_of(double score) {
    if (score < 0.0 || score > 1.0) throw validation_error("overlap score outside [0,1]: " + fmt_double(score));
    if (score < 0.2) return 0;
    if (score < 0.4) return 1;
    if (score < 0.6) return 2;
    if (score < 0.8) return 3;
    return 4;
}

struct OverlapRecord {
    TrajectoryId test_id = 0;
    OverlapMetric metric = OverlapMetric::js;
    double score = 0;
    TrajectoryId argmax_train = 0;
    int bin = 0;
};

namespace detail {

inline std::vector<LocationId> sorted_unique(std::span<const LocationId> seq) {
    std::vector<LocationId> s(seq.begin(), seq.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

inline std::size_t intersection_size(std::span<const LocationId> a, std::span<const LocationId> b) {
    std::size_t n = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) ++i;
        else if (b[j] < a[i]) ++j;
        else { ++n; ++i; ++j; }
    }
    return n;
}

// Classic LCS length over location ids, two-row DP.
inline std::size_t lcs_length(std::span<const LocationId> a, std::span<const LocationId> b) {
    if (a.empty() || b.empty()) return 0;
    if (a.size() < b.size()) std::swap(a, b); // shorter sequence -> rows
    std::vector<std::uint32_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        const LocationId ai = a[i - 1];
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (ai == b[j - 1]) cur[j] = prev[j - 1] + 1;
            else cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// Length of the common suffix (both sequences reversed, matched from
// position 0 until the first mismatch).
inline std::size_t common_suffix_length(std::span<const LocationId> a, std::span<const LocationId> b) {
    const std::size_t n = std::min(a.size(), b.size());
    std::size_t k = 0;
    while (k < n && a[a.size() - 1 - k] == b[b.size() - 1 - k]) ++k;
    return k;
}

inline void require_nonempty(const Trajectory& t, const char* op) {
    if (t.points.empty()) throw input_error(std::string(op) + ": empty trajectory");
}

} // namespace detail

/// Set overlap of visited locations, |A 'n' B| / |A u B|. With
/// `printed_form` the complement (a distance, not a similarity) is
/// returned instead, for auditing against sources that define it that way.
inline double js(const Trajectory& test, const Trajectory& train, bool printed_form = false) {
    detail::require_nonempty(test, "js");
    detail::require_nonempty(train, "js");
    const auto a = detail::sorted_unique(test.locations());
    const auto b = detail::sorted_unique(train.locations());
    const std::size_t inter = detail::intersection_size(a, b);
    const std::size_t uni = a.size() + b.size() - inter;
    const double sim = static_cast<double>(inter) / static_cast<double>(uni);
    return printed_form ? 1.0 - sim : sim;
}

/// Longest common subsequence of location ids, normalized by the test length.
inline double lcst(const Trajectory& train, const Trajectory& test) {
    detail::require_nonempty(train, "lcst");
    detail::require_nonempty(test, "lcst");
    const auto p = train.locations();
    const auto r = test.locations();
    return static_cast<double>(detail::lcs_length(p, r)) / static_cast<double>(r.size());
}

/// Common suffix length of location ids, normalized by the test length.
inline double ofe(const Trajectory& test, const Trajectory& train) {
    detail::require_nonempty(test, "ofe");
    detail::require_nonempty(train, "ofe");
    const auto r = test.locations();
    const auto p = train.locations();
    return static_cast<double>(detail::common_suffix_length(p, r)) / static_cast<double>(r.size());
}

/// Read-only index over the training set: per-trajectory location
/// sequences/sets plus inverted postings used to prune the pairwise scan.
/// Train trajectories are kept sorted by id so that ties in the max
/// resolve to the lowest id in one forward pass.
class LocationIndex {
public:
    static LocationIndex build(std::span<const Trajectory> train) {
        if (train.empty()) throw input_error("LocationIndex: empty training set");
        LocationIndex idx;
        idx.ids_.reserve(train.size());
        std::vector<const Trajectory*> order;
        order.reserve(train.size());
        for (const auto& t : train) {
            detail::require_nonempty(t, "LocationIndex");
            order.push_back(&t);
        }
        std::sort(order.begin(), order.end(),
                  [](const Trajectory* a, const Trajectory* b) { return a->id < b->id; });
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto& t = *order[i];
            if (i > 0 && t.id == idx.ids_.back())
                throw validation_error("duplicate training trajectory id " + std::to_string(t.id));
            idx.ids_.push_back(t.id);
            idx.seqs_.push_back(t.locations());
            idx.sets_.push_back(detail::sorted_unique(idx.seqs_.back()));
            for (LocationId loc : idx.sets_.back()) idx.postings_[loc].push_back(static_cast<std::uint32_t>(i));
            idx.last_postings_[idx.seqs_.back().back()].push_back(static_cast<std::uint32_t>(i));
        }
        return idx;
    }

    std::size_t size() const { return ids_.size(); }
    TrajectoryId id_at(std::size_t i) const { return ids_[i]; }
    const std::vector<LocationId>& seq_at(std::size_t i) const { return seqs_[i]; }
    const std::vector<LocationId>& set_at(std::size_t i) const { return sets_[i]; }

    const std::vector<std::uint32_t>* postings(LocationId loc) const {
        auto it = postings_.find(loc);
        return it == postings_.end() ? nullptr : &it->second;
    }
    const std::vector<std::uint32_t>* last_postings(LocationId loc) const {
        auto it = last_postings_.find(loc);
        return it == last_postings_.end() ? nullptr : &it->second;
    }

private:
    std::vector<TrajectoryId> ids_;
    std::vector<std::vector<LocationId>> seqs_;
    std::vector<std::vector<LocationId>> sets_;
    std::unordered_map<LocationId, std::vector<std::uint32_t>> postings_;
    std::unordered_map<LocationId, std::vector<std::uint32_t>> last_postings_;
};

namespace detail {

// Ascending, deduplicated union of the postings of the test locations.
inline std::vector<std::uint32_t> gather_candidates(const LocationIndex& idx,
                                                    std::span<const LocationId> test_set) {
    std::vector<std::uint32_t> cand;
    for (LocationId loc : test_set)
        if (const auto* p = idx.postings(loc)) cand.insert(cand.end(), p->begin(), p->end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    return cand;
}

} // namespace detail

/// Max overlap of one test trajectory against the whole training set.
/// Ties resolve to the lowest training trajectory id. Pruning only skips
/// candidates whose upper bound cannot beat (or tie below) the running
/// max, so the result is identical to a full linear scan.
inline OverlapRecord max_overlap(const Trajectory& test, const LocationIndex& index, OverlapMetric metric,
                                 bool use_pruning = true) {
    detail::require_nonempty(test, "max_overlap");
    const auto r_seq = test.locations();
    const auto r_set = detail::sorted_unique(r_seq);
    const double r_len = static_cast<double>(r_seq.size());

    OverlapRecord rec;
    rec.test_id = test.id;
    rec.metric = metric;
    rec.score = 0.0;
    rec.argmax_train = index.id_at(0); // all-zero scores tie-break to the lowest id

    auto consider = [&](std::size_t i, double score) {
        if (score > rec.score) {
            rec.score = score;
            rec.argmax_train = index.id_at(i);
        }
    };

    switch (metric) {
        case OverlapMetric::js: {
            auto scan = [&](std::size_t i) {
                const auto& p_set = index.set_at(i);
                if (use_pruning) {
                    const double ub = static_cast<double>(std::min(r_set.size(), p_set.size())) /
                                      static_cast<double>(std::max(r_set.size(), p_set.size()));
                    if (ub <= rec.score) return;
                }
                const std::size_t inter = detail::intersection_size(r_set, p_set);
                const std::size_t uni = r_set.size() + p_set.size() - inter;
                consider(i, static_cast<double>(inter) / static_cast<double>(uni));
            };
            if (use_pruning) {
                for (std::uint32_t i : detail::gather_candidates(index, r_set)) scan(i);
            } else {
                for (std::size_t i = 0; i < index.size(); ++i) scan(i);
            }
            break;
        }
        case OverlapMetric::lcst: {
            auto scan = [&](std::size_t i) {
                const auto& p_seq = index.seq_at(i);
                if (use_pruning) {
                    // LCS length is bounded by the shorter sequence and by
                    // the number of test positions whose location occurs in
                    // the training set at all.
                    double ub = static_cast<double>(std::min(p_seq.size(), r_seq.size())) / r_len;
                    if (ub <= rec.score) return;
                    const auto& p_set = index.set_at(i);
                    std::size_t hits = 0;
                    for (LocationId loc : r_seq)
                        if (std::binary_search(p_set.begin(), p_set.end(), loc)) ++hits;
                    ub = static_cast<double>(hits) / r_len;
                    if (ub <= rec.score) return;
                }
                consider(i, static_cast<double>(detail::lcs_length(p_seq, r_seq)) / r_len);
            };
            if (use_pruning) {
                for (std::uint32_t i : detail::gather_candidates(index, r_set)) scan(i);
            } else {
                for (std::size_t i = 0; i < index.size(); ++i) scan(i);
            }
            break;
        }
        case OverlapMetric::ofe: {
            auto scan = [&](std::size_t i) {
                const auto& p_seq = index.seq_at(i);
                consider(i, static_cast<double>(detail::common_suffix_length(p_seq, r_seq)) / r_len);
            };
            if (use_pruning) {
                // Only trajectories ending at the same location can score > 0.
                if (const auto* p = index.last_postings(r_seq.back()))
                    for (std::uint32_t i : *p) scan(i);
            } else {
                for (std::size_t i = 0; i < index.size(); ++i) scan(i);
            }
            break;
        }
    }
    rec.bin = bin_of(rec.score);
    return rec;
}

/// One record per test trajectory, in input order, computed in parallel.
/// Results are independent of the thread count.
inline std::vector<OverlapRecord> compute_overlaps(std::span<const Trajectory> test, const LocationIndex& index,
                                                   OverlapMetric metric, unsigned threads = 1,
                                                   bool use_pruning = true) {
    std::vector<OverlapRecord> out(test.size());
    detail::parallel_for(test.size(), threads,
                         [&](std::size_t i) { out[i] = max_overlap(test[i], index, metric, use_pruning); });
    return out;
}

/// Partition of the test set by overlap bin; bins are keyed 0..4.
inline std::map<int, std::vector<TrajectoryId>> stratify(std::span<const OverlapRecord> records) {
    std::map<int, std::vector<TrajectoryId>> bins;
    std::unordered_map<TrajectoryId, int> seen;
    for (const auto& r : records) {
        if (!seen.emplace(r.test_id, r.bin).second)
            throw validation_error("stratify: duplicate trajectory id " + std::to_string(r.test_id));
        if (r.bin != bin_of(r.score)) throw validation_error("stratify: bin inconsistent with score");
        bins[r.bin].push_back(r.test_id);
    }
    return bins;
}

inline void write_overlap_csv(const std::filesystem::path& path, std::span<const OverlapRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    out << "test_trajectory_id,score,argmax_train_id,bin\n";
    std::vector<const OverlapRecord*> order;
    order.reserve(records.size());
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(),
              [](const OverlapRecord* a, const OverlapRecord* b) { return a->test_id < b->test_id; });
    for (const auto* r : order)
        out << r->test_id << "," << fmt_double(r->score) << "," << r->argmax_train << "," << kBinLabels[r->bin]
            << "\n";
}

inline std::vector<OverlapRecord> read_overlap_csv(const std::filesystem::path& path, OverlapMetric metric) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<OverlapRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line, ',');
        if (f.size() != 4) throw validation_error(path.string() + ": malformed row: " + line);
        OverlapRecord r;
        r.metric = metric;
        std::int64_t id;
        if (!parse_i64(f[0], id) || !parse_double(f[1], r.score))
            throw validation_error(path.string() + ": malformed row: " + line);
        r.test_id = static_cast<TrajectoryId>(id);
        if (!parse_i64(f[2], id)) throw validation_error(path.string() + ": malformed row: " + line);
        r.argmax_train = static_cast<TrajectoryId>(id);
        r.bin = bin_of(r.score);
        if (kBinLabels[r.bin] != f[3]) throw validation_error(path.string() + ": bin label mismatch: " + line);
        out.push_back(r);
    }
    return out;
}

/// Per-bin fractions for one metric (the bars of the overlap figure).
inline nlohmann::json bin_fractions(std::span<const OverlapRecord> records) {
    std::array<std::size_t, 5> counts{};
    for (const auto& r : records) ++counts[static_cast<std::size_t>(r.bin)];
    nlohmann::json j;
    for (std::size_t b = 0; b < 5; ++b) {
        j[std::string(kBinLabels[b])] =
            records.empty() ? 0.0 : static_cast<double>(counts[b]) / static_cast<double>(records.size());
    }
    return j;
}

} // namespace mobaudit
