/*
 * predictors.hpp -- first-order Markov-chain baseline, the external
 * score-file interface, and ACC@k evaluation (overall and per overlap bin).
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"
#include "mobaudit/csv.hpp"
#include "mobaudit/overlap.hpp"

namespace mobaudit {

/// Ranked candidates for one trajectory: (location, score), scores
/// non-increasing, locations unique.
using RankedCandidates = std::vector<std::pair<LocationId, double>>;

/// First-order transition counts plus a global-popularity fallback.
/// Counts are kept as integers so probabilities are exact rationals.
struct TransitionMatrix {
    // per source location: (destination, count), sorted by destination id
    std::map<LocationId, std::vector<std::pair<LocationId, std::uint64_t>>> rows;
    std::map<LocationId, std::uint64_t> row_totals;
    std::vector<std::pair<LocationId, std::uint64_t>> global_counts; // sorted by id
    std::uint64_t global_total = 0;

    double prob(LocationId from, LocationId to) const {
        auto it = rows.find(from);
        if (it == rows.end()) return 0.0;
        auto jt = std::lower_bound(it->second.begin(), it->second.end(), to,
                                   [](const auto& e, LocationId v) { return e.first < v; });
        if (jt == it->second.end() || jt->first != to) return 0.0;
        return static_cast<double>(jt->second) / static_cast<double>(row_totals.at(from));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["global_total"] = global_total;
        auto& g = j["global_counts"] = nlohmann::json::array();
        for (const auto& [loc, n] : global_counts) g.push_back({loc, n});
        auto& r = j["rows"] = nlohmann::json::object();
        for (const auto& [from, dests] : rows) {
            nlohmann::json row = nlohmann::json::array();
            for (const auto& [to, n] : dests) row.push_back({to, n});
            r[std::to_string(from)] = std::move(row);
        }
        return j;
    }

    static TransitionMatrix from_json(const nlohmann::json& j) {
        TransitionMatrix m;
        m.global_total = j.at("global_total").get<std::uint64_t>();
        for (const auto& e : j.at("global_counts"))
            m.global_counts.emplace_back(e.at(0).get<LocationId>(), e.at(1).get<std::uint64_t>());
        for (const auto& [from, row] : j.at("rows").items()) {
            const auto src = static_cast<LocationId>(std::stoul(from));
            auto& dests = m.rows[src];
            std::uint64_t total = 0;
            for (const auto& e : row) {
                dests.emplace_back(e.at(0).get<LocationId>(), e.at(1).get<std::uint64_t>());
                total += e.at(1).get<std::uint64_t>();
            }
            m.row_totals[src] = total;
        }
        return m;
    }
};

/// Counts consecutive transitions within each training trajectory.
inline TransitionMatrix mmc_fit(std::span<const Trajectory> train) {
    if (train.empty()) throw input_error("mmc_fit: empty training set");
    TransitionMatrix m;
    std::map<LocationId, std::map<LocationId, std::uint64_t>> counts;
    std::map<LocationId, std::uint64_t> visits;
    for (const auto& t : train) {
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            ++visits[t.points[i].loc];
            if (i + 1 < t.points.size()) ++counts[t.points[i].loc][t.points[i + 1].loc];
        }
    }
    for (const auto& [from, dests] : counts) {
        auto& row = m.rows[from];
        std::uint64_t total = 0;
        for (const auto& [to, n] : dests) {
            row.emplace_back(to, n);
            total += n;
        }
        m.row_totals[from] = total;
    }
    for (const auto& [loc, n] : visits) {
        m.global_counts.emplace_back(loc, n);
        m.global_total += n;
    }
    return m;
}

/// Ranked candidates for the next location after `current`: the last
/// location's transition row sorted by probability (ties to the lower id),
/// padded from the popularity fallback. Padding scores are scaled below
/// the last row score to keep the ranking non-increasing.
inline RankedCandidates mmc_score(const TransitionMatrix& model, const Trajectory& current, std::size_t depth) {
    if (current.points.empty()) throw input_error("mmc_score: empty current trajectory");
    const LocationId last = current.points.back().loc;

    RankedCandidates out;
    std::unordered_map<LocationId, bool> taken;
    auto it = model.rows.find(last);
    if (it != model.rows.end()) {
        const double total = static_cast<double>(model.row_totals.at(last));
        std::vector<std::pair<LocationId, std::uint64_t>> row = it->second;
        std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        for (const auto& [loc, n] : row) {
            if (out.size() >= depth) break;
            out.emplace_back(loc, static_cast<double>(n) / total);
            taken[loc] = true;
        }
    }
    if (out.size() < depth && model.global_total > 0) {
        const double scale = out.empty() ? 1.0 : out.back().second;
        std::vector<std::pair<LocationId, std::uint64_t>> pop = model.global_counts;
        std::stable_sort(pop.begin(), pop.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        for (const auto& [loc, n] : pop) {
            if (out.size() >= depth) break;
            if (taken.count(loc)) continue;
            out.emplace_back(loc, scale * static_cast<double>(n) / static_cast<double>(model.global_total));
        }
    }
    return out;
}

/// Ranked candidate lists keyed by trajectory, as produced natively or
/// loaded from an external predictor's score file.
struct ScoreTable {
    std::string model;
    std::size_t depth = 0; // requested candidate depth
    std::map<TrajectoryId, RankedCandidates> rows;
};

namespace detail {

inline std::string score_line(TrajectoryId id, const RankedCandidates& cand) {
    std::string out = "{\"traj\": " + std::to_string(id) + ", \"cand\": [";
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(cand[i].first);
    }
    out += "], \"score\": [";
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (i) out += ", ";
        out += fmt_double(cand[i].second);
    }
    out += "]}";
    return out;
}

} // namespace detail

/// JSON Lines, one object per trajectory:
///   {"traj": <id>, "cand": [<loc>...], "score": [<float>...]}
/// UTF-8, LF line endings, scores non-increasing.
inline void save_score_file(const std::filesystem::path& path, const ScoreTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    for (const auto& [id, cand] : table.rows) out << detail::score_line(id, cand) << "\n";
}

inline ScoreTable load_score_file(const std::filesystem::path& path, std::string model_name = "") {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open score file: " + path.string());
    ScoreTable table;
    table.model = model_name.empty() ? path.stem().string() : std::move(model_name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("traj") || !j.contains("cand") || !j.contains("score"))
            throw validation_error(where + ": malformed score line");
        const auto id = j["traj"].get<TrajectoryId>();
        const auto& cand = j["cand"];
        const auto& score = j["score"];
        if (!cand.is_array() || !score.is_array() || cand.size() != score.size())
            throw validation_error(where + ": cand/score arrays must be equal-length");
        RankedCandidates row;
        row.reserve(cand.size());
        std::unordered_map<LocationId, bool> seen;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cand.size(); ++i) {
            const auto loc = cand[i].get<LocationId>();
            const double s = score[i].get<double>();
            if (!std::isfinite(s)) throw validation_error(where + ": non-finite score");
            if (s > prev)
                throw validation_error(where + ": scores must be non-increasing (trajectory " +
                                       std::to_string(id) + ")");
            if (!seen.emplace(loc, true).second)
                throw validation_error(where + ": duplicate candidate location " + std::to_string(loc));
            prev = s;
            row.emplace_back(loc, s);
        }
        if (!table.rows.emplace(id, std::move(row)).second)
            throw validation_error(where + ": duplicate trajectory " + std::to_string(id));
        table.depth = std::max(table.depth, cand.size());
    }
    return table;
}

/// Trajectories present in `expected` but absent from the table (and the
/// reverse); both empty means full coverage.
struct CoverageReport {
    std::vector<TrajectoryId> missing;
    std::vector<TrajectoryId> extra;
    bool full() const { return missing.empty() && extra.empty(); }
};

inline CoverageReport check_coverage(const ScoreTable& table, std::span<const TrajectoryId> expected) {
    CoverageReport rep;
    std::unordered_map<TrajectoryId, bool> want;
    for (TrajectoryId id : expected) {
        want[id] = true;
        if (!table.rows.count(id)) rep.missing.push_back(id);
    }
    for (const auto& [id, _] : table.rows)
        if (!want.count(id)) rep.extra.push_back(id);
    return rep;
}

/// One evaluation target per test trajectory of length >= 2: the prefix is
/// the current trajectory, the last point's location is the ground truth.
struct PredictionInstance {
    Trajectory prefix;     // same id/user as the source trajectory
    LocationId truth = 0;
    LocationId anchor = 0; // last location of the prefix
};

struct PredictionTargets {
    std::vector<PredictionInstance> instances;
    std::size_t skipped = 0; // length-1 trajectories
    std::map<TrajectoryId, LocationId> truth;
};

inline PredictionTargets make_targets(std::span<const Trajectory> trajectories) {
    PredictionTargets out;
    for (const auto& t : trajectories) {
        if (t.points.size() < 2) {
            ++out.skipped;
            continue;
        }
        PredictionInstance inst;
        inst.prefix.id = t.id;
        inst.prefix.user = t.user;
        inst.prefix.points.assign(t.points.begin(), t.points.end() - 1);
        inst.truth = t.points.back().loc;
        inst.anchor = inst.prefix.points.back().loc;
        out.truth[t.id] = inst.truth;
        out.instances.push_back(std::move(inst));
    }
    return out;
}

/// metric name -> bin -> test trajectory ids
using Strata = std::map<std::string, std::map<int, std::vector<TrajectoryId>>>;

inline Strata strata_from_records(std::span<const OverlapRecord> records) {
    Strata s;
    std::map<std::string, std::vector<OverlapRecord>> by_metric;
    for (const auto& r : records) by_metric[std::string(metric_name(r.metric))].push_back(r);
    for (auto& [name, recs] : by_metric) s[name] = stratify(recs);
    return s;
}

struct BinAccuracy {
    double acc = 0;
    std::uint64_t count = 0;
};

struct EvalReport {
    std::string model;
    std::size_t k = 5;
    double overall = 0;
    std::uint64_t evaluated = 0;
    std::uint64_t skipped = 0;
    std::map<std::string, std::array<BinAccuracy, 5>> strata; // metric -> bins
};

/// Hit iff the true location appears among the top-k candidates. With
/// strata, per-bin accuracies are reported as well; the bins of each
/// metric must partition the evaluated trajectories.
inline EvalReport acc_at_k(const ScoreTable& table, const std::map<TrajectoryId, LocationId>& truth,
                           std::size_t k, const Strata* strata = nullptr, std::size_t skipped = 0) {
    if (k < 1) throw input_error("acc_at_k: k must be >= 1");
    EvalReport rep;
    rep.model = table.model;
    rep.k = k;
    rep.skipped = skipped;

    std::unordered_map<TrajectoryId, bool> hit;
    std::uint64_t hits = 0;
    for (const auto& [id, cand] : table.rows) {
        auto it = truth.find(id);
        if (it == truth.end())
            throw validation_error("acc_at_k: missing truth entry for trajectory " + std::to_string(id));
        bool h = false;
        const std::size_t depth = std::min(k, cand.size());
        for (std::size_t i = 0; i < depth; ++i)
            if (cand[i].first == it->second) {
                h = true;
                break;
            }
        hit[id] = h;
        if (h) ++hits;
    }
    rep.evaluated = table.rows.size();
    rep.overall = rep.evaluated == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(rep.evaluated);

    if (strata) {
        for (const auto& [metric, bins] : *strata) {
            auto& arr = rep.strata[metric];
            std::uint64_t covered = 0;
            for (const auto& [bin, ids] : bins) {
                if (bin < 0 || bin > 4) throw validation_error("acc_at_k: bin index out of range");
                std::uint64_t n = 0, h = 0;
                for (TrajectoryId id : ids) {
                    auto it = hit.find(id);
                    if (it == hit.end()) continue; // not evaluated (e.g. skipped length-1)
                    ++n;
                    if (it->second) ++h;
                }
                arr[static_cast<std::size_t>(bin)] =
                    BinAccuracy{n == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(n), n};
                covered += n;
            }
            if (covered != rep.evaluated)
                throw validation_error("acc_at_k: strata for metric " + metric +
                                       " do not partition the evaluated set");
        }
    }
    return rep;
}

inline nlohmann::json eval_report_json(const EvalReport& rep) {
    nlohmann::json j;
    j["model"] = rep.model;
    j["k"] = rep.k;
    j["overall"] = rep.overall;
    j["evaluated"] = rep.evaluated;
    j["skipped"] = rep.skipped;
    for (const auto& [metric, bins] : rep.strata) {
        nlohmann::json m;
        for (std::size_t b = 0; b < 5; ++b) {
            m[std::string(kBinLabels[b])] = {{"acc", bins[b].acc}, {"count", bins[b].count}};
        }
        j["strata"][metric] = std::move(m);
    }
    return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport rep;
    rep.model = j.at("model").get<std::string>();
    rep.k = j.at("k").get<std::size_t>();
    rep.overall = j.at("overall").get<double>();
    rep.evaluated = j.at("evaluated").get<std::uint64_t>();
    rep.skipped = j.at("skipped").get<std::uint64_t>();
    if (j.contains("strata")) {
        for (const auto& [metric, bins] : j.at("strata").items()) {
            auto& arr = rep.strata[metric];
            for (std::size_t b = 0; b < 5; ++b) {
                const auto& e = bins.at(std::string(kBinLabels[b]));
                arr[b] = BinAccuracy{e.at("acc").get<double>(), e.at("count").get<std::uint64_t>()};
            }
        }
    }
    return rep;
}

/// Wide CSV, one row per model: overall first, then metric x bin groups.
inline void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    std::vector<std::string> metrics;
    for (const auto& rep : reports)
        for (const auto& [m, _] : rep.strata)
            if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) metrics.push_back(m);
    std::sort(metrics.begin(), metrics.end());
    out << "model,overall";
    for (const auto& m : metrics)
        for (const auto& b : kBinLabels) out << "," << m << "_" << b;
    out << "\n";
    for (const auto& rep : reports) {
        out << csv_quote(rep.model) << "," << fmt_double(rep.overall);
        for (const auto& m : metrics) {
            auto it = rep.strata.find(m);
            for (std::size_t b = 0; b < 5; ++b) {
                out << ",";
                if (it != rep.strata.end()) out << fmt_double(it->second[b].acc);
            }
        }
        out << "\n";
    }
}

} // namespace mobaudit
