/*
 * mobility.hpp -- spatial mobility-law features: mean hop distance,
 * the (r*f)^-gamma visitation law, and the returner/explorer dichotomy
 * from the radius of gyration.
 */
#pragma once

#include <algorithm>
#include <cmath>
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
#include "mobaudit/geo.hpp"

namespace mobaudit {

struct UserLawFeatures {
    double dist_u = 0;       // mean consecutive-hop distance, km
    bool dist_defined = true; // false when the user has no consecutive pair
    double r_g = 0;          // radius of gyration, km
    double r_g2 = 0;         // 2-radius (top-2 locations), km
    int re_u = 0;            // 0 returner, 1 explorer
};

/// Mean haversine distance over consecutive pairs within each trajectory
/// (pairs never cross trajectory boundaries). Empty when no pair exists.
inline std::optional<double> mean_hop_distance(std::span<const Trajectory> history,
                                               const LocationVocabulary& vocab) {
    double sum = 0;
    std::uint64_t pairs = 0;
    for (const auto& t : history) {
        for (std::size_t i = 0; i + 1 < t.points.size(); ++i) {
            const auto& a = vocab.at(t.points[i].loc);
            const auto& b = vocab.at(t.points[i + 1].loc);
            sum += haversine(a.lat, a.lon, b.lat, b.lon);
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;
    return sum / static_cast<double>(pairs);
}

/// Visit-weighted spatial spread around the visit-weighted centroid.
/// With k set, only the k most-visited locations (ties to the lower id)
/// enter, and the centroid is recomputed over them.
inline double radius_of_gyration(std::span<const Trajectory> history, const LocationVocabulary& vocab,
                                 std::optional<std::size_t> k = std::nullopt) {
    std::map<LocationId, std::uint64_t> visits;
    for (const auto& t : history)
        for (const auto& p : t.points) ++visits[p.loc];
    if (visits.empty()) return 0.0;

    std::vector<std::pair<LocationId, std::uint64_t>> weighted(visits.begin(), visits.end());
    if (k && *k < weighted.size()) {
        std::sort(weighted.begin(), weighted.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        weighted.resize(*k);
    }

    double wlat = 0, wlon = 0, w = 0;
    for (const auto& [loc, n] : weighted) {
        const auto& e = vocab.at(loc);
        wlat += e.lat * static_cast<double>(n);
        wlon += e.lon * static_cast<double>(n);
        w += static_cast<double>(n);
    }
    const LatLon center{wlat / w, wlon / w};

    double acc = 0;
    for (const auto& [loc, n] : weighted) {
        const auto& e = vocab.at(loc);
        const double d = haversine(e.lat, e.lon, center.lat, center.lon);
        acc += static_cast<double>(n) * d * d;
    }
    return std::sqrt(acc / w);
}

/// 0 (returner) iff the two most recurrent locations dominate the spread:
/// r_g2 > r_g/2. A user with r_g = 0 is a returner.
inline int returner_explorer(double r_g, double r_g2) {
    if (r_g < 0 || r_g2 < 0) throw input_error("returner_explorer: negative radius");
    if (r_g == 0) return 0;
    return r_g2 > r_g / 2.0 ? 0 : 1;
}

inline UserLawFeatures compute_user_features(std::span<const Trajectory> history,
                                             const LocationVocabulary& vocab) {
    UserLawFeatures f;
    if (auto d = mean_hop_distance(history, vocab)) {
        f.dist_u = *d;
    } else {
        f.dist_u = 0;
        f.dist_defined = false;
    }
    f.r_g = radius_of_gyration(history, vocab);
    f.r_g2 = radius_of_gyration(history, vocab, 2);
    f.re_u = returner_explorer(f.r_g, f.r_g2);
    return f;
}

namespace detail {

// Half the median nearest-neighbor distance between vocabulary locations;
// the clamp that keeps the r -> 0 singularity of the law finite. Exact up
// to 4096 locations, computed on a deterministic stride subsample above.
inline double half_median_nn_distance(const LocationVocabulary& vocab) {
    const std::size_t n = vocab.size();
    if (n < 2) return 1e-3;
    constexpr std::size_t kCap = 4096;
    std::vector<LocationId> pick;
    if (n <= kCap) {
        pick.resize(n);
        for (std::size_t i = 0; i < n; ++i) pick[i] = static_cast<LocationId>(i);
    } else {
        const std::size_t stride = (n + kCap - 1) / kCap;
        for (std::size_t i = 0; i < n; i += stride) pick.push_back(static_cast<LocationId>(i));
    }
    std::vector<double> nn(pick.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pick.size(); ++i) {
        const auto& a = vocab.at(pick[i]);
        for (std::size_t j = i + 1; j < pick.size(); ++j) {
            const auto& b = vocab.at(pick[j]);
            const double d = haversine(a.lat, a.lon, b.lat, b.lon);
            nn[i] = std::min(nn[i], d);
            nn[j] = std::min(nn[j], d);
        }
    }
    std::sort(nn.begin(), nn.end());
    const double median = nn[nn.size() / 2];
    return std::max(median / 2.0, 1e-9);
}

} // namespace detail

/// The fitted visitation law: score(c) ~ 1 / (r * f)^gamma with r the
/// distance from the prediction anchor (clamped below by r_min) and f the
/// training visit count of c (unseen locations smoothed to 1).
struct VisitationLawModel {
    double gamma = 1.6;
    double r_min = 1e-3;
    std::map<LocationId, std::uint64_t> visits; // training split only

    std::uint64_t visit_count(LocationId loc) const {
        auto it = visits.find(loc);
        return it == visits.end() || it->second == 0 ? 1 : it->second;
    }

    double raw_score(const LocationVocabulary& vocab, LocationId anchor, LocationId candidate) const {
        const auto& a = vocab.at(anchor);
        const auto& c = vocab.at(candidate);
        const double r = std::max(haversine(a.lat, a.lon, c.lat, c.lon), std::max(r_min, 1e-9));
        const double f = static_cast<double>(visit_count(candidate));
        return std::pow(r * f, -gamma);
    }

    std::string visit_digest() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [loc, n] : visits) {
            const std::string line = std::to_string(loc) + ":" + std::to_string(n) + "\n";
            h = detail::fnv1a64(line, h);
        }
        return detail::hex64(h);
    }
};

/// Least-squares slope, in log-log space, of the empirical next-visit
/// frequency against r*f. Observed transitions are binned by log(r*f) and
/// normalized by how many candidate locations fall in each bin
/// ("opportunities"), so data generated exactly from the law fits back to
/// its gamma. Falls back to `fallback` on degenerate input.
inline double fit_gamma(std::span<const Trajectory> train, const LocationVocabulary& vocab,
                        const VisitationLawModel& base, double fallback = 1.6,
                        std::vector<std::string>* warnings = nullptr) {
    auto warn = [&](const std::string& w) {
        if (warnings) warnings->push_back(w);
    };

    struct Event {
        LocationId anchor;
        LocationId next;
    };
    std::vector<Event> events;
    for (const auto& t : train)
        for (std::size_t i = 0; i + 1 < t.points.size(); ++i)
            events.push_back(Event{t.points[i].loc, t.points[i + 1].loc});
    if (events.size() < 30) {
        warn("fit_gamma: fewer than 30 transitions, using fallback gamma");
        return fallback;
    }

    std::map<LocationId, std::uint64_t> anchor_weight;
    for (const auto& e : events) ++anchor_weight[e.anchor];

    // Keep the opportunity pass bounded: stride-subsample anchors if needed.
    std::vector<std::pair<LocationId, std::uint64_t>> anchors(anchor_weight.begin(), anchor_weight.end());
    constexpr std::size_t kMaxPairs = 20'000'000;
    if (anchors.size() * vocab.size() > kMaxPairs) {
        const std::size_t keep = std::max<std::size_t>(1, kMaxPairs / vocab.size());
        const std::size_t stride = (anchors.size() + keep - 1) / keep;
        std::vector<std::pair<LocationId, std::uint64_t>> sampled;
        for (std::size_t i = 0; i < anchors.size(); i += stride) sampled.push_back(anchors[i]);
        anchors = std::move(sampled);
    }
    std::unordered_map<LocationId, std::uint64_t> retained(anchors.begin(), anchors.end());

    auto log_rf = [&](LocationId anchor, LocationId c) {
        const auto& a = vocab.at(anchor);
        const auto& e = vocab.at(c);
        const double r = std::max(haversine(a.lat, a.lon, e.lat, e.lon), std::max(base.r_min, 1e-9));
        const double f = static_cast<double>(base.visit_count(c));
        return std::log(r * f);
    };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (const auto& [a, w] : anchors) {
        (void)w;
        for (std::size_t c = 0; c < vocab.size(); ++c) {
            const double x = log_rf(a, static_cast<LocationId>(c));
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    }
    if (!(xmax > xmin)) {
        warn("fit_gamma: degenerate r*f range, using fallback gamma");
        return fallback;
    }

    constexpr int kBins = 24;
    const double width = (xmax - xmin) / kBins;
    auto bin_idx = [&](double x) { return std::min(kBins - 1, static_cast<int>((x - xmin) / width)); };

    std::array<double, kBins> chosen{}, opportunities{}, xsum{};
    for (const auto& [a, w] : anchors) {
        for (std::size_t c = 0; c < vocab.size(); ++c) {
            const double x = log_rf(a, static_cast<LocationId>(c));
            const int b = bin_idx(x);
            opportunities[static_cast<std::size_t>(b)] += static_cast<double>(w);
            xsum[static_cast<std::size_t>(b)] += static_cast<double>(w) * x;
        }
    }
    for (const auto& e : events) {
        if (!retained.count(e.anchor)) continue;
        ++chosen[static_cast<std::size_t>(bin_idx(log_rf(e.anchor, e.next)))];
    }

    std::vector<std::pair<double, double>> pts; // (x, ln empirical frequency)
    for (int b = 0; b < kBins; ++b) {
        const auto i = static_cast<std::size_t>(b);
        if (chosen[i] > 0 && opportunities[i] > 0)
            pts.emplace_back(xsum[i] / opportunities[i], std::log(chosen[i] / opportunities[i]));
    }
    if (pts.size() < 3) {
        warn("fit_gamma: not enough populated bins, using fallback gamma");
        return fallback;
    }

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) {
        warn("fit_gamma: degenerate regression, using fallback gamma");
        return fallback;
    }
    const double slope = (n * sxy - sx * sy) / denom;
    const double gamma = -slope;
    if (!(gamma > 0)) {
        warn("fit_gamma: non-positive exponent, using fallback gamma");
        return fallback;
    }
    if (gamma < 0.5 || gamma > 3.0)
        warn("fit_gamma: fitted gamma " + fmt_double(gamma) + " outside the sane range [0.5, 3]");
    return gamma;
}

inline VisitationLawModel fit_visitation_model(std::span<const Trajectory> train, const LocationVocabulary& vocab,
                                               bool fit_exponent = false, double default_gamma = 1.6,
                                               std::vector<std::string>* warnings = nullptr) {
    if (vocab.empty()) throw input_error("fit_visitation_model: empty vocabulary");
    VisitationLawModel m;
    m.gamma = default_gamma;
    m.r_min = detail::half_median_nn_distance(vocab);
    for (const auto& t : train)
        for (const auto& p : t.points) ++m.visits[p.loc];
    if (fit_exponent) m.gamma = fit_gamma(train, vocab, m, default_gamma, warnings);
    return m;
}

/// Law scores over a candidate set, normalized to sum to 1.
inline std::vector<std::pair<LocationId, double>> visitation_scores(const VisitationLawModel& model,
                                                                    const LocationVocabulary& vocab,
                                                                    LocationId anchor,
                                                                    std::span<const LocationId> candidates) {
    if (candidates.empty()) throw input_error("visitation_scores: no candidates");
    std::vector<std::pair<LocationId, double>> out;
    out.reserve(candidates.size());
    double total = 0;
    for (LocationId c : candidates) {
        const double s = model.raw_score(vocab, anchor, c);
        total += s;
        out.emplace_back(c, s);
    }
    for (auto& [c, s] : out) s /= total;
    return out;
}

struct TopLawLocations {
    std::vector<LocationId> locations;
    bool short_vocabulary = false; // vocabulary had fewer than n entries
};

/// The n most probable locations under the law from the given anchor,
/// over the full vocabulary. Ties resolve to the lower id.
inline TopLawLocations top_n_law_locations(const VisitationLawModel& model, const LocationVocabulary& vocab,
                                           LocationId anchor, std::size_t n = 5) {
    if (vocab.empty()) throw input_error("top_n_law_locations: empty vocabulary");
    std::vector<std::pair<double, LocationId>> scored;
    scored.reserve(vocab.size());
    for (std::size_t c = 0; c < vocab.size(); ++c)
        scored.emplace_back(model.raw_score(vocab, anchor, static_cast<LocationId>(c)),
                            static_cast<LocationId>(c));
    auto better = [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    };
    TopLawLocations out;
    if (scored.size() <= n) {
        out.short_vocabulary = true;
        std::sort(scored.begin(), scored.end(), better);
    } else {
        std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
        scored.resize(n);
        std::sort(scored.begin(), scored.end(), better);
    }
    for (const auto& [s, c] : scored) out.locations.push_back(c);
    return out;
}

inline void write_features_csv(const std::filesystem::path& path,
                               const std::map<UserId, UserLawFeatures>& features,
                               const std::vector<std::string>& users) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    out << "user_id,dist_u,r_g,r_g2,re_u\n";
    for (const auto& [uid, f] : features)
        out << csv_quote(users.at(uid)) << "," << fmt_double(f.dist_u) << "," << fmt_double(f.r_g) << ","
            << fmt_double(f.r_g2) << "," << f.re_u << "\n";
}

inline void write_law_model_json(const std::filesystem::path& path, const VisitationLawModel& model) {
    nlohmann::json j;
    j["gamma"] = model.gamma;
    j["r_min"] = model.r_min;
    j["visit_count_digest"] = model.visit_digest();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace mobaudit
