/*
 * ingest.hpp -- dataset parsers (check-in TSV, taxi CSV/logs, generic CSV),
 * the record -> trajectory pipeline (user filter, session cutting, user
 * filter again) and the per-user temporal train/valid/test split.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"
#include "mobaudit/csv.hpp"
#include "mobaudit/geo.hpp"

namespace mobaudit {

struct RawRecord {
    std::string user;
    std::int64_t t = 0;
    double lat = 0;
    double lon = 0;
    std::optional<std::string> venue;
};

enum class SourceFormat { gowalla, foursquare, taxi_porto, taxi_sf, generic_csv };

inline SourceFormat parse_source_format(std::string_view name) {
    if (name == "gowalla") return SourceFormat::gowalla;
    if (name == "foursquare") return SourceFormat::foursquare;
    if (name == "taxi-porto") return SourceFormat::taxi_porto;
    if (name == "taxi-sf") return SourceFormat::taxi_sf;
    if (name == "generic-csv") return SourceFormat::generic_csv;
    throw input_error("unknown source format: " + std::string(name));
}

/// Column names for the generic-csv format.
struct GenericCsvSpec {
    std::string user_col = "user";
    std::string time_col = "time";
    std::string lat_col = "lat";
    std::string lon_col = "lon";
    std::string venue_col; // empty -> no venue column
};

struct ParseReport {
    std::vector<RawRecord> records;
    std::size_t rows_total = 0;
    std::size_t rows_rejected = 0;
    std::map<std::string, std::size_t> reject_reasons;

    void reject(const std::string& reason) {
        ++rows_rejected;
        ++reject_reasons[reason];
    }
};

namespace detail {

inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
    // 2010-10-19T23:55:27Z (optional fraction and offset are not needed by
    // the supported datasets; a trailing Z or nothing is accepted)
    std::tm tm{};
    int y, mo, d, h, mi, se;
    if (std::sscanf(std::string(s).c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6)
        return std::nullopt;
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    return static_cast<std::int64_t>(timegm(&tm));
}

inline int month_from_abbrev(std::string_view m) {
    static constexpr std::string_view names[12] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    for (int i = 0; i < 12; ++i)
        if (m == names[i]) return i;
    return -1;
}

// "Tue Apr 03 18:00:09 +0000 2012" (check-in API style)
inline std::optional<std::int64_t> parse_checkin_time(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::string wd, mon, clock, off;
    int day = 0, year = 0;
    if (!(in >> wd >> mon >> day >> clock >> off >> year)) return std::nullopt;
    const int m = month_from_abbrev(mon);
    if (m < 0) return std::nullopt;
    int h, mi, se;
    if (std::sscanf(clock.c_str(), "%d:%d:%d", &h, &mi, &se) != 3) return std::nullopt;
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = m;
    tm.tm_mday = day;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    std::int64_t t = static_cast<std::int64_t>(timegm(&tm));
    if (off.size() == 5 && (off[0] == '+' || off[0] == '-')) {
        const int oh = (off[1] - '0') * 10 + (off[2] - '0');
        const int om = (off[3] - '0') * 10 + (off[4] - '0');
        const std::int64_t shift = (oh * 60 + om) * 60;
        t += off[0] == '+' ? -shift : shift;
    }
    return t;
}

inline std::optional<std::int64_t> parse_epoch_or_iso(std::string_view s) {
    std::int64_t v;
    if (parse_i64(s, v)) return v;
    if (auto t = parse_iso8601(s)) return t;
    return parse_checkin_time(s);
}

inline bool coord_ok(double lat, double lon) {
    return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

inline std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open file: " + path.string());
    return in;
}

// Gowalla-style TSV: user, time, lat, lon, venue. Foursquare check-in
// exports come either in that layout or in the published 8-column one
// (user, venue, category id, category name, lat, lon, tz offset, time).
inline void parse_checkin_tsv(const std::filesystem::path& path, ParseReport& rep) {
    auto in = open_text(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        auto f = split_csv(line, '\t');
        RawRecord r;
        std::optional<std::int64_t> t;
        if (f.size() == 5) {
            r.user = f[0];
            t = parse_epoch_or_iso(f[1]);
            if (!parse_double(f[2], r.lat) || !parse_double(f[3], r.lon)) {
                rep.reject("bad coordinate");
                continue;
            }
            r.venue = f[4];
        } else if (f.size() == 8) {
            r.user = f[0];
            r.venue = f[1];
            if (!parse_double(f[4], r.lat) || !parse_double(f[5], r.lon)) {
                rep.reject("bad coordinate");
                continue;
            }
            t = parse_epoch_or_iso(f[7]);
        } else {
            rep.reject("wrong column count");
            continue;
        }
        if (!t) {
            rep.reject("bad timestamp");
            continue;
        }
        if (!coord_ok(r.lat, r.lon)) {
            rep.reject("coordinate out of range");
            continue;
        }
        r.t = *t;
        rep.records.push_back(std::move(r));
    }
}

// Porto taxi CSV: header row, JSON polyline of [lon, lat] fixes sampled
// every 15 seconds from the trip start timestamp.
inline void parse_taxi_porto(const std::filesystem::path& path, ParseReport& rep) {
    auto in = open_text(path);
    std::string line;
    if (!std::getline(in, line)) throw input_error("taxi-porto: empty file " + path.string());
    auto header = split_csv(line, ',');
    auto col = [&](std::string_view name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_taxi = col("TAXI_ID"), c_ts = col("TIMESTAMP"), c_poly = col("POLYLINE");
    if (c_taxi < 0 || c_ts < 0 || c_poly < 0)
        throw input_error("taxi-porto: malformed header, expected TAXI_ID/TIMESTAMP/POLYLINE columns");
    const std::size_t need = static_cast<std::size_t>(std::max({c_taxi, c_ts, c_poly})) + 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        auto f = split_csv(line, ',');
        if (f.size() < need) {
            rep.reject("wrong column count");
            continue;
        }
        std::int64_t t0;
        if (!parse_i64(f[static_cast<std::size_t>(c_ts)], t0)) {
            rep.reject("bad timestamp");
            continue;
        }
        nlohmann::json poly = nlohmann::json::parse(f[static_cast<std::size_t>(c_poly)], nullptr, false);
        if (poly.is_discarded() || !poly.is_array()) {
            rep.reject("bad polyline");
            continue;
        }
        if (poly.empty()) {
            rep.reject("empty polyline");
            continue;
        }
        bool ok = true;
        std::vector<RawRecord> fixes;
        fixes.reserve(poly.size());
        std::int64_t t = t0;
        for (const auto& pt : poly) {
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                ok = false;
                break;
            }
            RawRecord r;
            r.user = f[static_cast<std::size_t>(c_taxi)];
            r.lon = pt[0].get<double>(); // polyline stores [lon, lat]
            r.lat = pt[1].get<double>();
            r.t = t;
            t += 15;
            if (!coord_ok(r.lat, r.lon)) {
                ok = false;
                break;
            }
            fixes.push_back(std::move(r));
        }
        if (!ok) {
            rep.reject("bad polyline");
            continue;
        }
        for (auto& r : fixes) rep.records.push_back(std::move(r));
    }
}

// San Francisco taxi logs: one space-separated file per cab
// ("lat lon occupancy epoch"); the cab id comes from the file name.
inline void parse_taxi_sf_file(const std::filesystem::path& path, const std::string& user, ParseReport& rep) {
    auto in = open_text(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        std::istringstream ls(line);
        double lat, lon;
        int occ;
        std::int64_t t;
        if (!(ls >> lat >> lon >> occ >> t)) {
            rep.reject("malformed row");
            continue;
        }
        if (!coord_ok(lat, lon)) {
            rep.reject("coordinate out of range");
            continue;
        }
        rep.records.push_back(RawRecord{user, t, lat, lon, std::nullopt});
    }
}

inline std::string sf_user_from_filename(const std::filesystem::path& p) {
    std::string stem = p.stem().string();
    if (stem.rfind("new_", 0) == 0) stem = stem.substr(4);
    return stem;
}

inline void parse_taxi_sf(const std::filesystem::path& path, ParseReport& rep) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        if (files.empty()) throw input_error("taxi-sf: no .txt cab logs in " + path.string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) parse_taxi_sf_file(f, sf_user_from_filename(f), rep);
    } else {
        parse_taxi_sf_file(path, sf_user_from_filename(path), rep);
    }
}

inline void parse_generic_csv(const std::filesystem::path& path, const GenericCsvSpec& spec, ParseReport& rep) {
    auto in = open_text(path);
    std::string line;
    if (!std::getline(in, line)) throw input_error("generic-csv: empty file " + path.string());
    auto header = split_csv(line, ',');
    auto col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int cu = col(spec.user_col), ct = col(spec.time_col), cla = col(spec.lat_col), clo = col(spec.lon_col);
    const int cv = spec.venue_col.empty() ? -1 : col(spec.venue_col);
    if (cu < 0 || ct < 0 || cla < 0 || clo < 0)
        throw input_error("generic-csv: malformed header, missing one of " + spec.user_col + "/" + spec.time_col +
                          "/" + spec.lat_col + "/" + spec.lon_col);
    if (!spec.venue_col.empty() && cv < 0)
        throw input_error("generic-csv: malformed header, missing venue column " + spec.venue_col);
    const std::size_t need = static_cast<std::size_t>(std::max({cu, ct, cla, clo, cv})) + 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        auto f = split_csv(line, ',');
        if (f.size() < need) {
            rep.reject("wrong column count");
            continue;
        }
        RawRecord r;
        r.user = f[static_cast<std::size_t>(cu)];
        auto t = parse_epoch_or_iso(f[static_cast<std::size_t>(ct)]);
        if (!t) {
            rep.reject("bad timestamp");
            continue;
        }
        r.t = *t;
        if (!parse_double(f[static_cast<std::size_t>(cla)], r.lat) ||
            !parse_double(f[static_cast<std::size_t>(clo)], r.lon)) {
            rep.reject("bad coordinate");
            continue;
        }
        if (!coord_ok(r.lat, r.lon)) {
            rep.reject("coordinate out of range");
            continue;
        }
        if (cv >= 0) r.venue = f[static_cast<std::size_t>(cv)];
        rep.records.push_back(std::move(r));
    }
}

} // namespace detail

/// Parses a dataset file (or directory, for taxi-sf). Bad rows are counted
/// with a reason instead of aborting; more than half rejected is fatal.
inline ParseReport parse(SourceFormat format, const std::filesystem::path& path,
                         const GenericCsvSpec& generic = {}) {
    if (!std::filesystem::exists(path)) throw input_error("no such input: " + path.string());
    ParseReport rep;
    switch (format) {
        case SourceFormat::gowalla:
        case SourceFormat::foursquare: detail::parse_checkin_tsv(path, rep); break;
        case SourceFormat::taxi_porto: detail::parse_taxi_porto(path, rep); break;
        case SourceFormat::taxi_sf: detail::parse_taxi_sf(path, rep); break;
        case SourceFormat::generic_csv: detail::parse_generic_csv(path, generic, rep); break;
    }
    if (rep.rows_total > 0 && rep.rows_rejected * 2 > rep.rows_total) {
        std::string top;
        for (const auto& [reason, n] : rep.reject_reasons) top += " " + reason + "=" + std::to_string(n);
        throw input_error("more than half of the rows were rejected (" + std::to_string(rep.rows_rejected) + "/" +
                          std::to_string(rep.rows_total) + "):" + top);
    }
    return rep;
}

struct SplitFractions {
    double train = 0.7;
    double valid = 0.1;
    double test = 0.2;

    void validate() const {
        if (!(train > 0) || !(valid >= 0) || !(test > 0))
            throw input_error("split fractions must be positive");
        if (std::abs(train + valid + test - 1.0) > 1e-9)
            throw input_error("split fractions must sum to 1");
    }
};

enum class LocationMode { automatic, venue, grid };

struct PipelineConfig {
    std::size_t min_records = 10;        // drop users with fewer records, before cutting
    double session_gap_hours = 72.0;     // cut at gaps >= threshold
    std::size_t min_trajectories = 5;    // drop users with fewer trajectories, after cutting
    SplitFractions fractions;
    LocationMode location_mode = LocationMode::automatic;
    double grid_cell_m = 500.0;          // tessellation cell side for grid mode
    std::optional<LatLon> grid_origin;   // default: bounding-box corner of the data

    void validate() const {
        if (min_records < 1) throw input_error("min-records must be >= 1");
        if (min_trajectories < 1) throw input_error("min-trajectories must be >= 1");
        if (!(session_gap_hours > 0)) throw input_error("session-gap must be positive");
        if (!(grid_cell_m > 0)) throw input_error("grid cell side must be positive");
        fractions.validate();
    }
};

struct StageCounts {
    std::size_t records_in = 0;
    std::size_t users_in = 0;
    std::size_t users_after_min_records = 0;
    std::size_t points_dropped_min_records = 0;
    std::size_t trajectories_cut = 0;
    std::size_t users_out = 0;
    std::size_t points_dropped_min_trajectories = 0;
    std::size_t trajectories_out = 0;
    std::size_t points_out = 0;
    std::size_t locations = 0;

    std::string to_string() const {
        std::ostringstream os;
        os << "records_in=" << records_in << " users_in=" << users_in
           << " users_after_min_records=" << users_after_min_records
           << " trajectories_cut=" << trajectories_cut << " users_out=" << users_out
           << " trajectories_out=" << trajectories_out << " points_out=" << points_out
           << " points_dropped=" << (points_dropped_min_records + points_dropped_min_trajectories)
           << " locations=" << locations;
        return os.str();
    }
};

struct PreprocessResult {
    std::vector<Trajectory> trajectories; // grouped by user, temporally ordered
    LocationVocabulary vocabulary;
    std::vector<std::string> users;       // raw user keys, indexed by UserId
    StageCounts counts;
    std::optional<LatLon> grid_origin_used;
};

/// Record stream -> trajectories: filter users by record count, stable-sort
/// each user's records by time, cut sessions at the gap threshold, filter
/// users by trajectory count, then build the location vocabulary over every
/// surviving point (venue keys when present, grid cells otherwise).
inline PreprocessResult preprocess(std::span<const RawRecord> records, const PipelineConfig& config) {
    config.validate();
    if (records.empty()) throw pipeline_error("preprocess: no input records");

    PreprocessResult out;
    out.counts.records_in = records.size();

    // Group by user, keeping first-appearance order of users.
    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, inserted] = by_user.try_emplace(records[i].user);
        if (inserted) user_order.push_back(records[i].user);
        it->second.push_back(i);
    }
    out.counts.users_in = user_order.size();

    bool venue_mode;
    switch (config.location_mode) {
        case LocationMode::venue: venue_mode = true; break;
        case LocationMode::grid: venue_mode = false; break;
        case LocationMode::automatic:
        default:
            venue_mode = std::all_of(records.begin(), records.end(),
                                     [](const RawRecord& r) { return r.venue.has_value(); });
            break;
    }

    const auto gap_s = static_cast<std::int64_t>(std::llround(config.session_gap_hours * 3600.0));

    struct UserSessions {
        std::string user;
        std::vector<std::vector<std::size_t>> sessions; // record indices
    };
    std::vector<UserSessions> kept;

    for (const auto& u : user_order) {
        auto& idx = by_user[u];
        if (idx.size() < config.min_records) {
            out.counts.points_dropped_min_records += idx.size();
            continue;
        }
        ++out.counts.users_after_min_records;
        // Stable by input position, so timestamp ties preserve input order.
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return records[a].t < records[b].t; });
        UserSessions us;
        us.user = u;
        std::vector<std::size_t> cur{idx[0]};
        for (std::size_t k = 1; k < idx.size(); ++k) {
            if (records[idx[k]].t - records[idx[k - 1]].t >= gap_s) {
                us.sessions.push_back(std::move(cur));
                cur.clear();
            }
            cur.push_back(idx[k]);
        }
        us.sessions.push_back(std::move(cur));
        out.counts.trajectories_cut += us.sessions.size();
        if (us.sessions.size() < config.min_trajectories) {
            out.counts.points_dropped_min_trajectories += idx.size();
            continue;
        }
        kept.push_back(std::move(us));
    }

    if (kept.empty())
        throw pipeline_error("preprocess: no users survived the pipeline (" + out.counts.to_string() + ")");

    // Grid origin for datasets without venue keys.
    GridSpec grid;
    if (!venue_mode) {
        grid.cell_m = config.grid_cell_m;
        if (config.grid_origin) {
            grid.origin = *config.grid_origin;
        } else {
            LatLon o{90.0, 180.0};
            for (const auto& us : kept)
                for (const auto& s : us.sessions)
                    for (std::size_t i : s) {
                        o.lat = std::min(o.lat, records[i].lat);
                        o.lon = std::min(o.lon, records[i].lon);
                    }
            grid.origin = o;
        }
        grid.validate();
        out.grid_origin_used = grid.origin;
    }

    auto locate = [&](const RawRecord& r) -> LocationId {
        if (venue_mode) {
            if (!r.venue) throw pipeline_error("preprocess: record without venue key in venue mode");
            return out.vocabulary.add(*r.venue, r.lat, r.lon);
        }
        auto [row, col] = grid.cell_of(r.lat, r.lon);
        const LatLon c = grid.cell_center(row, col);
        return out.vocabulary.add(GridSpec::cell_key(row, col), c.lat, c.lon);
    };

    TrajectoryId next_id = 0;
    for (const auto& us : kept) {
        const auto uid = static_cast<UserId>(out.users.size());
        out.users.push_back(us.user);
        ++out.counts.users_out;
        for (const auto& session : us.sessions) {
            Trajectory traj;
            traj.id = next_id++;
            traj.user = uid;
            traj.points.reserve(session.size());
            for (std::size_t i : session) traj.points.push_back(Point{records[i].t, locate(records[i])});
            out.counts.points_out += traj.points.size();
            ++out.counts.trajectories_out;
            out.trajectories.push_back(std::move(traj));
        }
    }
    out.counts.locations = out.vocabulary.size();
    return out;
}

struct DatasetSplit {
    std::vector<Trajectory> train;
    std::vector<Trajectory> valid;
    std::vector<Trajectory> test;
    LocationVocabulary vocabulary;
    std::vector<std::string> users;
    nlohmann::json provenance;

    /// Checks id disjointness and the per-user temporal ordering
    /// train <= valid <= test. Throws validation_error on violation.
    void verify() const {
        std::unordered_map<TrajectoryId, int> seen;
        auto scan = [&](const std::vector<Trajectory>& v) {
            for (const auto& t : v) {
                if (t.points.empty()) throw validation_error("empty trajectory in split");
                if (++seen[t.id] > 1) throw validation_error("duplicate trajectory id " + std::to_string(t.id));
            }
        };
        scan(train);
        scan(valid);
        scan(test);
        std::unordered_map<UserId, std::int64_t> last_train, last_valid;
        for (const auto& t : train) {
            auto it = last_train.find(t.user);
            last_train[t.user] = it == last_train.end() ? t.last_t() : std::max(it->second, t.last_t());
        }
        for (const auto& t : valid) {
            auto it = last_train.find(t.user);
            if (it != last_train.end() && t.first_t() < it->second)
                throw validation_error("validation trajectory precedes training data for user " +
                                       std::to_string(t.user));
            auto jt = last_valid.find(t.user);
            last_valid[t.user] = jt == last_valid.end() ? t.last_t() : std::max(jt->second, t.last_t());
        }
        for (const auto& t : test) {
            auto it = last_train.find(t.user);
            if (it != last_train.end() && t.first_t() < it->second)
                throw validation_error("test trajectory precedes training data for user " + std::to_string(t.user));
            auto jt = last_valid.find(t.user);
            if (jt != last_valid.end() && t.first_t() < jt->second)
                throw validation_error("test trajectory precedes validation data for user " + std::to_string(t.user));
        }
    }
};

/// Per user: first floor(n * train) trajectories into train, next
/// floor(n * valid) into valid, remainder into test.
inline DatasetSplit split(const PreprocessResult& pre, const SplitFractions& fractions) {
    fractions.validate();
    DatasetSplit out;
    out.vocabulary = pre.vocabulary;
    out.users = pre.users;

    std::map<UserId, std::vector<const Trajectory*>> by_user;
    for (const auto& t : pre.trajectories) by_user[t.user].push_back(&t);

    for (auto& [uid, trajs] : by_user) {
        if (trajs.empty()) throw pipeline_error("split: user without trajectories");
        std::stable_sort(trajs.begin(), trajs.end(),
                         [](const Trajectory* a, const Trajectory* b) { return a->first_t() < b->first_t(); });
        const double n = static_cast<double>(trajs.size());
        const auto n_train = static_cast<std::size_t>(std::floor(n * fractions.train + 1e-9));
        const auto n_valid = static_cast<std::size_t>(std::floor(n * fractions.valid + 1e-9));
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            if (i < n_train) out.train.push_back(*trajs[i]);
            else if (i < n_train + n_valid) out.valid.push_back(*trajs[i]);
            else out.test.push_back(*trajs[i]);
        }
    }
    out.verify();
    return out;
}

} // namespace mobaudit
