/*
 * geo.hpp -- geodesic math and square-grid tessellation of raw GPS fixes.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mobaudit/core.hpp"

namespace mobaudit {

inline constexpr double kEarthRadiusKm = 6371.0;

// Meters per degree of latitude; longitude is scaled by cos(lat).
inline constexpr double kMetersPerDegLat = 111320.0;

struct LatLon {
    double lat = 0;
    double lon = 0;
};

namespace detail {

inline void check_coord(double lat, double lon) {
    if (!(lat >= -90.0 && lat <= 90.0)) throw input_error("latitude out of range: " + std::to_string(lat));
    if (!(lon >= -180.0 && lon <= 180.0)) throw input_error("longitude out of range: " + std::to_string(lon));
}

inline double deg2rad(double d) { return d * M_PI / 180.0; }

} // namespace detail

/// Great-circle distance in kilometers between two (lat, lon) pairs in degrees.
inline double haversine(double lat1, double lon1, double lat2, double lon2) {
    detail::check_coord(lat1, lon1);
    detail::check_coord(lat2, lon2);
    if (lat1 == lat2 && lon1 == lon2) return 0.0;
    const double phi1 = detail::deg2rad(lat1);
    const double phi2 = detail::deg2rad(lat2);
    const double dphi = detail::deg2rad(lat2 - lat1);
    const double dlmb = detail::deg2rad(lon2 - lon1);
    const double sp = std::sin(dphi / 2.0);
    const double sl = std::sin(dlmb / 2.0);
    const double a = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double haversine(const LatLon& a, const LatLon& b) {
    return haversine(a.lat, a.lon, b.lat, b.lon);
}

/// Square grid over lat/lon, anchored at a bounding-box corner.
struct GridSpec {
    double cell_m = 500.0;
    LatLon origin;

    void validate() const {
        if (!(cell_m > 0)) throw input_error("grid cell side must be positive");
        detail::check_coord(origin.lat, origin.lon);
    }

    double deg_lat() const { return cell_m / kMetersPerDegLat; }
    double deg_lon() const {
        const double scale = std::max(0.01, std::cos(detail::deg2rad(origin.lat)));
        return cell_m / (kMetersPerDegLat * scale);
    }

    std::pair<std::int64_t, std::int64_t> cell_of(double lat, double lon) const {
        return {static_cast<std::int64_t>(std::floor((lat - origin.lat) / deg_lat())),
                static_cast<std::int64_t>(std::floor((lon - origin.lon) / deg_lon()))};
    }

    LatLon cell_center(std::int64_t row, std::int64_t col) const {
        return {origin.lat + (static_cast<double>(row) + 0.5) * deg_lat(),
                origin.lon + (static_cast<double>(col) + 0.5) * deg_lon()};
    }

    static std::string cell_key(std::int64_t row, std::int64_t col) {
        return "g" + std::to_string(row) + "_" + std::to_string(col);
    }
};

struct Tessellation {
    LocationVocabulary vocabulary;
    std::vector<LocationId> cells; // one id per input fix, same order
};

/// Maps every fix to exactly one grid cell. Cell ids are dense and assigned
/// in first-encounter order, so the result is deterministic for a given grid.
inline Tessellation tessellate(std::span<const LatLon> fixes, const GridSpec& spec) {
    spec.validate();
    if (fixes.empty()) throw input_error("tessellate: no fixes");
    Tessellation out;
    out.cells.reserve(fixes.size());
    for (const auto& f : fixes) {
        detail::check_coord(f.lat, f.lon);
        auto [row, col] = spec.cell_of(f.lat, f.lon);
        const LatLon center = spec.cell_center(row, col);
        out.cells.push_back(out.vocabulary.add(GridSpec::cell_key(row, col), center.lat, center.lon));
    }
    return out;
}

/// Grid origin used when none is configured: the south-west corner of the data.
inline LatLon bounding_box_origin(std::span<const LatLon> fixes) {
    if (fixes.empty()) throw input_error("bounding_box_origin: no fixes");
    LatLon o{90.0, 180.0};
    for (const auto& f : fixes) {
        o.lat = std::min(o.lat, f.lat);
        o.lon = std::min(o.lon, f.lon);
    }
    return o;
}

} // namespace mobaudit
