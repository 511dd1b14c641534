/*
 * core.hpp -- domain types shared by every module: spatio-temporal points,
 * trajectories, the location vocabulary, error taxonomy and small utilities.
 */
#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace mobaudit {

using LocationId = std::uint32_t;
using TrajectoryId = std::uint64_t;
using UserId = std::uint32_t;

// Error taxonomy. The CLI maps these onto stable exit codes:
// input_error -> 1, pipeline_error -> 2, validation_error -> 3.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};
struct pipeline_error : std::runtime_error {
    explicit pipeline_error(const std::string& what) : std::runtime_error(what) {}
};
struct validation_error : std::runtime_error {
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

/// One visit: a timestamp (seconds since epoch) and a location id.
struct Point {
    std::int64_t t = 0;
    LocationId loc = 0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// A time-ordered sequence of points owned by one user.
struct Trajectory {
    TrajectoryId id = 0;
    UserId user = 0;
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    std::int64_t first_t() const { return points.front().t; }
    std::int64_t last_t() const { return points.back().t; }

    std::vector<LocationId> locations() const {
        std::vector<LocationId> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(p.loc);
        return out;
    }
};

/// Dense id -> (lat, lon, raw key) table. Ids are assigned in insertion
/// order, so the mapping is deterministic given the input stream.
class LocationVocabulary {
public:
    struct Entry {
        double lat = 0;
        double lon = 0;
        std::string key;
    };

    LocationId add(const std::string& key, double lat, double lon) {
        auto [it, inserted] = index_.emplace(key, static_cast<LocationId>(entries_.size()));
        if (inserted) entries_.push_back(Entry{lat, lon, key});
        return it->second;
    }

    const Entry& at(LocationId id) const {
        if (id >= entries_.size()) throw input_error("location id out of range: " + std::to_string(id));
        return entries_[id];
    }

    const LocationId* find(const std::string& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, LocationId> index_;
};

namespace detail {

// FNV-1a, used for content digests in manifests and provenance.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Uniform double in [0, 1) with the full 53-bit mantissa.
inline double rand_u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n). Modulo bias is irrelevant at the n we use.
inline std::size_t rand_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items are
// independent; callers own any ordering of results (index into a
// pre-sized buffer to stay deterministic).
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    unsigned workers = std::min<unsigned>(threads, std::thread::hardware_concurrency() > 0
                                                       ? std::max(1u, std::thread::hardware_concurrency())
                                                       : threads);
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

inline constexpr const char* kVersion = "0.1.0";

} // namespace mobaudit
