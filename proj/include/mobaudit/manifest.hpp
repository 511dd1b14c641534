/*
 * manifest.hpp -- run manifests: every subcommand drops a manifest.json
 * into its output directory with content digests of inputs and outputs.
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"

namespace mobaudit {

inline std::string digest_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open for digest: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = detail::fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return detail::hex64(h);
}

inline std::string digest_string(const std::string& s) { return detail::hex64(detail::fnv1a64(s)); }

/// Digest of a file, or of all regular files under a directory (sorted by
/// relative path, so the result is stable).
inline std::string digest_path(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) return digest_file(path);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& f : files) {
        h = detail::fnv1a64(f.lexically_relative(path).generic_string(), h);
        h = detail::fnv1a64(digest_file(f), h);
    }
    return detail::hex64(h);
}

struct RunManifest {
    std::string command;
    std::string version = kVersion;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::map<std::string, std::string> input_digests;
    std::vector<std::string> outputs; // file names relative to the manifest dir
    double wall_time_s = 0;
};

/// Writes manifest.json. The embedded content_digest covers everything
/// except the wall time, so reruns of a deterministic command agree on it.
inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["input_digests"] = m.input_digests;
    j["outputs"] = m.outputs;
    j["content_digest"] = digest_string(j.dump());
    j["wall_time_s"] = m.wall_time_s;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw input_error("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << "\n";
}

class WallClock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace mobaudit
