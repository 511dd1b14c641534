/*
 * split_io.hpp -- the on-disk split manifest: train/valid/test.jsonl
 * (one trajectory per line), vocab.csv and provenance.json.
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"
#include "mobaudit/csv.hpp"
#include "mobaudit/ingest.hpp"

namespace mobaudit {

namespace detail {

inline std::string trajectory_line(const Trajectory& t, const std::vector<std::string>& users) {
    std::string out = "{\"user\": ";
    out += nlohmann::json(users.at(t.user)).dump();
    out += ", \"traj\": " + std::to_string(t.id) + ", \"points\": [";
    for (std::size_t i = 0; i < t.points.size(); ++i) {
        if (i) out += ", ";
        out += "[" + std::to_string(t.points[i].t) + ", " + std::to_string(t.points[i].loc) + "]";
    }
    out += "]}";
    return out;
}

inline void write_trajectory_file(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                                  const std::vector<std::string>& users) {
    std::ofstream out(path, std::ios::binary); // binary -> LF endings everywhere
    if (!out) throw input_error("cannot write " + path.string());
    for (const auto& t : trajs) out << trajectory_line(t, users) << "\n";
}

} // namespace detail

inline void write_split_dir(const std::filesystem::path& dir, const DatasetSplit& split) {
    std::filesystem::create_directories(dir);
    detail::write_trajectory_file(dir / "train.jsonl", split.train, split.users);
    detail::write_trajectory_file(dir / "valid.jsonl", split.valid, split.users);
    detail::write_trajectory_file(dir / "test.jsonl", split.test, split.users);

    std::ofstream vocab(dir / "vocab.csv", std::ios::binary);
    if (!vocab) throw input_error("cannot write " + (dir / "vocab.csv").string());
    vocab << "id,lat,lon,raw_key\n";
    for (std::size_t id = 0; id < split.vocabulary.size(); ++id) {
        const auto& e = split.vocabulary.at(static_cast<LocationId>(id));
        vocab << id << "," << fmt_double(e.lat) << "," << fmt_double(e.lon) << "," << csv_quote(e.key) << "\n";
    }

    std::ofstream prov(dir / "provenance.json", std::ios::binary);
    if (!prov) throw input_error("cannot write " + (dir / "provenance.json").string());
    prov << split.provenance.dump(2) << "\n";
}

inline DatasetSplit read_split_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.csv"})
        if (!fs::exists(dir / f)) throw input_error("split dir " + dir.string() + " is missing " + f);

    DatasetSplit split;

    std::ifstream vocab(dir / "vocab.csv");
    std::string line;
    std::getline(vocab, line); // header
    while (std::getline(vocab, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line, ',');
        if (f.size() != 4) throw validation_error("vocab.csv: malformed row: " + line);
        double lat, lon;
        std::int64_t id;
        if (!parse_i64(f[0], id) || !parse_double(f[1], lat) || !parse_double(f[2], lon))
            throw validation_error("vocab.csv: malformed row: " + line);
        const LocationId got = split.vocabulary.add(f[3], lat, lon);
        if (got != static_cast<LocationId>(id))
            throw validation_error("vocab.csv: ids are not dense/sorted at row: " + line);
    }

    std::unordered_map<std::string, UserId> user_of;
    auto read_file = [&](const char* name, std::vector<Trajectory>& dest) {
        std::ifstream in(dir / name);
        std::string l;
        std::size_t lineno = 0;
        while (std::getline(in, l)) {
            ++lineno;
            if (l.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(l, nullptr, false);
            if (j.is_discarded() || !j.contains("user") || !j.contains("traj") || !j.contains("points"))
                throw validation_error(std::string(name) + ":" + std::to_string(lineno) + ": malformed line");
            Trajectory t;
            const std::string raw_user = j["user"].get<std::string>();
            auto [it, inserted] = user_of.try_emplace(raw_user, static_cast<UserId>(split.users.size()));
            if (inserted) split.users.push_back(raw_user);
            t.user = it->second;
            t.id = j["traj"].get<TrajectoryId>();
            for (const auto& p : j["points"]) {
                if (!p.is_array() || p.size() != 2)
                    throw validation_error(std::string(name) + ":" + std::to_string(lineno) + ": malformed point");
                const auto loc = p[1].get<std::uint64_t>();
                if (loc >= split.vocabulary.size())
                    throw validation_error(std::string(name) + ":" + std::to_string(lineno) +
                                           ": location id outside vocabulary");
                t.points.push_back(Point{p[0].get<std::int64_t>(), static_cast<LocationId>(loc)});
            }
            if (t.points.empty())
                throw validation_error(std::string(name) + ":" + std::to_string(lineno) + ": empty trajectory");
            dest.push_back(std::move(t));
        }
    };
    read_file("train.jsonl", split.train);
    read_file("valid.jsonl", split.valid);
    read_file("test.jsonl", split.test);

    if (fs::exists(dir / "provenance.json")) {
        std::ifstream prov(dir / "provenance.json");
        prov >> split.provenance;
    }
    split.verify();
    return split;
}

} // namespace mobaudit
