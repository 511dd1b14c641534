/*
 * mobaudit.cpp -- command-line pipeline: preprocess datasets, quantify
 * test-train trajectory overlap, run the Markov baseline, compute mobility
 * laws, evaluate score files and rerank them.
 */
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mobaudit/core.hpp"
#include "mobaudit/csv.hpp"
#include "mobaudit/geo.hpp"
#include "mobaudit/ingest.hpp"
#include "mobaudit/manifest.hpp"
#include "mobaudit/mobility.hpp"
#include "mobaudit/overlap.hpp"
#include "mobaudit/predictors.hpp"
#include "mobaudit/rerank.hpp"
#include "mobaudit/split_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace mobaudit;

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw input_error("malformed JSON in " + path.string());
    return j;
}

json pipeline_config_json(const PipelineConfig& c) {
    json j;
    j["min_records"] = c.min_records;
    j["session_gap_hours"] = c.session_gap_hours;
    j["min_trajectories"] = c.min_trajectories;
    j["fractions"] = {{"train", c.fractions.train}, {"valid", c.fractions.valid}, {"test", c.fractions.test}};
    j["location_mode"] = c.location_mode == LocationMode::venue  ? "venue"
                         : c.location_mode == LocationMode::grid ? "grid"
                                                                 : "auto";
    j["grid_cell_m"] = c.grid_cell_m;
    if (c.grid_origin) j["grid_origin"] = {{"lat", c.grid_origin->lat}, {"lon", c.grid_origin->lon}};
    return j;
}

void apply_pipeline_config_json(const json& j, PipelineConfig& c) {
    c.min_records = j.value("min_records", c.min_records);
    c.session_gap_hours = j.value("session_gap_hours", c.session_gap_hours);
    c.min_trajectories = j.value("min_trajectories", c.min_trajectories);
    if (j.contains("fractions")) {
        const auto& f = j.at("fractions");
        c.fractions.train = f.value("train", c.fractions.train);
        c.fractions.valid = f.value("valid", c.fractions.valid);
        c.fractions.test = f.value("test", c.fractions.test);
    }
    if (j.contains("location_mode")) {
        const std::string m = j.at("location_mode").get<std::string>();
        if (m == "venue") c.location_mode = LocationMode::venue;
        else if (m == "grid") c.location_mode = LocationMode::grid;
        else if (m == "auto") c.location_mode = LocationMode::automatic;
        else throw input_error("config: unknown location_mode " + m);
    }
    c.grid_cell_m = j.value("grid_cell_m", c.grid_cell_m);
    if (j.contains("grid_origin"))
        c.grid_origin = LatLon{j.at("grid_origin").at("lat").get<double>(),
                               j.at("grid_origin").at("lon").get<double>()};
}

json stage_counts_json(const StageCounts& c) {
    json j;
    j["records_in"] = c.records_in;
    j["users_in"] = c.users_in;
    j["users_after_min_records"] = c.users_after_min_records;
    j["points_dropped_min_records"] = c.points_dropped_min_records;
    j["trajectories_cut"] = c.trajectories_cut;
    j["users_out"] = c.users_out;
    j["points_dropped_min_trajectories"] = c.points_dropped_min_trajectories;
    j["trajectories_out"] = c.trajectories_out;
    j["points_out"] = c.points_out;
    j["locations"] = c.locations;
    return j;
}

std::map<UserId, UserLawFeatures> features_from_train(const DatasetSplit& split) {
    std::map<UserId, std::vector<Trajectory>> by_user;
    for (const auto& t : split.train) by_user[t.user].push_back(t);
    std::map<UserId, UserLawFeatures> out;
    for (std::size_t uid = 0; uid < split.users.size(); ++uid) {
        auto it = by_user.find(static_cast<UserId>(uid));
        if (it == by_user.end()) {
            // user appears only in valid/test: degenerate features
            UserLawFeatures f;
            f.dist_defined = false;
            out.emplace(static_cast<UserId>(uid), f);
        } else {
            out.emplace(static_cast<UserId>(uid), compute_user_features(it->second, split.vocabulary));
        }
    }
    return out;
}

std::optional<fs::path> cache_dir_from(const std::string& flag_value) {
    if (!flag_value.empty()) return fs::path(flag_value);
    if (const char* env = std::getenv("MOBAUDIT_CACHE_DIR"); env && *env) return fs::path(env);
    return std::nullopt;
}

struct PreprocessArgs {
    std::string format;
    std::string input;
    std::string out;
    std::string config_file;
    GenericCsvSpec csv;
    PipelineConfig cfg;
};

int cmd_preprocess(const PreprocessArgs& a, const std::vector<std::string>& overridden) {
    WallClock clock;
    PipelineConfig cfg; // defaults
    if (!a.config_file.empty()) apply_pipeline_config_json(load_json_file(a.config_file), cfg);
    // explicit flags win over the config file
    auto was_set = [&](const char* name) {
        return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
    };
    if (was_set("--min-records")) cfg.min_records = a.cfg.min_records;
    if (was_set("--session-gap")) cfg.session_gap_hours = a.cfg.session_gap_hours;
    if (was_set("--min-trajectories")) cfg.min_trajectories = a.cfg.min_trajectories;
    if (was_set("--train-frac")) cfg.fractions.train = a.cfg.fractions.train;
    if (was_set("--valid-frac")) cfg.fractions.valid = a.cfg.fractions.valid;
    if (was_set("--test-frac")) cfg.fractions.test = a.cfg.fractions.test;
    if (was_set("--grid-cell")) cfg.grid_cell_m = a.cfg.grid_cell_m;
    if (was_set("--location-mode")) cfg.location_mode = a.cfg.location_mode;
    if (a.cfg.grid_origin) cfg.grid_origin = a.cfg.grid_origin;
    cfg.validate();

    const SourceFormat fmt = parse_source_format(a.format);
    ParseReport parsed = parse(fmt, a.input, a.csv);
    std::cerr << "parsed " << parsed.records.size() << " records (" << parsed.rows_rejected << " of "
              << parsed.rows_total << " rows rejected)\n";
    for (const auto& [reason, n] : parsed.reject_reasons) std::cerr << "  rejected " << n << ": " << reason << "\n";

    PreprocessResult pre = preprocess(parsed.records, cfg);
    DatasetSplit split = mobaudit::split(pre, cfg.fractions);

    json prov;
    prov["config"] = pipeline_config_json(cfg);
    prov["source"] = {{"path", a.input}, {"digest", digest_path(a.input)}, {"format", a.format}};
    prov["counts"] = stage_counts_json(pre.counts);
    prov["counts"]["rows_rejected"] = parsed.rows_rejected;
    prov["split"] = {{"train", split.train.size()}, {"valid", split.valid.size()}, {"test", split.test.size()}};
    if (pre.grid_origin_used)
        prov["grid_origin_used"] = {{"lat", pre.grid_origin_used->lat}, {"lon", pre.grid_origin_used->lon}};
    split.provenance = prov;

    fs::create_directories(a.out);
    write_split_dir(a.out, split);

    RunManifest man;
    man.command = "preprocess";
    man.config = prov["config"];
    man.input_digests[a.input] = prov["source"]["digest"].get<std::string>();
    man.outputs = {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.csv", "provenance.json"};
    man.wall_time_s = clock.seconds();
    write_manifest(a.out, man);

    std::cout << "Users=" << pre.counts.users_out << " Locations=" << pre.counts.locations
              << " Trajectories=" << pre.counts.trajectories_out << "\n";
    std::cout << pre.counts.to_string() << "\n";
    std::cout << "split: train=" << split.train.size() << " valid=" << split.valid.size()
              << " test=" << split.test.size() << " -> " << a.out << "\n";
    return 0;
}

int cmd_overlap(const std::string& split_dir, const std::string& out_dir, const std::string& metrics_csv,
                unsigned threads, bool no_prune, bool js_printed) {
    WallClock clock;
    DatasetSplit split = read_split_dir(split_dir);
    if (split.train.empty()) throw pipeline_error("overlap: empty training split");
    if (split.test.empty()) throw pipeline_error("overlap: empty test split");

    std::vector<OverlapMetric> metrics;
    for (const auto& name : split_csv(metrics_csv, ',')) metrics.push_back(parse_metric(name));
    if (metrics.empty()) throw input_error("overlap: no metrics requested");

    const LocationIndex index = LocationIndex::build(split.train);
    fs::create_directories(out_dir);

    json summary;
    summary["test_trajectories"] = split.test.size();
    RunManifest man;
    man.command = "overlap";
    man.config = {{"metrics", metrics_csv}, {"pruning", !no_prune}, {"threads", threads}};
    man.input_digests[split_dir] = digest_path(split_dir);

    for (OverlapMetric m : metrics) {
        const auto records = compute_overlaps(split.test, index, m, threads, !no_prune);
        const std::string name = "overlap_" + std::string(metric_name(m)) + ".csv";
        write_overlap_csv(fs::path(out_dir) / name, records);
        man.outputs.push_back(name);
        summary["fractions"][std::string(metric_name(m))] = bin_fractions(records);

        if (m == OverlapMetric::js && js_printed) {
            // audit artifact: the complement form (a distance, not a similarity)
            std::vector<OverlapRecord> printed = records;
            for (auto& r : printed) {
                r.score = 1.0 - r.score;
                r.bin = bin_of(r.score);
            }
            write_overlap_csv(fs::path(out_dir) / "overlap_js_printed.csv", printed);
            man.outputs.push_back("overlap_js_printed.csv");
        }
    }

    std::ofstream sum(fs::path(out_dir) / "overlap_summary.json", std::ios::binary);
    sum << summary.dump(2) << "\n";
    man.outputs.push_back("overlap_summary.json");
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_mmc(const std::string& split_dir, const std::string& out_dir, std::size_t depth,
            const std::string& target, const std::string& cache_flag, unsigned threads) {
    WallClock clock;
    DatasetSplit split = read_split_dir(split_dir);
    if (split.train.empty()) throw pipeline_error("mmc: empty training split");
    if (target != "test" && target != "valid") throw input_error("mmc: --target must be test or valid");

    TransitionMatrix model;
    const auto cache = cache_dir_from(cache_flag);
    fs::path cache_file;
    if (cache) {
        cache_file = *cache / ("mmc_" + digest_file(fs::path(split_dir) / "train.jsonl") + ".json");
    }
    if (cache && fs::exists(cache_file)) {
        model = TransitionMatrix::from_json(load_json_file(cache_file));
        std::cerr << "mmc: loaded cached model " << cache_file << "\n";
    } else {
        model = mmc_fit(split.train);
        if (cache) {
            fs::create_directories(*cache);
            std::ofstream out(cache_file, std::ios::binary);
            out << model.to_json().dump() << "\n";
        }
    }

    const auto& trajs = target == "test" ? split.test : split.valid;
    PredictionTargets targets = make_targets(trajs);

    ScoreTable table;
    table.model = "mmc";
    table.depth = depth;
    std::vector<RankedCandidates> rows(targets.instances.size());
    detail::parallel_for(targets.instances.size(), threads, [&](std::size_t i) {
        rows[i] = mmc_score(model, targets.instances[i].prefix, depth);
    });
    for (std::size_t i = 0; i < rows.size(); ++i)
        table.rows.emplace(targets.instances[i].prefix.id, std::move(rows[i]));

    fs::create_directories(out_dir);
    const std::string name = "mmc_" + target + ".jsonl";
    save_score_file(fs::path(out_dir) / name, table);

    RunManifest man;
    man.command = "mmc";
    man.config = {{"depth", depth}, {"target", target}};
    man.input_digests[split_dir] = digest_path(split_dir);
    man.outputs = {name};
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);
    std::cout << "scored " << table.rows.size() << " trajectories (skipped " << targets.skipped
              << " of length 1) -> " << (fs::path(out_dir) / name).string() << "\n";
    return 0;
}

int cmd_features(const std::string& split_dir, const std::string& out_dir, bool fit_exponent, double gamma) {
    WallClock clock;
    DatasetSplit split = read_split_dir(split_dir);
    if (split.train.empty()) throw pipeline_error("features: empty training split");

    const auto features = features_from_train(split);
    std::vector<std::string> warnings;
    const auto law = fit_visitation_model(split.train, split.vocabulary, fit_exponent, gamma, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    fs::create_directories(out_dir);
    write_features_csv(fs::path(out_dir) / "features.csv", features, split.users);
    write_law_model_json(fs::path(out_dir) / "law_model.json", law);

    RunManifest man;
    man.command = "features";
    man.config = {{"fit_gamma", fit_exponent}, {"gamma", gamma}};
    man.input_digests[split_dir] = digest_path(split_dir);
    man.outputs = {"features.csv", "law_model.json"};
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);
    std::cout << "features for " << features.size() << " users, gamma=" << fmt_double(law.gamma)
              << " r_min=" << fmt_double(law.r_min) << " -> " << out_dir << "\n";
    return 0;
}

Strata read_strata(const std::string& overlap_dir, const std::string& which = "") {
    std::set<std::string> wanted;
    if (!which.empty())
        for (const auto& name : split_csv(which, ',')) {
            parse_metric(name); // validates
            wanted.insert(name);
        }
    Strata strata;
    for (const char* m : {"js", "lcst", "ofe"}) {
        if (!wanted.empty() && !wanted.count(m)) continue;
        const fs::path p = fs::path(overlap_dir) / ("overlap_" + std::string(m) + ".csv");
        if (!fs::exists(p)) {
            if (wanted.count(m)) throw input_error("requested stratification metric " + std::string(m) +
                                                   " but " + p.string() + " does not exist");
            continue;
        }
        const auto records = read_overlap_csv(p, parse_metric(m));
        strata[m] = stratify(records);
    }
    if (strata.empty()) throw input_error("no overlap_<metric>.csv files in " + overlap_dir);
    return strata;
}

int cmd_eval(const std::string& split_dir, const std::vector<std::string>& score_files,
             const std::vector<std::string>& names, const std::string& out_dir,
             const std::string& overlap_dir, const std::string& stratify_metrics, std::size_t k) {
    WallClock clock;
    DatasetSplit split = read_split_dir(split_dir);
    PredictionTargets targets = make_targets(split.test);

    std::optional<Strata> strata;
    if (!overlap_dir.empty()) strata = read_strata(overlap_dir, stratify_metrics);
    else if (!stratify_metrics.empty())
        throw input_error("--stratify requires --overlap-dir");

    std::vector<TrajectoryId> expected;
    for (const auto& inst : targets.instances) expected.push_back(inst.prefix.id);

    std::vector<EvalReport> reports;
    RunManifest man;
    man.command = "eval";
    man.config = {{"k", k}};
    man.input_digests[split_dir] = digest_path(split_dir);
    if (!overlap_dir.empty()) man.input_digests[overlap_dir] = digest_path(overlap_dir);

    for (std::size_t i = 0; i < score_files.size(); ++i) {
        const std::string name = i < names.size() ? names[i] : "";
        ScoreTable table = load_score_file(score_files[i], name);
        man.input_digests[score_files[i]] = digest_file(score_files[i]);
        const auto cov = check_coverage(table, expected);
        if (!cov.full())
            std::cerr << "warning: " << table.model << " covers " << table.rows.size() << " of "
                      << expected.size() << " test trajectories (" << cov.missing.size() << " missing, "
                      << cov.extra.size() << " extra)\n";
        reports.push_back(acc_at_k(table, targets.truth, k, strata ? &*strata : nullptr, targets.skipped));
    }

    fs::create_directories(out_dir);
    json out = json::array();
    for (const auto& r : reports) out.push_back(eval_report_json(r));
    std::ofstream jf(fs::path(out_dir) / "eval_report.json", std::ios::binary);
    jf << out.dump(2) << "\n";
    write_eval_csv(fs::path(out_dir) / "eval_report.csv", reports);

    man.outputs = {"eval_report.json", "eval_report.csv"};
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);
    for (const auto& r : reports)
        std::cout << r.model << ": ACC@" << r.k << " = " << fmt_double(r.overall) << " over " << r.evaluated
                  << " trajectories (" << r.skipped << " skipped)\n";
    return 0;
}

int cmd_rerank_train(const std::string& split_dir, const std::string& scores_file, const std::string& out_dir,
                     const std::string& config_file, TrainConfig cfg,
                     const std::vector<std::string>& overridden, bool fit_exponent, double gamma,
                     bool emit_samples, unsigned threads) {
    WallClock clock;
    if (!config_file.empty()) {
        TrainConfig from_file = TrainConfig::from_json(load_json_file(config_file));
        auto was_set = [&](const char* name) {
            return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
        };
        if (!was_set("--k")) cfg.negatives = from_file.negatives;
        if (!was_set("--lr")) cfg.learning_rate = from_file.learning_rate;
        if (!was_set("--epochs")) cfg.epochs = from_file.epochs;
        if (!was_set("--batch")) cfg.batch = from_file.batch;
        if (!was_set("--hidden")) cfg.hidden = from_file.hidden;
        if (!was_set("--seed")) cfg.seed = from_file.seed;
    }
    cfg.validate();
    if (cfg.parallel_batches)
        std::cerr << "warning: parallel-batch mode is enabled; training results are not "
                     "bit-reproducible across machines or thread counts\n";

    DatasetSplit split = read_split_dir(split_dir);
    if (split.valid.empty())
        throw pipeline_error("rerank-train: the validation split is empty; nothing to train on");
    PredictionTargets targets = make_targets(split.valid);
    ScoreTable table = load_score_file(scores_file);

    const auto features = features_from_train(split);
    const auto law = fit_visitation_model(split.train, split.vocabulary, fit_exponent, gamma);
    std::vector<LocationId> anchors;
    for (const auto& inst : targets.instances) anchors.push_back(inst.anchor);
    const auto cache = LawTopCache::build(law, split.vocabulary, anchors, 5, threads);

    const auto samples =
        build_samples(table, targets, features, cache, split.vocabulary.size(), cfg.negatives, cfg.seed);
    TrainResult result = train_scorer(samples, cfg);

    fs::create_directories(out_dir);
    save_scorer(fs::path(out_dir) / "scorer.json", result.model);
    RunManifest man;
    man.command = "rerank-train";
    man.seed = cfg.seed;
    man.config = cfg.to_json();
    man.config["fit_gamma"] = fit_exponent;
    man.config["gamma"] = gamma;
    man.input_digests[split_dir] = digest_path(split_dir);
    man.input_digests[scores_file] = digest_file(scores_file);
    man.outputs = {"scorer.json"};
    if (emit_samples) {
        write_samples_jsonl(fs::path(out_dir) / "samples.jsonl", samples);
        man.outputs.push_back("samples.jsonl");
    }
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);

    std::cout << "trained on " << samples.size() << " samples, final BCE=" << fmt_double(result.final_loss);
    if (!result.holdout_curve.empty())
        std::cout << ", held-out BCE " << fmt_double(result.holdout_curve.front()) << " -> "
                  << fmt_double(result.holdout_curve.back());
    if (result.restarts) std::cout << ", " << result.restarts << " divergence restart(s)";
    std::cout << " -> " << (fs::path(out_dir) / "scorer.json").string() << "\n";
    if (result.holdout_curve.size() >= 2 && result.holdout_curve.back() >= result.holdout_curve.front())
        std::cerr << "warning: held-out loss did not decrease; the features carry little signal "
                     "for this dataset or the scorer is overfitting\n";
    return 0;
}

int cmd_rerank_apply(const std::string& split_dir, const std::string& scores_file, const std::string& scorer_file,
                     const std::string& out_dir, const std::string& overlap_dir, std::size_t k, bool identity,
                     bool fit_exponent, double gamma, unsigned threads) {
    WallClock clock;
    DatasetSplit split = read_split_dir(split_dir);
    PredictionTargets targets = make_targets(split.test);
    ScoreTable base = load_score_file(scores_file);

    ScorerModel model;
    if (identity) {
        model = ScorerModel::identity_mode();
    } else {
        if (scorer_file.empty()) throw input_error("rerank-apply: --scorer is required unless --identity");
        model = load_scorer(scorer_file);
    }

    std::map<TrajectoryId, PredictionInstance> instances;
    for (const auto& inst : targets.instances) instances.emplace(inst.prefix.id, inst);

    const auto features = features_from_train(split);
    const auto law = fit_visitation_model(split.train, split.vocabulary, fit_exponent, gamma);
    std::vector<LocationId> anchors;
    for (const auto& inst : targets.instances) anchors.push_back(inst.anchor);
    const auto cache = LawTopCache::build(law, split.vocabulary, anchors, 5, threads);

    ScoreTable reranked = rerank_table(model, base, instances, features, cache, threads);

    std::optional<Strata> strata;
    if (!overlap_dir.empty()) strata = read_strata(overlap_dir);
    ImprovementReport rep = evaluate_improvement(base, reranked, targets.truth, k, strata ? &*strata : nullptr);

    fs::create_directories(out_dir);
    const std::string name = fs::path(scores_file).stem().string() + "_rr.jsonl";
    save_score_file(fs::path(out_dir) / name, reranked);
    std::ofstream jf(fs::path(out_dir) / "improvement_report.json", std::ios::binary);
    jf << improvement_report_json(rep).dump(2) << "\n";

    RunManifest man;
    man.command = "rerank-apply";
    man.config = {{"k", k}, {"identity", identity}, {"gamma", gamma}, {"fit_gamma", fit_exponent}};
    man.input_digests[split_dir] = digest_path(split_dir);
    man.input_digests[scores_file] = digest_file(scores_file);
    if (!scorer_file.empty()) man.input_digests[scorer_file] = digest_file(scorer_file);
    if (!overlap_dir.empty()) man.input_digests[overlap_dir] = digest_path(overlap_dir);
    man.outputs = {name, "improvement_report.json"};
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);

    std::cout << "ACC@" << k << " " << fmt_double(rep.overall.base) << " -> " << fmt_double(rep.overall.reranked)
              << " (" << name << ")\n";
    return 0;
}

int cmd_report(const std::string& overlap_dir, const std::vector<std::string>& eval_reports,
               const std::string& out_dir, const std::string& dataset) {
    WallClock clock;
    fs::create_directories(out_dir);
    RunManifest man;
    man.command = "report";
    man.config = {{"dataset", dataset}};

    // figure 1: per-metric, per-bin fraction of test trajectories
    const fs::path summary_path = fs::path(overlap_dir) / "overlap_summary.json";
    if (!fs::exists(summary_path)) throw input_error("report: missing " + summary_path.string());
    const json summary = load_json_file(summary_path);
    man.input_digests[summary_path.string()] = digest_file(summary_path);
    {
        std::ofstream out(fs::path(out_dir) / "figure1_data.csv", std::ios::binary);
        out << "dataset,metric,bin,fraction\n";
        for (const auto& [metric, bins] : summary.at("fractions").items())
            for (const auto& label : kBinLabels)
                out << csv_quote(dataset) << "," << metric << "," << label << ","
                    << fmt_double(bins.at(std::string(label)).get<double>()) << "\n";
    }
    man.outputs.push_back("figure1_data.csv");

    // figure 2 + the wide per-model table
    std::vector<EvalReport> reports;
    for (const auto& path : eval_reports) {
        const json j = load_json_file(path);
        man.input_digests[path] = digest_file(path);
        if (j.is_array())
            for (const auto& r : j) reports.push_back(eval_report_from_json(r));
        else reports.push_back(eval_report_from_json(j));
    }
    if (!reports.empty()) {
        std::ofstream out(fs::path(out_dir) / "figure2_data.csv", std::ios::binary);
        out << "dataset,model,metric,bin,acc\n";
        for (const auto& r : reports)
            for (const auto& [metric, bins] : r.strata)
                for (std::size_t b = 0; b < 5; ++b)
                    out << csv_quote(dataset) << "," << csv_quote(r.model) << "," << metric << ","
                        << kBinLabels[b] << "," << fmt_double(bins[b].acc) << "\n";
        write_eval_csv(fs::path(out_dir) / "appendix_a.csv", reports);
        man.outputs.push_back("figure2_data.csv");
        man.outputs.push_back("appendix_a.csv");
    }
    man.wall_time_s = clock.seconds();
    write_manifest(out_dir, man);
    std::cout << "report -> " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory test-train overlap auditing and mobility-law reranking"};
    app.require_subcommand(1);

    // preprocess
    PreprocessArgs pa;
    auto* sp = app.add_subcommand("preprocess", "parse a dataset, cut sessions, split train/valid/test");
    sp->add_option("--format", pa.format, "gowalla|foursquare|taxi-porto|taxi-sf|generic-csv")->required();
    sp->add_option("--input", pa.input, "dataset file (or directory for taxi-sf)")->required();
    sp->add_option("--out", pa.out, "output split directory")->required();
    sp->add_option("--config", pa.config_file, "JSON config file");
    sp->add_option("--min-records", pa.cfg.min_records, "drop users with fewer records");
    sp->add_option("--session-gap", pa.cfg.session_gap_hours, "session gap threshold, hours");
    sp->add_option("--min-trajectories", pa.cfg.min_trajectories, "drop users with fewer trajectories");
    sp->add_option("--train-frac", pa.cfg.fractions.train, "train fraction");
    sp->add_option("--valid-frac", pa.cfg.fractions.valid, "validation fraction");
    sp->add_option("--test-frac", pa.cfg.fractions.test, "test fraction");
    sp->add_option("--grid-cell", pa.cfg.grid_cell_m, "tessellation cell side, meters");
    double origin_lat = 0, origin_lon = 0;
    auto* olat = sp->add_option("--grid-origin-lat", origin_lat, "grid origin latitude");
    auto* olon = sp->add_option("--grid-origin-lon", origin_lon, "grid origin longitude");
    std::string mode = "auto";
    sp->add_option("--location-mode", mode, "auto|venue|grid")
        ->check(CLI::IsMember({"auto", "venue", "grid"}));
    sp->add_option("--col-user", pa.csv.user_col, "generic-csv: user column");
    sp->add_option("--col-time", pa.csv.time_col, "generic-csv: time column");
    sp->add_option("--col-lat", pa.csv.lat_col, "generic-csv: latitude column");
    sp->add_option("--col-lon", pa.csv.lon_col, "generic-csv: longitude column");
    sp->add_option("--col-venue", pa.csv.venue_col, "generic-csv: venue column (optional)");

    // overlap
    std::string ov_split, ov_out, ov_metrics = "js,lcst,ofe";
    unsigned ov_threads = std::max(1u, std::thread::hardware_concurrency());
    bool ov_noprune = false, ov_js_printed = false;
    auto* so = app.add_subcommand("overlap", "max test-train overlap per trajectory, stratified into bins");
    so->add_option("--split-dir", ov_split)->required();
    so->add_option("--out", ov_out)->required();
    so->add_option("--metrics", ov_metrics, "comma-separated subset of js,lcst,ofe");
    so->add_option("--threads", ov_threads);
    so->add_flag("--no-prune", ov_noprune, "disable index pruning (slow; same results)");
    so->add_flag("--js-printed", ov_js_printed, "also emit the complement form of js (audit)");

    // mmc
    std::string mm_split, mm_out, mm_target = "test", mm_cache;
    std::size_t mm_depth = 100;
    unsigned mm_threads = std::max(1u, std::thread::hardware_concurrency());
    auto* sm = app.add_subcommand("mmc", "fit the Markov baseline on train and score a split");
    sm->add_option("--split-dir", mm_split)->required();
    sm->add_option("--out", mm_out)->required();
    sm->add_option("--depth", mm_depth, "candidates per trajectory");
    sm->add_option("--target", mm_target, "test|valid");
    sm->add_option("--cache-dir", mm_cache, "model cache (default: $MOBAUDIT_CACHE_DIR)");
    sm->add_option("--threads", mm_threads);

    // features
    std::string fe_split, fe_out;
    bool fe_fit = false;
    double fe_gamma = 1.6;
    auto* sf = app.add_subcommand("features", "per-user mobility-law features and the visitation law model");
    sf->add_option("--split-dir", fe_split)->required();
    sf->add_option("--out", fe_out)->required();
    sf->add_flag("--fit-gamma", fe_fit, "fit the visitation exponent instead of using --gamma");
    sf->add_option("--gamma", fe_gamma, "visitation law exponent");

    // eval
    std::string ev_split, ev_out, ev_overlap, ev_stratify;
    std::vector<std::string> ev_scores, ev_names;
    std::size_t ev_k = 5;
    auto* se = app.add_subcommand("eval", "ACC@k of score files, overall and per overlap bin");
    se->add_option("--split-dir", ev_split)->required();
    se->add_option("--scores", ev_scores, "score files (JSON Lines)")->required();
    se->add_option("--name", ev_names, "model names (parallel to --scores; default: file stem)");
    se->add_option("--out", ev_out)->required();
    se->add_option("--overlap-dir", ev_overlap, "stratify using overlap_<metric>.csv files");
    se->add_option("--stratify", ev_stratify, "restrict stratification to these metrics (e.g. lcst)");
    se->add_option("--k", ev_k);

    // rerank-train
    std::string rt_split, rt_scores, rt_out, rt_config;
    TrainConfig rt_cfg;
    bool rt_fit = false, rt_emit = false;
    double rt_gamma = 1.6;
    unsigned rt_threads = std::max(1u, std::thread::hardware_concurrency());
    auto* srt = app.add_subcommand("rerank-train", "train the mobility-law scorer on the validation split");
    srt->add_option("--split-dir", rt_split)->required();
    srt->add_option("--scores", rt_scores, "validation score file from the base predictor")->required();
    srt->add_option("--out", rt_out)->required();
    srt->add_option("--config", rt_config, "JSON config file for training");
    srt->add_option("--k", rt_cfg.negatives, "negatives per positive");
    srt->add_option("--lr", rt_cfg.learning_rate);
    srt->add_option("--epochs", rt_cfg.epochs);
    srt->add_option("--batch", rt_cfg.batch);
    srt->add_option("--hidden", rt_cfg.hidden);
    srt->add_option("--seed", rt_cfg.seed);
    srt->add_flag("--fit-gamma", rt_fit);
    srt->add_option("--gamma", rt_gamma);
    srt->add_flag("--emit-samples", rt_emit, "also write samples.jsonl");
    srt->add_flag("--parallel-batches", rt_cfg.parallel_batches,
                  "parallel gradient accumulation (not bit-reproducible)");
    srt->add_option("--threads", rt_threads);

    // rerank-apply
    std::string ra_split, ra_scores, ra_scorer, ra_out, ra_overlap;
    std::size_t ra_k = 5;
    bool ra_identity = false, ra_fit = false;
    double ra_gamma = 1.6;
    unsigned ra_threads = std::max(1u, std::thread::hardware_concurrency());
    auto* sra = app.add_subcommand("rerank-apply", "rerank a test score file and report the improvement");
    sra->add_option("--split-dir", ra_split)->required();
    sra->add_option("--scores", ra_scores, "test score file from the base predictor")->required();
    sra->add_option("--scorer", ra_scorer, "scorer.json from rerank-train");
    sra->add_option("--out", ra_out)->required();
    sra->add_option("--overlap-dir", ra_overlap, "stratify the report");
    sra->add_option("--k", ra_k);
    sra->add_flag("--identity", ra_identity, "identity test mode: pass predictor scores through");
    sra->add_flag("--fit-gamma", ra_fit);
    sra->add_option("--gamma", ra_gamma);
    sra->add_option("--threads", ra_threads);

    // report
    std::string rp_overlap, rp_out, rp_dataset = "dataset";
    std::vector<std::string> rp_evals;
    auto* srp = app.add_subcommand("report", "emit figure/table data files from overlap and eval outputs");
    srp->add_option("--overlap-dir", rp_overlap)->required();
    srp->add_option("--eval-report", rp_evals, "eval_report.json files");
    srp->add_option("--out", rp_out)->required();
    srp->add_option("--dataset", rp_dataset, "dataset label for the data files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sp->parsed()) {
            if (mode == "venue") pa.cfg.location_mode = mobaudit::LocationMode::venue;
            else if (mode == "grid") pa.cfg.location_mode = mobaudit::LocationMode::grid;
            if (olat->count() && olon->count()) pa.cfg.grid_origin = mobaudit::LatLon{origin_lat, origin_lon};
            std::vector<std::string> overridden;
            for (const auto* opt : sp->get_options())
                if (opt->count()) overridden.push_back(opt->get_name());
            return cmd_preprocess(pa, overridden);
        }
        if (so->parsed()) return cmd_overlap(ov_split, ov_out, ov_metrics, ov_threads, ov_noprune, ov_js_printed);
        if (sm->parsed()) return cmd_mmc(mm_split, mm_out, mm_depth, mm_target, mm_cache, mm_threads);
        if (sf->parsed()) return cmd_features(fe_split, fe_out, fe_fit, fe_gamma);
        if (se->parsed()) return cmd_eval(ev_split, ev_scores, ev_names, ev_out, ev_overlap, ev_stratify, ev_k);
        if (srt->parsed()) {
            std::vector<std::string> overridden;
            for (const auto* opt : srt->get_options())
                if (opt->count()) overridden.push_back(opt->get_name());
            return cmd_rerank_train(rt_split, rt_scores, rt_out, rt_config, rt_cfg, overridden, rt_fit, rt_gamma,
                                    rt_emit, rt_threads);
        }
        if (sra->parsed())
            return cmd_rerank_apply(ra_split, ra_scores, ra_scorer, ra_out, ra_overlap, ra_k, ra_identity,
                                    ra_fit, ra_gamma, ra_threads);
        if (srp->parsed()) return cmd_report(rp_overlap, rp_evals, rp_out, rp_dataset);
    } catch (const mobaudit::input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const mobaudit::pipeline_error& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 2;
    } catch (const mobaudit::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
