/*
 * acceptance_main.cpp -- end-to-end acceptance suite. Runs every criterion
 * at its pinned tolerance and prints one PASS/FAIL/SKIP line per criterion.
 * Criteria 8 and 9 need the public datasets on disk (MOBAUDIT_DATA_DIR) and
 * are skipped, not failed, when the data is absent.
 */
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mobaudit/core.hpp"
#include "mobaudit/geo.hpp"
#include "mobaudit/ingest.hpp"
#include "mobaudit/mobility.hpp"
#include "mobaudit/overlap.hpp"
#include "mobaudit/predictors.hpp"
#include "mobaudit/rerank.hpp"

#include "generators.hpp"
#include "oracles.hpp"

using namespace mobaudit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    enum Kind { pass, fail, skip } kind = pass;
    std::string detail;

    static Outcome ok(std::string d = "") { return {pass, std::move(d)}; }
    static Outcome bad(std::string d) { return {fail, std::move(d)}; }
    static Outcome skipped(std::string d) { return {skip, std::move(d)}; }
};

unsigned hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion1_metric_oracles() {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 1000; ++i) {
        const auto a = gen::trajectory(rng, 0, 1, 8, 5);
        const auto b = gen::trajectory(rng, 1, 1, 8, 5);
        if (js(a, b) != oracle::js_bruteforce(a, b)) return Outcome::bad("js mismatch at pair " + std::to_string(i));
        if (lcst(b, a) != oracle::lcst_bruteforce(b, a))
            return Outcome::bad("lcst mismatch at pair " + std::to_string(i));
        if (ofe(a, b) != oracle::ofe_bruteforce(a, b))
            return Outcome::bad("ofe mismatch at pair " + std::to_string(i));
    }
    return Outcome::ok("1000 random pairs, exact match for js/lcst/ofe");
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2_pruning() {
    std::mt19937_64 rng(202);
    std::size_t pairs = 0;
    for (int c = 0; c < 200; ++c) {
        const std::size_t n_train = 1 + rng() % 50;
        const std::size_t n_test = 1 + rng() % 20;
        const auto train = gen::corpus(rng, n_train, 1, 12, 14, 0);
        const auto test = gen::corpus(rng, n_test, 1, 12, 14, 1000);
        const auto index = LocationIndex::build(train);
        for (const auto& t : test) {
            for (auto m : {OverlapMetric::js, OverlapMetric::lcst, OverlapMetric::ofe}) {
                const auto pruned = max_overlap(t, index, m, true);
                const auto full = max_overlap(t, index, m, false);
                if (pruned.score != full.score || pruned.argmax_train != full.argmax_train)
                    return Outcome::bad("pruned != full scan on corpus " + std::to_string(c));
                ++pairs;
            }
        }
    }
    return Outcome::ok(std::to_string(pairs) + " pruned/full comparisons, all exact");
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3_stratification() {
    std::mt19937_64 rng(303);
    const auto train = gen::corpus(rng, 60, 1, 10, 18, 0);
    const auto test = gen::corpus(rng, 120, 1, 10, 18, 1000);
    const auto index = LocationIndex::build(train);
    for (auto m : {OverlapMetric::js, OverlapMetric::lcst, OverlapMetric::ofe}) {
        const auto records = compute_overlaps(test, index, m, hw_threads());
        const auto bins = stratify(records);
        std::set<TrajectoryId> seen;
        std::size_t total = 0;
        for (const auto& [bin, ids] : bins) {
            total += ids.size();
            for (TrajectoryId id : ids)
                if (!seen.insert(id).second)
                    return Outcome::bad("trajectory in two bins under " + std::string(metric_name(m)));
        }
        if (total != test.size()) return Outcome::bad("bins do not cover the test set");
        const auto fractions = bin_fractions(records);
        double sum = 0;
        for (const auto& label : kBinLabels) sum += fractions.at(std::string(label)).get<double>();
        if (std::abs(sum - 1.0) > 1e-9) return Outcome::bad("fractions sum to " + std::to_string(sum));
    }
    return Outcome::ok("bins partition the test set, fractions sum to 1 within 1e-9");
}

// ---------------------------------------------------------------- criterion 4

Trajectory mk_traj(TrajectoryId id, UserId user, std::initializer_list<LocationId> locs,
                   std::int64_t t0 = 0) {
    Trajectory t;
    t.id = id;
    t.user = user;
    std::int64_t ts = t0;
    for (LocationId l : locs) t.points.push_back(Point{ts += 60, l});
    return t;
}

Outcome criterion4_mmc() {
    // hand-built corpus over locations {0, 1, 2}
    const std::vector<Trajectory> train{mk_traj(0, 0, {0, 1, 0, 2}), mk_traj(1, 1, {1, 0})};
    const auto m = mmc_fit(train);

    // transition counts by hand: 0->1 once, 0->2 once, 1->0 twice
    if (m.prob(0, 1) != 0.5 || m.prob(0, 2) != 0.5) return Outcome::bad("row of state 0 is not {1/2, 1/2}");
    if (m.prob(1, 0) != 1.0) return Outcome::bad("row of state 1 is not {1}");
    if (m.rows.count(2)) return Outcome::bad("state 2 was never a source but has a row");
    if (m.global_total != 6) return Outcome::bad("global visit total != 6");

    const std::vector<Trajectory> test{mk_traj(10, 2, {0, 1, 0}, 1000), mk_traj(11, 3, {1, 2, 1}, 1000),
                                       mk_traj(12, 4, {2, 0, 2}, 1000)};
    const auto targets = make_targets(test);
    ScoreTable table;
    table.model = "mmc";
    table.depth = 3;
    for (const auto& inst : targets.instances) table.rows[inst.prefix.id] = mmc_score(m, inst.prefix, 3);

    // exhaustive enumeration of the rankings:
    //  traj 10: anchor 1, row {0: 1} -> [0, then fallback 1, 2]; truth 0 at rank 1
    //  traj 11: anchor 2, no row -> fallback by visits [0(3), 1(2), 2(1)]; truth 1 at rank 2
    //  traj 12: anchor 0, row {1: 1/2, 2: 1/2} tie -> lower id first; truth 2 at rank 2
    const std::vector<LocationId> want10{0, 1, 2}, want11{0, 1, 2}, want12{1, 2, 0};
    auto ranked_ids = [&](TrajectoryId id) {
        std::vector<LocationId> out;
        for (const auto& [loc, s] : table.rows.at(id)) out.push_back(loc);
        return out;
    };
    if (ranked_ids(10) != want10 || ranked_ids(11) != want11 || ranked_ids(12) != want12)
        return Outcome::bad("ranking differs from the hand enumeration");

    const double acc1 = acc_at_k(table, targets.truth, 1).overall;
    const double acc5 = acc_at_k(table, targets.truth, 5).overall;
    if (acc1 != 1.0 / 3.0) return Outcome::bad("ACC@1 != 1/3");
    if (acc5 != 1.0) return Outcome::bad("ACC@5 != 1");
    return Outcome::ok("transition matrix and ACC@1/ACC@5 equal the hand enumeration exactly");
}

// ---------------------------------------------------------------- criterion 5

std::vector<RerankSample> separable_fixture(std::size_t n_traj, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<RerankSample> out;
    for (std::size_t t = 0; t < n_traj; ++t) {
        RerankSample pos;
        pos.traj = t;
        pos.label = 1;
        pos.features = {0.5 + 0.3 * detail::rand_u01(rng), 2.0, 1, 0, 0, 0, 0, 1};
        out.push_back(pos);
        for (int i = 0; i < 20; ++i) {
            RerankSample neg;
            neg.traj = t;
            neg.cand = static_cast<LocationId>(i + 1);
            neg.features = {0.3 * detail::rand_u01(rng), 2.0, 0, 0, 0, 0, 0, 1};
            out.push_back(neg);
        }
    }
    return out;
}

Outcome criterion5_reranker_numerics() {
    // gradient vs central finite differences, step 1e-5, 10 random points
    std::mt19937_64 rng(505);
    const auto samples = separable_fixture(20, 506);
    std::span<const RerankSample> batch(samples.data(), 64);

    ScorerModel m;
    m.hidden_dim = 16;
    m.w1.resize(m.hidden_dim * m.input_dim);
    m.b1.resize(m.hidden_dim);
    m.w2.resize(m.hidden_dim);
    for (auto& v : m.w1) v = detail::rand_u01(rng) - 0.5;
    for (auto& v : m.b1) v = 0.1 * (detail::rand_u01(rng) - 0.5);
    for (auto& v : m.w2) v = detail::rand_u01(rng) - 0.5;
    m.b2 = -0.2;
    m.feat_std.fill(1.0);

    std::vector<double> grad;
    bce_loss_and_grad(m, batch, &grad);
    auto params = detail::ParamView::flatten(m);
    const double step = 1e-5;
    double max_rel = 0;
    for (int probe = 0; probe < 10; ++probe) {
        const std::size_t i = rng() % params.size();
        auto plus = params, minus = params;
        plus[i] += step;
        minus[i] -= step;
        ScorerModel mp = m, mm = m;
        detail::ParamView::unflatten(mp, plus);
        detail::ParamView::unflatten(mm, minus);
        const double fd = (bce_loss_and_grad(mp, batch) - bce_loss_and_grad(mm, batch)) / (2 * step);
        max_rel = std::max(max_rel, std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-6}));
    }
    if (max_rel >= 1e-4) return Outcome::bad("max relative gradient error " + fmt_double(max_rel));

    TrainConfig cfg;
    cfg.seed = 99;
    const auto result = train_scorer(separable_fixture(150, 507), cfg);
    if (result.final_loss >= 0.05)
        return Outcome::bad("BCE on the separable set is " + fmt_double(result.final_loss));
    return Outcome::ok("max gradient rel. error " + fmt_double(max_rel) + ", separable BCE " +
                       fmt_double(result.final_loss));
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6_identity_passthrough() {
    std::mt19937_64 rng(606);
    ScoreTable base;
    base.model = "ext";
    base.depth = 8;
    std::map<TrajectoryId, LocationId> truth;
    for (TrajectoryId id = 0; id < 300; ++id) {
        RankedCandidates row;
        double s = 1.0;
        std::set<LocationId> used;
        while (row.size() < 8) {
            const auto loc = static_cast<LocationId>(rng() % 40);
            if (!used.insert(loc).second) continue;
            if (rng() % 3) s *= 0.9; // keep some exact ties in the table
            row.emplace_back(loc, s);
        }
        base.rows[id] = row;
        truth[id] = static_cast<LocationId>(rng() % 40);
    }
    const std::map<TrajectoryId, PredictionInstance> no_instances;
    const std::map<UserId, UserLawFeatures> no_features;
    const LawTopCache no_cache;
    const auto reranked =
        rerank_table(ScorerModel::identity_mode(), base, no_instances, no_features, no_cache);
    for (std::size_t k = 1; k <= 8; ++k) {
        const double a = acc_at_k(base, truth, k).overall;
        const double b = acc_at_k(reranked, truth, k).overall;
        if (a != b) return Outcome::bad("ACC@" + std::to_string(k) + " changed under identity rerank");
    }
    return Outcome::ok("identity rerank leaves ACC@1..8 bit-identical on a 300-trajectory fixture");
}

// ---------------------------------------------------------------- criterion 7

struct LawWorld {
    PreprocessResult pre;
};

// Synthetic city: a core of busy locations that dominates training, and a
// fringe of rarely-visited locations. Later (valid/test) trajectories walk
// the fringe with next steps drawn from the (r*f)^-gamma law, so they sit
// in the low-overlap bins and are invisible to the Markov baseline, while
// the law shortlist still points at the truth.
LawWorld make_law_world(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 2654435761u + 13);
    LawWorld w;
    constexpr std::size_t n_core = 60, n_fringe = 60;
    for (std::size_t i = 0; i < n_core + n_fringe; ++i) {
        const double lat = 40.60 + detail::rand_u01(rng) * 0.25;
        const double lon = -74.05 + detail::rand_u01(rng) * 0.25;
        w.pre.vocabulary.add((i < n_core ? "core" : "fringe") + std::to_string(i), lat, lon);
    }
    const auto fringe_id = [&](std::size_t k) { return static_cast<LocationId>(n_core + (k % n_fringe)); };

    constexpr std::size_t n_users = 52; // the last two seed the fringe
    constexpr std::size_t trajs_per_user = 12;
    TrajectoryId next_id = 0;
    std::size_t fringe_slot = 0;

    // first pass: training-era trajectories (the first 8 sessions per user)
    std::vector<std::vector<Trajectory>> per_user(n_users);
    for (std::size_t u = 0; u < n_users; ++u) {
        w.pre.users.push_back("user" + std::to_string(u));
        const bool wanderer = u >= n_users - 2;
        std::vector<LocationId> routine;
        for (int i = 0; i < 8; ++i) routine.push_back(static_cast<LocationId>(rng() % n_core));
        for (std::size_t s = 0; s < 8; ++s) {
            Trajectory t;
            t.id = next_id++;
            t.user = static_cast<UserId>(u);
            std::int64_t ts = static_cast<std::int64_t>(u) * 100000000 + static_cast<std::int64_t>(s) * 1000000;
            if (wanderer) {
                // alternate core / fringe, end on core so no training
                // trajectory ends at a fringe location
                for (int i = 0; i < 4; ++i) {
                    t.points.push_back(Point{ts += 600, routine[static_cast<std::size_t>(i) % routine.size()]});
                    t.points.push_back(Point{ts += 600, fringe_id(fringe_slot++)});
                }
                t.points.push_back(Point{ts += 600, routine[0]});
            } else {
                for (int i = 0; i < 6; ++i)
                    t.points.push_back(Point{ts += 600, routine[rng() % routine.size()]});
            }
            per_user[u].push_back(std::move(t));
        }
    }

    // the law model that generates the later trajectories is exactly the one
    // the pipeline will fit on the training split
    VisitationLawModel law;
    law.gamma = 1.6;
    law.r_min = detail::half_median_nn_distance(w.pre.vocabulary);
    for (const auto& trajs : per_user)
        for (const auto& t : trajs)
            for (const auto& p : t.points) ++law.visits[p.loc];

    const std::size_t vocab_size = w.pre.vocabulary.size();
    auto law_step = [&](LocationId from, std::mt19937_64& r) {
        std::vector<double> weights(vocab_size);
        double total = 0;
        for (std::size_t c = 0; c < vocab_size; ++c) {
            weights[c] = law.raw_score(w.pre.vocabulary, from, static_cast<LocationId>(c));
            total += weights[c];
        }
        double u = detail::rand_u01(r) * total;
        for (std::size_t c = 0; c < vocab_size; ++c) {
            if (u < weights[c]) return static_cast<LocationId>(c);
            u -= weights[c];
        }
        return static_cast<LocationId>(vocab_size - 1);
    };

    for (std::size_t u = 0; u < n_users; ++u) {
        for (std::size_t s = 8; s < trajs_per_user; ++s) {
            Trajectory t;
            t.id = next_id++;
            t.user = static_cast<UserId>(u);
            std::int64_t ts = static_cast<std::int64_t>(u) * 100000000 + static_cast<std::int64_t>(s) * 1000000;
            LocationId cur = fringe_id(rng());
            t.points.push_back(Point{ts += 600, cur});
            for (int i = 0; i < 5; ++i) {
                cur = law_step(cur, rng);
                t.points.push_back(Point{ts += 600, cur});
            }
            per_user[u].push_back(std::move(t));
        }
    }

    for (auto& trajs : per_user)
        for (auto& t : trajs) w.pre.trajectories.push_back(std::move(t));
    w.pre.counts.trajectories_out = w.pre.trajectories.size();
    return w;
}

Outcome criterion7_synthetic_improvement() {
    const auto t0 = std::chrono::steady_clock::now();
    const unsigned threads = hw_threads();
    double base_sum = 0, reranked_sum = 0;
    std::size_t cells = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        LawWorld world = make_law_world(seed);
        const auto split = mobaudit::split(world.pre, SplitFractions{});
        const std::size_t vocab_size = split.vocabulary.size();

        const auto index = LocationIndex::build(split.train);
        std::vector<OverlapRecord> all_records;
        for (auto m : {OverlapMetric::js, OverlapMetric::lcst, OverlapMetric::ofe}) {
            const auto recs = compute_overlaps(split.test, index, m, threads);
            all_records.insert(all_records.end(), recs.begin(), recs.end());
        }
        const Strata strata = strata_from_records(all_records);
        for (const char* m : {"js", "lcst", "ofe"}) {
            const auto it = strata.at(m).find(0);
            if (it == strata.at(m).end() || it->second.size() < 20)
                return Outcome::bad(std::string("seed ") + std::to_string(seed) + ": too few test trajectories in the " +
                                    m + " 0-20 bin");
        }

        const auto model = mmc_fit(split.train);
        const auto targets_valid = make_targets(split.valid);
        const auto targets_test = make_targets(split.test);
        auto score_all = [&](const PredictionTargets& targets) {
            ScoreTable table;
            table.model = "mmc";
            table.depth = vocab_size;
            for (const auto& inst : targets.instances)
                table.rows[inst.prefix.id] = mmc_score(model, inst.prefix, vocab_size);
            return table;
        };
        const ScoreTable table_valid = score_all(targets_valid);
        const ScoreTable table_test = score_all(targets_test);

        std::map<UserId, std::vector<Trajectory>> train_by_user;
        for (const auto& t : split.train) train_by_user[t.user].push_back(t);
        std::map<UserId, UserLawFeatures> features;
        for (const auto& [uid, trajs] : train_by_user)
            features[uid] = compute_user_features(trajs, split.vocabulary);

        const auto law = fit_visitation_model(split.train, split.vocabulary);
        std::vector<LocationId> anchors;
        for (const auto& inst : targets_valid.instances) anchors.push_back(inst.anchor);
        for (const auto& inst : targets_test.instances) anchors.push_back(inst.anchor);
        const auto cache = LawTopCache::build(law, split.vocabulary, anchors, 5, threads);

        TrainConfig cfg;
        cfg.seed = 1000 + seed;
        const auto samples =
            build_samples(table_valid, targets_valid, features, cache, vocab_size, cfg.negatives, cfg.seed);
        const auto trained = train_scorer(samples, cfg);

        std::map<TrajectoryId, PredictionInstance> instances;
        for (const auto& inst : targets_test.instances) instances.emplace(inst.prefix.id, inst);
        const auto reranked = rerank_table(trained.model, table_test, instances, features, cache, threads);
        const auto rep = evaluate_improvement(table_test, reranked, targets_test.truth, 5, &strata);

        for (const char* m : {"js", "lcst", "ofe"}) {
            const auto& cell = rep.strata.at(m)[0];
            if (cell.count == 0)
                return Outcome::bad(std::string("seed ") + std::to_string(seed) + ": empty evaluated " + m +
                                    " 0-20 bin");
            if (!(cell.reranked > cell.base))
                return Outcome::bad(std::string("seed ") + std::to_string(seed) + ": " + m + " 0-20 ACC@5 " +
                                    fmt_double(cell.base) + " -> " + fmt_double(cell.reranked) +
                                    " is not an improvement");
            base_sum += cell.base;
            reranked_sum += cell.reranked;
            ++cells;
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 300.0) return Outcome::bad("took " + fmt_double(secs) + " s (budget 300 s)");
    std::ostringstream os;
    os << "0-20 ACC@5 improves for js/lcst/ofe over 5 seeds, mean "
       << fmt_double(base_sum / static_cast<double>(cells)) << " -> "
       << fmt_double(reranked_sum / static_cast<double>(cells)) << " (" << fmt_double(secs) << " s)";
    return Outcome::ok(os.str());
}

// ---------------------------------------------------------------- criterion 8/9 helpers

std::optional<fs::path> find_dataset(std::initializer_list<const char*> names) {
    const char* env = std::getenv("MOBAUDIT_DATA_DIR");
    if (!env || !*env) return std::nullopt;
    for (const char* name : names) {
        const fs::path p = fs::path(env) / name;
        if (fs::exists(p)) return p;
    }
    return std::nullopt;
}

Outcome criterion8_foursquare_nyc() {
    const auto data = find_dataset({"dataset_TSMC2014_NYC.txt", "foursquare_nyc.tsv", "foursquare_nyc.txt"});
    if (!data)
        return Outcome::skipped("Foursquare NYC not found under MOBAUDIT_DATA_DIR "
                                "(expected dataset_TSMC2014_NYC.txt)");
    const auto parsed = parse(SourceFormat::foursquare, *data);
    PipelineConfig cfg;
    const auto pre = preprocess(parsed.records, cfg);
    const auto sp = mobaudit::split(pre, cfg.fractions);

    auto within = [](double got, double want, double tol_frac) {
        return std::abs(got - want) <= want * tol_frac;
    };
    std::ostringstream os;
    os << "users=" << pre.counts.users_out << " locations=" << pre.counts.locations
       << " trajectories=" << pre.counts.trajectories_out;
    if (!within(static_cast<double>(pre.counts.users_out), 4390, 0.10) ||
        !within(static_cast<double>(pre.counts.locations), 13960, 0.10) ||
        !within(static_cast<double>(pre.counts.trajectories_out), 12519, 0.10))
        return Outcome::bad(os.str() + " outside +-10% of (4390, 13960, 12519)");

    const auto model = mmc_fit(sp.train);
    const auto targets = make_targets(sp.test);
    ScoreTable table;
    table.model = "mmc";
    table.depth = 100;
    std::vector<RankedCandidates> rows(targets.instances.size());
    detail::parallel_for(targets.instances.size(), hw_threads(), [&](std::size_t i) {
        rows[i] = mmc_score(model, targets.instances[i].prefix, 100);
    });
    for (std::size_t i = 0; i < rows.size(); ++i)
        table.rows.emplace(targets.instances[i].prefix.id, std::move(rows[i]));
    const double acc5 = acc_at_k(table, targets.truth, 5, nullptr, targets.skipped).overall;
    os << " mmc ACC@5=" << fmt_double(acc5);
    if (std::abs(acc5 - 0.245) > 0.05) return Outcome::bad(os.str() + " outside 0.245 +- 0.05");
    return Outcome::ok(os.str());
}

std::optional<double> lcst_top_bin_fraction(SourceFormat fmt, const fs::path& path) {
    const auto parsed = parse(fmt, path);
    PipelineConfig cfg;
    if (fmt == SourceFormat::taxi_porto || fmt == SourceFormat::taxi_sf) cfg.location_mode = LocationMode::grid;
    const auto pre = preprocess(parsed.records, cfg);
    const auto sp = mobaudit::split(pre, cfg.fractions);
    if (sp.train.empty() || sp.test.empty()) return std::nullopt;
    const auto index = LocationIndex::build(sp.train);
    const auto records = compute_overlaps(sp.test, index, OverlapMetric::lcst, hw_threads());
    return bin_fractions(records).at("80-100").get<double>();
}

Outcome criterion9_taxi_vs_checkin() {
    struct Source {
        const char* label;
        SourceFormat fmt;
        std::optional<fs::path> path;
    };
    std::vector<Source> taxis{
        {"taxi-porto", SourceFormat::taxi_porto, find_dataset({"train.csv", "taxi_porto.csv"})},
        {"taxi-sf", SourceFormat::taxi_sf, find_dataset({"cabspottingdata", "taxi_sf"})}};
    std::vector<Source> checkins{
        {"foursquare-nyc", SourceFormat::foursquare,
         find_dataset({"dataset_TSMC2014_NYC.txt", "foursquare_nyc.tsv"})},
        {"foursquare-tky", SourceFormat::foursquare,
         find_dataset({"dataset_TSMC2014_TKY.txt", "foursquare_tky.tsv"})}};

    const bool any_taxi = taxis[0].path || taxis[1].path;
    const bool any_checkin = checkins[0].path || checkins[1].path;
    if (!any_taxi || !any_checkin)
        return Outcome::skipped("needs at least one taxi and one check-in dataset under MOBAUDIT_DATA_DIR");

    std::ostringstream os;
    double taxi_min = 2.0, checkin_max = -1.0;
    for (const auto& s : taxis)
        if (s.path) {
            const auto f = lcst_top_bin_fraction(s.fmt, *s.path);
            if (!f) return Outcome::bad(std::string(s.label) + ": empty split");
            taxi_min = std::min(taxi_min, *f);
            os << s.label << "=" << fmt_double(*f) << " ";
        }
    for (const auto& s : checkins)
        if (s.path) {
            const auto f = lcst_top_bin_fraction(s.fmt, *s.path);
            if (!f) return Outcome::bad(std::string(s.label) + ": empty split");
            checkin_max = std::max(checkin_max, *f);
            os << s.label << "=" << fmt_double(*f) << " ";
        }
    if (!(taxi_min > checkin_max))
        return Outcome::bad(os.str() + "- taxi 80-100 LCST fraction does not exceed check-ins");
    return Outcome::ok(os.str());
}

// ---------------------------------------------------------------- criterion 10

Outcome criterion10_performance() {
    // synthetic corpus at the Foursquare-NYC scale from Table 1
    std::mt19937_64 rng(1010);
    constexpr std::size_t n_locations = 13960;
    constexpr std::size_t n_trajectories = 12519;
    constexpr std::size_t n_users = 2000;

    std::vector<double> zipf_cum(n_locations);
    double acc = 0;
    for (std::size_t i = 0; i < n_locations; ++i) {
        acc += 1.0 / static_cast<double>(i + 1);
        zipf_cum[i] = acc;
    }
    auto zipf_draw = [&] {
        const double u = detail::rand_u01(rng) * zipf_cum.back();
        return static_cast<LocationId>(
            std::lower_bound(zipf_cum.begin(), zipf_cum.end(), u) - zipf_cum.begin());
    };

    std::vector<Trajectory> trajectories;
    trajectories.reserve(n_trajectories);
    TrajectoryId next_id = 0;
    std::size_t remaining = n_trajectories;
    for (std::size_t u = 0; u < n_users && remaining > 0; ++u) {
        const std::size_t quota = std::min(remaining, u + 1 < n_users ? 6 + (u % 2) : remaining);
        std::vector<LocationId> pool(25);
        for (auto& p : pool) p = zipf_draw();
        std::int64_t ts = static_cast<std::int64_t>(u) * 10000000;
        for (std::size_t s = 0; s < quota; ++s) {
            Trajectory t;
            t.id = next_id++;
            t.user = static_cast<UserId>(u);
            const std::size_t len = 2 + rng() % 12;
            for (std::size_t i = 0; i < len; ++i) {
                const LocationId loc = (rng() % 5) ? pool[rng() % pool.size()] : zipf_draw();
                t.points.push_back(Point{ts += 600, loc});
            }
            ts += 1000000;
            trajectories.push_back(std::move(t));
        }
        remaining -= quota;
    }

    PreprocessResult pre;
    pre.trajectories = std::move(trajectories);
    for (std::size_t i = 0; i < n_locations; ++i)
        pre.vocabulary.add("L" + std::to_string(i), 40.5 + (static_cast<double>(i % 120)) * 0.002,
                           -74.2 + (static_cast<double>(i / 120)) * 0.002);
    for (std::size_t u = 0; u < n_users; ++u) pre.users.push_back("user" + std::to_string(u));
    const auto sp = mobaudit::split(pre, SplitFractions{});

    const unsigned threads = std::min(hw_threads(), 8u);
    const auto t0 = std::chrono::steady_clock::now();
    const auto index = LocationIndex::build(sp.train);
    std::map<std::string, std::vector<OverlapRecord>> pruned;
    for (auto m : {OverlapMetric::js, OverlapMetric::lcst, OverlapMetric::ofe})
        pruned[std::string(metric_name(m))] = compute_overlaps(sp.test, index, m, threads, true);
    const double secs = seconds_since(t0);

    std::ostringstream os;
    os << sp.train.size() << " train / " << sp.test.size() << " test, js+lcst+ofe in " << fmt_double(secs)
       << " s on " << threads << " threads";
    if (secs >= 600.0) return Outcome::bad(os.str() + " (budget 600 s)");

    // slower configurations must agree bit for bit: single-threaded pruned,
    // and the full linear scan
    for (auto m : {OverlapMetric::js, OverlapMetric::lcst, OverlapMetric::ofe}) {
        const auto& fast = pruned.at(std::string(metric_name(m)));
        const auto one_thread = compute_overlaps(sp.test, index, m, 1, true);
        const auto full = compute_overlaps(sp.test, index, m, threads, false);
        for (std::size_t i = 0; i < fast.size(); ++i) {
            if (fast[i].score != one_thread[i].score || fast[i].argmax_train != one_thread[i].argmax_train)
                return Outcome::bad("thread count changed a result");
            if (fast[i].score != full[i].score || fast[i].argmax_train != full[i].argmax_train)
                return Outcome::bad("pruning changed a result");
        }
    }
    return Outcome::ok(os.str() + ", identical across thread counts and to the full scan");
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> criteria{
        {"metric-oracle equivalence (js/lcst/ofe)", criterion1_metric_oracles},
        {"pruned-vs-full-scan equality", criterion2_pruning},
        {"stratification partition", criterion3_stratification},
        {"MMC correctness on a hand-built corpus", criterion4_mmc},
        {"reranker numerics (gradients, separable BCE)", criterion5_reranker_numerics},
        {"identity passthrough", criterion6_identity_passthrough},
        {"synthetic 0-20 bin improvement", criterion7_synthetic_improvement},
        {"Foursquare NYC reproduction", criterion8_foursquare_nyc},
        {"taxi vs check-in high-overlap fraction", criterion9_taxi_vs_checkin},
        {"NYC-scale overlap performance", criterion10_performance},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].run();
        } catch (const std::exception& e) {
            out = Outcome::bad(std::string("exception: ") + e.what());
        }
        const char* tag = out.kind == Outcome::pass ? "PASS" : out.kind == Outcome::fail ? "FAIL" : "SKIP";
        if (out.kind == Outcome::fail) ++failures;
        std::cout << "[" << tag << "] criterion " << (i + 1) << ": " << criteria[i].name;
        if (!out.detail.empty()) std::cout << " - " << out.detail;
        std::cout << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
