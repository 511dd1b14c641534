/*
 * rerank.hpp -- learning-to-rank on top of any predictor's candidate list:
 * (trajectory, candidate) feature vectors labeled by the true next location,
 * a small feed-forward scorer trained with binary cross-entropy, and
 * stratified improvement reports.
 */
#pragma once

#include <algorithm>
#include <array>
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
#include "mobaudit/mobility.hpp"
#include "mobaudit/predictors.hpp"

namespace mobaudit {

inline constexpr std::size_t kRerankFeatures = 8; // [nl, dist_u, top1..top5, re_u]

struct RerankSample {
    TrajectoryId traj = 0;
    LocationId cand = 0;
    std::array<double, kRerankFeatures> features{};
    int label = 0;
};

struct TrainConfig {
    std::size_t negatives = 20; // wrong locations sampled per positive
    double learning_rate = 0.05;
    std::size_t epochs = 40;
    std::size_t batch = 32;
    std::size_t hidden = 32;
    double momentum = 0.9;
    std::uint64_t seed = 7;
    bool parallel_batches = false; // forfeits bit-reproducibility

    void validate() const {
        if (negatives < 1) throw input_error("negatives-per-positive must be >= 1");
        if (!(learning_rate > 0)) throw input_error("learning rate must be positive");
        if (epochs < 1 || batch < 1 || hidden < 1) throw input_error("epochs/batch/hidden must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"negatives", negatives}, {"learning_rate", learning_rate}, {"epochs", epochs},
                {"batch", batch},         {"hidden", hidden},               {"momentum", momentum},
                {"seed", seed},           {"parallel_batches", parallel_batches}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.negatives = j.value("negatives", c.negatives);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.epochs = j.value("epochs", c.epochs);
        c.batch = j.value("batch", c.batch);
        c.hidden = j.value("hidden", c.hidden);
        c.momentum = j.value("momentum", c.momentum);
        c.seed = j.value("seed", c.seed);
        c.parallel_batches = j.value("parallel_batches", c.parallel_batches);
        return c;
    }
};

/// One hidden rectifier layer, logistic output. In identity mode the
/// scorer passes the predictor score through untouched (test fixture for
/// the no-op rerank contract).
struct ScorerModel {
    bool identity = false;
    std::size_t input_dim = kRerankFeatures;
    std::size_t hidden_dim = 32;
    std::vector<double> w1; // hidden x input, row-major
    std::vector<double> b1; // hidden
    std::vector<double> w2; // hidden
    double b2 = 0;
    std::array<double, kRerankFeatures> feat_mean{};
    std::array<double, kRerankFeatures> feat_std{};
    TrainConfig config;

    static ScorerModel identity_mode() {
        ScorerModel m;
        m.identity = true;
        return m;
    }

    std::size_t parameter_count() const { return hidden_dim * input_dim + hidden_dim + hidden_dim + 1; }

    double probability(const std::array<double, kRerankFeatures>& raw) const {
        if (identity) return raw[0];
        double z2 = b2;
        for (std::size_t j = 0; j < hidden_dim; ++j) {
            double z1 = b1[j];
            for (std::size_t i = 0; i < input_dim; ++i)
                z1 += w1[j * input_dim + i] * (raw[i] - feat_mean[i]) / feat_std[i];
            if (z1 > 0) z2 += w2[j] * z1;
        }
        return 1.0 / (1.0 + std::exp(-z2));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["identity"] = identity;
        j["layers"] = {input_dim, hidden_dim, 1};
        j["w1"] = w1;
        j["b1"] = b1;
        j["w2"] = w2;
        j["b2"] = b2;
        j["feat_mean"] = feat_mean;
        j["feat_std"] = feat_std;
        j["seed"] = config.seed;
        j["config"] = config.to_json();
        return j;
    }

    static ScorerModel from_json(const nlohmann::json& j) {
        ScorerModel m;
        m.identity = j.value("identity", false);
        if (m.identity) return m;
        const auto layers = j.at("layers");
        m.input_dim = layers.at(0).get<std::size_t>();
        m.hidden_dim = layers.at(1).get<std::size_t>();
        m.w1 = j.at("w1").get<std::vector<double>>();
        m.b1 = j.at("b1").get<std::vector<double>>();
        m.w2 = j.at("w2").get<std::vector<double>>();
        m.b2 = j.at("b2").get<double>();
        m.feat_mean = j.at("feat_mean").get<std::array<double, kRerankFeatures>>();
        m.feat_std = j.at("feat_std").get<std::array<double, kRerankFeatures>>();
        if (j.contains("config")) m.config = TrainConfig::from_json(j.at("config"));
        if (m.input_dim != kRerankFeatures || m.w1.size() != m.hidden_dim * m.input_dim ||
            m.b1.size() != m.hidden_dim || m.w2.size() != m.hidden_dim)
            throw validation_error("scorer model: inconsistent layer sizes");
        return m;
    }
};

inline void save_scorer(const std::filesystem::path& path, const ScorerModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    out << model.to_json().dump(2) << "\n";
}

inline ScorerModel load_scorer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open scorer file: " + path.string());
    nlohmann::json j;
    in >> j;
    return ScorerModel::from_json(j);
}

/// Precomputed law shortlists per anchor, read-only after build.
class LawTopCache {
public:
    static LawTopCache build(const VisitationLawModel& law, const LocationVocabulary& vocab,
                             std::span<const LocationId> anchors, std::size_t n = 5, unsigned threads = 1) {
        if (vocab.empty()) throw input_error("LawTopCache: empty vocabulary");
        std::vector<LocationId> unique(anchors.begin(), anchors.end());
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        LawTopCache cache;
        std::vector<TopLawLocations> tops(unique.size());
        detail::parallel_for(unique.size(), threads,
                             [&](std::size_t i) { tops[i] = top_n_law_locations(law, vocab, unique[i], n); });
        for (std::size_t i = 0; i < unique.size(); ++i) cache.map_.emplace(unique[i], std::move(tops[i]));
        return cache;
    }

    const TopLawLocations& at(LocationId anchor) const {
        auto it = map_.find(anchor);
        if (it == map_.end()) throw pipeline_error("law cache: anchor not precomputed");
        return it->second;
    }

private:
    std::unordered_map<LocationId, TopLawLocations> map_;
};

/// The feature vector seen by the scorer. Candidates are featurized
/// identically whether they end up labeled positive or negative: only the
/// predictor score, the law shortlist hits and per-user features enter.
inline std::array<double, kRerankFeatures> featurize(double nl_score, const UserLawFeatures& user,
                                                     const TopLawLocations& law_top, LocationId candidate) {
    std::array<double, kRerankFeatures> f{};
    f[0] = nl_score;
    f[1] = user.dist_u;
    for (std::size_t n = 0; n < 5; ++n)
        f[2 + n] = (n < law_top.locations.size() && law_top.locations[n] == candidate) ? 1.0 : 0.0;
    f[7] = static_cast<double>(user.re_u);
    return f;
}

namespace detail {

inline std::mt19937_64 per_trajectory_rng(std::uint64_t seed, TrajectoryId id) {
    return std::mt19937_64(seed ^ (0x9E3779B97F4A7C15ull * (id + 1)));
}

} // namespace detail

/// Per trajectory: one positive sample (the true next location) and up to
/// k negatives sampled uniformly without replacement from the vocabulary
/// minus the truth. The predictor score of an unranked candidate is 0.
inline std::vector<RerankSample> build_samples(const ScoreTable& scores, const PredictionTargets& targets,
                                               const std::map<UserId, UserLawFeatures>& user_features,
                                               const LawTopCache& law_cache, std::size_t vocab_size,
                                               std::size_t k, std::uint64_t seed) {
    if (vocab_size < 2) throw input_error("build_samples: vocabulary too small");
    std::vector<RerankSample> out;
    std::vector<const PredictionInstance*> order;
    for (const auto& inst : targets.instances) order.push_back(&inst);
    std::sort(order.begin(), order.end(),
              [](const PredictionInstance* a, const PredictionInstance* b) { return a->prefix.id < b->prefix.id; });

    for (const auto* inst : order) {
        const TrajectoryId id = inst->prefix.id;
        auto row_it = scores.rows.find(id);
        if (row_it == scores.rows.end())
            throw validation_error("build_samples: score table does not cover trajectory " + std::to_string(id));
        std::unordered_map<LocationId, double> nl;
        for (const auto& [loc, s] : row_it->second) nl.emplace(loc, s);
        auto feat_it = user_features.find(inst->prefix.user);
        if (feat_it == user_features.end())
            throw validation_error("build_samples: no user features for user " +
                                   std::to_string(inst->prefix.user));
        const auto& law_top = law_cache.at(inst->anchor);

        auto nl_score = [&](LocationId c) {
            auto it = nl.find(c);
            return it == nl.end() ? 0.0 : it->second;
        };
        auto emit = [&](LocationId c, int label) {
            RerankSample s;
            s.traj = id;
            s.cand = c;
            s.label = label;
            s.features = featurize(nl_score(c), feat_it->second, law_top, c);
            out.push_back(std::move(s));
        };

        emit(inst->truth, 1);

        // pool = vocabulary minus the truth; exhaust it when k is larger
        std::vector<LocationId> pool;
        pool.reserve(vocab_size - 1);
        for (std::size_t c = 0; c < vocab_size; ++c)
            if (static_cast<LocationId>(c) != inst->truth) pool.push_back(static_cast<LocationId>(c));
        if (pool.size() <= k) {
            for (LocationId c : pool) emit(c, 0);
        } else {
            auto rng = detail::per_trajectory_rng(seed, id);
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t j = i + detail::rand_index(rng, pool.size() - i);
                std::swap(pool[i], pool[j]);
                emit(pool[i], 0);
            }
        }
    }
    return out;
}

inline void write_samples_jsonl(const std::filesystem::path& path, std::span<const RerankSample> samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    for (const auto& s : samples) {
        out << "{\"traj\": " << s.traj << ", \"cand\": " << s.cand << ", \"features\": [";
        for (std::size_t i = 0; i < s.features.size(); ++i) {
            if (i) out << ", ";
            out << fmt_double(s.features[i]);
        }
        out << "], \"label\": " << s.label << "}\n";
    }
}

namespace detail {

struct ParamView {
    // flattened order: w1, b1, w2, b2
    static std::vector<double> flatten(const ScorerModel& m) {
        std::vector<double> p;
        p.reserve(m.parameter_count());
        p.insert(p.end(), m.w1.begin(), m.w1.end());
        p.insert(p.end(), m.b1.begin(), m.b1.end());
        p.insert(p.end(), m.w2.begin(), m.w2.end());
        p.push_back(m.b2);
        return p;
    }

    static void unflatten(ScorerModel& m, std::span<const double> p) {
        const std::size_t nw1 = m.hidden_dim * m.input_dim;
        m.w1.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(nw1));
        m.b1.assign(p.begin() + static_cast<std::ptrdiff_t>(nw1),
                    p.begin() + static_cast<std::ptrdiff_t>(nw1 + m.hidden_dim));
        m.w2.assign(p.begin() + static_cast<std::ptrdiff_t>(nw1 + m.hidden_dim),
                    p.begin() + static_cast<std::ptrdiff_t>(nw1 + 2 * m.hidden_dim));
        m.b2 = p[nw1 + 2 * m.hidden_dim];
    }
};

inline double bce(double p, int y) {
    if (std::isnan(p)) return p; // let divergence surface as a non-finite loss
    const double eps = 1e-12;
    const double q = std::min(1.0 - eps, std::max(eps, p));
    return y ? -std::log(q) : -std::log(1.0 - q);
}

} // namespace detail

/// Mean binary cross-entropy over the batch and its gradient with respect
/// to the flattened parameters (w1, b1, w2, b2). Shared by training and
/// the finite-difference checks.
inline double bce_loss_and_grad(const ScorerModel& model, std::span<const RerankSample> batch,
                                std::vector<double>* grad = nullptr);

/// Parallel-batch variant: chunked partial sums merged in chunk order.
/// Results depend on the chunking, so this mode is not bit-reproducible
/// against the sequential path.
inline double bce_loss_and_grad_parallel(const ScorerModel& model, std::span<const RerankSample> batch,
                                         std::vector<double>& grad, unsigned threads) {
    const std::size_t chunk = std::max<std::size_t>(8, batch.size() / (threads * 2));
    const std::size_t n_chunks = (batch.size() + chunk - 1) / chunk;
    std::vector<std::vector<double>> grads(n_chunks);
    std::vector<double> losses(n_chunks, 0.0);
    detail::parallel_for(n_chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(batch.size(), begin + chunk);
        losses[c] = bce_loss_and_grad(model, batch.subspan(begin, end - begin), &grads[c]) *
                    static_cast<double>(end - begin);
    });
    grad.assign(model.parameter_count(), 0.0);
    double loss = 0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(batch.size(), begin + chunk);
        const double w = static_cast<double>(end - begin);
        loss += losses[c];
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grads[c][i] * w;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : grad) v *= inv;
    return loss * inv;
}

inline double bce_loss_and_grad(const ScorerModel& model, std::span<const RerankSample> batch,
                                std::vector<double>* grad) {
    if (batch.empty()) throw input_error("bce_loss_and_grad: empty batch");
    const std::size_t in = model.input_dim, hid = model.hidden_dim;
    const std::size_t nw1 = hid * in;
    if (grad) grad->assign(model.parameter_count(), 0.0);

    double loss = 0;
    std::vector<double> x(in), z1(hid), a1(hid);
    for (const auto& s : batch) {
        for (std::size_t i = 0; i < in; ++i) x[i] = (s.features[i] - model.feat_mean[i]) / model.feat_std[i];
        double z2 = model.b2;
        for (std::size_t j = 0; j < hid; ++j) {
            double z = model.b1[j];
            for (std::size_t i = 0; i < in; ++i) z += model.w1[j * in + i] * x[i];
            z1[j] = z;
            a1[j] = z > 0 ? z : 0;
            z2 += model.w2[j] * a1[j];
        }
        const double p = 1.0 / (1.0 + std::exp(-z2));
        loss += detail::bce(p, s.label);
        if (grad) {
            const double dz2 = p - static_cast<double>(s.label);
            auto& g = *grad;
            g[nw1 + 2 * hid] += dz2; // b2
            for (std::size_t j = 0; j < hid; ++j) {
                g[nw1 + hid + j] += dz2 * a1[j]; // w2
                if (z1[j] > 0) {
                    const double dz1 = dz2 * model.w2[j];
                    g[nw1 + j] += dz1; // b1
                    for (std::size_t i = 0; i < in; ++i) g[j * in + i] += dz1 * x[i];
                }
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    loss *= inv;
    if (grad)
        for (auto& v : *grad) v *= inv;
    return loss;
}

struct TrainResult {
    ScorerModel model;
    std::vector<double> holdout_curve; // mean BCE on the held-out shuffle split, per epoch
    double final_loss = 0;             // mean BCE over all samples
    int restarts = 0;                  // divergence restarts (learning rate halvings)
};

/// Mini-batch gradient descent with momentum on mean BCE. Deterministic
/// given the seed; a diverging run (non-finite loss) restarts from the
/// same initialization with the learning rate halved, at most 3 times.
inline TrainResult train_scorer(std::span<const RerankSample> samples, const TrainConfig& config) {
    config.validate();
    bool has_pos = false, has_neg = false;
    for (const auto& s : samples) (s.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw input_error("train_scorer: need both positive and negative samples");

    ScorerModel base;
    base.hidden_dim = config.hidden;
    base.config = config;
    for (std::size_t i = 0; i < kRerankFeatures; ++i) {
        double mean = 0;
        for (const auto& s : samples) mean += s.features[i];
        mean /= static_cast<double>(samples.size());
        double var = 0;
        for (const auto& s : samples) var += (s.features[i] - mean) * (s.features[i] - mean);
        var /= static_cast<double>(samples.size());
        base.feat_mean[i] = mean;
        base.feat_std[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }

    // held-out shuffle split (10%, at least 1 when there is room)
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        auto rng = std::mt19937_64(config.seed ^ 0xfeedface12345678ull);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[detail::rand_index(rng, i)]);
    }
    const std::size_t n_hold = samples.size() >= 20 ? samples.size() / 10 : 0;
    std::vector<RerankSample> holdout, training;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_hold ? holdout : training).push_back(samples[order[i]]);

    double lr = config.learning_rate;
    TrainResult result;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        ScorerModel m = base;
        auto rng = std::mt19937_64(config.seed);
        const double limit1 = std::sqrt(6.0 / static_cast<double>(m.input_dim + m.hidden_dim));
        const double limit2 = std::sqrt(6.0 / static_cast<double>(m.hidden_dim + 1));
        m.w1.resize(m.hidden_dim * m.input_dim);
        m.b1.assign(m.hidden_dim, 0.0);
        m.w2.resize(m.hidden_dim);
        for (auto& w : m.w1) w = (2.0 * detail::rand_u01(rng) - 1.0) * limit1;
        for (auto& w : m.w2) w = (2.0 * detail::rand_u01(rng) - 1.0) * limit2;
        m.b2 = 0;

        std::vector<double> velocity(m.parameter_count(), 0.0);
        std::vector<double> params = detail::ParamView::flatten(m);
        std::vector<double> grad;
        std::vector<std::size_t> idx(training.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

        bool diverged = false;
        std::vector<double> curve;
        for (std::size_t epoch = 0; epoch < config.epochs && !diverged; ++epoch) {
            for (std::size_t i = idx.size(); i > 1; --i)
                std::swap(idx[i - 1], idx[detail::rand_index(rng, i)]);
            std::vector<RerankSample> batch;
            for (std::size_t start = 0; start < idx.size(); start += config.batch) {
                batch.clear();
                const std::size_t end = std::min(idx.size(), start + config.batch);
                for (std::size_t i = start; i < end; ++i) batch.push_back(training[idx[i]]);
                const double loss =
                    config.parallel_batches
                        ? bce_loss_and_grad_parallel(m, batch, grad,
                                                     std::max(1u, std::thread::hardware_concurrency()))
                        : bce_loss_and_grad(m, batch, &grad);
                if (!std::isfinite(loss)) {
                    diverged = true;
                    break;
                }
                for (std::size_t i = 0; i < params.size(); ++i) {
                    velocity[i] = config.momentum * velocity[i] - lr * grad[i];
                    params[i] += velocity[i];
                }
                detail::ParamView::unflatten(m, params);
            }
            if (!diverged && !holdout.empty()) curve.push_back(bce_loss_and_grad(m, holdout));
        }
        if (!diverged) {
            for (double v : params)
                if (!std::isfinite(v)) diverged = true;
        }
        if (diverged) {
            lr /= 2.0;
            result.restarts = attempt + 1;
            continue;
        }
        result.model = std::move(m);
        result.holdout_curve = std::move(curve);
        result.final_loss = bce_loss_and_grad(result.model, samples);
        return result;
    }
    throw pipeline_error("train_scorer: training diverged even after 3 learning-rate halvings");
}

/// Rescores every candidate of every row and re-sorts (descending score,
/// ties to the lower location id). The candidate multiset per row and the
/// table depth are unchanged. The identity-mode scorer returns the input
/// table as-is, preserving its order even across equal scores.
inline ScoreTable rerank_table(const ScorerModel& model, const ScoreTable& table,
                               const std::map<TrajectoryId, PredictionInstance>& instances,
                               const std::map<UserId, UserLawFeatures>& user_features,
                               const LawTopCache& law_cache, unsigned threads = 1) {
    ScoreTable out;
    out.model = table.model + "+rr";
    out.depth = table.depth;
    if (model.identity) {
        out.rows = table.rows;
        return out;
    }

    struct Row {
        TrajectoryId id;
        const RankedCandidates* cand;
        const UserLawFeatures* user;
        const TopLawLocations* law_top;
    };
    std::vector<Row> rows;
    rows.reserve(table.rows.size());
    for (const auto& [id, cand] : table.rows) {
        auto inst_it = instances.find(id);
        if (inst_it == instances.end())
            throw validation_error("rerank: no prediction instance for trajectory " + std::to_string(id));
        auto feat_it = user_features.find(inst_it->second.prefix.user);
        if (feat_it == user_features.end())
            throw validation_error("rerank: no user features for user " +
                                   std::to_string(inst_it->second.prefix.user));
        rows.push_back(Row{id, &cand, &feat_it->second, &law_cache.at(inst_it->second.anchor)});
    }
    std::vector<RankedCandidates> rescored(rows.size());

    detail::parallel_for(rows.size(), threads, [&](std::size_t r) {
        const Row& row = rows[r];
        RankedCandidates next;
        next.reserve(row.cand->size());
        for (const auto& [loc, s] : *row.cand)
            next.emplace_back(loc, model.probability(featurize(s, *row.user, *row.law_top, loc)));
        std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        rescored[r] = std::move(next);
    });

    for (std::size_t r = 0; r < rows.size(); ++r) out.rows.emplace(rows[r].id, std::move(rescored[r]));
    return out;
}

struct ImprovementCell {
    double base = 0;
    double reranked = 0;
    std::optional<double> relative; // empty when base == 0 (undefined, not infinity)
    std::uint64_t count = 0;
};

struct ImprovementReport {
    std::string base_model;
    std::string reranked_model;
    std::size_t k = 5;
    ImprovementCell overall;
    std::map<std::string, std::array<ImprovementCell, 5>> strata;
};

/// ACC@k before/after reranking, overall and per (metric, bin), with the
/// relative improvement (reranked - base) / base.
inline ImprovementReport evaluate_improvement(const ScoreTable& base, const ScoreTable& reranked,
                                              const std::map<TrajectoryId, LocationId>& truth, std::size_t k,
                                              const Strata* strata = nullptr) {
    if (base.rows.size() != reranked.rows.size())
        throw validation_error("evaluate_improvement: tables cover different trajectory sets");
    for (const auto& [id, _] : base.rows)
        if (!reranked.rows.count(id))
            throw validation_error("evaluate_improvement: reranked table is missing trajectory " +
                                   std::to_string(id));

    const EvalReport b = acc_at_k(base, truth, k, strata);
    const EvalReport r = acc_at_k(reranked, truth, k, strata);

    auto cell = [](double vb, double vr, std::uint64_t n) {
        ImprovementCell c;
        c.base = vb;
        c.reranked = vr;
        c.count = n;
        if (vb > 0) c.relative = (vr - vb) / vb;
        return c;
    };

    ImprovementReport rep;
    rep.base_model = base.model;
    rep.reranked_model = reranked.model;
    rep.k = k;
    rep.overall = cell(b.overall, r.overall, b.evaluated);
    for (const auto& [metric, bins] : b.strata) {
        const auto& rbins = r.strata.at(metric);
        auto& arr = rep.strata[metric];
        for (std::size_t i = 0; i < 5; ++i) arr[i] = cell(bins[i].acc, rbins[i].acc, bins[i].count);
    }
    return rep;
}

inline nlohmann::json improvement_report_json(const ImprovementReport& rep) {
    auto cell_json = [](const ImprovementCell& c) {
        nlohmann::json j;
        j["base"] = c.base;
        j["reranked"] = c.reranked;
        j["count"] = c.count;
        if (c.relative) j["relative_improvement_pct"] = *c.relative * 100.0;
        else j["relative_improvement_pct"] = nullptr; // undefined: base accuracy was 0
        return j;
    };
    nlohmann::json j;
    j["base_model"] = rep.base_model;
    j["reranked_model"] = rep.reranked_model;
    j["k"] = rep.k;
    j["overall"] = cell_json(rep.overall);
    for (const auto& [metric, bins] : rep.strata) {
        nlohmann::json m;
        for (std::size_t b = 0; b < 5; ++b) m[std::string(kBinLabels[b])] = cell_json(bins[b]);
        j["strata"][metric] = std::move(m);
    }
    return j;
}

} // namespace mobaudit
