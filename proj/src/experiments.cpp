#include "falldet/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "falldet/rng.hpp"
#include "falldet/signal.hpp"

namespace falldet {

using ordered_json = nlohmann::ordered_json;

MetricTriple metrics(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) throw Error("no fall examples");
    if (c.tn + c.fp == 0) throw Error("no ADL examples");
    MetricTriple m;
    m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    m.geometric_mean = std::sqrt(m.specificity * m.sensitivity);
    return m;
}

MetricTriple aggregate(std::span<const MetricTriple> rows) {
    if (rows.empty()) throw Error("no rows to aggregate");
    MetricTriple sum;
    for (const auto& r : rows) {
        sum.specificity += r.specificity;
        sum.sensitivity += r.sensitivity;
        sum.geometric_mean += r.geometric_mean;
    }
    const double n = static_cast<double>(rows.size());
    return {sum.specificity / n, sum.sensitivity / n, sum.geometric_mean / n};
}

std::vector<FeatureVector> vectorize_dataset(const Dataset& data) {
    std::vector<FeatureVector> feats;
    feats.reserve(data.records.size());
    for (const auto& rec : data.records) feats.push_back(vectorize(rec.trace));
    return feats;
}

double scale_gamma(std::span<const FeatureVector> xs) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (const auto& x : xs) {
        for (double v : x) {
            sum += v;
            sum2 += v * v;
            ++n;
        }
    }
    if (n == 0) throw Error("empty training set");
    const double mean = sum / static_cast<double>(n);
    const double var = sum2 / static_cast<double>(n) - mean * mean;
    const double dim = static_cast<double>(xs[0].size());
    if (!(var > 0.0)) return 1.0 / dim;
    return 1.0 / (dim * var);
}

namespace {

std::string format_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

MetricTriple mean_of(const std::vector<MetricTriple>& v) {
    return aggregate(std::span<const MetricTriple>(v.data(), v.size()));
}

MetricTriple stddev_of(const std::vector<MetricTriple>& v, const MetricTriple& mean) {
    MetricTriple s;
    if (v.size() < 2) return s;
    for (const auto& r : v) {
        s.specificity += (r.specificity - mean.specificity) * (r.specificity - mean.specificity);
        s.sensitivity += (r.sensitivity - mean.sensitivity) * (r.sensitivity - mean.sensitivity);
        s.geometric_mean +=
            (r.geometric_mean - mean.geometric_mean) * (r.geometric_mean - mean.geometric_mean);
    }
    const double n = static_cast<double>(v.size());
    return {std::sqrt(s.specificity / n), std::sqrt(s.sensitivity / n),
            std::sqrt(s.geometric_mean / n)};
}

ordered_json triple_json(const MetricTriple& t) {
    ordered_json j;
    j["sp"] = t.specificity;
    j["se"] = t.sensitivity;
    j["gm"] = t.geometric_mean;
    return j;
}

}  // namespace

std::string EvalReport::to_table() const {
    std::ostringstream out;
    out << "Person          SP(%)    SE(%)    GM(%)\n";
    for (const auto& r : rows) {
        out << r.subject;
        for (std::size_t i = r.subject.size(); i < 16; ++i) out << ' ';
        out << format_pct(r.mean.specificity) << "    " << format_pct(r.mean.sensitivity)
            << "    " << format_pct(r.mean.geometric_mean) << "\n";
    }
    out << "Mean            " << format_pct(aggregate_row.specificity) << "    "
        << format_pct(aggregate_row.sensitivity) << "    "
        << format_pct(aggregate_row.geometric_mean) << "\n";
    return out.str();
}

ordered_json EvalReport::to_json() const {
    ordered_json j;
    j["kind"] = kind;
    j["config"] = config_echo;
    j["seed"] = seed;
    ordered_json subs = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json e;
        e["subject"] = r.subject;
        e["sp"] = r.mean.specificity;
        e["se"] = r.mean.sensitivity;
        e["gm"] = r.mean.geometric_mean;
        e["sp_std"] = r.stddev.specificity;
        e["se_std"] = r.stddev.sensitivity;
        e["gm_std"] = r.stddev.geometric_mean;
        subs.push_back(std::move(e));
    }
    j["subjects"] = std::move(subs);
    j["aggregate"] = triple_json(aggregate_row);
    if (!warnings.empty()) j["warnings"] = warnings;
    if (!audit.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : audit) {
            ordered_json e;
            e["subject"] = s.subject;
            e["train_ids"] = s.train_ids;
            e["test_ids"] = s.test_ids;
            a.push_back(std::move(e));
        }
        j["audit"] = std::move(a);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Model 1: leave-one-subject-out SVM baseline
// ---------------------------------------------------------------------------

GridChoice grid_search_svm(std::span<const FeatureVector> xs, std::span<const Label> ys,
                           const TrainConfig& base, std::uint64_t seed) {
    const double dim = static_cast<double>(xs[0].size());
    const std::vector<double> cs = {0.1, 1.0, 10.0};
    const std::vector<double> gammas = {1.0 / dim, scale_gamma(xs)};

    // Stratified folds, shuffled once.
    std::vector<std::size_t> adl_idx, fall_idx;
    for (std::size_t i = 0; i < ys.size(); ++i)
        (ys[i] == Label::Adl ? adl_idx : fall_idx).push_back(i);
    Rng rng(derive_seed({seed, 0x6712u}));
    rng.shuffle(adl_idx);
    rng.shuffle(fall_idx);
    const std::size_t folds =
        std::min<std::size_t>(3, std::min(adl_idx.size(), fall_idx.size()));

    GridChoice best;
    bool first = true;
    for (double c : cs) {
        for (double gamma : gammas) {
            double gm;
            TrainConfig cfg = base;
            cfg.c = c;
            cfg.gamma = gamma;
            if (folds < 2) {
                // Too few examples of a class to hold any out; score in-sample.
                SvmModel m = train_smo(xs, ys, cfg);
                ConfusionCounts counts;
                for (std::size_t i = 0; i < xs.size(); ++i) {
                    const Label p = predict(m, xs[i]);
                    if (ys[i] == Label::Fall) ++(p == Label::Fall ? counts.tp : counts.fn);
                    else ++(p == Label::Adl ? counts.tn : counts.fp);
                }
                gm = metrics(counts).geometric_mean;
            } else {
                std::vector<MetricTriple> fold_scores;
                for (std::size_t f = 0; f < folds; ++f) {
                    std::vector<FeatureVector> train_x;
                    std::vector<Label> train_y;
                    std::vector<std::size_t> test;
                    auto split = [&](const std::vector<std::size_t>& idx) {
                        for (std::size_t k = 0; k < idx.size(); ++k) {
                            if (k % folds == f) test.push_back(idx[k]);
                            else {
                                train_x.push_back(xs[idx[k]]);
                                train_y.push_back(ys[idx[k]]);
                            }
                        }
                    };
                    split(adl_idx);
                    split(fall_idx);
                    SvmModel m = train_smo(train_x, train_y, cfg);
                    ConfusionCounts counts;
                    for (std::size_t i : test) {
                        const Label p = predict(m, xs[i]);
                        if (ys[i] == Label::Fall) ++(p == Label::Fall ? counts.tp : counts.fn);
                        else ++(p == Label::Adl ? counts.tn : counts.fp);
                    }
                    fold_scores.push_back(metrics(counts));
                }
                gm = mean_of(fold_scores).geometric_mean;
            }
            if (first || gm > best.cv_gm) {
                best = {c, gamma, gm};
                first = false;
            }
        }
    }
    return best;
}

EvalReport run_model1(const Dataset& data, const Model1Config& cfg) {
    const auto subjects = data.subjects();
    if (subjects.size() < 2) throw Error("need at least 2 subjects");

    const auto feats = vectorize_dataset(data);

    EvalReport report;
    report.kind = "model1";
    report.seed = cfg.seed;

    std::vector<MetricTriple> rows;
    for (std::size_t pi = 0; pi < subjects.size(); ++pi) {
        const std::string& p = subjects[pi];

        std::vector<FeatureVector> train_x;
        std::vector<Label> train_y;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < data.records.size(); ++i) {
            if (data.records[i].subject == p) {
                test_idx.push_back(i);
            } else {
                train_x.push_back(feats[i]);
                train_y.push_back(data.records[i].label);
            }
        }
        const bool has_adl = std::find(train_y.begin(), train_y.end(), Label::Adl) != train_y.end();
        const bool has_fall = std::find(train_y.begin(), train_y.end(), Label::Fall) != train_y.end();
        if (!has_adl || !has_fall)
            throw Error("training split for subject " + p + " lacks a class");

        TrainConfig tc = cfg.train;
        tc.seed = derive_seed({cfg.seed, 0x3001u, pi});
        if (cfg.grid_search) {
            const GridChoice g = grid_search_svm(train_x, train_y, tc, tc.seed);
            tc.c = g.c;
            tc.gamma = g.gamma;
        } else if (!tc.gamma) {
            if (cfg.gamma_mode == GammaMode::Scale) tc.gamma = scale_gamma(train_x);
            // DimInverse: leave unset; the trainer defaults to 1/dim.
        }

        const SvmModel model = train_smo(train_x, train_y, tc);

        ConfusionCounts counts;
        for (std::size_t i : test_idx) {
            const Label pred = predict(model, feats[i]);
            if (data.records[i].label == Label::Fall)
                ++(pred == Label::Fall ? counts.tp : counts.fn);
            else
                ++(pred == Label::Adl ? counts.tn : counts.fp);
        }
        const MetricTriple t = metrics(counts);
        rows.push_back(t);
        report.rows.push_back({p, t, {}});
    }

    report.aggregate_row = aggregate(rows);

    ordered_json echo;
    echo["command"] = "eval-model1";
    echo["seed"] = cfg.seed;
    echo["c"] = cfg.train.c;
    if (cfg.train.gamma) echo["gamma"] = *cfg.train.gamma;
    else echo["gamma"] = cfg.gamma_mode == GammaMode::Scale ? "scale" : "dim";
    echo["kkt_tol"] = cfg.train.kkt_tol;
    echo["max_passes"] = cfg.train.max_passes;
    echo["grid_search"] = cfg.grid_search;
    echo["subjects"] = subjects.size();
    report.config_echo = std::move(echo);
    return report;
}

// ---------------------------------------------------------------------------
// Personalized protocol
// ---------------------------------------------------------------------------

namespace {

struct CellKey {
    std::size_t subject;
    std::size_t rep;
    std::size_t fold;
};

// Contiguous near-equal chunks of a shuffled index list; the first
// (n mod folds) folds take the extra element.
std::vector<std::vector<std::size_t>> partition_folds(std::vector<std::size_t> idx,
                                                      std::size_t folds, Rng& rng) {
    rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> parts(folds);
    const std::size_t base = idx.size() / folds;
    const std::size_t extra = idx.size() % folds;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        parts[f].assign(idx.begin() + pos, idx.begin() + pos + len);
        pos += len;
    }
    return parts;
}

}  // namespace

EvalReport run_personalized(const Dataset& data, const PersonalizedConfig& cfg) {
    if (cfg.folds < 2) throw Error("folds must be at least 2");
    if (cfg.repetitions < 1) throw Error("repetitions must be at least 1");
    if (cfg.seeds_per_other_subject < 1) throw Error("seeds per subject must be at least 1");

    ValidationOptions vopts;
    vopts.personalized_folds = cfg.folds;
    const ValidationReport vr = validate(data, vopts);
    if (!vr.pass) throw Error(vr.problems.empty() ? "dataset failed validation" : vr.problems.front());

    const auto subjects = data.subjects();
    const auto feats = vectorize_dataset(data);

    EvalReport report;
    report.kind = "personalized";
    report.seed = cfg.seed;

    // Per-subject index tables, plus deterministic sampling warnings.
    std::vector<std::vector<std::size_t>> adl_of(subjects.size()), fall_of(subjects.size());
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        adl_of[si] = data.indices_of(subjects[si], Label::Adl);
        fall_of[si] = data.indices_of(subjects[si], Label::Fall);
        if (adl_of[si].size() < cfg.seeds_per_other_subject)
            report.warnings.push_back("subject " + subjects[si] + " has only " +
                                      std::to_string(adl_of[si].size()) +
                                      " ADL records; seed sampling falls back to "
                                      "with-replacement");
    }

    std::vector<CellKey> cells;
    cells.reserve(subjects.size() * cfg.repetitions * cfg.folds);
    for (std::size_t si = 0; si < subjects.size(); ++si)
        for (std::size_t rep = 0; rep < cfg.repetitions; ++rep)
            for (std::size_t f = 0; f < cfg.folds; ++f) cells.push_back({si, rep, f});

    std::vector<MetricTriple> cell_results(cells.size());
    std::vector<std::set<std::size_t>> audit_train(subjects.size()), audit_test(subjects.size());
    std::mutex audit_mutex;

    auto run_cell = [&](const CellKey& key) -> MetricTriple {
        const std::size_t si = key.subject;

        // The fold partition is shared across the folds of one repetition.
        Rng part_rng(derive_seed({cfg.seed, 0x9001u, si, key.rep}));
        const auto parts = partition_folds(adl_of[si], cfg.folds, part_rng);

        Rng cell_rng(derive_seed({cfg.seed, 0x9002u, si, key.rep, key.fold}));

        std::vector<FeatureVector> seed_refs;
        std::vector<std::size_t> seed_ids;
        for (std::size_t oi = 0; oi < subjects.size(); ++oi) {
            if (oi == si) continue;
            const auto& pool = adl_of[oi];
            if (pool.size() >= cfg.seeds_per_other_subject) {
                for (std::size_t k :
                     cell_rng.sample_indices(pool.size(), cfg.seeds_per_other_subject))
                    seed_ids.push_back(pool[k]);
            } else {
                for (std::size_t k = 0; k < cfg.seeds_per_other_subject; ++k)
                    seed_ids.push_back(pool[cell_rng.below(pool.size())]);
            }
        }
        seed_refs.reserve(seed_ids.size());
        for (std::size_t id : seed_ids) seed_refs.push_back(feats[id]);

        std::vector<std::size_t> train_ids;
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            if (f == key.fold) continue;
            train_ids.insert(train_ids.end(), parts[f].begin(), parts[f].end());
        }
        const auto& test_fold = parts[key.fold];

        AbodModel model;
        if (cfg.mode == PersonalizationMode::Batch) {
            // Train once on seed set plus training folds.
            model.refs = std::move(seed_refs);
            model.origins.assign(model.refs.size(), RefOrigin::External);
            model.params = cfg.abod;
            for (std::size_t id : train_ids) {
                model.refs.push_back(feats[id]);
                model.origins.push_back(RefOrigin::User);
            }
            recalibrate(model);
        } else {
            // Incremental feedback loop: classify, then retrain either way
            // (a predicted ADL is learned directly; a predicted fall is
            // answered with a simulated false-alarm press).
            model = make_abod_model(std::move(seed_refs), RefOrigin::External, cfg.abod);
            for (std::size_t id : train_ids) {
                (void)classify(feats[id], model);
                model = retrain(std::move(model), feats[id], RefOrigin::User);
            }
        }

        ConfusionCounts counts;
        for (std::size_t id : test_fold)
            ++(classify(feats[id], model).label == Label::Adl ? counts.tn : counts.fp);
        for (std::size_t id : fall_of[si])
            ++(classify(feats[id], model).label == Label::Fall ? counts.tp : counts.fn);

        if (cfg.record_audit) {
            std::lock_guard<std::mutex> lock(audit_mutex);
            audit_train[si].insert(seed_ids.begin(), seed_ids.end());
            audit_train[si].insert(train_ids.begin(), train_ids.end());
            audit_test[si].insert(test_fold.begin(), test_fold.end());
            audit_test[si].insert(fall_of[si].begin(), fall_of[si].end());
        }
        return metrics(counts);
    };

    const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
    if (threads == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) cell_results[i] = run_cell(cells[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (;;) {
                        const std::size_t i = next.fetch_add(1);
                        if (i >= cells.size()) break;
                        cell_results[i] = run_cell(cells[i]);
                    }
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Reduce: folds -> repetition triple -> per-subject mean and std.
    std::vector<MetricTriple> subject_means;
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        std::vector<MetricTriple> rep_triples;
        for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
            std::vector<MetricTriple> fold_triples;
            for (std::size_t f = 0; f < cfg.folds; ++f) {
                const std::size_t idx = (si * cfg.repetitions + rep) * cfg.folds + f;
                fold_triples.push_back(cell_results[idx]);
            }
            rep_triples.push_back(mean_of(fold_triples));
        }
        const MetricTriple mean = mean_of(rep_triples);
        report.rows.push_back({subjects[si], mean, stddev_of(rep_triples, mean)});
        subject_means.push_back(mean);
    }
    report.aggregate_row = aggregate(subject_means);

    if (cfg.record_audit) {
        for (std::size_t si = 0; si < subjects.size(); ++si) {
            SubjectAudit a;
            a.subject = subjects[si];
            a.train_ids.assign(audit_train[si].begin(), audit_train[si].end());
            a.test_ids.assign(audit_test[si].begin(), audit_test[si].end());
            report.audit.push_back(std::move(a));
        }
    }

    ordered_json echo;
    echo["command"] = "eval-personalized";
    echo["seed"] = cfg.seed;
    echo["repetitions"] = cfg.repetitions;
    echo["folds"] = cfg.folds;
    echo["seeds_per_other_subject"] = cfg.seeds_per_other_subject;
    echo["seed_set_size"] = (subjects.size() - 1) * cfg.seeds_per_other_subject;
    echo["mode"] = cfg.mode == PersonalizationMode::Batch ? "batch" : "replay-loop";
    echo["quantile"] = cfg.abod.quantile;
    echo["safety"] = cfg.abod.safety;
    echo["cap"] = cfg.abod.cap;
    echo["recal_interval"] = cfg.abod.recal_interval;
    if (cfg.abod.knn_k) echo["knn"] = *cfg.abod.knn_k;
    else echo["knn"] = "exact";
    echo["threads"] = threads;
    echo["subjects"] = subjects.size();
    report.config_echo = std::move(echo);
    return report;
}

}  // namespace falldet
