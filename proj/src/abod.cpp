#include "falldet/abod.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace falldet {

namespace {

// Welford accumulator; population variance (divide by the pair count).
struct VarianceAcc {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double population_variance() const {
        return n == 0 ? 0.0 : m2 / static_cast<double>(n);
    }
};

double dot(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void check_dims(const FeatureVector& query, std::span<const FeatureVector> refs) {
    for (const auto& r : refs)
        if (r.size() != query.size()) throw Error("dimension mismatch in reference set");
}

std::size_t pair_count(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Difference vectors from the query to the selected references, then the
// variance of the weighted angle terms over all pairs. `selected` must be
// ascending so results do not depend on how neighbours were picked.
AbodScore score_selected(const FeatureVector& query,
                         std::span<const FeatureVector> refs,
                         const std::vector<std::size_t>& selected,
                         std::size_t total_refs, std::size_t usable_refs) {
    const std::size_t m = selected.size();
    std::vector<FeatureVector> diff(m);
    std::vector<double> norm2(m);
    for (std::size_t i = 0; i < m; ++i) {
        const FeatureVector& r = refs[selected[i]];
        FeatureVector d(query.size());
        for (std::size_t c = 0; c < query.size(); ++c) d[c] = r[c] - query[c];
        norm2[i] = dot(d, d);
        diff[i] = std::move(d);
    }

    VarianceAcc acc;
    for (std::size_t i = 0; i + 1 < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            acc.add(dot(diff[i], diff[j]) / (norm2[i] * norm2[j]));

    AbodScore s;
    s.value = acc.population_variance();
    s.pairs_used = acc.n;
    s.pairs_skipped = pair_count(total_refs) - pair_count(usable_refs);
    return s;
}

std::vector<std::size_t> usable_indices(const FeatureVector& query,
                                        std::span<const FeatureVector> refs,
                                        double dup_epsilon) {
    const double eps2 = dup_epsilon * dup_epsilon;
    std::vector<std::size_t> usable;
    usable.reserve(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (sq_dist(query, refs[i]) > eps2) usable.push_back(i);
    return usable;
}

}  // namespace

AbodScore abof(const FeatureVector& query, std::span<const FeatureVector> refs,
               double dup_epsilon) {
    check_dims(query, refs);
    auto usable = usable_indices(query, refs, dup_epsilon);
    if (usable.size() < 2) throw Error("degenerate reference set");
    return score_selected(query, refs, usable, refs.size(), usable.size());
}

AbodScore fast_abof(const FeatureVector& query, std::span<const FeatureVector> refs,
                    std::size_t k, double dup_epsilon) {
    if (k < 2 || k > refs.size()) throw Error("invalid neighbour count");
    check_dims(query, refs);
    auto usable = usable_indices(query, refs, dup_epsilon);
    if (usable.size() < 2) throw Error("degenerate reference set");

    std::vector<std::size_t> selected;
    if (k >= usable.size()) {
        selected = usable;
    } else {
        std::vector<std::pair<double, std::size_t>> by_dist;
        by_dist.reserve(usable.size());
        for (std::size_t i : usable) by_dist.emplace_back(sq_dist(query, refs[i]), i);
        std::sort(by_dist.begin(), by_dist.end());
        selected.reserve(k);
        for (std::size_t i = 0; i < k; ++i) selected.push_back(by_dist[i].second);
        std::sort(selected.begin(), selected.end());
    }
    return score_selected(query, refs, selected, refs.size(), usable.size());
}

std::vector<double> loo_scores(std::span<const FeatureVector> refs,
                               std::optional<std::size_t> knn_k, double dup_epsilon) {
    const std::size_t n = refs.size();
    if (n < 2) throw Error("degenerate reference set");
    for (const auto& r : refs)
        if (r.size() != refs[0].size()) throw Error("dimension mismatch in reference set");

    // Shared Gram matrix; every LOO quantity below is a lookup combination,
    // which keeps full-set calibration quadratic instead of cubic in n
    // per dimension.
    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double g = dot(refs[i], refs[j]);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    auto G = [&](std::size_t i, std::size_t j) { return gram[i * n + j]; };

    const double eps2 = dup_epsilon * dup_epsilon;
    std::vector<double> scores(n);
    std::vector<std::size_t> usable;
    std::vector<double> d2;
    std::vector<std::pair<double, std::size_t>> by_dist;
    std::vector<std::size_t> selected;

    for (std::size_t q = 0; q < n; ++q) {
        usable.clear();
        d2.clear();
        const double gqq = G(q, q);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == q) continue;
            const double dist2 = G(i, i) - 2.0 * G(i, q) + gqq;
            if (dist2 > eps2) {
                usable.push_back(i);
                d2.push_back(dist2);
            }
        }
        if (usable.size() < 2) throw Error("degenerate reference set");

        selected.clear();
        std::vector<double> sel_d2;
        if (!knn_k || *knn_k >= usable.size()) {
            selected = usable;
            sel_d2 = d2;
        } else {
            by_dist.clear();
            for (std::size_t i = 0; i < usable.size(); ++i)
                by_dist.emplace_back(d2[i], usable[i]);
            std::sort(by_dist.begin(), by_dist.end());
            by_dist.resize(std::max<std::size_t>(*knn_k, 2));
            std::sort(by_dist.begin(), by_dist.end(),
                      [](const auto& a, const auto& b) { return a.second < b.second; });
            for (const auto& [dist2, i] : by_dist) {
                selected.push_back(i);
                sel_d2.push_back(dist2);
            }
        }

        VarianceAcc acc;
        for (std::size_t a = 0; a + 1 < selected.size(); ++a) {
            const std::size_t i = selected[a];
            const double giq = G(i, q);
            for (std::size_t b = a + 1; b < selected.size(); ++b) {
                const std::size_t j = selected[b];
                const double num = G(i, j) - giq - G(j, q) + gqq;
                acc.add(num / (sel_d2[a] * sel_d2[b]));
            }
        }
        scores[q] = acc.population_variance();
    }
    return scores;
}

double calibrate(std::span<const FeatureVector> refs, double quantile, double safety,
                 std::optional<std::size_t> knn_k, double dup_epsilon) {
    if (refs.size() < 4) throw Error("too few references to calibrate");
    if (!(quantile >= 0.0 && quantile <= 1.0)) throw Error("quantile out of range");
    if (!(safety > 0.0)) throw Error("safety factor must be positive");

    std::vector<double> scores = loo_scores(refs, knn_k, dup_epsilon);
    std::sort(scores.begin(), scores.end());

    // Linear interpolation between order statistics.
    const double pos = quantile * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    double q = scores[lo];
    if (frac > 0.0 && lo + 1 < scores.size()) q += frac * (scores[lo + 1] - scores[lo]);
    return safety * q;
}

AbodClassification classify(const FeatureVector& query, const AbodModel& model) {
    if (!model.calibrated()) throw Error("model not calibrated");
    AbodClassification out;
    if (model.params.knn_k) {
        const std::size_t k =
            std::min<std::size_t>(std::max<std::size_t>(*model.params.knn_k, 2),
                                  model.refs.size());
        out.score = fast_abof(query, model.refs, k, model.params.dup_epsilon);
    } else {
        out.score = abof(query, model.refs, model.params.dup_epsilon);
    }
    out.label = out.score.value < *model.threshold ? Label::Fall : Label::Adl;
    return out;
}

AbodModel retrain(AbodModel model, FeatureVector v, RefOrigin origin) {
    if (!model.refs.empty() && v.size() != model.refs[0].size())
        throw Error("invalid feature vector");
    for (double x : v)
        if (!std::isfinite(x)) throw Error("invalid feature vector");

    model.refs.push_back(std::move(v));
    model.origins.push_back(origin);

    if (model.refs.size() > model.params.cap) {
        // Prefer keeping the user's own data: drop the oldest external
        // reference, falling back to the oldest user reference.
        std::size_t victim = 0;
        bool found = false;
        for (std::size_t i = 0; i < model.origins.size(); ++i) {
            if (model.origins[i] == RefOrigin::External) {
                victim = i;
                found = true;
                break;
            }
        }
        if (!found) victim = 0;
        model.refs.erase(model.refs.begin() + static_cast<std::ptrdiff_t>(victim));
        model.origins.erase(model.origins.begin() + static_cast<std::ptrdiff_t>(victim));
    }

    ++model.pending;
    if (model.pending >= model.params.recal_interval && model.refs.size() >= 4)
        recalibrate(model);
    return model;
}

void recalibrate(AbodModel& model) {
    model.threshold = calibrate(model.refs, model.params.quantile, model.params.safety,
                                model.params.knn_k, model.params.dup_epsilon);
    model.pending = 0;
}

AbodModel make_abod_model(std::vector<FeatureVector> refs, RefOrigin origin,
                          const AbodParams& params, bool calibrate_now) {
    AbodModel m;
    m.refs = std::move(refs);
    m.origins.assign(m.refs.size(), origin);
    m.params = params;
    if (calibrate_now) recalibrate(m);
    return m;
}

}  // namespace falldet
