#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "falldet/types.hpp"

namespace falldet {

// One-class outlier scoring over a reference set of normal (ADL) vectors.
//
// The score of a query A against references {r_i} is the population variance,
// over unordered pairs {B, C} of distinct references, of
//
//     <AB, AC> / (|AB|^2 * |AC|^2)
//
// i.e. the cosine of the angle at A additionally weighted by both distances.
// Outliers sit at the fringe of the data, see every pair under a similarly
// small angle, and therefore get a small variance; inliers see pairs all
// around them and get a large one. A query is flagged once its score drops
// below a threshold calibrated from leave-one-out scores of the reference
// set itself, so no labelled outliers are ever needed.

struct AbodScore {
    double value = 0.0;          // variance of the weighted angle terms
    std::size_t pairs_used = 0;  // pairs entering the variance
    std::size_t pairs_skipped = 0;  // pairs dropped by the duplicate rule
};

enum class RefOrigin : char { External = 'E', User = 'U' };

struct AbodParams {
    double quantile = 0.01;          // calibration quantile over LOO scores
    double safety = 0.5;             // threshold = safety * quantile value
    std::size_t cap = 2000;          // reference-set size bound
    std::size_t recal_interval = 10; // retrains between recalibrations
    std::optional<std::size_t> knn_k;  // neighbour count; unset = exact scoring
    double dup_epsilon = 1e-9;       // closer than this to the query = skipped
};

struct AbodModel {
    std::vector<FeatureVector> refs;
    std::vector<RefOrigin> origins;     // parallel to refs
    std::optional<double> threshold;    // absent until calibrated
    AbodParams params;
    std::size_t pending = 0;            // retrains since the last calibration

    bool calibrated() const { return threshold.has_value(); }
};

struct AbodClassification {
    Label label = Label::Adl;
    AbodScore score;
};

/// Exact score over all reference pairs. References within dup_epsilon of the
/// query are excluded; fewer than two usable references is an error.
AbodScore abof(const FeatureVector& query, std::span<const FeatureVector> refs,
               double dup_epsilon = 1e-9);

/// Same statistic restricted to pairs among the k nearest usable references
/// (Euclidean, ties to the lower index). k = |refs| reproduces abof exactly.
AbodScore fast_abof(const FeatureVector& query, std::span<const FeatureVector> refs,
                    std::size_t k, double dup_epsilon = 1e-9);

/// Threshold from the leave-one-out scores of the reference set: every
/// reference is scored against the others (with knn_k neighbours when given),
/// and the threshold is safety times the linearly interpolated quantile.
double calibrate(std::span<const FeatureVector> refs, double quantile,
                 double safety = 0.5, std::optional<std::size_t> knn_k = {},
                 double dup_epsilon = 1e-9);

/// Leave-one-out scores backing calibrate; exposed for reports and tests.
std::vector<double> loo_scores(std::span<const FeatureVector> refs,
                               std::optional<std::size_t> knn_k = {},
                               double dup_epsilon = 1e-9);

/// Fall iff score < threshold. Uses fast_abof when knn_k is set (clamped to
/// the reference count), exact scoring otherwise.
AbodClassification classify(const FeatureVector& query, const AbodModel& model);

/// Appends v, evicts above the cap (oldest external first, then oldest user),
/// and recalibrates once enough retrains have accumulated. Returns the new
/// model; the input is not mutated.
AbodModel retrain(AbodModel model, FeatureVector v, RefOrigin origin);

/// Calibrates in place with the model's own parameters and clears the
/// pending-retrain counter.
void recalibrate(AbodModel& model);

/// Convenience constructor; calibrate_now requires at least 4 references.
AbodModel make_abod_model(std::vector<FeatureVector> refs, RefOrigin origin,
                          const AbodParams& params, bool calibrate_now = true);

}  // namespace falldet
