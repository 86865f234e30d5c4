#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "falldet/abod.hpp"
#include "falldet/dataset.hpp"
#include "falldet/svm.hpp"

namespace falldet {

struct ConfusionCounts {
    std::size_t tp = 0;  // falls detected as falls
    std::size_t fn = 0;  // falls detected as ADL
    std::size_t tn = 0;  // ADL detected as ADL
    std::size_t fp = 0;  // ADL detected as falls
};

struct MetricTriple {
    double specificity = 0.0;
    double sensitivity = 0.0;
    double geometric_mean = 0.0;
};

/// SE = tp/(tp+fn), SP = tn/(tn+fp), GM = sqrt(SP*SE). Both classes must be
/// represented in the counts.
MetricTriple metrics(const ConfusionCounts& c);

/// Arithmetic mean of SP, SE and GM independently; the aggregate GM is the
/// mean of the per-row GMs, not the GM of the means.
MetricTriple aggregate(std::span<const MetricTriple> rows);

enum class GammaMode { DimInverse, Scale, Fixed };

struct Model1Config {
    TrainConfig train;
    GammaMode gamma_mode = GammaMode::DimInverse;  // used when train.gamma unset
    bool grid_search = false;  // C in {0.1,1,10} x gamma in {1/d, 1/(d*var)}
    std::uint64_t seed = 1;
};

enum class PersonalizationMode { Batch, ReplayLoop };

struct PersonalizedConfig {
    std::size_t folds = 10;
    std::size_t seeds_per_other_subject = 50;
    std::size_t repetitions = 10;
    std::uint64_t seed = 1;
    AbodParams abod;  // scoring and calibration policy
    PersonalizationMode mode = PersonalizationMode::Batch;
    std::size_t threads = 1;
    bool record_audit = false;  // track train/test record ids per subject
};

struct SubjectRow {
    std::string subject;
    MetricTriple mean;
    MetricTriple stddev;  // over repetitions; zero when not applicable
};

struct SubjectAudit {
    std::string subject;
    std::vector<std::size_t> train_ids;  // union over cells
    std::vector<std::size_t> test_ids;
};

struct EvalReport {
    std::string kind;  // "model1" | "personalized"
    std::vector<SubjectRow> rows;
    MetricTriple aggregate_row;
    nlohmann::ordered_json config_echo;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
    std::vector<SubjectAudit> audit;  // populated only when requested

    std::string to_table() const;
    nlohmann::ordered_json to_json() const;
};

/// find_peak -> extract_window -> flatten for every record.
std::vector<FeatureVector> vectorize_dataset(const Dataset& data);

/// Leave-one-subject-out supervised baseline: per subject p, an SVM is
/// trained on every other subject's ADL and fall records and tested on all
/// of p's records.
EvalReport run_model1(const Dataset& data, const Model1Config& cfg);

/// Personalized one-class protocol: per subject, repetition and fold, a
/// reference model seeded from other subjects' ADL records is personalized
/// with the subject's training folds (batch recalibration or the incremental
/// feedback loop) and tested on the held-out ADL fold plus all of the
/// subject's falls.
EvalReport run_personalized(const Dataset& data, const PersonalizedConfig& cfg);

struct GridChoice {
    double c = 1.0;
    double gamma = 1.0;
    double cv_gm = 0.0;
};

/// 3-fold stratified cross-validation over C in {0.1, 1, 10} and gamma in
/// {1/d, 1/(d*var)}; ties keep the earlier combination.
GridChoice grid_search_svm(std::span<const FeatureVector> xs, std::span<const Label> ys,
                           const TrainConfig& base, std::uint64_t seed);

/// 1/(d * variance of all feature values).
double scale_gamma(std::span<const FeatureVector> xs);

}  // namespace falldet
