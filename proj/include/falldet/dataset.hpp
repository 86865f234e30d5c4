#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "falldet/types.hpp"

namespace falldet {

struct LabeledRecord {
    std::string subject;
    Label label = Label::Adl;
    std::optional<std::string> activity;  // code from the movement vocabulary
    AccelTrace trace;
};

struct Dataset {
    std::vector<LabeledRecord> records;
    std::string provenance;

    /// Distinct subject ids, sorted.
    std::vector<std::string> subjects() const;
    /// Record indices for one subject and label, in dataset order.
    std::vector<std::size_t> indices_of(const std::string& subject, Label label) const;
};

/// Movement vocabulary accepted in the optional activity field.
const std::vector<std::string>& adl_activity_codes();
const std::vector<std::string>& fall_activity_codes();
bool is_known_activity(const std::string& code, Label label);

// Canonical interchange file: one JSON object per line with keys
// subject, label, activity (optional), hz, units, x, y, z. An optional
// leading {"provenance": ...} line carries the generating configuration.
// See docs/formats.md for the exact grammar.
Dataset load_canonical(const std::filesystem::path& path);
std::string to_canonical_string(const Dataset& ds);
void save_canonical(const Dataset& ds, const std::filesystem::path& path);

struct ImportResult {
    Dataset dataset;
    std::vector<std::string> warnings;
};

/// Imports a directory tree laid out per docs/tfall_adapter.md:
/// <dir>/<subject>/{adl,fall}/<record files>, three numeric columns per row,
/// 50 Hz. Units are inferred from the median per-record median SMV.
ImportResult import_tfall(const std::filesystem::path& dir);

struct SynthSpec {
    std::size_t subjects = 9;
    std::size_t adl_per_subject = 200;
    std::size_t falls_per_subject = 24;
    std::uint64_t seed = 1;
    double fall_peak_min = 25.0;   // m/s^2, impact magnitude range
    double fall_peak_max = 40.0;
    double adl_peak_ceiling = 13.0;  // every ADL record stays strictly below
    double gait_freq_min = 1.3;    // per-subject gait signature draws
    double gait_freq_max = 2.4;
    double gait_amp_min = 0.9;
    double gait_amp_max = 1.6;
};

/// Deterministic synthetic dataset: per-subject gait signatures for ADL,
/// quiescence-spike-lying shapes for falls. Records are 300 samples at 50 Hz
/// in m/s^2. ADL peaks stay below the ceiling (so below the 14.7 pre-filter);
/// falls peak inside the configured range and end lying (post-peak tilt well
/// past 55 degrees).
Dataset generate_synthetic(const SynthSpec& spec);

struct SubjectSummary {
    std::string subject;
    std::size_t adl = 0;
    std::size_t falls = 0;
};

struct ValidationOptions {
    /// When set, checks the requirements of the personalized protocol with
    /// this fold count (every subject needs >= folds ADL records and at
    /// least one fall).
    std::optional<std::size_t> personalized_folds;
};

struct ValidationReport {
    bool pass = true;
    std::vector<SubjectSummary> subjects;
    std::map<std::size_t, std::size_t> length_histogram;  // trace length -> count
    std::size_t suspect_unit_records = 0;  // median SMV outside [8, 12]
    std::vector<std::string> problems;

    std::string to_text() const;
    std::string to_json_string() const;
};

ValidationReport validate(const Dataset& ds, const ValidationOptions& opts = {});

}  // namespace falldet
