#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "falldet/abod.hpp"
#include "falldet/dataset.hpp"
#include "falldet/signal.hpp"
#include "falldet/types.hpp"

namespace falldet {

// The on-device pipeline as a deterministic state machine. Cheap gates run
// first: a sample whose SMV exceeds the impact threshold opens a candidate;
// after the settle and averaging interval the tilt gate either discards the
// candidate (upright recovery) or hands the 101-sample window around the
// peak to the one-class classifier. A fall verdict parks the machine until
// the user answers; "false alarm" feeds the window back as fresh ADL.

struct DetectorConfig {
    double smv_threshold = 14.7;      // m/s^2, impact gate
    double tilt_threshold_deg = 55.0; // beyond this the pose counts as lying
    TiltConfig tilt;
    std::size_t window_half_width = kWindowHalfWidth;
    double rate_hz = kDefaultRateHz;
};

enum class DetectorMode { Monitoring, ImpactPending, AwaitingVerdict };

enum class EventKind { None, CandidateSuppressed, FallAlert, AdlLearned };

struct DetectorEvent {
    EventKind kind = EventKind::None;
    std::uint64_t sample_index = 0;  // absolute stream position of the trigger
    double t = 0.0;                  // seconds, sample-indexed
    std::uint64_t peak_index = 0;
    double peak_smv = 0.0;
    std::optional<double> tilt_deg;
    std::optional<AbodScore> score;
    std::size_t model_refs = 0;
    std::string note;  // suppression reason when kind == CandidateSuppressed
};

enum class Verdict { Fall, FalseAlarm };

class Detector {
public:
    explicit Detector(AbodModel model, DetectorConfig cfg = {});

    /// Processes one sample; at most one non-None event per call.
    DetectorEvent step(const AccelSample& s);

    /// Resolves a pending alert. "false alarm" retrains on the held window.
    void apply_verdict(Verdict v);

    /// Discards buffered history and any pending candidate (stream boundary).
    /// Returns a suppression event if a candidate was still open.
    DetectorEvent flush();

    /// Switches the nominal sampling rate; only legal between streams.
    void set_rate(double rate_hz);

    DetectorMode mode() const { return mode_; }
    const AbodModel& model() const { return model_; }
    std::size_t classify_calls() const { return classify_calls_; }

private:
    DetectorEvent evaluate_candidate();
    const AccelSample& at(std::uint64_t index) const;

    AbodModel model_;
    DetectorConfig cfg_;
    std::size_t settle_samples_ = 0;
    std::size_t avg_samples_ = 0;

    std::vector<AccelSample> ring_;
    std::uint64_t next_index_ = 0;   // absolute index of the next sample
    std::uint64_t first_index_ = 0;  // oldest absolute index still buffered

    DetectorMode mode_ = DetectorMode::Monitoring;
    std::uint64_t peak_index_ = 0;
    double peak_smv_ = 0.0;
    FeatureVector pending_window_;
    std::size_t classify_calls_ = 0;
};

enum class VerdictPolicyKind { GroundTruth, Scripted };

struct VerdictPolicy {
    VerdictPolicyKind kind = VerdictPolicyKind::GroundTruth;
    std::vector<Verdict> script;  // consumed in alert order when Scripted
};

struct ReplayRecordOutcome {
    std::size_t record_index = 0;
    Label truth = Label::Adl;
    Label predicted = Label::Adl;  // Fall iff at least one alert fired
    std::size_t alerts = 0;
    std::size_t suppressed = 0;
    std::size_t learned = 0;
};

struct ReplayEntry {
    std::size_t record_index = 0;
    std::string type;  // "event", "verdict", "record_end"
    DetectorEvent event;              // for type == "event"
    std::optional<Verdict> verdict;   // for type == "verdict"
    std::optional<ReplayRecordOutcome> outcome;  // for type == "record_end"
};

struct ReplayResult {
    std::vector<ReplayEntry> log;
    std::vector<ReplayRecordOutcome> outcomes;
    AbodModel final_model;
    std::size_t classify_calls = 0;
    std::size_t verdict_retrains = 0;
};

/// Feeds every record through the detector in order; alerts are answered by
/// the verdict policy (ground truth answers from the record label, scripted
/// answers from an explicit list). Buffered history never crosses record
/// boundaries.
ReplayResult replay(const Dataset& data, AbodModel model, const DetectorConfig& cfg,
                    const VerdictPolicy& policy);

/// Newline-delimited structured form of the replay log (docs/formats.md).
std::string event_log_to_ndjson(const ReplayResult& res);

/// Verdict script file: one line per alert, "fall" or "false_alarm".
std::vector<Verdict> load_verdict_script(const std::filesystem::path& path);

}  // namespace falldet
