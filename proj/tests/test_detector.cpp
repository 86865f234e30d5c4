#include <doctest.h>

#include <chrono>
#include <cmath>

#include "falldet/detector.hpp"
#include "falldet/experiments.hpp"
#include "falldet/rng.hpp"

using namespace falldet;

namespace {

AbodModel small_adl_model(const Dataset& ds, std::optional<std::size_t> knn = 20) {
    std::vector<FeatureVector> refs;
    for (const auto& rec : ds.records)
        if (rec.label == Label::Adl) refs.push_back(vectorize(rec.trace));
    AbodParams params;
    params.knn_k = knn;
    return make_abod_model(std::move(refs), RefOrigin::External, params);
}

Dataset synth(std::size_t subjects, std::size_t adl, std::size_t falls, std::uint64_t seed) {
    SynthSpec spec;
    spec.subjects = subjects;
    spec.adl_per_subject = adl;
    spec.falls_per_subject = falls;
    spec.seed = seed;
    return generate_synthetic(spec);
}

}  // namespace

TEST_SUITE_BEGIN("detector");

TEST_CASE("steady upright stream never leaves Monitoring") {
    const Dataset ds = synth(1, 8, 2, 5);
    Detector det(small_adl_model(ds), DetectorConfig{});
    Rng rng(1);
    for (int i = 0; i < 5000; ++i) {
        const AccelSample s{i / 50.0, 0.1 * rng.normal(), 9.81 + 0.1 * rng.normal(),
                            0.1 * rng.normal()};
        const DetectorEvent ev = det.step(s);
        CHECK(ev.kind == EventKind::None);
    }
    CHECK(det.mode() == DetectorMode::Monitoring);
    CHECK(det.classify_calls() == 0);
}

TEST_CASE("spike with upright recovery is suppressed before classification") {
    const Dataset ds = synth(1, 8, 2, 6);
    Detector det(small_adl_model(ds), DetectorConfig{});
    bool saw_suppression = false;
    for (int i = 0; i < 400; ++i) {
        const double y = i == 120 ? 30.0 : 9.81;  // spike then upright again
        const DetectorEvent ev = det.step({i / 50.0, 0.0, y, 0.0});
        if (ev.kind != EventKind::None) {
            CHECK(ev.kind == EventKind::CandidateSuppressed);
            CHECK(ev.note == "tilt below threshold");
            CHECK(*ev.tilt_deg <= 55.0);
            CHECK(ev.peak_index == 120);
            saw_suppression = true;
        }
    }
    CHECK(saw_suppression);
    CHECK(det.classify_calls() == 0);  // the tilt gate fired first
}

TEST_CASE("fall trace raises exactly one alert and parks for the verdict") {
    const Dataset ds = synth(2, 10, 4, 7);
    AbodModel model = small_adl_model(ds);
    Detector det(model, DetectorConfig{});

    const auto falls = ds.indices_of("s01", Label::Fall);
    REQUIRE_FALSE(falls.empty());
    const auto& trace = ds.records[falls[0]].trace;

    std::size_t alerts = 0;
    for (const auto& s : trace.samples) {
        const DetectorEvent ev = det.step(s);
        if (ev.kind == EventKind::FallAlert) {
            ++alerts;
            CHECK(ev.peak_smv > 14.7);
            CHECK(*ev.tilt_deg > 55.0);
            REQUIRE(ev.score.has_value());
            CHECK(ev.score->value < *model.threshold);
        }
    }
    CHECK(alerts == 1);
    CHECK(det.mode() == DetectorMode::AwaitingVerdict);

    SUBCASE("false alarm press grows the reference set by one") {
        const std::size_t before = det.model().refs.size();
        det.apply_verdict(Verdict::FalseAlarm);
        CHECK(det.model().refs.size() == before + 1);
        CHECK(det.mode() == DetectorMode::Monitoring);
    }
    SUBCASE("fall verdict leaves the reference set unchanged") {
        const std::size_t before = det.model().refs.size();
        det.apply_verdict(Verdict::Fall);
        CHECK(det.model().refs.size() == before);
        CHECK(det.mode() == DetectorMode::Monitoring);
    }
}

TEST_CASE("verdict without a pending alert is an error") {
    const Dataset ds = synth(1, 8, 2, 8);
    Detector det(small_adl_model(ds), DetectorConfig{});
    CHECK_THROWS_WITH_AS(det.apply_verdict(Verdict::Fall), "no pending alert", Error);
}

TEST_CASE("replay over the synthetic dataset") {
    const Dataset ds = synth(3, 20, 5, 9);
    const AbodModel model = small_adl_model(ds);
    const ReplayResult res = replay(ds, model, DetectorConfig{}, VerdictPolicy{});

    SUBCASE("ADL records never reach the classifier; falls alert exactly once") {
        std::size_t fall_records = 0;
        for (const auto& o : res.outcomes) {
            if (o.truth == Label::Adl) {
                CHECK(o.alerts == 0);
                CHECK(o.learned == 0);
            } else {
                CHECK(o.alerts == 1);
                ++fall_records;
            }
        }
        CHECK(fall_records == 15);
        CHECK(res.classify_calls == fall_records);  // pre-filter gates everything else
        CHECK(res.verdict_retrains == 0);           // ground truth answered "fall"
        CHECK(res.final_model.refs.size() == model.refs.size());
    }

    SUBCASE("every alert in the log passed both gates first") {
        for (const auto& e : res.log) {
            if (e.type != "event") continue;
            if (e.event.kind == EventKind::FallAlert || e.event.kind == EventKind::AdlLearned) {
                CHECK(e.event.peak_smv > 14.7);
                REQUIRE(e.event.tilt_deg.has_value());
                CHECK(*e.event.tilt_deg > 55.0);
            }
        }
    }

    SUBCASE("replay is deterministic") {
        const ReplayResult again = replay(ds, model, DetectorConfig{}, VerdictPolicy{});
        CHECK(event_log_to_ndjson(again) == event_log_to_ndjson(res));
    }

    SUBCASE("scripted false alarms retrain once per alert") {
        VerdictPolicy policy;
        policy.kind = VerdictPolicyKind::Scripted;
        policy.script.assign(15, Verdict::FalseAlarm);
        const ReplayResult scripted = replay(ds, model, DetectorConfig{}, policy);
        CHECK(scripted.verdict_retrains == 15);
        CHECK(scripted.final_model.refs.size() == model.refs.size() + 15);
    }

    SUBCASE("an exhausted script is an error") {
        VerdictPolicy policy;
        policy.kind = VerdictPolicyKind::Scripted;
        policy.script.assign(3, Verdict::Fall);
        CHECK_THROWS_AS(replay(ds, model, DetectorConfig{}, policy), Error);
    }
}

TEST_CASE("alerts on ADL-labelled records retrain under the ground-truth policy") {
    // Fall-shaped traces relabelled as ADL: every alert must be answered
    // with a false alarm and feed the window back into the model.
    Dataset ds = synth(2, 12, 4, 21);
    for (auto& rec : ds.records) {
        if (rec.label == Label::Fall) {
            rec.label = Label::Adl;
            rec.activity.reset();
        }
    }
    // The model comes from a clean dataset; the relabelled windows stay
    // out-of-distribution so that alerts actually fire.
    const Dataset clean = synth(2, 12, 4, 22);
    const AbodModel clean_model = small_adl_model(clean);

    const ReplayResult res = replay(ds, clean_model, DetectorConfig{}, VerdictPolicy{});
    std::size_t alerts = 0;
    for (const auto& o : res.outcomes) alerts += o.alerts;
    REQUIRE(alerts > 0);
    CHECK(res.verdict_retrains == alerts);
    CHECK(res.final_model.refs.size() == clean_model.refs.size() + alerts);
}

TEST_CASE("one hour of 50 Hz ADL stream processes in well under a minute") {
    const Dataset ds = synth(1, 10, 2, 10);
    Detector det(small_adl_model(ds), DetectorConfig{});
    Rng rng(4);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 180000; ++i) {
        const double t = i / 50.0;
        const AccelSample s{t, 2.0 * std::sin(t * 8.0) + 0.2 * rng.normal(),
                            9.3 + 2.5 * std::sin(t * 11.0) + 0.2 * rng.normal(),
                            1.2 * std::sin(t * 5.0) + 0.2 * rng.normal()};
        det.step(s);
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count() < 60);
}

TEST_SUITE_END();
