#include "falldet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace falldet {

using ordered_json = nlohmann::ordered_json;

Detector::Detector(AbodModel model, DetectorConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
    if (!(cfg_.smv_threshold > 0) || !(cfg_.tilt_threshold_deg > 0))
        throw Error("detector thresholds must be positive");
    set_rate(cfg_.rate_hz);
}

void Detector::set_rate(double rate_hz) {
    if (!(rate_hz > 0)) throw Error("sampling rate must be positive");
    if (mode_ != DetectorMode::Monitoring)
        throw Error("cannot change rate with a candidate pending");
    cfg_.rate_hz = rate_hz;
    settle_samples_ =
        static_cast<std::size_t>(std::llround(cfg_.tilt.settle_delay_s * rate_hz));
    avg_samples_ = static_cast<std::size_t>(std::llround(cfg_.tilt.avg_window_s * rate_hz));
    if (avg_samples_ == 0) throw Error("averaging window too short");
    const std::size_t need =
        settle_samples_ + avg_samples_ + 2 * cfg_.window_half_width + 16;
    ring_.resize(std::max<std::size_t>(need, 301));
}

const AccelSample& Detector::at(std::uint64_t index) const {
    return ring_[index % ring_.size()];
}

DetectorEvent Detector::step(const AccelSample& s) {
    const std::uint64_t idx = next_index_++;
    ring_[idx % ring_.size()] = s;
    if (next_index_ - first_index_ > ring_.size()) first_index_ = next_index_ - ring_.size();

    DetectorEvent none;
    none.sample_index = idx;
    none.t = static_cast<double>(idx) / cfg_.rate_hz;

    switch (mode_) {
    case DetectorMode::AwaitingVerdict:
        return none;  // buffered, but the alert screen is modal

    case DetectorMode::Monitoring: {
        const double m = smv(s);
        if (m > cfg_.smv_threshold) {
            mode_ = DetectorMode::ImpactPending;
            peak_index_ = idx;
            peak_smv_ = m;
        }
        return none;
    }

    case DetectorMode::ImpactPending: {
        const double m = smv(s);
        if (m > peak_smv_) {  // the true maximum defines the window
            peak_smv_ = m;
            peak_index_ = idx;
        }
        const std::uint64_t eval_at = peak_index_ + settle_samples_ + avg_samples_ - 1;
        if (idx < eval_at) return none;
        return evaluate_candidate();
    }
    }
    return none;
}

DetectorEvent Detector::evaluate_candidate() {
    DetectorEvent ev;
    ev.sample_index = next_index_ - 1;
    ev.t = static_cast<double>(ev.sample_index) / cfg_.rate_hz;
    ev.peak_index = peak_index_;
    ev.peak_smv = peak_smv_;
    ev.model_refs = model_.refs.size();
    mode_ = DetectorMode::Monitoring;

    double sx = 0.0, sy = 0.0;
    const std::uint64_t tilt_start = peak_index_ + settle_samples_;
    for (std::uint64_t i = tilt_start; i < tilt_start + avg_samples_; ++i) {
        sx += at(i).x;
        sy += at(i).y;
    }
    const double inv = 1.0 / static_cast<double>(avg_samples_);
    const double tilt = tilt_from_means(sx * inv, sy * inv, cfg_.tilt.epsilon);
    ev.tilt_deg = tilt;

    if (tilt <= cfg_.tilt_threshold_deg) {
        ev.kind = EventKind::CandidateSuppressed;
        ev.note = "tilt below threshold";
        return ev;
    }

    const std::size_t wlen = 2 * cfg_.window_half_width + 1;
    const std::uint64_t have = next_index_ - first_index_;
    if (have < wlen) {
        ev.kind = EventKind::CandidateSuppressed;
        ev.note = "insufficient history for window";
        return ev;
    }
    std::uint64_t lo = peak_index_ > cfg_.window_half_width
                           ? peak_index_ - cfg_.window_half_width
                           : 0;
    lo = std::max(lo, first_index_);
    lo = std::min(lo, next_index_ - wlen);

    FeatureVector feat;
    feat.reserve(3 * wlen);
    for (std::uint64_t i = lo; i < lo + wlen; ++i) feat.push_back(at(i).x);
    for (std::uint64_t i = lo; i < lo + wlen; ++i) feat.push_back(at(i).y);
    for (std::uint64_t i = lo; i < lo + wlen; ++i) feat.push_back(at(i).z);

    ++classify_calls_;
    const AbodClassification cls = classify(feat, model_);
    ev.score = cls.score;

    if (cls.label == Label::Fall) {
        ev.kind = EventKind::FallAlert;
        pending_window_ = std::move(feat);
        mode_ = DetectorMode::AwaitingVerdict;
    } else {
        model_ = retrain(std::move(model_), std::move(feat), RefOrigin::User);
        ev.kind = EventKind::AdlLearned;
        ev.model_refs = model_.refs.size();
    }
    return ev;
}

void Detector::apply_verdict(Verdict v) {
    if (mode_ != DetectorMode::AwaitingVerdict) throw Error("no pending alert");
    if (v == Verdict::FalseAlarm)
        model_ = retrain(std::move(model_), std::move(pending_window_), RefOrigin::User);
    pending_window_.clear();
    mode_ = DetectorMode::Monitoring;
}

DetectorEvent Detector::flush() {
    DetectorEvent ev;
    ev.sample_index = next_index_ == 0 ? 0 : next_index_ - 1;
    ev.t = static_cast<double>(ev.sample_index) / cfg_.rate_hz;
    if (mode_ == DetectorMode::ImpactPending) {
        ev.kind = EventKind::CandidateSuppressed;
        ev.note = "stream ended before evaluation";
        ev.peak_index = peak_index_;
        ev.peak_smv = peak_smv_;
        ev.model_refs = model_.refs.size();
        mode_ = DetectorMode::Monitoring;
    }
    if (mode_ == DetectorMode::AwaitingVerdict)
        throw Error("flush with unanswered alert");
    first_index_ = next_index_;  // history never spans stream boundaries
    peak_smv_ = 0.0;
    return ev;
}

ReplayResult replay(const Dataset& data, AbodModel model, const DetectorConfig& cfg,
                    const VerdictPolicy& policy) {
    if (data.records.empty()) throw Error("no records to replay");

    Detector det(std::move(model), cfg);
    ReplayResult res;
    std::size_t script_pos = 0;

    for (std::size_t ri = 0; ri < data.records.size(); ++ri) {
        const LabeledRecord& rec = data.records[ri];
        if (ri == 0) {
            if (rec.trace.rate_hz != cfg.rate_hz) det.set_rate(rec.trace.rate_hz);
        } else if (rec.trace.rate_hz != data.records[0].trace.rate_hz) {
            throw Error("replay requires a uniform sampling rate");
        }

        ReplayRecordOutcome out;
        out.record_index = ri;
        out.truth = rec.label;

        for (const AccelSample& s : rec.trace.samples) {
            DetectorEvent ev = det.step(s);
            if (ev.kind == EventKind::None) continue;
            res.log.push_back({ri, "event", ev, {}, {}});
            if (ev.kind == EventKind::CandidateSuppressed) ++out.suppressed;
            if (ev.kind == EventKind::AdlLearned) ++out.learned;
            if (ev.kind == EventKind::FallAlert) {
                ++out.alerts;
                Verdict v;
                if (policy.kind == VerdictPolicyKind::GroundTruth) {
                    v = rec.label == Label::Fall ? Verdict::Fall : Verdict::FalseAlarm;
                } else {
                    if (script_pos >= policy.script.size())
                        throw Error("verdict script exhausted at record " +
                                    std::to_string(ri) + ", sample " +
                                    std::to_string(ev.sample_index));
                    v = policy.script[script_pos++];
                }
                det.apply_verdict(v);
                if (v == Verdict::FalseAlarm) ++res.verdict_retrains;
                ReplayEntry entry;
                entry.record_index = ri;
                entry.type = "verdict";
                entry.verdict = v;
                res.log.push_back(std::move(entry));
            }
        }

        DetectorEvent tail = det.flush();
        if (tail.kind != EventKind::None) {
            ++out.suppressed;
            res.log.push_back({ri, "event", tail, {}, {}});
        }

        out.predicted = out.alerts > 0 ? Label::Fall : Label::Adl;
        ReplayEntry endent;
        endent.record_index = ri;
        endent.type = "record_end";
        endent.outcome = out;
        res.log.push_back(std::move(endent));
        res.outcomes.push_back(out);
    }

    res.classify_calls = det.classify_calls();
    res.final_model = det.model();
    return res;
}

namespace {

const char* kind_name(EventKind k) {
    switch (k) {
    case EventKind::None: return "none";
    case EventKind::CandidateSuppressed: return "candidate_suppressed";
    case EventKind::FallAlert: return "fall_alert";
    case EventKind::AdlLearned: return "adl_learned";
    }
    return "none";
}

}  // namespace

std::string event_log_to_ndjson(const ReplayResult& res) {
    std::string out;
    for (const auto& e : res.log) {
        ordered_json j;
        j["record"] = e.record_index;
        j["type"] = e.type;
        if (e.type == "event") {
            j["kind"] = kind_name(e.event.kind);
            j["sample"] = e.event.sample_index;
            j["t"] = e.event.t;
            j["peak_sample"] = e.event.peak_index;
            j["peak_smv"] = e.event.peak_smv;
            if (e.event.tilt_deg) j["tilt_deg"] = *e.event.tilt_deg;
            if (e.event.score) {
                j["score"] = e.event.score->value;
                j["pairs_used"] = e.event.score->pairs_used;
            }
            j["model_refs"] = e.event.model_refs;
            if (!e.event.note.empty()) j["note"] = e.event.note;
        } else if (e.type == "verdict") {
            j["answer"] = *e.verdict == Verdict::Fall ? "fall" : "false_alarm";
        } else if (e.type == "record_end") {
            const auto& o = *e.outcome;
            j["truth"] = to_string(o.truth);
            j["predicted"] = to_string(o.predicted);
            j["alerts"] = o.alerts;
            j["suppressed"] = o.suppressed;
            j["learned"] = o.learned;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Verdict> load_verdict_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<Verdict> script;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line == "fall") script.push_back(Verdict::Fall);
        else if (line == "false_alarm") script.push_back(Verdict::FalseAlarm);
        else
            throw Error("verdict script line " + std::to_string(line_no) +
                        ": expected 'fall' or 'false_alarm'");
    }
    return script;
}

}  // namespace falldet
