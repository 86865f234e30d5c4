// falldet: synthetic data, dataset import/validation, model training,
// scoring, the two evaluation protocols, and scripted replay of the
// streaming detector. Every run prints its effective configuration and all
// randomness flows from --seed, so artifacts are reproducible byte for byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "falldet/dataset.hpp"
#include "falldet/detector.hpp"
#include "falldet/experiments.hpp"
#include "falldet/model_io.hpp"
#include "falldet/signal.hpp"

using namespace falldet;
using ordered_json = nlohmann::ordered_json;

namespace {

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp);
        out << content;
        if (!out) {
            std::filesystem::remove(tmp);
            throw Error("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

void echo_config(const ordered_json& j) { std::cout << j.dump() << "\n"; }

struct AbodCliOpts {
    double quantile = 0.01;
    double safety = 0.5;
    std::size_t cap = 2000;
    std::size_t recal = 10;
    std::size_t knn = 20;  // 0 = exact scoring
    AbodParams to_params() const {
        AbodParams p;
        p.quantile = quantile;
        p.safety = safety;
        p.cap = cap;
        p.recal_interval = recal;
        if (knn > 0) p.knn_k = knn;
        return p;
    }
    void add_flags(CLI::App* cmd) {
        cmd->add_option("--q", quantile, "calibration quantile over LOO scores");
        cmd->add_option("--safety", safety, "threshold safety factor");
        cmd->add_option("--cap", cap, "reference-set size bound");
        cmd->add_option("--recal", recal, "retrains between recalibrations");
        cmd->add_option("--knn", knn, "neighbour count for scoring (0 = exact)");
    }
};

std::optional<double> parse_gamma(const std::string& s, GammaMode& mode) {
    if (s == "dim") {
        mode = GammaMode::DimInverse;
        return std::nullopt;
    }
    if (s == "scale") {
        mode = GammaMode::Scale;
        return std::nullopt;
    }
    mode = GammaMode::Fixed;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !(v > 0)) throw Error("");
        return v;
    } catch (...) {
        throw Error("--gamma expects a positive number, 'dim' or 'scale'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized fall detection: one-class angle-based outlier "
                 "detection over raw accelerometer windows, with an SVM baseline"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
    SynthSpec spec;
    std::string synth_out = "synth.jsonl";
    synth->add_option("--subjects", spec.subjects, "number of subjects");
    synth->add_option("--adl", spec.adl_per_subject, "ADL records per subject");
    synth->add_option("--falls", spec.falls_per_subject, "fall records per subject");
    synth->add_option("--seed", spec.seed, "generator seed");
    synth->add_option("--fall-peak-min", spec.fall_peak_min, "impact SMV lower bound");
    synth->add_option("--fall-peak-max", spec.fall_peak_max, "impact SMV upper bound");
    synth->add_option("--adl-ceiling", spec.adl_peak_ceiling, "ADL SMV strict ceiling");
    synth->add_option("--gait-freq-min", spec.gait_freq_min, "subject gait frequency draw, Hz");
    synth->add_option("--gait-freq-max", spec.gait_freq_max, "subject gait frequency draw, Hz");
    synth->add_option("--gait-amp-min", spec.gait_amp_min, "subject gait amplitude draw, m/s^2");
    synth->add_option("--gait-amp-max", spec.gait_amp_max, "subject gait amplitude draw, m/s^2");
    synth->add_option("--out", synth_out, "output dataset file")->required();

    // ---- import-tfall ----
    auto* imp = app.add_subcommand("import-tfall", "convert a tFall-layout directory");
    std::string imp_dir, imp_out = "tfall.jsonl";
    imp->add_option("--dir", imp_dir, "archive root (see docs/tfall_adapter.md)")->required();
    imp->add_option("--out", imp_out, "output dataset file")->required();

    // ---- validate ----
    auto* val = app.add_subcommand("validate", "check a canonical dataset");
    std::string val_data;
    std::size_t val_folds = 10;
    bool val_personalized = false, val_json = false;
    val->add_option("--data", val_data, "canonical dataset file")->required();
    val->add_flag("--for-personalized", val_personalized,
                  "also check personalized-protocol requirements");
    val->add_option("--folds", val_folds, "fold count for the personalized check");
    val->add_flag("--json", val_json, "machine-readable report");

    // ---- train-abod ----
    auto* tra = app.add_subcommand("train-abod", "build a one-class model from ADL records");
    std::string tra_data, tra_out = "abod.fdm", tra_subject;
    AbodCliOpts tra_opts;
    tra->add_option("--data", tra_data, "canonical dataset file")->required();
    tra->add_option("--out", tra_out, "output model file")->required();
    tra->add_option("--subject", tra_subject, "restrict to one subject's ADL records");
    tra_opts.add_flags(tra);

    // ---- train-svm ----
    auto* trs = app.add_subcommand("train-svm", "train the supervised baseline");
    std::string trs_data, trs_out = "svm.fdm", trs_gamma = "dim";
    double trs_c = 1.0, trs_tol = 1e-3;
    std::size_t trs_passes = 100;
    std::uint64_t trs_seed = 1;
    bool trs_grid = false;
    trs->add_option("--data", trs_data, "canonical dataset file")->required();
    trs->add_option("--out", trs_out, "output model file")->required();
    trs->add_option("--c", trs_c, "box constraint");
    trs->add_option("--gamma", trs_gamma, "RBF width: number, 'dim' or 'scale'");
    trs->add_option("--tol", trs_tol, "KKT tolerance");
    trs->add_option("--max-passes", trs_passes, "solver pass cap");
    trs->add_option("--seed", trs_seed, "solver seed");
    trs->add_flag("--grid-search", trs_grid, "CV over C x gamma candidates");

    // ---- score ----
    auto* sco = app.add_subcommand("score", "classify one record with a saved model");
    std::string sco_model, sco_data, sco_out;
    std::size_t sco_index = 0;
    sco->add_option("--model", sco_model, "model file (abod or svm)")->required();
    sco->add_option("--data", sco_data, "canonical dataset file")->required();
    sco->add_option("--index", sco_index, "record index in the file");
    sco->add_option("--out", sco_out, "also write the result to a file");

    // ---- eval-model1 ----
    auto* em1 = app.add_subcommand("eval-model1", "leave-one-subject-out SVM protocol");
    std::string em1_data, em1_out, em1_gamma = "dim";
    double em1_c = 1.0, em1_tol = 1e-3;
    std::size_t em1_passes = 100;
    std::uint64_t em1_seed = 1;
    bool em1_grid = false;
    em1->add_option("--data", em1_data, "canonical dataset file")->required();
    em1->add_option("--out", em1_out, "report file (JSON)");
    em1->add_option("--c", em1_c, "box constraint");
    em1->add_option("--gamma", em1_gamma, "RBF width: number, 'dim' or 'scale'");
    em1->add_option("--tol", em1_tol, "KKT tolerance");
    em1->add_option("--max-passes", em1_passes, "solver pass cap");
    em1->add_option("--seed", em1_seed, "run seed");
    em1->add_flag("--grid-search", em1_grid, "CV over C x gamma candidates");

    // ---- eval-personalized ----
    auto* epe = app.add_subcommand("eval-personalized", "per-subject one-class protocol");
    std::string epe_data, epe_out, epe_mode = "batch";
    PersonalizedConfig pcfg;
    AbodCliOpts epe_opts;
    epe->add_option("--data", epe_data, "canonical dataset file")->required();
    epe->add_option("--out", epe_out, "report file (JSON)");
    epe->add_option("--reps", pcfg.repetitions, "repetitions of the seed sampling");
    epe->add_option("--folds", pcfg.folds, "cross-validation folds over ADL records");
    epe->add_option("--seeds-per-subject", pcfg.seeds_per_other_subject,
                    "ADL records sampled from every other subject");
    epe->add_option("--mode", epe_mode, "'batch' or 'replay-loop' personalization");
    epe->add_option("--seed", pcfg.seed, "run seed");
    epe->add_option("--threads", pcfg.threads, "parallel cells (results unchanged)");
    epe_opts.add_flags(epe);

    // ---- replay ----
    auto* rep = app.add_subcommand("replay", "stream records through the detector");
    std::string rep_data, rep_model, rep_policy = "ground-truth", rep_script,
                rep_out, rep_final_model;
    DetectorConfig dcfg;
    rep->add_option("--data", rep_data, "canonical dataset file")->required();
    rep->add_option("--model", rep_model, "abod model file")->required();
    rep->add_option("--policy", rep_policy, "'ground-truth' or 'script'");
    rep->add_option("--script", rep_script, "verdict script file (with --policy script)");
    rep->add_option("--out", rep_out, "event log file (NDJSON)");
    rep->add_option("--final-model", rep_final_model, "write the post-replay model here");
    rep->add_option("--smv-threshold", dcfg.smv_threshold, "impact gate, m/s^2");
    rep->add_option("--tilt-threshold", dcfg.tilt_threshold_deg, "lying gate, degrees");
    rep->add_option("--settle", dcfg.tilt.settle_delay_s, "post-peak settle wait, s");
    rep->add_option("--avg-window", dcfg.tilt.avg_window_s, "tilt averaging interval, s");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const Dataset ds = generate_synthetic(spec);
            write_file_atomic(synth_out, to_canonical_string(ds));
            ordered_json j;
            j["command"] = "synth";
            j["subjects"] = spec.subjects;
            j["adl"] = spec.adl_per_subject;
            j["falls"] = spec.falls_per_subject;
            j["seed"] = spec.seed;
            j["fall_peak"] = {spec.fall_peak_min, spec.fall_peak_max};
            j["adl_ceiling"] = spec.adl_peak_ceiling;
            j["gait_freq"] = {spec.gait_freq_min, spec.gait_freq_max};
            j["gait_amp"] = {spec.gait_amp_min, spec.gait_amp_max};
            j["records"] = ds.records.size();
            j["out"] = synth_out;
            echo_config(j);
        } else if (*imp) {
            const ImportResult res = import_tfall(imp_dir);
            write_file_atomic(imp_out, to_canonical_string(res.dataset));
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
            ordered_json j;
            j["command"] = "import-tfall";
            j["dir"] = imp_dir;
            j["records"] = res.dataset.records.size();
            j["subjects"] = res.dataset.subjects().size();
            j["out"] = imp_out;
            echo_config(j);
        } else if (*val) {
            const Dataset ds = load_canonical(val_data);
            ValidationOptions opts;
            if (val_personalized) opts.personalized_folds = val_folds;
            const ValidationReport r = validate(ds, opts);
            std::cout << (val_json ? r.to_json_string() + "\n" : r.to_text());
            return r.pass ? 0 : 1;
        } else if (*tra) {
            const Dataset ds = load_canonical(tra_data);
            std::vector<FeatureVector> refs;
            for (const auto& rec : ds.records) {
                if (rec.label != Label::Adl) continue;
                if (!tra_subject.empty() && rec.subject != tra_subject) continue;
                refs.push_back(vectorize(rec.trace));
            }
            if (refs.size() < 4) throw Error("too few references to calibrate");
            const AbodModel model =
                make_abod_model(std::move(refs), RefOrigin::External, tra_opts.to_params());
            save_model(model, tra_out);
            ordered_json j;
            j["command"] = "train-abod";
            j["data"] = tra_data;
            if (!tra_subject.empty()) j["subject"] = tra_subject;
            j["refs"] = model.refs.size();
            j["threshold"] = *model.threshold;
            j["q"] = tra_opts.quantile;
            j["safety"] = tra_opts.safety;
            j["cap"] = tra_opts.cap;
            j["recal"] = tra_opts.recal;
            j["knn"] = tra_opts.knn;
            j["out"] = tra_out;
            echo_config(j);
        } else if (*trs) {
            const Dataset ds = load_canonical(trs_data);
            std::vector<FeatureVector> xs;
            std::vector<Label> ys;
            for (const auto& rec : ds.records) {
                xs.push_back(vectorize(rec.trace));
                ys.push_back(rec.label);
            }
            GammaMode mode;
            TrainConfig tc;
            tc.c = trs_c;
            tc.gamma = parse_gamma(trs_gamma, mode);
            tc.kkt_tol = trs_tol;
            tc.max_passes = trs_passes;
            tc.seed = trs_seed;
            if (trs_grid) {
                const GridChoice g = grid_search_svm(xs, ys, tc, trs_seed);
                tc.c = g.c;
                tc.gamma = g.gamma;
            } else if (!tc.gamma && mode == GammaMode::Scale) {
                tc.gamma = scale_gamma(xs);
            }
            const SvmModel model = train_smo(xs, ys, tc);
            save_model(model, trs_out);
            ordered_json j;
            j["command"] = "train-svm";
            j["data"] = trs_data;
            j["c"] = tc.c;
            j["gamma"] = tc.gamma ? ordered_json(*tc.gamma) : ordered_json(trs_gamma);
            j["tol"] = trs_tol;
            j["max_passes"] = trs_passes;
            j["seed"] = trs_seed;
            j["grid_search"] = trs_grid;
            j["support_vectors"] = model.support_vectors.size();
            j["out"] = trs_out;
            echo_config(j);
        } else if (*sco) {
            const Dataset ds = load_canonical(sco_data);
            if (sco_index >= ds.records.size()) throw Error("record index out of range");
            const FeatureVector feat = vectorize(ds.records[sco_index].trace);
            ordered_json j;
            j["command"] = "score";
            j["model"] = sco_model;
            j["index"] = sco_index;
            if (peek_model_kind(sco_model) == ModelKind::Abod) {
                const AbodModel model = load_abod_model(sco_model);
                const AbodClassification cls = classify(feat, model);
                j["label"] = to_string(cls.label);
                j["score"] = cls.score.value;
                j["pairs_used"] = cls.score.pairs_used;
                j["threshold"] = *model.threshold;
            } else {
                const SvmModel model = load_svm_model(sco_model);
                const double f = decision(model, feat);
                j["label"] = to_string(predict(model, feat));
                j["decision"] = f;
            }
            const std::string line = j.dump() + "\n";
            std::cout << line;
            if (!sco_out.empty()) write_file_atomic(sco_out, line);
        } else if (*em1) {
            const Dataset ds = load_canonical(em1_data);
            Model1Config cfg;
            cfg.train.c = em1_c;
            cfg.train.gamma = parse_gamma(em1_gamma, cfg.gamma_mode);
            cfg.train.kkt_tol = em1_tol;
            cfg.train.max_passes = em1_passes;
            cfg.grid_search = em1_grid;
            cfg.seed = em1_seed;
            const EvalReport report = run_model1(ds, cfg);
            std::cout << report.to_table();
            echo_config(report.config_echo);
            if (!em1_out.empty()) write_file_atomic(em1_out, report.to_json().dump(2) + "\n");
        } else if (*epe) {
            const Dataset ds = load_canonical(epe_data);
            pcfg.abod = epe_opts.to_params();
            if (epe_mode == "batch") pcfg.mode = PersonalizationMode::Batch;
            else if (epe_mode == "replay-loop") pcfg.mode = PersonalizationMode::ReplayLoop;
            else throw Error("--mode expects 'batch' or 'replay-loop'");
            const EvalReport report = run_personalized(ds, pcfg);
            std::cout << report.to_table();
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
            echo_config(report.config_echo);
            if (!epe_out.empty()) write_file_atomic(epe_out, report.to_json().dump(2) + "\n");
        } else if (*rep) {
            const Dataset ds = load_canonical(rep_data);
            AbodModel model = load_abod_model(rep_model);
            VerdictPolicy policy;
            if (rep_policy == "ground-truth") {
                policy.kind = VerdictPolicyKind::GroundTruth;
            } else if (rep_policy == "script") {
                policy.kind = VerdictPolicyKind::Scripted;
                if (rep_script.empty()) throw Error("--policy script requires --script");
                policy.script = load_verdict_script(rep_script);
            } else {
                throw Error("--policy expects 'ground-truth' or 'script'");
            }
            const ReplayResult res = replay(ds, std::move(model), dcfg, policy);
            if (!rep_out.empty()) write_file_atomic(rep_out, event_log_to_ndjson(res));
            if (!rep_final_model.empty()) save_model(res.final_model, rep_final_model);
            ordered_json j;
            j["command"] = "replay";
            j["data"] = rep_data;
            j["model"] = rep_model;
            j["policy"] = rep_policy;
            j["smv_threshold"] = dcfg.smv_threshold;
            j["tilt_threshold"] = dcfg.tilt_threshold_deg;
            j["records"] = res.outcomes.size();
            j["classifier_invocations"] = res.classify_calls;
            j["verdict_retrains"] = res.verdict_retrains;
            std::size_t alerts = 0;
            for (const auto& o : res.outcomes) alerts += o.alerts;
            j["alerts"] = alerts;
            j["final_refs"] = res.final_model.refs.size();
            if (!rep_out.empty()) j["out"] = rep_out;
            echo_config(j);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
