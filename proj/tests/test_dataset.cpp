#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "falldet/dataset.hpp"
#include "falldet/rng.hpp"
#include "falldet/signal.hpp"

using namespace falldet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "falldet_dataset_tests";
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string record_line(const std::string& subject, const std::string& label,
                        std::size_t n, double x, double y, double z,
                        const std::string& units = "mps2") {
    std::string xs, ys, zs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string sep = i ? "," : "";
        xs += sep + std::to_string(x);
        ys += sep + std::to_string(y);
        zs += sep + std::to_string(z);
    }
    return "{\"subject\":\"" + subject + "\",\"label\":\"" + label +
           "\",\"hz\":50.0,\"units\":\"" + units + "\",\"x\":[" + xs + "],\"y\":[" + ys +
           "],\"z\":[" + zs + "]}\n";
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("load_canonical accepts a single valid record") {
    const fs::path p = scratch_dir() / "one.jsonl";
    write_text(p, record_line("s01", "adl", 120, 0.0, 9.81, 0.0));
    const Dataset ds = load_canonical(p);
    CHECK(ds.records.size() == 1);
    CHECK(ds.records[0].subject == "s01");
    CHECK(ds.records[0].label == Label::Adl);
    CHECK(ds.records[0].trace.samples.size() == 120);
}

TEST_CASE("load_canonical error paths carry line numbers") {
    const fs::path p = scratch_dir() / "bad.jsonl";

    SUBCASE("malformed json") {
        write_text(p, "{nope\n");
        CHECK_THROWS_WITH_AS(load_canonical(p), "line 1: malformed record", Error);
    }
    SUBCASE("axis length mismatch") {
        std::string good = record_line("s01", "adl", 120, 0, 9.81, 0);
        std::string bad = record_line("s01", "adl", 120, 0, 9.81, 0);
        bad.replace(bad.find("\"x\":[0.0"), 8, "\"x\":[1.0,0.0");  // one extra x value
        write_text(p, good + bad);
        CHECK_THROWS_WITH_AS(load_canonical(p), "line 2: axis length mismatch", Error);
    }
    SUBCASE("unknown label") {
        write_text(p, record_line("s01", "trip", 120, 0, 9.81, 0));
        CHECK_THROWS_WITH_AS(load_canonical(p), "line 1: unknown label 'trip'", Error);
    }
    SUBCASE("trace shorter than one window") {
        write_text(p, record_line("s01", "adl", 100, 0, 9.81, 0));
        CHECK_THROWS_WITH_AS(load_canonical(p), "line 1: trace too short", Error);
    }
    SUBCASE("unknown activity code") {
        std::string line = record_line("s01", "adl", 120, 0, 9.81, 0);
        line.insert(line.find(",\"hz\""), ",\"activity\":\"moonwalk\"");
        write_text(p, line);
        CHECK_THROWS_WITH_AS(load_canonical(p), "line 1: unknown activity code 'moonwalk'",
                             Error);
    }
}

TEST_CASE("g-tagged records are scaled to m/s^2 on load") {
    const fs::path p = scratch_dir() / "g.jsonl";
    write_text(p, record_line("s01", "adl", 120, 0.0, 1.0, 0.0, "g"));
    const Dataset ds = load_canonical(p);
    CHECK(ds.records[0].trace.units == Units::MetersPerSecondSquared);
    CHECK(ds.records[0].trace.samples[0].y == doctest::Approx(9.80665));
}

TEST_CASE("save then load is the identity") {
    SynthSpec spec;
    spec.subjects = 2;
    spec.adl_per_subject = 6;
    spec.falls_per_subject = 3;
    spec.seed = 20;
    const Dataset ds = generate_synthetic(spec);

    const fs::path p = scratch_dir() / "round.jsonl";
    save_canonical(ds, p);
    const Dataset back = load_canonical(p);

    REQUIRE(back.records.size() == ds.records.size());
    CHECK(back.provenance == ds.provenance);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].subject == ds.records[i].subject);
        CHECK(back.records[i].label == ds.records[i].label);
        CHECK(back.records[i].activity == ds.records[i].activity);
        REQUIRE(back.records[i].trace.samples.size() == ds.records[i].trace.samples.size());
        for (std::size_t s = 0; s < ds.records[i].trace.samples.size(); ++s) {
            CHECK(back.records[i].trace.samples[s].x == ds.records[i].trace.samples[s].x);
            CHECK(back.records[i].trace.samples[s].y == ds.records[i].trace.samples[s].y);
            CHECK(back.records[i].trace.samples[s].z == ds.records[i].trace.samples[s].z);
        }
    }

    SUBCASE("a second save is byte-identical") {
        const fs::path q = scratch_dir() / "round2.jsonl";
        save_canonical(back, q);
        CHECK(read_text(p) == read_text(q));
    }
}

TEST_CASE("synthetic generation is deterministic") {
    SynthSpec spec;
    spec.subjects = 3;
    spec.adl_per_subject = 5;
    spec.falls_per_subject = 2;
    spec.seed = 7;
    const std::string a = to_canonical_string(generate_synthetic(spec));
    const std::string b = to_canonical_string(generate_synthetic(spec));
    CHECK(a == b);

    spec.seed = 8;
    CHECK(to_canonical_string(generate_synthetic(spec)) != a);
}

TEST_CASE("synthetic records satisfy the pipeline guarantees") {
    SynthSpec spec;
    spec.subjects = 4;
    spec.adl_per_subject = 25;
    spec.falls_per_subject = 8;
    spec.seed = 99;
    const Dataset ds = generate_synthetic(spec);

    for (const auto& rec : ds.records) {
        REQUIRE(rec.trace.samples.size() == 300);
        const std::size_t peak = find_peak(rec.trace);
        double max_smv = 0.0;
        for (const auto& s : rec.trace.samples) max_smv = std::max(max_smv, smv(s));

        if (rec.label == Label::Fall) {
            CHECK(max_smv >= spec.fall_peak_min);
            CHECK(max_smv <= spec.fall_peak_max);
            CHECK(tilt_angle(rec.trace, peak, TiltConfig{}) > 55.0);
        } else {
            CHECK(max_smv < spec.adl_peak_ceiling);
            CHECK(max_smv < 14.7);
        }

        // Resting head: the first second sits in the gravity band.
        double head = 0.0;
        for (std::size_t i = 0; i < 50; ++i) head += smv(rec.trace.samples[i]);
        head /= 50.0;
        CHECK(head > 8.0);
        CHECK(head < 12.0);
    }
}

TEST_CASE("synthetic spec validation") {
    SynthSpec spec;
    spec.fall_peak_min = 12.0;  // overlaps the ADL ceiling
    CHECK_THROWS_WITH_AS(generate_synthetic(spec), "peak ranges overlap", Error);
}

TEST_CASE("validate: counts, folds rule, empty dataset") {
    SynthSpec spec;
    spec.subjects = 3;
    spec.adl_per_subject = 9;
    spec.falls_per_subject = 2;
    spec.seed = 3;
    const Dataset ds = generate_synthetic(spec);

    SUBCASE("plain validation passes") {
        const ValidationReport r = validate(ds);
        CHECK(r.pass);
        CHECK(r.subjects.size() == 3);
        CHECK(r.subjects[0].adl == 9);
        CHECK(r.subjects[0].falls == 2);
        CHECK(r.length_histogram.at(300) == 33);
    }
    SUBCASE("10-fold request fails with 9 ADL records") {
        ValidationOptions opts;
        opts.personalized_folds = 10;
        const ValidationReport r = validate(ds, opts);
        CHECK_FALSE(r.pass);
        REQUIRE_FALSE(r.problems.empty());
        CHECK(r.problems[0].find("has 9 ADL records") != std::string::npos);
    }
    SUBCASE("9-fold request passes") {
        ValidationOptions opts;
        opts.personalized_folds = 9;
        CHECK(validate(ds, opts).pass);
    }
    SUBCASE("empty dataset fails") {
        const ValidationReport r = validate(Dataset{});
        CHECK_FALSE(r.pass);
        CHECK(r.problems[0] == "no records");
    }
}

TEST_CASE("import_tfall: layout, units, warnings") {
    const fs::path root = scratch_dir() / "tfall";
    fs::remove_all(root);

    // Two subjects with data, one empty; 3-column whitespace files at rest
    // around 1 g so the unit heuristic must detect g.
    auto write_record = [&](const fs::path& dir, const std::string& name, double rest,
                            double spike) {
        fs::create_directories(dir);
        std::ofstream out(dir / name);
        for (int i = 0; i < 300; ++i) {
            const double y = i == 150 ? spike : rest;
            out << 0.01 << " " << y << " " << -0.02 << "\n";
        }
    };

    SUBCASE("g-unit archive") {
        write_record(root / "subjA" / "adl", "r1.csv", 1.0, 1.2);
        write_record(root / "subjA" / "fall", "f1.csv", 1.0, 3.1);
        write_record(root / "subjB" / "adl", "r1.csv", 0.99, 1.15);
        fs::create_directories(root / "subjC");  // empty subject

        const ImportResult res = import_tfall(root);
        CHECK(res.dataset.records.size() == 3);
        CHECK(res.dataset.subjects() == std::vector<std::string>{"subjA", "subjB"});
        REQUIRE(res.warnings.size() == 1);
        CHECK(res.warnings[0].find("subjC") != std::string::npos);
        // 1 g at rest scaled to ~9.8.
        CHECK(smv(res.dataset.records[0].trace.samples[0]) ==
              doctest::Approx(9.80665).epsilon(0.01));
        CHECK(res.dataset.records[0].label == Label::Adl);
        CHECK(res.dataset.records[1].label == Label::Fall);
    }
    SUBCASE("m/s^2 archive stays unscaled") {
        write_record(root / "subjA" / "adl", "r1.csv", 9.8, 12.0);
        const ImportResult res = import_tfall(root);
        CHECK(smv(res.dataset.records[0].trace.samples[0]) ==
              doctest::Approx(9.8).epsilon(0.01));
    }
    SUBCASE("nine subject folders report nine subjects at 50 Hz") {
        for (int s = 1; s <= 9; ++s) {
            const std::string name = "per" + std::to_string(s);
            write_record(root / name / "adl", "r1.csv", 9.8, 11.0);
            write_record(root / name / "fall", "f1.csv", 9.8, 31.0);
        }
        const ImportResult res = import_tfall(root);
        CHECK(res.dataset.subjects().size() == 9);
        CHECK(res.dataset.records.size() == 18);
        CHECK(res.dataset.records[0].trace.rate_hz == 50.0);
        CHECK(res.dataset.records[0].trace.samples.size() == 300);
    }
    SUBCASE("ambiguous units are refused") {
        write_record(root / "subjA" / "adl", "r1.csv", 4.0, 5.0);
        CHECK_THROWS_WITH_AS(import_tfall(root), "cannot infer units", Error);
    }
    SUBCASE("short record files are rejected") {
        fs::create_directories(root / "subjA" / "adl");
        std::ofstream out(root / "subjA" / "adl" / "short.csv");
        for (int i = 0; i < 50; ++i) out << "0 1 0\n";
        out.close();
        CHECK_THROWS_AS(import_tfall(root), Error);
    }
    SUBCASE("missing directory") {
        CHECK_THROWS_AS(import_tfall(root / "nope"), Error);
    }
}

TEST_SUITE_END();
