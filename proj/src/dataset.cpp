#include "falldet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "falldet/rng.hpp"
#include "falldet/signal.hpp"

namespace falldet {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> Dataset::subjects() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.subject);
    return {s.begin(), s.end()};
}

std::vector<std::size_t> Dataset::indices_of(const std::string& subject, Label label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].subject == subject && records[i].label == label) out.push_back(i);
    return out;
}

const std::vector<std::string>& adl_activity_codes() {
    static const std::vector<std::string> codes = {
        "walking_fw", "walking_bw", "jogging",     "stairs_up",    "stairs_down",
        "sit_chair",  "sit_sofa",   "sit_bed",     "lying_bed",    "pick_object",
        "reach_object", "cough",    "jumping"};
    return codes;
}

const std::vector<std::string>& fall_activity_codes() {
    static const std::vector<std::string> codes = {
        "front_lying", "back_lying", "rolling_out_bed", "back_sitting",
        "front_knees_lying", "right_side", "left_side"};
    return codes;
}

bool is_known_activity(const std::string& code, Label label) {
    const auto& v = label == Label::Adl ? adl_activity_codes() : fall_activity_codes();
    return std::find(v.begin(), v.end(), code) != v.end();
}

namespace {

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
    throw Error("line " + std::to_string(line_no) + ": " + what);
}

AccelTrace trace_from_axes(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& z, double hz, Units units) {
    AccelTrace t;
    t.rate_hz = hz;
    t.units = units;
    t.samples.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        t.samples.push_back({static_cast<double>(i) / hz, x[i], y[i], z[i]});
    return t;
}

std::vector<double> axis_from_json(const ordered_json& j, const char* key,
                                   std::size_t line_no) {
    if (!j.contains(key) || !j[key].is_array()) line_error(line_no, std::string("missing axis ") + key);
    std::vector<double> v;
    v.reserve(j[key].size());
    for (const auto& e : j[key]) {
        if (!e.is_number()) line_error(line_no, std::string("non-numeric value in axis ") + key);
        const double d = e.get<double>();
        if (!std::isfinite(d)) line_error(line_no, "non-finite sample");
        v.push_back(d);
    }
    return v;
}

LabeledRecord record_from_json(const ordered_json& j, std::size_t line_no) {
    LabeledRecord rec;
    if (!j.contains("subject") || !j["subject"].is_string() ||
        j["subject"].get<std::string>().empty())
        line_error(line_no, "missing subject");
    rec.subject = j["subject"].get<std::string>();

    if (!j.contains("label") || !j["label"].is_string()) line_error(line_no, "missing label");
    const std::string label = j["label"].get<std::string>();
    if (label == "adl") rec.label = Label::Adl;
    else if (label == "fall") rec.label = Label::Fall;
    else line_error(line_no, "unknown label '" + label + "'");

    if (j.contains("activity")) {
        if (!j["activity"].is_string()) line_error(line_no, "activity must be a string");
        const std::string act = j["activity"].get<std::string>();
        if (!is_known_activity(act, rec.label))
            line_error(line_no, "unknown activity code '" + act + "'");
        rec.activity = act;
    }

    if (!j.contains("hz") || !j["hz"].is_number()) line_error(line_no, "missing hz");
    const double hz = j["hz"].get<double>();
    if (!(hz > 0.0)) line_error(line_no, "hz must be positive");

    if (!j.contains("units") || !j["units"].is_string()) line_error(line_no, "missing units");
    const std::string units = j["units"].get<std::string>();
    Units u;
    if (units == "mps2") u = Units::MetersPerSecondSquared;
    else if (units == "g") u = Units::G;
    else line_error(line_no, "unknown units '" + units + "'");

    auto x = axis_from_json(j, "x", line_no);
    auto y = axis_from_json(j, "y", line_no);
    auto z = axis_from_json(j, "z", line_no);
    if (x.size() != y.size() || x.size() != z.size())
        line_error(line_no, "axis length mismatch");
    if (x.size() < kWindowLength) line_error(line_no, "trace too short");

    rec.trace = convert_units(trace_from_axes(x, y, z, hz, u));
    return rec;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    if (v.size() % 2 == 1) return v[mid];
    return 0.5 * (v[mid - 1] + v[mid]);
}

double record_median_smv(const AccelTrace& t) {
    std::vector<double> m;
    m.reserve(t.samples.size());
    for (const auto& s : t.samples) m.push_back(smv(s));
    return median(std::move(m));
}

}  // namespace

Dataset load_canonical(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());

    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception&) {
            line_error(line_no, "malformed record");
        }
        if (!j.is_object()) line_error(line_no, "malformed record");
        if (line_no == 1 && j.contains("provenance") && !j.contains("subject")) {
            if (j["provenance"].is_string()) ds.provenance = j["provenance"].get<std::string>();
            continue;
        }
        ds.records.push_back(record_from_json(j, line_no));
    }
    if (ds.provenance.empty()) ds.provenance = path.filename().string();
    return ds;
}

std::string to_canonical_string(const Dataset& ds) {
    std::string out;
    if (!ds.provenance.empty()) {
        ordered_json h;
        h["provenance"] = ds.provenance;
        out += h.dump();
        out += '\n';
    }
    for (const auto& rec : ds.records) {
        ordered_json j;
        j["subject"] = rec.subject;
        j["label"] = to_string(rec.label);
        if (rec.activity) j["activity"] = *rec.activity;
        j["hz"] = rec.trace.rate_hz;
        j["units"] = to_string(rec.trace.units);
        ordered_json x = ordered_json::array(), y = ordered_json::array(),
                     z = ordered_json::array();
        for (const auto& s : rec.trace.samples) {
            x.push_back(s.x);
            y.push_back(s.y);
            z.push_back(s.z);
        }
        j["x"] = std::move(x);
        j["y"] = std::move(y);
        j["z"] = std::move(z);
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_canonical(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << to_canonical_string(ds);
    if (!out) throw Error("write failed: " + path.string());
}

namespace {

std::vector<std::array<double, 3>> parse_columns_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    std::vector<std::array<double, 3>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ss(line);
        double a, b, c;
        if (!(ss >> a)) continue;  // blank line
        if (!(ss >> b >> c))
            throw Error(file.string() + ":" + std::to_string(line_no) +
                        ": expected three numeric columns");
        double extra;
        if (ss >> extra)
            throw Error(file.string() + ":" + std::to_string(line_no) +
                        ": expected three numeric columns");
        if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
            throw Error(file.string() + ":" + std::to_string(line_no) + ": non-finite sample");
        rows.push_back({a, b, c});
    }
    return rows;
}

std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir,
                                                  bool dirs_only) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (dirs_only ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

ImportResult import_tfall(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("directory not found: " + dir.string());

    ImportResult res;
    res.dataset.provenance = "import-tfall " + dir.string();

    struct RawRecord {
        std::string subject;
        Label label;
        std::vector<std::array<double, 3>> rows;
    };
    std::vector<RawRecord> raw;

    const auto subject_dirs = sorted_entries(dir, /*dirs_only=*/true);
    if (subject_dirs.empty()) throw Error("no subject folders found in " + dir.string());

    for (const auto& sdir : subject_dirs) {
        const std::string subject = sdir.filename().string();
        std::size_t before = raw.size();
        const std::array<std::pair<const char*, Label>, 2> classes = {
            {{"adl", Label::Adl}, {"fall", Label::Fall}}};
        for (const auto& [sub, label] : classes) {
            const auto cdir = sdir / sub;
            if (!std::filesystem::is_directory(cdir)) continue;
            for (const auto& file : sorted_entries(cdir, /*dirs_only=*/false)) {
                auto rows = parse_columns_file(file);
                if (rows.size() < kWindowLength)
                    throw Error(file.string() + ": trace too short");
                raw.push_back({subject, label, std::move(rows)});
            }
        }
        if (raw.size() == before)
            res.warnings.push_back("subject " + subject + ": no records, skipped");
    }
    if (raw.empty()) throw Error("no records found in " + dir.string());

    // Unit inference: the bulk of every record sits near rest, so the median
    // SMV of a record approximates gravity in whatever unit the archive uses.
    std::vector<double> medians;
    medians.reserve(raw.size());
    for (const auto& r : raw) {
        std::vector<double> m;
        m.reserve(r.rows.size());
        for (const auto& row : r.rows)
            m.push_back(std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]));
        medians.push_back(median(std::move(m)));
    }
    const double med = median(medians);
    Units units;
    if (med >= 8.5 && med <= 11.0) units = Units::MetersPerSecondSquared;
    else if (med >= 0.85 && med <= 1.15) units = Units::G;
    else throw Error("cannot infer units");

    for (auto& r : raw) {
        std::vector<double> x, y, z;
        x.reserve(r.rows.size());
        y.reserve(r.rows.size());
        z.reserve(r.rows.size());
        for (const auto& row : r.rows) {
            x.push_back(row[0]);
            y.push_back(row[1]);
            z.push_back(row[2]);
        }
        LabeledRecord rec;
        rec.subject = std::move(r.subject);
        rec.label = r.label;
        rec.trace = convert_units(trace_from_axes(x, y, z, kDefaultRateHz, units));
        res.dataset.records.push_back(std::move(rec));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kSynthSamples = 300;
constexpr double kSynthRate = 50.0;

double smoothstep01(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

// Subjects differ in how they carry the phone, how they move, and how they
// fall. The spread is deliberately wide: a model trained on other people
// must cope with a pocket orientation, gait and fall style it never saw,
// which is exactly the situation the personalized protocol is about.
struct SubjectProfile {
    double gait_freq, gait_amp, vigorous_prob;
    double gx, gy;  // static gravity split from the carrying posture
    double vig_freq, vig_wx, vig_wz;
    double impact_azimuth, impact_polar;  // subject's typical fall direction
    double fall_peak_lo, fall_peak_span;  // impact magnitude habit
    double fall_decay_base;               // impact sharpness: hard vs crumpling
    double dip_floor;                     // free-fall quality
    std::size_t fall_dip_base;
    double lie_azimuth, lie_y;            // resting pose after the fall
    std::size_t bounce_count;             // post-impact rebound habit
    double bounce_base_mag;
    double recline_azimuth, recline_y;    // how the subject lies down on purpose
};

SubjectProfile make_profile(std::uint64_t seed, std::size_t s, const SynthSpec& spec) {
    Rng rng(derive_seed({seed, 0xA5A5u, s}));
    SubjectProfile p;
    p.gait_freq = rng.uniform(spec.gait_freq_min, spec.gait_freq_max);
    p.gait_amp = rng.uniform(spec.gait_amp_min, spec.gait_amp_max);
    p.vigorous_prob = rng.uniform(0.2, 0.4);
    const double posture = rng.uniform(-35.0, 35.0) * (3.141592653589793 / 180.0);
    p.gx = kStandardGravity * std::sin(posture);
    p.gy = kStandardGravity * std::cos(posture);
    p.vig_freq = rng.uniform(2.6, 4.4);
    p.vig_wx = rng.uniform(0.5, 1.0);
    p.vig_wz = rng.uniform(0.2, 0.9);
    p.impact_azimuth = rng.uniform(0.0, 6.283185307179586);
    p.impact_polar = rng.uniform(35.0, 145.0) * (3.141592653589793 / 180.0);
    const double span = std::min(5.0, spec.fall_peak_max - spec.fall_peak_min);
    p.fall_peak_lo = rng.uniform(spec.fall_peak_min, spec.fall_peak_max - span);
    p.fall_peak_span = span;
    p.fall_decay_base = rng.uniform(3.0, 13.0);
    p.dip_floor = rng.uniform(0.08, 0.42);
    p.fall_dip_base = 16 + static_cast<std::size_t>(rng.below(8));
    p.lie_azimuth = rng.uniform(0.0, 6.283185307179586);
    p.lie_y = rng.uniform(0.1, 0.4);
    p.bounce_count = static_cast<std::size_t>(rng.below(3));
    p.bounce_base_mag = rng.uniform(0.25, 0.45);
    p.recline_azimuth = rng.uniform(0.0, 6.283185307179586);
    p.recline_y = rng.uniform(0.5, 2.5);
    return p;
}

// Resting pose on the x-z circle with a small y residual. Poses whose x
// component would straddle the tilt boundary are snapped flat onto z, where
// the epsilon rule reads them as lying; everything else clears the 55-degree
// gate with margin.
Vec3 lying_pose(double azimuth, double ly) {
    const double a = std::sqrt(kStandardGravity * kStandardGravity - ly * ly);
    double lx = a * std::sin(azimuth);
    double lz = a * std::cos(azimuth);
    if (std::fabs(lx) < 1.2) {
        const double sx = lx < 0 ? -1.0 : 1.0;
        lx = 0.18 * sx;
        lz = (lz < 0 ? -1.0 : 1.0) * std::sqrt(a * a - lx * lx);
    }
    return {lx, ly, lz};
}

// Largest oscillation scale keeping max SMV at the target (bisection; the
// magnitude is monotone in the scale).
double fit_scale(const Vec3& gravity, const std::vector<Vec3>& osc, double target) {
    auto max_smv = [&](double lambda) {
        double m = 0.0;
        for (const auto& o : osc) {
            const Vec3 v{gravity.x + lambda * o.x, gravity.y + lambda * o.y,
                         gravity.z + lambda * o.z};
            m = std::max(m, norm(v));
        }
        return m;
    };
    if (max_smv(1.0) <= target) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (max_smv(mid) > target ? hi : lo) = mid;
    }
    return lo;
}

AccelTrace synth_adl_trace(const SubjectProfile& p, Rng& rng, double ceiling) {
    const bool vigorous = rng.uniform01() < p.vigorous_prob;
    const double target =
        vigorous ? rng.uniform(0.86, 0.97) * ceiling : rng.uniform(0.80, 0.91) * ceiling;
    const double freq = (vigorous ? p.vig_freq : p.gait_freq) * rng.uniform(0.95, 1.05);
    const double amp = (vigorous ? 3.2 : p.gait_amp * rng.uniform(0.85, 1.15));
    double phase[6];
    for (double& ph : phase) ph = rng.uniform(0.0, 6.283185307179586);

    std::vector<Vec3> osc(kSynthSamples);
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        const double t = static_cast<double>(i) / kSynthRate;
        double env = smoothstep01((t - 0.5) / 0.7) * (1.0 - 0.8 * smoothstep01((t - 5.2) / 0.6));
        double ox, oy, oz;
        if (vigorous) {
            const double burst = 0.2 + 0.8 * std::pow(std::sin(3.141592653589793 * t / 1.1 + phase[5]), 2.0);
            env *= burst;
            ox = amp * p.vig_wx * std::sin(6.283185307179586 * freq * t + phase[0]) * env;
            oy = amp * 0.8 * std::sin(6.283185307179586 * freq * t + phase[1]) * env;
            oz = amp * p.vig_wz * std::sin(6.283185307179586 * freq * t + phase[2]) * env;
        } else {
            ox = amp * (0.45 * std::sin(6.283185307179586 * freq * t + phase[0]) +
                        0.20 * std::sin(12.566370614359172 * freq * t + phase[1])) * env;
            oy = amp * (0.90 * std::sin(6.283185307179586 * freq * t + phase[2]) +
                        0.35 * std::sin(12.566370614359172 * freq * t + phase[3])) * env;
            oz = amp * 0.50 * std::sin(6.283185307179586 * freq * t + phase[4]) * env;
        }
        const double sigma = vigorous ? 0.2 : 0.12;
        osc[i] = {ox + sigma * rng.normal(), oy + sigma * rng.normal(),
                  oz + sigma * rng.normal()};
    }

    const Vec3 gravity{p.gx, p.gy, 0.0};
    const double lambda = fit_scale(gravity, osc, target);

    AccelTrace trace;
    trace.rate_hz = kSynthRate;
    trace.samples.reserve(kSynthSamples);
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        trace.samples.push_back({static_cast<double>(i) / kSynthRate,
                                 gravity.x + lambda * osc[i].x,
                                 gravity.y + lambda * osc[i].y,
                                 gravity.z + lambda * osc[i].z});
    }
    return trace;
}

// Deliberate lie-down or sit-down: a small catch spike followed by a
// reclined pose and stillness. Shares the shape of a fall but stays under
// the ADL ceiling; the classic false-alarm source for population models.
AccelTrace synth_transition_trace(const SubjectProfile& p, Rng& rng, double ceiling) {
    const std::size_t peak_at = 110 + static_cast<std::size_t>(rng.below(61));
    const std::size_t dip_len = 8 + static_cast<std::size_t>(rng.below(7));
    const std::size_t dip_start = peak_at - dip_len;
    const double target = rng.uniform(0.84, 0.97) * ceiling;
    const std::size_t decay = 4 + static_cast<std::size_t>(rng.below(5));
    const std::size_t settle_at = peak_at + 24;
    const double dip_floor = rng.uniform(0.5, 0.7);

    const double phi = p.recline_azimuth + rng.uniform(-0.15, 0.15);
    const double ry = p.recline_y + rng.uniform(-0.15, 0.15);
    const double a = std::sqrt(kStandardGravity * kStandardGravity - ry * ry);
    const Vec3 pose{a * std::sin(phi), ry, a * std::cos(phi)};

    Vec3 dir{0.85 * pose.x / a + rng.uniform(-0.1, 0.1), -0.5 + rng.uniform(-0.1, 0.1),
             0.85 * pose.z / a + rng.uniform(-0.1, 0.1)};
    const double dn = norm(dir);
    dir = {dir.x / dn, dir.y / dn, dir.z / dn};

    const double gait_amp = 0.5;
    double phase = rng.uniform(0.0, 6.283185307179586);

    AccelTrace trace;
    trace.rate_hz = kSynthRate;
    trace.samples.resize(kSynthSamples);
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        const double t = static_cast<double>(i) / kSynthRate;
        Vec3 v;
        if (i < dip_start) {
            const double osc = gait_amp * std::sin(6.283185307179586 * p.gait_freq * t + phase);
            v = {p.gx + 0.6 * osc + 0.1 * rng.normal(), p.gy + osc + 0.1 * rng.normal(),
                 0.4 * osc + 0.1 * rng.normal()};
        } else if (i < peak_at) {
            const double u = static_cast<double>(i - dip_start) / static_cast<double>(dip_len);
            const double lam = 1.0 - (1.0 - dip_floor) * smoothstep01(u);
            v = {lam * p.gx + 0.12 * rng.normal(), lam * p.gy + 0.12 * rng.normal(),
                 0.12 * rng.normal()};
        } else if (i == peak_at) {
            v = {dir.x * target, dir.y * target, dir.z * target};
        } else if (i <= peak_at + decay) {
            const double u = static_cast<double>(i - peak_at) / static_cast<double>(decay);
            const double mag = target * (1.0 - u) * (1.0 - u);
            v = {dir.x * mag + pose.x * u + 0.35 * rng.normal(),
                 dir.y * mag + pose.y * u + 0.35 * rng.normal(),
                 dir.z * mag + pose.z * u + 0.35 * rng.normal()};
        } else if (i < settle_at) {
            const double ring = 0.4 * std::exp(-static_cast<double>(i - peak_at) / 8.0);
            v = {pose.x + ring * rng.normal(), pose.y + ring * rng.normal(),
                 pose.z + ring * rng.normal()};
        } else {
            v = {pose.x + 0.06 * rng.normal(), pose.y + 0.06 * rng.normal(),
                 pose.z + 0.06 * rng.normal()};
        }
        trace.samples[i] = {t, v.x, v.y, v.z};
    }

    const double cap = 0.97 * target;
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        if (i == peak_at) continue;
        AccelSample& s = trace.samples[i];
        const double m = std::sqrt(s.x * s.x + s.y * s.y + s.z * s.z);
        if (m > cap) {
            const double f = cap / m;
            s.x *= f;
            s.y *= f;
            s.z *= f;
        }
    }
    return trace;
}

AccelTrace synth_fall_trace(const SubjectProfile& p, Rng& rng) {
    const std::size_t peak_at = 140 + static_cast<std::size_t>(rng.below(9));
    const std::size_t dip_len = p.fall_dip_base + static_cast<std::size_t>(rng.below(4));
    const std::size_t dip_start = peak_at - dip_len;
    const double peak_smv = p.fall_peak_lo + rng.uniform01() * p.fall_peak_span;
    const std::size_t decay =
        static_cast<std::size_t>(std::llround(p.fall_decay_base)) +
        static_cast<std::size_t>(rng.below(3));
    const std::size_t settle_at = peak_at + 30;

    const double psi = p.impact_azimuth + rng.uniform(-0.5, 0.5);
    const double theta = p.impact_polar + rng.uniform(-0.3, 0.3);
    Vec3 dir{std::sin(theta) * std::cos(psi), std::cos(theta),
             std::sin(theta) * std::sin(psi)};
    const double dn = norm(dir);
    dir = {dir.x / dn, dir.y / dn, dir.z / dn};

    const Vec3 lying = lying_pose(p.lie_azimuth + rng.uniform(-0.35, 0.35), p.lie_y);

    // Subject-specific rebound pattern after the main impact.
    struct Bounce {
        std::size_t at;
        double mag;
    };
    std::vector<Bounce> bounces;
    std::size_t delay = peak_at + decay + 2;
    for (std::size_t b = 0; b < p.bounce_count; ++b) {
        delay += 5 + static_cast<std::size_t>(rng.below(4));
        const double mag = (p.bounce_base_mag - 0.12 * static_cast<double>(b) +
                            rng.uniform(-0.04, 0.04)) * peak_smv;
        if (delay < settle_at && mag > 0.0) bounces.push_back({delay, mag});
    }

    AccelTrace trace;
    trace.rate_hz = kSynthRate;
    trace.samples.resize(kSynthSamples);
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        const double t = static_cast<double>(i) / kSynthRate;
        Vec3 v;
        if (i < dip_start) {
            v = {p.gx + 0.08 * rng.normal(), p.gy + 0.08 * rng.normal(), 0.08 * rng.normal()};
        } else if (i < peak_at) {
            // Free-fall: the measured acceleration collapses toward zero.
            const double u = static_cast<double>(i - dip_start) / static_cast<double>(dip_len);
            const double lam = 1.0 - (1.0 - p.dip_floor) * smoothstep01(u);
            v = {lam * p.gx + 0.15 * rng.normal(), lam * p.gy + 0.15 * rng.normal(),
                 0.15 * rng.normal()};
        } else if (i == peak_at) {
            v = {dir.x * peak_smv, dir.y * peak_smv, dir.z * peak_smv};  // exact maximum
        } else if (i <= peak_at + decay) {
            const double u = static_cast<double>(i - peak_at) / static_cast<double>(decay);
            const double mag = peak_smv * (1.0 - u) * (1.0 - u);
            v = {dir.x * mag + lying.x * u + 0.5 * rng.normal(),
                 dir.y * mag + lying.y * u + 0.5 * rng.normal(),
                 dir.z * mag + lying.z * u + 0.5 * rng.normal()};
        } else if (i < settle_at) {
            const double ring = 0.6 * std::exp(-static_cast<double>(i - peak_at) / 10.0);
            v = {lying.x + ring * rng.normal(), lying.y + ring * rng.normal(),
                 lying.z + ring * rng.normal()};
            for (const Bounce& b : bounces) {
                if (i + 1 >= b.at && i <= b.at + 2) {
                    const double tri =
                        1.0 -
                        std::fabs(static_cast<double>(i) - static_cast<double>(b.at)) / 3.0;
                    v.x += dir.x * b.mag * tri;
                    v.y += dir.y * b.mag * tri;
                    v.z += dir.z * b.mag * tri;
                }
            }
        } else {
            v = {lying.x + 0.06 * rng.normal(), lying.y + 0.06 * rng.normal(),
                 lying.z + 0.06 * rng.normal()};
        }
        trace.samples[i] = {t, v.x, v.y, v.z};
    }

    // The impact sample must stay the unique global maximum.
    const double cap = 0.92 * peak_smv;
    for (std::size_t i = 0; i < kSynthSamples; ++i) {
        if (i == peak_at) continue;
        AccelSample& s = trace.samples[i];
        const double m = std::sqrt(s.x * s.x + s.y * s.y + s.z * s.z);
        if (m > cap) {
            const double f = cap / m;
            s.x *= f;
            s.y *= f;
            s.z *= f;
        }
    }
    return trace;
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
    if (spec.subjects < 1 || spec.adl_per_subject < 1 || spec.falls_per_subject < 1)
        throw Error("synthetic spec counts must be at least 1");
    if (!(spec.fall_peak_min <= spec.fall_peak_max)) throw Error("invalid fall peak range");
    if (!(spec.fall_peak_min > spec.adl_peak_ceiling)) throw Error("peak ranges overlap");
    if (!(spec.adl_peak_ceiling > 10.5))
        throw Error("adl peak ceiling too low for a gravity baseline");
    if (!(spec.gait_freq_min <= spec.gait_freq_max) || !(spec.gait_freq_min > 0) ||
        !(spec.gait_amp_min <= spec.gait_amp_max) || !(spec.gait_amp_min > 0))
        throw Error("invalid gait jitter ranges");

    Dataset ds;
    std::ostringstream prov;
    prov << "synth subjects=" << spec.subjects << " adl=" << spec.adl_per_subject
         << " falls=" << spec.falls_per_subject << " seed=" << spec.seed
         << " fall-peak=[" << spec.fall_peak_min << "," << spec.fall_peak_max
         << "] adl-ceiling=" << spec.adl_peak_ceiling << " gait-freq=["
         << spec.gait_freq_min << "," << spec.gait_freq_max << "] gait-amp=["
         << spec.gait_amp_min << "," << spec.gait_amp_max << "]";
    ds.provenance = prov.str();

    int width = 2;
    for (std::size_t v = spec.subjects; v >= 100; v /= 10) ++width;

    for (std::size_t s = 0; s < spec.subjects; ++s) {
        const SubjectProfile profile = make_profile(spec.seed, s, spec);
        std::ostringstream name;
        name << "s";
        name.width(width);
        name.fill('0');
        name << (s + 1);

        for (std::size_t r = 0; r < spec.adl_per_subject; ++r) {
            Rng rng(derive_seed({spec.seed, 0xAD7u, s, r}));
            LabeledRecord rec;
            rec.subject = name.str();
            rec.label = Label::Adl;
            if (rng.uniform01() < 0.25) {
                rec.trace = synth_transition_trace(profile, rng, spec.adl_peak_ceiling);
                rec.activity = rng.below(2) == 0 ? "lying_bed" : "sit_sofa";
            } else {
                rec.trace = synth_adl_trace(profile, rng, spec.adl_peak_ceiling);
                rec.activity = rng.below(2) == 0 ? "walking_fw" : "jumping";
            }
            ds.records.push_back(std::move(rec));
        }
        for (std::size_t r = 0; r < spec.falls_per_subject; ++r) {
            Rng rng(derive_seed({spec.seed, 0xFA11u, s, r}));
            LabeledRecord rec;
            rec.subject = name.str();
            rec.label = Label::Fall;
            rec.trace = synth_fall_trace(profile, rng);
            rec.activity = fall_activity_codes()[r % fall_activity_codes().size()];
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

ValidationReport validate(const Dataset& ds, const ValidationOptions& opts) {
    ValidationReport rep;
    if (ds.records.empty()) {
        rep.pass = false;
        rep.problems.push_back("no records");
        return rep;
    }

    std::map<std::string, SubjectSummary> by_subject;
    for (const auto& rec : ds.records) {
        auto& s = by_subject[rec.subject];
        s.subject = rec.subject;
        (rec.label == Label::Adl ? s.adl : s.falls) += 1;
        rep.length_histogram[rec.trace.samples.size()] += 1;
        const double med = record_median_smv(rec.trace);
        if (med < 8.0 || med > 12.0) rep.suspect_unit_records += 1;
    }
    for (auto& [name, s] : by_subject) rep.subjects.push_back(s);

    if (rep.suspect_unit_records > 0)
        rep.problems.push_back(std::to_string(rep.suspect_unit_records) +
                               " record(s) with median SMV outside [8, 12] m/s^2");

    if (opts.personalized_folds) {
        const std::size_t folds = *opts.personalized_folds;
        for (const auto& s : rep.subjects) {
            if (s.adl < folds) {
                rep.pass = false;
                rep.problems.push_back("subject " + s.subject + " has " +
                                       std::to_string(s.adl) + " ADL records; " +
                                       std::to_string(folds) +
                                       "-fold cross-validation needs at least " +
                                       std::to_string(folds));
            }
            if (s.falls == 0) {
                rep.pass = false;
                rep.problems.push_back("subject " + s.subject +
                                       " has no fall records; sensitivity undefined");
            }
        }
        if (rep.subjects.size() < 2) {
            rep.pass = false;
            rep.problems.push_back("personalized protocol needs at least 2 subjects");
        }
    }
    return rep;
}

std::string ValidationReport::to_text() const {
    std::ostringstream out;
    out << (pass ? "PASS" : "FAIL") << "\n";
    out << "subjects: " << subjects.size() << "\n";
    for (const auto& s : subjects)
        out << "  " << s.subject << ": adl=" << s.adl << " falls=" << s.falls << "\n";
    out << "trace lengths:";
    for (const auto& [len, count] : length_histogram) out << " " << len << "x" << count;
    out << "\n";
    if (suspect_unit_records > 0)
        out << "records with median SMV outside [8, 12]: " << suspect_unit_records << "\n";
    for (const auto& p : problems) out << "problem: " << p << "\n";
    return out.str();
}

std::string ValidationReport::to_json_string() const {
    ordered_json j;
    j["pass"] = pass;
    ordered_json subs = ordered_json::array();
    for (const auto& s : subjects) {
        ordered_json e;
        e["subject"] = s.subject;
        e["adl"] = s.adl;
        e["falls"] = s.falls;
        subs.push_back(std::move(e));
    }
    j["subjects"] = std::move(subs);
    ordered_json hist = ordered_json::object();
    for (const auto& [len, count] : length_histogram) hist[std::to_string(len)] = count;
    j["length_histogram"] = std::move(hist);
    j["suspect_unit_records"] = suspect_unit_records;
    j["problems"] = problems;
    return j.dump();
}

}  // namespace falldet
