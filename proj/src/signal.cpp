#include "falldet/signal.hpp"

#include <cmath>

namespace falldet {

namespace {
constexpr double kPi = 3.141592653589793238462643383279;
}

double smv(const AccelSample& s) {
    return std::sqrt(s.x * s.x + s.y * s.y + s.z * s.z);
}

std::size_t find_peak(const AccelTrace& trace) {
    if (trace.samples.empty()) throw Error("empty trace");
    std::size_t best = 0;
    double best_smv = smv(trace.samples[0]);
    for (std::size_t i = 1; i < trace.samples.size(); ++i) {
        double m = smv(trace.samples[i]);
        if (m > best_smv) {
            best = i;
            best_smv = m;
        }
    }
    return best;
}

Window extract_window(const AccelTrace& trace, std::size_t peak) {
    const std::size_t n = trace.samples.size();
    if (n < kWindowLength) throw Error("trace too short");
    if (peak >= n) throw Error("peak index out of range");

    std::size_t lo = peak > kWindowHalfWidth ? peak - kWindowHalfWidth : 0;
    if (lo + kWindowLength > n) lo = n - kWindowLength;

    Window w;
    w.peak_index = peak;
    w.x.reserve(kWindowLength);
    w.y.reserve(kWindowLength);
    w.z.reserve(kWindowLength);
    for (std::size_t i = lo; i < lo + kWindowLength; ++i) {
        const AccelSample& s = trace.samples[i];
        w.x.push_back(s.x);
        w.y.push_back(s.y);
        w.z.push_back(s.z);
    }
    return w;
}

FeatureVector flatten(const Window& w) {
    if (w.x.size() != kWindowLength || w.y.size() != kWindowLength ||
        w.z.size() != kWindowLength) {
        throw Error("window axis length must be 101");
    }
    FeatureVector v;
    v.reserve(kFeatureDim);
    v.insert(v.end(), w.x.begin(), w.x.end());
    v.insert(v.end(), w.y.begin(), w.y.end());
    v.insert(v.end(), w.z.begin(), w.z.end());
    return v;
}

double tilt_from_means(double mean_x, double mean_y, double epsilon) {
    const double ax = std::fabs(mean_x);
    const double ay = std::fabs(mean_y);
    if (ax < epsilon && ay < epsilon) return 90.0;  // gravity left the x-y plane
    return std::atan2(ax, ay) * 180.0 / kPi;
}

double tilt_angle(const AccelTrace& trace, std::size_t peak, const TiltConfig& cfg) {
    if (!(trace.rate_hz > 0)) throw Error("sampling rate must be positive");
    const auto settle = static_cast<std::size_t>(std::llround(cfg.settle_delay_s * trace.rate_hz));
    const auto len = static_cast<std::size_t>(std::llround(cfg.avg_window_s * trace.rate_hz));
    if (len == 0) throw Error("averaging window too short");

    const std::size_t start = peak + settle;
    if (start + len > trace.samples.size()) throw Error("insufficient post-peak data");

    double sx = 0.0, sy = 0.0;
    for (std::size_t i = start; i < start + len; ++i) {
        sx += trace.samples[i].x;
        sy += trace.samples[i].y;
    }
    const double inv = 1.0 / static_cast<double>(len);
    return tilt_from_means(sx * inv, sy * inv, cfg.epsilon);
}

AccelTrace convert_units(const AccelTrace& trace) {
    if (trace.units == Units::MetersPerSecondSquared) return trace;
    AccelTrace out = trace;
    for (AccelSample& s : out.samples) {
        s.x *= kStandardGravity;
        s.y *= kStandardGravity;
        s.z *= kStandardGravity;
    }
    out.units = Units::MetersPerSecondSquared;
    return out;
}

FeatureVector vectorize(const AccelTrace& trace) {
    return flatten(extract_window(trace, find_peak(trace)));
}

}  // namespace falldet
