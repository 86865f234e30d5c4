#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace falldet {

inline constexpr double kStandardGravity = 9.80665;  // m/s^2 per g

// Impact windows are 50 samples either side of the magnitude peak.
inline constexpr std::size_t kWindowHalfWidth = 50;
inline constexpr std::size_t kWindowLength = 2 * kWindowHalfWidth + 1;
inline constexpr std::size_t kFeatureDim = 3 * kWindowLength;

inline constexpr double kDefaultRateHz = 50.0;

enum class Units { MetersPerSecondSquared, G };

enum class Label { Adl, Fall };

/// Domain error carrying a single-line diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AccelSample {
    double t = 0.0;  // seconds from trace start
    double x = 0.0;  // m/s^2 (or g before unit conversion)
    double y = 0.0;
    double z = 0.0;
};

struct AccelTrace {
    std::vector<AccelSample> samples;
    double rate_hz = kDefaultRateHz;
    Units units = Units::MetersPerSecondSquared;
};

/// 101 samples per axis centred on (or clamped around) the magnitude peak.
struct Window {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> z;
    std::size_t peak_index = 0;  // position of the peak in the source trace
};

// Raw window values, x-block then y-block then z-block (dim 303 for the
// standard pipeline; scoring and training routines accept any dimension).
using FeatureVector = std::vector<double>;

inline const char* to_string(Label l) { return l == Label::Adl ? "adl" : "fall"; }
inline const char* to_string(Units u) { return u == Units::G ? "g" : "mps2"; }

}  // namespace falldet
