#pragma once

#include <cstddef>

#include "falldet/types.hpp"

namespace falldet {

/// Post-impact orientation measurement parameters.
struct TiltConfig {
    double settle_delay_s = 2.0;  // stillness wait after the impact peak
    double avg_window_s = 1.0;    // averaging interval for the mean axes
    double epsilon = 0.5;         // m/s^2; both axes below this => lying (90 deg)
};

/// Signal magnitude vector: Euclidean norm of the three axes.
double smv(const AccelSample& s);

/// Index of the maximum SMV; ties resolve to the earliest index.
std::size_t find_peak(const AccelTrace& trace);

/// 101 samples centred on the peak, clamped inside the trace when the peak
/// sits within 50 samples of either end.
Window extract_window(const AccelTrace& trace, std::size_t peak);

/// x-block, y-block, z-block concatenation (dim 303).
FeatureVector flatten(const Window& w);

/// Orientation angle from mean |x| and |y|; shared with the streaming detector.
double tilt_from_means(double mean_x, double mean_y, double epsilon);

/// Tilt in degrees from the x/y means over the post-peak averaging interval.
/// 0 deg = gravity on y (upright in pocket), 90 deg = gravity on x or off the
/// x-y plane entirely (lying).
double tilt_angle(const AccelTrace& trace, std::size_t peak, const TiltConfig& cfg = {});

/// Scales g-tagged traces by standard gravity; m/s^2 traces pass through.
AccelTrace convert_units(const AccelTrace& trace);

/// find_peak -> extract_window -> flatten.
FeatureVector vectorize(const AccelTrace& trace);

}  // namespace falldet
