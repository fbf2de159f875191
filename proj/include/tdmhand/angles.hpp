#pragma once

#include <cmath>

namespace tdmhand {

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad2deg(double rad) { return rad * (180.0 / kPi); }

// Wrap an angle into [0, 360).
inline double wrap360(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w < 0.0) w += 360.0;
    return w;
}

// Shortest arc (deg, >= 0) between two park positions on a circle divided
// into `num_positions` equal slots.
inline double position_arc_deg(int from, int to, int num_positions) {
    const double spacing = 360.0 / static_cast<double>(num_positions);
    int d = (to - from) % num_positions;
    if (d < 0) d += num_positions;
    const double fwd = d * spacing;
    return fwd <= 180.0 ? fwd : 360.0 - fwd;
}

} // namespace tdmhand
