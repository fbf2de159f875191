#pragma once

#include <array>
#include <optional>

#include "tdmhand/config.hpp"
#include "tdmhand/kinematics.hpp"

namespace tdmhand {

/// Per-finger joints. dip is cable-coupled, never directly actuated.
enum class Joint { dip = 0, pip = 1, pitch = 2, roll = 3 };

inline const char* joint_name(Joint j) {
    switch (j) {
        case Joint::dip: return "dip";
        case Joint::pip: return "pip";
        case Joint::pitch: return "pitch";
        case Joint::roll: return "roll";
    }
    return "?";
}

/// Full simulation state. Owned by exactly one runtime at a time.
struct HandState {
    double clock_s = 0.0;
    int spindle_position = 0;
    /// engaged[m] = shaft currently coupled to motor m (nullopt: plug down).
    std::array<std::optional<int>, 3> engaged{};
    /// Wheel-side alignment offset sampled at engage, consumed by the first
    /// subsequent run of that motor.
    std::array<double, 3> pending_wheel_offset_deg{};
    std::array<double, 9> wheel_angle_deg{};
    /// Derived: kinematic map of wheel angles plus active disturbance offsets.
    std::array<FingerPose, 3> joints{};
    /// Current effective disturbance offset per [finger][joint].
    std::array<std::array<double, 4>, 3> disturbance_deg{};

    bool any_engaged() const {
        return engaged[0].has_value() || engaged[1].has_value() || engaged[2].has_value();
    }
    int engaged_count() const {
        return static_cast<int>(engaged[0].has_value()) + static_cast<int>(engaged[1].has_value()) +
               static_cast<int>(engaged[2].has_value());
    }
};

/// Wheel angles of the three shafts driving `finger`, per the joint map.
inline WheelAngles finger_wheels(const HandState& s, const HandConfig& c, int finger) {
    return WheelAngles{
        s.wheel_angle_deg[static_cast<std::size_t>(c.shaft_map.shaft_of(finger, 0))],
        s.wheel_angle_deg[static_cast<std::size_t>(c.shaft_map.shaft_of(finger, 1))],
        s.wheel_angle_deg[static_cast<std::size_t>(c.shaft_map.shaft_of(finger, 2))]};
}

/// Recomputes joint angles from wheel angles through the kinematic maps and
/// adds the active disturbance offsets. Invariant: this holds after every
/// state change.
inline void refresh_joints(HandState& s, const HandConfig& c) {
    for (int f = 0; f < 3; ++f) {
        FingerPose pose = forward_finger(finger_wheels(s, c, f), c.geometry);
        const auto& d = s.disturbance_deg[static_cast<std::size_t>(f)];
        pose.theta1_deg += d[static_cast<std::size_t>(Joint::dip)];
        pose.theta2_deg += d[static_cast<std::size_t>(Joint::pip)];
        pose.theta3_deg += d[static_cast<std::size_t>(Joint::pitch)];
        pose.phi3_deg += d[static_cast<std::size_t>(Joint::roll)];
        s.joints[static_cast<std::size_t>(f)] = pose;
    }
}

} // namespace tdmhand
