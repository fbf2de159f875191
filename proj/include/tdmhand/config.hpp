#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdmhand/angles.hpp"
#include "tdmhand/errors.hpp"

namespace tdmhand {

// ---------------------------------------------------------------------------
// Configuration types. Immutable after validation; safe to share between
// concurrent readers.
// ---------------------------------------------------------------------------

/// Rolling-joint radii of one finger (all three fingers are identical) plus
/// phalanx lengths for optional Cartesian fingertip output.
struct FingerGeometry {
    double r1_mm      = 5.0;  ///< DIP rolling-joint radius
    double r2_mm      = 5.0;  ///< PIP rolling-joint radius
    double r_pitch_mm = 5.0;  ///< MCP-pitch rolling-joint radius
    double r_roll_mm  = 8.0;  ///< MCP-roll joint radius
    double r3_mm      = 8.0;  ///< winding-wheel radius
    std::array<double, 3> link_lengths_mm{45.0, 28.0, 20.0}; ///< proximal, intermediate, distal
    double roll_range_deg = 90.0; ///< |phi3| limit of the MCP roll joint
};

/// Two-stage gear train between a drive motor and a winding-wheel shaft.
struct GearTrain {
    int z1 = 12;
    int z2 = 40;
    int z3 = 12;
    int z4 = 120;
};

/// Transmission ratio k = (z2*z4)/(z1*z3). Motion and alignment error at the
/// motor are both divided by k on the way to the winding wheel.
inline double reduction_ratio(const GearTrain& g) {
    return (static_cast<double>(g.z2) * static_cast<double>(g.z4)) /
           (static_cast<double>(g.z1) * static_cast<double>(g.z3));
}

/// Which winding-wheel shaft each motor faces at each spindle park position,
/// and which shaft drives which finger joint.
struct ShaftMap {
    int num_shafts    = 9;
    int num_positions = 9;
    std::array<int, 3> motor_offsets{0, 3, 6};
    /// index = finger*3 + {0:pip, 1:pitch, 2:roll}; value = shaft index.
    std::array<int, 9> joint_to_shaft{0, 1, 2, 3, 4, 5, 6, 7, 8};

    int shaft_at(int motor, int position) const {
        return (motor_offsets[static_cast<std::size_t>(motor)] + position) % num_shafts;
    }

    std::array<int, 3> engaged_set(int position) const {
        return {shaft_at(0, position), shaft_at(1, position), shaft_at(2, position)};
    }

    /// Shaft driving active joint `j` (0:pip, 1:pitch, 2:roll) of `finger`.
    int shaft_of(int finger, int j) const {
        return joint_to_shaft[static_cast<std::size_t>(finger * 3 + j)];
    }
};

/// Speeds and delays of the drive box.
struct TimingModel {
    double spindle_speed_deg_s = 180.0;  ///< spindle repositioning speed
    double settle_time_s       = 0.05;   ///< plug lift + coil energize
    double motor_speed_deg_s   = 2000.0; ///< drive motor speed, motor shaft side
    int    encoder_bits        = 14;
    double sample_period_s     = 0.01;
};

struct HandConfig {
    FingerGeometry geometry;
    GearTrain      gears;
    ShaftMap       shaft_map;
    TimingModel    timing;
    double alignment_error_max_deg = 10.0; ///< plug/slot error bound, motor side
    double magnet_reset_rate       = 5.0;  ///< 1/s, first-order joint self-reset
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Checks every type invariant and returns the complete list of violations
/// (empty when the config is valid). Each entry names the offending field.
inline std::vector<std::string> validate_config(const HandConfig& c) {
    std::vector<std::string> out;
    auto fail = [&out](const std::string& msg) { out.push_back(msg); };
    auto positive = [&fail](double v, const char* path) {
        if (!(v > 0.0)) fail(std::string(path) + " must be positive");
    };

    positive(c.geometry.r1_mm, "geometry.r1");
    positive(c.geometry.r2_mm, "geometry.r2");
    positive(c.geometry.r_pitch_mm, "geometry.r_pitch");
    positive(c.geometry.r_roll_mm, "geometry.r_roll");
    positive(c.geometry.r3_mm, "geometry.r3");
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(c.geometry.link_lengths_mm[i] > 0.0))
            fail("geometry.link_lengths[" + std::to_string(i) + "] must be positive");
    }
    positive(c.geometry.roll_range_deg, "geometry.roll_range_deg");

    const std::array<int, 4> teeth{c.gears.z1, c.gears.z2, c.gears.z3, c.gears.z4};
    const std::array<const char*, 4> tooth_names{"gears.z1", "gears.z2", "gears.z3", "gears.z4"};
    bool teeth_ok = true;
    for (std::size_t i = 0; i < 4; ++i) {
        if (teeth[i] < 1) {
            fail(std::string(tooth_names[i]) + " must be a positive integer");
            teeth_ok = false;
        }
    }
    if (teeth_ok && !(reduction_ratio(c.gears) > 1.0))
        fail("gears: reduction ratio (z2*z4)/(z1*z3) must exceed 1");

    const ShaftMap& m = c.shaft_map;
    if (m.num_shafts != 9) fail("shaft_map.num_shafts must be 9");
    if (m.num_positions < 1) fail("shaft_map.num_positions must be positive");
    bool map_ok = m.num_shafts == 9 && m.num_positions >= 1;

    if (map_ok) {
        std::set<int> offsets;
        for (int o : m.motor_offsets) {
            int r = o % m.num_shafts;
            if (r < 0) r += m.num_shafts;
            offsets.insert(r);
        }
        if (offsets.size() != 3) {
            fail("shaft_map.motor_offsets: offsets not distinct modulo num_shafts");
            map_ok = false;
        }
    }
    if (map_ok) {
        // Per position the three motors must face three distinct shafts, and
        // over all positions every shaft must be reachable.
        std::set<int> covered;
        for (int p = 0; p < m.num_positions; ++p) {
            const auto set = m.engaged_set(p);
            if (std::set<int>(set.begin(), set.end()).size() != 3)
                fail("shaft_map: engaged shafts collide at position " + std::to_string(p));
            covered.insert(set.begin(), set.end());
        }
        for (int s = 0; s < m.num_shafts; ++s) {
            if (!covered.count(s))
                fail("shaft_map: shaft " + std::to_string(s) + " unreachable from any position");
        }
    }
    {
        std::set<int> seen;
        bool in_range = true;
        for (int s : m.joint_to_shaft) {
            if (s < 0 || s >= 9) in_range = false;
            seen.insert(s);
        }
        if (!in_range || seen.size() != 9)
            fail("shaft_map.joint_assignment must be a bijection over the 9 active joints");
    }

    positive(c.timing.spindle_speed_deg_s, "timing.spindle_speed");
    positive(c.timing.settle_time_s, "timing.settle_time");
    positive(c.timing.motor_speed_deg_s, "timing.motor_speed");
    if (c.timing.encoder_bits < 1 || c.timing.encoder_bits > 30)
        fail("timing.encoder_bits must be in [1, 30]");
    positive(c.timing.sample_period_s, "timing.sample_period");

    if (c.alignment_error_max_deg < 0.0)
        fail("alignment_error_max_deg must be non-negative");
    else if (teeth_ok && reduction_ratio(c.gears) > 1.0 &&
             c.alignment_error_max_deg / reduction_ratio(c.gears) > 0.5)
        fail("alignment_error_max_deg / reduction ratio exceeds 0.5 deg at the winding wheel");

    positive(c.magnet_reset_rate, "magnet_reset_rate");
    return out;
}

/// Returns `c` unchanged if it validates, otherwise throws ConfigError
/// carrying the full violation list.
inline const HandConfig& require_valid(const HandConfig& c) {
    auto violations = validate_config(c);
    if (!violations.empty()) throw ConfigError(std::move(violations));
    return c;
}

// ---------------------------------------------------------------------------
// JSON (config file). Unknown keys are rejected at every level.
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw ParseError(where + ": unknown key \"" + item.key() + "\"");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(where + "." + key + ": wrong type");
        }
    }
}

inline std::string joint_key(int finger, int j) {
    static const char* names[3] = {"pip", "pitch", "roll"};
    return "f" + std::to_string(finger) + "." + names[j];
}

} // namespace detail

inline nlohmann::json config_to_json(const HandConfig& c) {
    nlohmann::json ja;
    for (int f = 0; f < 3; ++f)
        for (int j = 0; j < 3; ++j)
            ja[detail::joint_key(f, j)] = c.shaft_map.shaft_of(f, j);
    return nlohmann::json{
        {"geometry",
         {{"r1_mm", c.geometry.r1_mm},
          {"r2_mm", c.geometry.r2_mm},
          {"r_pitch_mm", c.geometry.r_pitch_mm},
          {"r_roll_mm", c.geometry.r_roll_mm},
          {"r3_mm", c.geometry.r3_mm},
          {"link_lengths_mm", c.geometry.link_lengths_mm},
          {"roll_range_deg", c.geometry.roll_range_deg}}},
        {"gears", {{"z1", c.gears.z1}, {"z2", c.gears.z2}, {"z3", c.gears.z3}, {"z4", c.gears.z4}}},
        {"shaft_map",
         {{"num_shafts", c.shaft_map.num_shafts},
          {"num_positions", c.shaft_map.num_positions},
          {"motor_offsets", c.shaft_map.motor_offsets},
          {"joint_assignment", ja}}},
        {"timing",
         {{"spindle_speed_deg_s", c.timing.spindle_speed_deg_s},
          {"settle_time_s", c.timing.settle_time_s},
          {"motor_speed_deg_s", c.timing.motor_speed_deg_s},
          {"encoder_bits", c.timing.encoder_bits},
          {"sample_period_s", c.timing.sample_period_s}}},
        {"alignment_error_max_deg", c.alignment_error_max_deg},
        {"magnet_reset_rate", c.magnet_reset_rate}};
}

/// Parses a config document. All six top-level keys must be present and no
/// other key may appear; nested keys keep their defaults when omitted. The
/// result is validated before being returned.
inline HandConfig config_from_json(const nlohmann::json& j) {
    using detail::read_field;
    detail::reject_unknown_keys(j,
                                {"geometry", "gears", "shaft_map", "timing",
                                 "alignment_error_max_deg", "magnet_reset_rate"},
                                "config");
    for (const char* key : {"geometry", "gears", "shaft_map", "timing", "alignment_error_max_deg",
                            "magnet_reset_rate"}) {
        if (!j.contains(key)) throw ParseError(std::string("config: missing key \"") + key + "\"");
    }
    HandConfig c;
    if (auto it = j.find("geometry"); it != j.end()) {
        detail::reject_unknown_keys(*it,
                                    {"r1_mm", "r2_mm", "r_pitch_mm", "r_roll_mm", "r3_mm",
                                     "link_lengths_mm", "roll_range_deg"},
                                    "geometry");
        read_field(*it, "r1_mm", c.geometry.r1_mm, "geometry");
        read_field(*it, "r2_mm", c.geometry.r2_mm, "geometry");
        read_field(*it, "r_pitch_mm", c.geometry.r_pitch_mm, "geometry");
        read_field(*it, "r_roll_mm", c.geometry.r_roll_mm, "geometry");
        read_field(*it, "r3_mm", c.geometry.r3_mm, "geometry");
        read_field(*it, "link_lengths_mm", c.geometry.link_lengths_mm, "geometry");
        read_field(*it, "roll_range_deg", c.geometry.roll_range_deg, "geometry");
    }
    if (auto it = j.find("gears"); it != j.end()) {
        detail::reject_unknown_keys(*it, {"z1", "z2", "z3", "z4"}, "gears");
        read_field(*it, "z1", c.gears.z1, "gears");
        read_field(*it, "z2", c.gears.z2, "gears");
        read_field(*it, "z3", c.gears.z3, "gears");
        read_field(*it, "z4", c.gears.z4, "gears");
    }
    if (auto it = j.find("shaft_map"); it != j.end()) {
        detail::reject_unknown_keys(
            *it, {"num_shafts", "num_positions", "motor_offsets", "joint_assignment"}, "shaft_map");
        read_field(*it, "num_shafts", c.shaft_map.num_shafts, "shaft_map");
        read_field(*it, "num_positions", c.shaft_map.num_positions, "shaft_map");
        read_field(*it, "motor_offsets", c.shaft_map.motor_offsets, "shaft_map");
        if (auto ja = it->find("joint_assignment"); ja != it->end()) {
            std::set<std::string> allowed;
            for (int f = 0; f < 3; ++f)
                for (int jj = 0; jj < 3; ++jj) allowed.insert(detail::joint_key(f, jj));
            detail::reject_unknown_keys(*ja, allowed, "shaft_map.joint_assignment");
            for (int f = 0; f < 3; ++f)
                for (int jj = 0; jj < 3; ++jj) {
                    int shaft = c.shaft_map.joint_to_shaft[static_cast<std::size_t>(f * 3 + jj)];
                    read_field(*ja, detail::joint_key(f, jj).c_str(), shaft,
                               "shaft_map.joint_assignment");
                    c.shaft_map.joint_to_shaft[static_cast<std::size_t>(f * 3 + jj)] = shaft;
                }
        }
    }
    if (auto it = j.find("timing"); it != j.end()) {
        detail::reject_unknown_keys(*it,
                                    {"spindle_speed_deg_s", "settle_time_s", "motor_speed_deg_s",
                                     "encoder_bits", "sample_period_s"},
                                    "timing");
        read_field(*it, "spindle_speed_deg_s", c.timing.spindle_speed_deg_s, "timing");
        read_field(*it, "settle_time_s", c.timing.settle_time_s, "timing");
        read_field(*it, "motor_speed_deg_s", c.timing.motor_speed_deg_s, "timing");
        read_field(*it, "encoder_bits", c.timing.encoder_bits, "timing");
        read_field(*it, "sample_period_s", c.timing.sample_period_s, "timing");
    }
    read_field(j, "alignment_error_max_deg", c.alignment_error_max_deg, "config");
    read_field(j, "magnet_reset_rate", c.magnet_reset_rate, "config");
    require_valid(c);
    return c;
}

inline HandConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config file " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace tdmhand
