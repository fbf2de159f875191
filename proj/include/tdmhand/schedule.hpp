#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "tdmhand/angles.hpp"
#include "tdmhand/config.hpp"

namespace tdmhand {

/// Target winding-wheel rotation per shaft, wheel-side degrees, signed.
/// Zero means no motion.
struct MotionDemand {
    std::array<double, 9> wheel_deg{};

    bool empty() const {
        for (double d : wheel_deg)
            if (d != 0.0) return false;
        return true;
    }
};

struct MotorRun {
    int motor;
    int shaft;
    double motor_deg; ///< signed rotation at the motor shaft
};

/// One multiplexing phase: park the spindle, engage, run up to 3 motors
/// concurrently. duration_s = reposition + settle + max run time.
struct Phase {
    int position = 0;
    std::vector<MotorRun> runs;
    double duration_s = 0.0;
};

struct Schedule {
    int start_position = 0; ///< spindle position the plan departs from
    std::vector<Phase> phases;
    double makespan_s = 0.0;
};

/// Recomputes total schedule duration from the actual position sequence.
/// Accumulation order matches the executor step for step, so a re-simulation
/// of the schedule reports exactly this value.
inline double makespan(const Schedule& sched, const HandConfig& cfg) {
    double t = 0.0;
    int pos = sched.start_position;
    for (const Phase& ph : sched.phases) {
        t += position_arc_deg(pos, ph.position, cfg.shaft_map.num_positions) /
             cfg.timing.spindle_speed_deg_s;
        pos = ph.position;
        if (!ph.runs.empty()) {
            t += cfg.timing.settle_time_s;
            double run_max = 0.0;
            for (const MotorRun& r : ph.runs) {
                const double rt = std::abs(r.motor_deg) / cfg.timing.motor_speed_deg_s;
                if (rt > run_max) run_max = rt;
            }
            t += run_max;
        }
    }
    return t;
}

inline nlohmann::json schedule_to_json(const Schedule& sched) {
    nlohmann::json phases = nlohmann::json::array();
    for (const Phase& ph : sched.phases) {
        nlohmann::json runs = nlohmann::json::array();
        for (const MotorRun& r : ph.runs)
            runs.push_back({{"motor", r.motor}, {"shaft", r.shaft}, {"motor_deg", r.motor_deg}});
        phases.push_back(
            {{"position", ph.position}, {"runs", runs}, {"duration_s", ph.duration_s}});
    }
    return nlohmann::json{{"phases", phases}, {"makespan_s", sched.makespan_s}};
}

} // namespace tdmhand
