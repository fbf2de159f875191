#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tdmhand/angles.hpp"
#include "tdmhand/config.hpp"
#include "tdmhand/errors.hpp"
#include "tdmhand/schedule.hpp"
#include "tdmhand/state.hpp"

namespace tdmhand {

// State machine of the multiplexing mechanism. Events are strictly sequential
// and totally ordered by the simulation clock; each operation advances
// state.clock_s and returns the elapsed time.
//
// Timing model: engagement waits settle_time_s for the coil to energize and
// the plug to lift; release is the passive drop of the plug and takes no
// simulated time (the worm drive is self-locking, so the shaft holds its
// angle from the instant the motor stops).

/// Deterministic uniform sampler. Draws are reduced to doubles from the raw
/// 64-bit stream so replays are bit-identical on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [-magnitude, +magnitude].
    double uniform_signed(double magnitude) { return (2.0 * uniform() - 1.0) * magnitude; }

private:
    std::mt19937_64 gen_;
};

enum class EventKind { rotate_spindle, engage, disengage, motor_run };

inline const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::rotate_spindle: return "rotate_spindle";
        case EventKind::engage: return "engage";
        case EventKind::disengage: return "disengage";
        case EventKind::motor_run: return "motor_run";
    }
    return "?";
}

struct EngagementEvent {
    EventKind kind;
    std::optional<int> motor;
    std::optional<int> shaft;
    std::optional<double> amount_deg; ///< motor_run only
    double t_start_s = 0.0;
    double duration_s = 0.0;
};

using EventLog = std::vector<EngagementEvent>;

inline nlohmann::json event_to_json(const EngagementEvent& e) {
    nlohmann::json j{{"kind", event_kind_name(e.kind)},
                     {"motor", nullptr},
                     {"shaft", nullptr},
                     {"amount_deg", nullptr},
                     {"t_start_s", e.t_start_s},
                     {"duration_s", e.duration_s}};
    if (e.motor) j["motor"] = *e.motor;
    if (e.shaft) j["shaft"] = *e.shaft;
    if (e.amount_deg) j["amount_deg"] = *e.amount_deg;
    return j;
}

/// JSON-lines event log, one event per line.
inline void write_event_log(std::ostream& os, const EventLog& log) {
    for (const EngagementEvent& e : log) os << event_to_json(e).dump() << "\n";
}

namespace detail {

inline void log_event(EventLog* log, EngagementEvent e) {
    if (log) log->push_back(std::move(e));
}

} // namespace detail

/// Repositions the motor group. Requires all plugs retracted; attempting to
/// rotate while engaged is a mechanical jam.
inline double rotate_spindle(HandState& s, int target, const HandConfig& cfg,
                             EventLog* log = nullptr) {
    if (target < 0 || target >= cfg.shaft_map.num_positions)
        throw StateError("rotate_spindle: position " + std::to_string(target) + " out of range");
    if (s.any_engaged())
        throw StateError("rotate_spindle: motor group still engaged (mechanical jam)");
    const double elapsed = position_arc_deg(s.spindle_position, target,
                                            cfg.shaft_map.num_positions) /
                           cfg.timing.spindle_speed_deg_s;
    if (target != s.spindle_position)
        detail::log_event(log, {EventKind::rotate_spindle, std::nullopt, std::nullopt,
                                std::nullopt, s.clock_s, elapsed});
    s.spindle_position = target;
    s.clock_s += elapsed;
    return elapsed;
}

/// Couples `motor` to the shaft it faces at the current position. Samples the
/// plug/slot alignment error (uniform, motor side) and records it, divided by
/// the reduction ratio, as a one-time wheel offset for the first run.
inline double engage(HandState& s, int motor, Rng& rng, const HandConfig& cfg,
                     EventLog* log = nullptr) {
    auto& slot = s.engaged[static_cast<std::size_t>(motor)];
    if (slot.has_value())
        throw StateError("engage: motor " + std::to_string(motor) + " already engaged");
    const int shaft = cfg.shaft_map.shaft_at(motor, s.spindle_position);
    slot = shaft;
    s.pending_wheel_offset_deg[static_cast<std::size_t>(motor)] =
        rng.uniform_signed(cfg.alignment_error_max_deg) / reduction_ratio(cfg.gears);
    const double elapsed = cfg.timing.settle_time_s;
    detail::log_event(log, {EventKind::engage, motor, shaft, std::nullopt, s.clock_s, elapsed});
    s.clock_s += elapsed;
    return elapsed;
}

/// Retracts the plug of `motor`. The wheel angle of the released shaft is
/// frozen from this instant (worm self-locking).
inline double disengage(HandState& s, int motor, const HandConfig& cfg, EventLog* log = nullptr) {
    auto& slot = s.engaged[static_cast<std::size_t>(motor)];
    if (!slot.has_value())
        throw StateError("disengage: motor " + std::to_string(motor) + " not engaged");
    detail::log_event(log, {EventKind::disengage, motor, *slot, std::nullopt, s.clock_s, 0.0});
    slot.reset();
    s.pending_wheel_offset_deg[static_cast<std::size_t>(motor)] = 0.0;
    (void)cfg;
    return 0.0;
}

/// Runs `motor` by `motor_degrees` at its own shaft. The winding wheel moves
/// by motor_degrees / k plus the pending alignment offset of this engagement.
/// A kinematic-range fault leaves the state untouched.
inline double motor_run(HandState& s, int motor, double motor_degrees, const HandConfig& cfg,
                        EventLog* log = nullptr) {
    const auto& slot = s.engaged[static_cast<std::size_t>(motor)];
    if (!slot.has_value())
        throw StateError("motor_run: motor " + std::to_string(motor) + " not engaged");
    const int shaft = *slot;
    auto& pending = s.pending_wheel_offset_deg[static_cast<std::size_t>(motor)];
    auto& wheel = s.wheel_angle_deg[static_cast<std::size_t>(shaft)];
    const double old_wheel = wheel;
    wheel += motor_degrees / reduction_ratio(cfg.gears) + pending;
    try {
        refresh_joints(s, cfg);
    } catch (const KinematicRangeError&) {
        wheel = old_wheel;
        refresh_joints(s, cfg);
        throw;
    }
    pending = 0.0;
    const double elapsed = std::abs(motor_degrees) / cfg.timing.motor_speed_deg_s;
    detail::log_event(log,
                      {EventKind::motor_run, motor, shaft, motor_degrees, s.clock_s, elapsed});
    s.clock_s += elapsed;
    return elapsed;
}

// ---------------------------------------------------------------------------
// Parallel (per-phase) composition. The three motors are independent, so the
// engagements of one phase overlap (one settle charge) and the runs overlap
// (phase run time = max over motors).
// ---------------------------------------------------------------------------

/// Engages every listed motor simultaneously. Offsets are sampled in motor
/// order so replays are deterministic.
inline double engage_all(HandState& s, std::span<const int> motors, Rng& rng,
                         const HandConfig& cfg, EventLog* log = nullptr) {
    if (motors.empty()) return 0.0;
    for (int m : motors) {
        auto& slot = s.engaged[static_cast<std::size_t>(m)];
        if (slot.has_value())
            throw StateError("engage: motor " + std::to_string(m) + " already engaged");
        const int shaft = cfg.shaft_map.shaft_at(m, s.spindle_position);
        slot = shaft;
        s.pending_wheel_offset_deg[static_cast<std::size_t>(m)] =
            rng.uniform_signed(cfg.alignment_error_max_deg) / reduction_ratio(cfg.gears);
        detail::log_event(log, {EventKind::engage, m, shaft, std::nullopt, s.clock_s,
                                cfg.timing.settle_time_s});
    }
    s.clock_s += cfg.timing.settle_time_s;
    return cfg.timing.settle_time_s;
}

/// Runs all listed motors concurrently; elapsed time is the longest run.
/// A kinematic-range fault leaves the state untouched.
inline double run_all(HandState& s, std::span<const MotorRun> runs, const HandConfig& cfg,
                      EventLog* log = nullptr) {
    const auto old_wheels = s.wheel_angle_deg;
    double longest = 0.0;
    for (const MotorRun& r : runs) {
        const auto& slot = s.engaged[static_cast<std::size_t>(r.motor)];
        if (!slot.has_value())
            throw StateError("motor_run: motor " + std::to_string(r.motor) + " not engaged");
        if (*slot != r.shaft)
            throw StateError("motor_run: motor " + std::to_string(r.motor) +
                             " faces shaft " + std::to_string(*slot) + ", run names shaft " +
                             std::to_string(r.shaft));
        s.wheel_angle_deg[static_cast<std::size_t>(r.shaft)] +=
            r.motor_deg / reduction_ratio(cfg.gears) +
            s.pending_wheel_offset_deg[static_cast<std::size_t>(r.motor)];
        longest = std::max(longest, std::abs(r.motor_deg) / cfg.timing.motor_speed_deg_s);
    }
    try {
        refresh_joints(s, cfg);
    } catch (const KinematicRangeError&) {
        s.wheel_angle_deg = old_wheels;
        refresh_joints(s, cfg);
        throw;
    }
    for (const MotorRun& r : runs) {
        s.pending_wheel_offset_deg[static_cast<std::size_t>(r.motor)] = 0.0;
        detail::log_event(log, {EventKind::motor_run, r.motor, r.shaft, r.motor_deg, s.clock_s,
                                std::abs(r.motor_deg) / cfg.timing.motor_speed_deg_s});
    }
    s.clock_s += longest;
    return longest;
}

inline double disengage_all(HandState& s, const HandConfig& cfg, EventLog* log = nullptr) {
    for (int m = 0; m < 3; ++m)
        if (s.engaged[static_cast<std::size_t>(m)].has_value()) disengage(s, m, cfg, log);
    return 0.0;
}

/// Executes a schedule phase by phase: reposition, engage, run, release.
/// Returns the total elapsed time, which equals makespan(sched, cfg) exactly
/// (same accumulation order).
inline double execute_schedule(HandState& s, const Schedule& sched, const HandConfig& cfg,
                               Rng& rng, EventLog* log = nullptr) {
    if (s.spindle_position != sched.start_position)
        throw StateError("execute_schedule: schedule starts at position " +
                         std::to_string(sched.start_position) + ", spindle is at " +
                         std::to_string(s.spindle_position));
    const double t0 = s.clock_s;
    for (const Phase& ph : sched.phases) {
        rotate_spindle(s, ph.position, cfg, log);
        std::vector<int> motors;
        motors.reserve(ph.runs.size());
        for (const MotorRun& r : ph.runs) motors.push_back(r.motor);
        engage_all(s, motors, rng, cfg, log);
        run_all(s, ph.runs, cfg, log);
        disengage_all(s, cfg, log);
    }
    return s.clock_s - t0;
}

} // namespace tdmhand
