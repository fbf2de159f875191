#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tdmhand/config.hpp"
#include "tdmhand/schedule.hpp"
#include "tdmhand/state.hpp"
#include "tdmhand/tdmm.hpp"

namespace tdmhand {

// ---------------------------------------------------------------------------
// Encoder model. The magnetic encoders sit on the worm-wheel shafts, so the
// sensed (and quantized) angles are wheel-referenced; joint angles are derived
// analytically. Code 0 is the straight-finger pose.
// ---------------------------------------------------------------------------

inline int encoder_read(double angle_deg, int bits = 14) {
    const long levels = 1L << bits;
    const long code = std::lround(wrap360(angle_deg) / 360.0 * static_cast<double>(levels));
    return static_cast<int>(code % levels);
}

inline double encoder_to_deg(int code, int bits = 14) {
    return static_cast<double>(code) * 360.0 / static_cast<double>(1L << bits);
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

struct TelemetryRecord {
    double t_s = 0.0;
    int spindle_position = 0;
    std::vector<std::pair<int, int>> engaged; ///< (motor, shaft), ascending motor
    std::array<double, 9> wheel_deg{};
    std::array<FingerPose, 3> joints{};
    std::array<int, 9> encoder_codes{};
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

inline std::string telemetry_header() {
    std::string h = "t_s,spindle_pos,engaged";
    for (int s = 0; s < 9; ++s) h += ",wheel_" + std::to_string(s);
    for (int f = 0; f < 3; ++f) {
        const std::string p = ",f" + std::to_string(f) + "_";
        h += p + "th1" + p + "th2" + p + "th3" + p + "phi3";
    }
    for (int s = 0; s < 9; ++s) h += ",enc_" + std::to_string(s);
    return h;
}

inline void write_telemetry_row(std::ostream& os, const TelemetryRecord& r) {
    os << detail::fmt_double(r.t_s) << ',' << r.spindle_position << ',';
    for (std::size_t i = 0; i < r.engaged.size(); ++i) {
        if (i) os << ';';
        os << r.engaged[i].first << ':' << r.engaged[i].second;
    }
    for (double w : r.wheel_deg) os << ',' << detail::fmt_double(w);
    for (const FingerPose& p : r.joints)
        os << ',' << detail::fmt_double(p.theta1_deg) << ',' << detail::fmt_double(p.theta2_deg)
           << ',' << detail::fmt_double(p.theta3_deg) << ',' << detail::fmt_double(p.phi3_deg);
    for (int c : r.encoder_codes) os << ',' << c;
    os << '\n';
}

inline void write_telemetry_csv(std::ostream& os, std::span<const TelemetryRecord> records) {
    os << telemetry_header() << '\n';
    for (const TelemetryRecord& r : records) write_telemetry_row(os, r);
}

// ---------------------------------------------------------------------------
// Disturbances (external forces on the magnetic joints)
// ---------------------------------------------------------------------------

struct Disturbance {
    int finger = 0;
    Joint joint = Joint::pip;
    double offset_deg = 0.0;
    double applied_at_s = 0.0;
    double released_at_s = 0.0; ///< must exceed applied_at_s
};

// ---------------------------------------------------------------------------
// Runtime: discrete-time executor over an event-driven core
// ---------------------------------------------------------------------------

/// Owns one HandState and advances it under enqueued schedules and
/// disturbances. Motion between event boundaries is evaluated analytically
/// (piecewise linear wheel trajectories with precomputed endpoints), so the
/// final state is independent of the step size and sampling never aliases a
/// phase boundary.
class Runtime {
public:
    Runtime(HandConfig cfg, std::uint64_t seed)
        : cfg_(std::move(cfg)), rng_(seed) {
        require_valid(cfg_);
        refresh_joints(state_, cfg_);
    }

    const HandConfig& config() const { return cfg_; }
    const HandState& state() const { return state_; }
    const EventLog& events() const { return log_; }
    Rng& rng() { return rng_; }

    bool idle() const { return segments_.empty(); }

    /// Time at which the queued motion completes (current clock when idle).
    double timeline_end() const { return segments_.empty() ? state_.clock_s : segments_.back().t1; }

    /// Compiles a schedule into the timeline, starting now. Alignment errors
    /// of every engagement are sampled here, in motor order, so a given seed
    /// fixes the whole run. One schedule is active at a time.
    void enqueue(const Schedule& sched) {
        if (!idle()) throw StateError("enqueue: a schedule is already active");
        if (sched.start_position != state_.spindle_position)
            throw StateError("enqueue: schedule starts at position " +
                             std::to_string(sched.start_position) + ", spindle is at " +
                             std::to_string(state_.spindle_position));
        const double k = reduction_ratio(cfg_.gears);
        double t = state_.clock_s;
        int pos = state_.spindle_position;
        std::array<double, 9> wheels = state_.wheel_angle_deg;
        for (const Phase& ph : sched.phases) {
            const double rot = position_arc_deg(pos, ph.position, cfg_.shaft_map.num_positions) /
                               cfg_.timing.spindle_speed_deg_s;
            if (ph.position != pos) {
                log_.push_back({EventKind::rotate_spindle, std::nullopt, std::nullopt,
                                std::nullopt, t, rot});
                segments_.push_back({t, t + rot, EventKind::rotate_spindle, ph.position, {}, {}});
            }
            t += rot;
            pos = ph.position;
            if (ph.runs.empty()) continue;

            Segment eng{t, t + cfg_.timing.settle_time_s, EventKind::engage, -1, {}, {}};
            std::vector<double> offsets;
            for (const MotorRun& r : ph.runs) {
                if (cfg_.shaft_map.shaft_at(r.motor, pos) != r.shaft)
                    throw StateError("enqueue: run motor " + std::to_string(r.motor) +
                                     " does not face shaft " + std::to_string(r.shaft) +
                                     " at position " + std::to_string(pos));
                eng.motors.push_back(r.motor);
                offsets.push_back(rng_.uniform_signed(cfg_.alignment_error_max_deg) / k);
                log_.push_back({EventKind::engage, r.motor, r.shaft, std::nullopt, t,
                                cfg_.timing.settle_time_s});
            }
            segments_.push_back(std::move(eng));
            t += cfg_.timing.settle_time_s;

            Segment run{t, t, EventKind::motor_run, -1, {}, {}};
            double run_max = 0.0;
            for (std::size_t i = 0; i < ph.runs.size(); ++i) {
                const MotorRun& r = ph.runs[i];
                const double dur = std::abs(r.motor_deg) / cfg_.timing.motor_speed_deg_s;
                run_max = std::max(run_max, dur);
                const auto shaft = static_cast<std::size_t>(r.shaft);
                RunTrack track;
                track.motor = r.motor;
                track.shaft = r.shaft;
                track.t0 = t;
                track.t1 = t + dur;
                // The engagement's alignment offset is absorbed over the run,
                // so interpolated angles stay between the (valid) endpoints.
                // Grouping matches run_all's accumulation bit for bit.
                track.start_deg = wheels[shaft];
                track.end_deg = wheels[shaft] + (r.motor_deg / k + offsets[i]);
                wheels[shaft] = track.end_deg;
                run.tracks.push_back(track);
                log_.push_back({EventKind::motor_run, r.motor, r.shaft, r.motor_deg, t, dur});
            }
            run.t1 = t + run_max;
            segments_.push_back(std::move(run));
            t += run_max;

            Segment dis{t, t, EventKind::disengage, -1, {}, {}};
            for (const MotorRun& r : ph.runs) {
                dis.motors.push_back(r.motor);
                log_.push_back({EventKind::disengage, r.motor, r.shaft, std::nullopt, t, 0.0});
            }
            segments_.push_back(std::move(dis));
        }
    }

    /// Advances the clock by dt, progressing the active schedule and decaying
    /// released disturbance offsets.
    void step(double dt) {
        if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
        advance_to(state_.clock_s + dt);
    }

    /// Applies a constant joint offset from now until now + duration; after
    /// release the offset decays as exp(-magnet_reset_rate * t).
    void apply_disturbance(int finger, Joint joint, double offset_deg, double duration_s) {
        if (finger < 0 || finger > 2) throw StateError("disturbance: finger out of range");
        if (!(duration_s > 0.0)) throw StateError("disturbance: duration must be positive");
        for (const Disturbance& d : disturbances_) {
            if (d.finger == finger && d.joint == joint && state_.clock_s < d.released_at_s)
                throw StateError("disturbance: joint finger " + std::to_string(finger) + " " +
                                 joint_name(joint) + " already disturbed");
        }
        disturbances_.push_back(
            {finger, joint, offset_deg, state_.clock_s, state_.clock_s + duration_s});
        refresh_disturbances();
        refresh_joints(state_, cfg_);
    }

    /// Ends the active disturbance on (finger, joint) now; decay starts here.
    void release_disturbance(int finger, Joint joint) {
        for (Disturbance& d : disturbances_) {
            if (d.finger == finger && d.joint == joint && state_.clock_s < d.released_at_s) {
                d.released_at_s = state_.clock_s;
                return;
            }
        }
        throw StateError("release_disturbance: no active disturbance on finger " +
                         std::to_string(finger) + " " + joint_name(joint));
    }

    TelemetryRecord sample() const {
        TelemetryRecord r;
        r.t_s = state_.clock_s;
        r.spindle_position = state_.spindle_position;
        for (int m = 0; m < 3; ++m)
            if (state_.engaged[static_cast<std::size_t>(m)])
                r.engaged.emplace_back(m, *state_.engaged[static_cast<std::size_t>(m)]);
        r.wheel_deg = state_.wheel_angle_deg;
        r.joints = state_.joints;
        for (std::size_t s = 0; s < 9; ++s)
            r.encoder_codes[s] = encoder_read(state_.wheel_angle_deg[s], cfg_.timing.encoder_bits);
        return r;
    }

private:
    struct RunTrack {
        int motor = 0;
        int shaft = 0;
        double t0 = 0.0, t1 = 0.0;
        double start_deg = 0.0, end_deg = 0.0;
    };
    struct Segment {
        double t0 = 0.0, t1 = 0.0;
        EventKind kind = EventKind::rotate_spindle;
        int rotate_target = -1;
        std::vector<int> motors;
        std::vector<RunTrack> tracks;
    };

    void complete(const Segment& seg) {
        switch (seg.kind) {
            case EventKind::rotate_spindle:
                state_.spindle_position = seg.rotate_target;
                break;
            case EventKind::engage:
                for (int m : seg.motors)
                    state_.engaged[static_cast<std::size_t>(m)] =
                        cfg_.shaft_map.shaft_at(m, state_.spindle_position);
                break;
            case EventKind::motor_run:
                for (const RunTrack& tr : seg.tracks)
                    state_.wheel_angle_deg[static_cast<std::size_t>(tr.shaft)] = tr.end_deg;
                break;
            case EventKind::disengage:
                for (int m : seg.motors) state_.engaged[static_cast<std::size_t>(m)].reset();
                break;
        }
    }

    void advance_to(double t) {
        while (!segments_.empty() && segments_.front().t1 <= t) {
            complete(segments_.front());
            segments_.pop_front();
        }
        if (!segments_.empty() && segments_.front().t0 <= t &&
            segments_.front().kind == EventKind::motor_run) {
            for (const RunTrack& tr : segments_.front().tracks) {
                const auto shaft = static_cast<std::size_t>(tr.shaft);
                if (t >= tr.t1) {
                    state_.wheel_angle_deg[shaft] = tr.end_deg;
                } else {
                    const double frac = (tr.t1 > tr.t0) ? (t - tr.t0) / (tr.t1 - tr.t0) : 1.0;
                    state_.wheel_angle_deg[shaft] =
                        tr.start_deg + (tr.end_deg - tr.start_deg) * frac;
                }
            }
        }
        state_.clock_s = t;
        refresh_disturbances();
        refresh_joints(state_, cfg_);
    }

    void refresh_disturbances() {
        for (auto& per_finger : state_.disturbance_deg) per_finger.fill(0.0);
        const double t = state_.clock_s;
        for (const Disturbance& d : disturbances_) {
            double value = 0.0;
            if (t >= d.applied_at_s && t < d.released_at_s) {
                value = d.offset_deg;
            } else if (t >= d.released_at_s) {
                value = d.offset_deg * std::exp(-cfg_.magnet_reset_rate * (t - d.released_at_s));
                if (std::abs(value) < 1e-15) value = 0.0;
            }
            state_.disturbance_deg[static_cast<std::size_t>(d.finger)]
                                  [static_cast<std::size_t>(d.joint)] += value;
        }
    }

    HandConfig cfg_;
    HandState state_;
    Rng rng_;
    EventLog log_;
    std::deque<Segment> segments_;
    std::vector<Disturbance> disturbances_;
};

} // namespace tdmhand
