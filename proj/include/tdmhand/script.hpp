#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tdmhand/scheduler.hpp"
#include "tdmhand/sim.hpp"

namespace tdmhand {

/// Default seed of the alignment-error stream; fixed so shipped demos are
/// reproducible run to run.
inline constexpr std::uint64_t kDefaultSeed = 103;

enum class PlanMode { sequential, interleaved };

// ---------------------------------------------------------------------------
// Motion script: line oriented.
//   pose <9 joint targets deg>            f0 pip,pitch,roll f1 ... f2 ...
//   move <finger 0-2> <pip|pitch|roll> <deg>
//   wait <seconds>
//   disturb <finger 0-2> <dip|pip|pitch|roll> <deg> <duration_s>
//   # comment / blank lines ignored
// ---------------------------------------------------------------------------

struct PoseCommand {
    std::array<double, 9> joint_targets_deg{};
};
struct MoveCommand {
    int finger = 0;
    int active_joint = 0; ///< 0:pip 1:pitch 2:roll
    double target_deg = 0.0;
};
struct WaitCommand {
    double seconds = 0.0;
};
struct DisturbCommand {
    int finger = 0;
    Joint joint = Joint::pip;
    double offset_deg = 0.0;
    double duration_s = 0.0;
};

struct ScriptCommand {
    int line = 0;
    std::variant<PoseCommand, MoveCommand, WaitCommand, DisturbCommand> op;
};

namespace detail {

inline int parse_finger(const std::string& tok, int line) {
    std::string t = tok;
    if (!t.empty() && (t[0] == 'f' || t[0] == 'F')) t = t.substr(1);
    if (t == "0") return 0;
    if (t == "1") return 1;
    if (t == "2") return 2;
    throw ParseError("script line " + std::to_string(line) + ": bad finger \"" + tok + "\"");
}

inline double parse_number(const std::string& tok, int line, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("script line " + std::to_string(line) + ": bad " + what + " \"" + tok +
                         "\"");
    }
}

} // namespace detail

inline std::vector<ScriptCommand> parse_script(std::istream& in) {
    std::vector<ScriptCommand> cmds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) {
            if (t[0] == '#') break;
            tok.push_back(t);
        }
        if (tok.empty()) continue;
        const std::string& verb = tok[0];
        if (verb == "pose") {
            if (tok.size() != 10)
                throw ParseError("script line " + std::to_string(lineno) +
                                 ": pose needs 9 joint targets");
            PoseCommand c;
            for (std::size_t i = 0; i < 9; ++i)
                c.joint_targets_deg[i] = detail::parse_number(tok[i + 1], lineno, "joint target");
            cmds.push_back({lineno, c});
        } else if (verb == "move") {
            if (tok.size() != 4)
                throw ParseError("script line " + std::to_string(lineno) +
                                 ": move needs <finger> <joint> <deg>");
            MoveCommand c;
            c.finger = detail::parse_finger(tok[1], lineno);
            if (tok[2] == "pip") c.active_joint = 0;
            else if (tok[2] == "pitch") c.active_joint = 1;
            else if (tok[2] == "roll") c.active_joint = 2;
            else
                throw ParseError("script line " + std::to_string(lineno) + ": bad joint \"" +
                                 tok[2] + "\" (pip|pitch|roll)");
            c.target_deg = detail::parse_number(tok[3], lineno, "angle");
            cmds.push_back({lineno, c});
        } else if (verb == "wait") {
            if (tok.size() != 2)
                throw ParseError("script line " + std::to_string(lineno) + ": wait needs <s>");
            WaitCommand c;
            c.seconds = detail::parse_number(tok[1], lineno, "duration");
            if (!(c.seconds > 0.0))
                throw ParseError("script line " + std::to_string(lineno) +
                                 ": wait duration must be positive");
            cmds.push_back({lineno, c});
        } else if (verb == "disturb") {
            if (tok.size() != 5)
                throw ParseError("script line " + std::to_string(lineno) +
                                 ": disturb needs <finger> <joint> <deg> <duration_s>");
            DisturbCommand c;
            c.finger = detail::parse_finger(tok[1], lineno);
            if (tok[2] == "dip") c.joint = Joint::dip;
            else if (tok[2] == "pip") c.joint = Joint::pip;
            else if (tok[2] == "pitch") c.joint = Joint::pitch;
            else if (tok[2] == "roll") c.joint = Joint::roll;
            else
                throw ParseError("script line " + std::to_string(lineno) + ": bad joint \"" +
                                 tok[2] + "\"");
            c.offset_deg = detail::parse_number(tok[3], lineno, "offset");
            c.duration_s = detail::parse_number(tok[4], lineno, "duration");
            if (!(c.duration_s > 0.0))
                throw ParseError("script line " + std::to_string(lineno) +
                                 ": disturb duration must be positive");
            cmds.push_back({lineno, c});
        } else {
            throw ParseError("script line " + std::to_string(lineno) + ": unknown command \"" +
                             verb + "\"");
        }
    }
    return cmds;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct ScriptOptions {
    PlanMode mode = PlanMode::sequential;
    double chunk_wheel_deg = 10.0; ///< used when mode == interleaved
    std::uint64_t seed = kDefaultSeed;
};

struct ScriptResult {
    std::vector<TelemetryRecord> telemetry;
    HandState final_state;
    EventLog events;
};

namespace detail {

/// Wheel-angle target for one active joint; errors name finger and joint.
inline double wheel_target_deg(int finger, int active_joint, double target_deg,
                               const FingerGeometry& g) {
    const char* names[3] = {"pip", "pitch", "roll"};
    try {
        switch (active_joint) {
            case 0: return inverse_pip_deg(target_deg, g.r2_mm, g.r3_mm);
            case 1: return inverse_pitch_deg(target_deg, g.r_pitch_mm, g.r3_mm);
            default: {
                if (std::abs(target_deg) > g.roll_range_deg + 1e-9)
                    throw KinematicRangeError("phi3=" + std::to_string(target_deg) +
                                              " deg outside the +/-" +
                                              std::to_string(g.roll_range_deg) + " roll range");
                return inverse_roll_deg(target_deg, g.r3_mm, g.r_roll_mm);
            }
        }
    } catch (const KinematicRangeError& e) {
        throw KinematicRangeError("finger " + std::to_string(finger) + " " +
                                  names[static_cast<std::size_t>(active_joint)] + ": " + e.what());
    }
}

} // namespace detail

/// Compiles and executes a motion script: pose/move commands are planned
/// (mode per option) against the current wheel state and run through the
/// multiplexing timeline; telemetry is sampled on the fixed global grid
/// t = n * sample_period. Deterministic for a given seed.
inline ScriptResult run_script(std::istream& script, const HandConfig& cfg,
                               const ScriptOptions& opt = {}) {
    const auto cmds = parse_script(script);
    Runtime rt(cfg, opt.seed);
    ScriptResult result;
    result.telemetry.push_back(rt.sample());

    const double period = cfg.timing.sample_period_s;
    long next_tick = 1;
    auto advance_to = [&](double t_end) {
        while (static_cast<double>(next_tick) * period <= t_end + 1e-12) {
            const double tk = static_cast<double>(next_tick) * period;
            if (tk > rt.state().clock_s) rt.step(tk - rt.state().clock_s);
            result.telemetry.push_back(rt.sample());
            ++next_tick;
        }
        if (rt.state().clock_s < t_end) rt.step(t_end - rt.state().clock_s);
    };

    auto plan_and_run = [&](const MotionDemand& demand) {
        PlanOptions popt;
        popt.start_position = rt.state().spindle_position;
        popt.initial_wheel_deg = rt.state().wheel_angle_deg;
        const Schedule sched = opt.mode == PlanMode::sequential
                                   ? plan_sequential(demand, cfg, popt)
                                   : plan_interleaved(demand, cfg, opt.chunk_wheel_deg, popt);
        rt.enqueue(sched);
        advance_to(rt.timeline_end());
    };

    for (const ScriptCommand& cmd : cmds) {
        try {
            if (const auto* pose = std::get_if<PoseCommand>(&cmd.op)) {
                MotionDemand demand;
                for (int f = 0; f < 3; ++f) {
                    for (int j = 0; j < 3; ++j) {
                        const double target = detail::wheel_target_deg(
                            f, j, pose->joint_targets_deg[static_cast<std::size_t>(f * 3 + j)],
                            cfg.geometry);
                        const auto shaft = static_cast<std::size_t>(cfg.shaft_map.shaft_of(f, j));
                        double delta = target - rt.state().wheel_angle_deg[shaft];
                        if (std::abs(delta) < 1e-12) delta = 0.0; // ignore numeric dust
                        demand.wheel_deg[shaft] = delta;
                    }
                }
                plan_and_run(demand);
            } else if (const auto* move = std::get_if<MoveCommand>(&cmd.op)) {
                const double target = detail::wheel_target_deg(
                    move->finger, move->active_joint, move->target_deg, cfg.geometry);
                const auto shaft =
                    static_cast<std::size_t>(cfg.shaft_map.shaft_of(move->finger,
                                                                    move->active_joint));
                MotionDemand demand;
                double delta = target - rt.state().wheel_angle_deg[shaft];
                if (std::abs(delta) < 1e-12) delta = 0.0;
                demand.wheel_deg[shaft] = delta;
                plan_and_run(demand);
            } else if (const auto* wait = std::get_if<WaitCommand>(&cmd.op)) {
                advance_to(rt.state().clock_s + wait->seconds);
            } else if (const auto* dist = std::get_if<DisturbCommand>(&cmd.op)) {
                rt.apply_disturbance(dist->finger, dist->joint, dist->offset_deg,
                                     dist->duration_s);
            }
        } catch (const KinematicRangeError& e) {
            throw KinematicRangeError("script line " + std::to_string(cmd.line) + ": " + e.what());
        }
    }
    result.final_state = rt.state();
    result.events = rt.events();
    return result;
}

inline ScriptResult run_script_file(const std::filesystem::path& path, const HandConfig& cfg,
                                    const ScriptOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open script file: " + path.string());
    return run_script(in, cfg, opt);
}

} // namespace tdmhand
