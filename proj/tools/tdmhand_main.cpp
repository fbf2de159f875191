// Command-line surface of the hand simulator: config validation, kinematic
// curve emission, motion planning and script execution.
//
//   tdmhand validate --config hand.json
//   tdmhand curves   [--config hand.json] --out DIR
//   tdmhand plan     [--config ...] [--mode ...] [--chunk DEG] [--out FILE] demand.txt
//   tdmhand run      [--config ...] [--mode ...] [--seed N] --out DIR script.txt
//
// Degrees everywhere at this boundary; all diagnostics go to stderr, all data
// to files or stdout. Exit status is 0 iff no error occurred.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdmhand/config.hpp"
#include "tdmhand/kinematics.hpp"
#include "tdmhand/scheduler.hpp"
#include "tdmhand/script.hpp"

namespace fs = std::filesystem;
using namespace tdmhand;

namespace {

HandConfig load_or_default(const std::string& config_path) {
    if (config_path.empty()) {
        HandConfig cfg;
        require_valid(cfg);
        return cfg;
    }
    return load_config(config_path);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw ParseError("cannot open output file: " + p.string());
    return out;
}

int cmd_validate(const std::string& config_path) {
    try {
        load_config(config_path);
    } catch (const ConfigError& e) {
        for (const auto& v : e.violations()) std::cerr << v << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    std::cout << "configuration valid\n";
    return 0;
}

int cmd_curves(const std::string& config_path, const std::string& out_dir) {
    const HandConfig cfg = load_or_default(config_path);
    fs::create_directories(out_dir);

    auto joint_csv = open_out(fs::path(out_dir) / "joint_curves.csv");
    joint_csv << "phi1_deg,theta1_deg,theta2_deg,theta3_deg\n";
    for (const JointCurveRow& row : sample_joint_curves(cfg.geometry)) {
        joint_csv << detail::fmt_double(row.phi1_deg) << ',' << detail::fmt_double(row.theta1_deg)
                  << ',' << detail::fmt_double(row.theta2_deg) << ','
                  << detail::fmt_double(row.theta3_deg) << '\n';
    }

    auto roll_csv = open_out(fs::path(out_dir) / "roll_curve.csv");
    roll_csv << "phi2_deg,phi3_deg\n";
    for (const RollCurveRow& row : sample_roll_curve(cfg.geometry)) {
        roll_csv << detail::fmt_double(row.phi2_deg) << ',' << detail::fmt_double(row.phi3_deg)
                 << '\n';
    }

    const CurveFits fits = fit_joint_curves(cfg.geometry);
    auto print_fit = [](const char* name, const LinearFit& f) {
        std::cout << name << ": slope=" << detail::fmt_double(f.slope)
                  << " intercept=" << detail::fmt_double(f.intercept)
                  << " r2=" << detail::fmt_double(f.r_squared) << "\n";
    };
    print_fit("theta1 vs phi1", fits.theta1);
    print_fit("theta2 vs phi1", fits.theta2);
    print_fit("theta3 vs phi1", fits.theta3);
    std::cout << "phi3 vs phi2: slope=" << detail::fmt_double(fits.roll_slope) << "\n";
    return 0;
}

int cmd_plan(const std::string& config_path, const std::string& demand_path, PlanMode mode,
             double chunk, const std::string& out_path) {
    const HandConfig cfg = load_or_default(config_path);
    std::ifstream in(demand_path);
    if (!in) throw ParseError("cannot open demand file: " + demand_path);
    const MotionDemand demand = parse_demand(in);
    const Schedule sched = mode == PlanMode::sequential
                               ? plan_sequential(demand, cfg)
                               : plan_interleaved(demand, cfg, chunk);
    const std::string text = schedule_to_json(sched).dump(2);
    if (out_path.empty()) {
        std::cout << text << "\n";
    } else {
        open_out(out_path) << text << "\n";
    }
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& script_path, PlanMode mode,
            double chunk, std::uint64_t seed, const std::string& out_dir) {
    const HandConfig cfg = load_or_default(config_path);
    ScriptOptions opt;
    opt.mode = mode;
    opt.chunk_wheel_deg = chunk;
    opt.seed = seed;
    const ScriptResult result = run_script_file(script_path, cfg, opt);

    fs::create_directories(out_dir);
    auto telemetry = open_out(fs::path(out_dir) / "telemetry.csv");
    write_telemetry_csv(telemetry, result.telemetry);
    auto events = open_out(fs::path(out_dir) / "events.jsonl");
    write_event_log(events, result.events);

    nlohmann::json fingers = nlohmann::json::array();
    for (const FingerPose& p : result.final_state.joints)
        fingers.push_back({{"theta1_deg", p.theta1_deg},
                           {"theta2_deg", p.theta2_deg},
                           {"theta3_deg", p.theta3_deg},
                           {"phi3_deg", p.phi3_deg}});
    std::cout << nlohmann::json{{"clock_s", result.final_state.clock_s}, {"fingers", fingers}}
                     .dump()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic simulator and planner for a 9-cable hand driven by 4 "
                 "time-multiplexed motors"};
    app.require_subcommand(1);

    std::string config_path, input_path, out_path;
    std::string mode_str = "sequential";
    double chunk = 0.0;
    std::uint64_t seed = kDefaultSeed;

    auto* validate = app.add_subcommand("validate", "validate a config file");
    validate->add_option("--config", config_path, "config JSON")->required();

    auto* curves = app.add_subcommand("curves", "emit joint-vs-wheel curve CSVs and fits");
    curves->add_option("--config", config_path, "config JSON");
    curves->add_option("--out", out_path, "output directory")->required();

    auto* plan = app.add_subcommand("plan", "plan a 9-shaft wheel demand");
    plan->add_option("--config", config_path, "config JSON");
    plan->add_option("--mode", mode_str, "sequential|interleaved")
        ->check(CLI::IsMember({"sequential", "interleaved"}));
    plan->add_option("--chunk", chunk, "wheel-side chunk (deg), interleaved mode");
    plan->add_option("--out", out_path, "schedule JSON file (default: stdout)");
    plan->add_option("demand", input_path, "demand file: 9 signed wheel degrees")->required();

    auto* run = app.add_subcommand("run", "execute a motion script");
    run->add_option("--config", config_path, "config JSON");
    run->add_option("--mode", mode_str, "sequential|interleaved")
        ->check(CLI::IsMember({"sequential", "interleaved"}));
    run->add_option("--chunk", chunk, "wheel-side chunk (deg), interleaved mode");
    run->add_option("--seed", seed, "alignment-error RNG seed");
    run->add_option("--out", out_path, "output directory")->required();
    run->add_option("script", input_path, "motion script file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const PlanMode mode =
            mode_str == "interleaved" ? PlanMode::interleaved : PlanMode::sequential;
        for (auto* sub : {plan, run}) {
            if (!sub->parsed()) continue;
            if (mode == PlanMode::interleaved && !(chunk > 0.0))
                throw ParseError("--chunk is required (and must be positive) with "
                                 "--mode interleaved");
            if (mode == PlanMode::sequential && chunk != 0.0)
                throw ParseError("--chunk only applies to --mode interleaved");
        }
        if (validate->parsed()) return cmd_validate(config_path);
        if (curves->parsed()) return cmd_curves(config_path, out_path);
        if (plan->parsed()) return cmd_plan(config_path, input_path, mode, chunk, out_path);
        if (run->parsed()) return cmd_run(config_path, input_path, mode, chunk, seed, out_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
