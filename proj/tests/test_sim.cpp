#include <doctest.h>

#include <cmath>
#include <random>

#include "tdmhand/scheduler.hpp"
#include "tdmhand/sim.hpp"
#include "test_util.hpp"

using namespace tdmhand;

TEST_CASE("encoder quantization") {
    CHECK(encoder_read(0.0) == 0);
    CHECK(encoder_read(180.0) == 8192);
    CHECK(encoder_read(360.0) == 0);
    CHECK(encoder_read(-90.0) == encoder_read(270.0));
    CHECK(encoder_read(719.999999) == encoder_read(-0.000001));

    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> angle(-2000.0, 2000.0);
    const double step = 360.0 / 16384.0;
    for (int i = 0; i < 10000; ++i) {
        const double a = angle(gen);
        const int code = encoder_read(a);
        CHECK(code >= 0);
        CHECK(code < 16384);
        double err = std::abs(encoder_to_deg(code) - wrap360(a));
        err = std::min(err, 360.0 - err); // codes wrap at the seam
        CHECK(err <= step);
    }
}

TEST_CASE("encoder respects the configured bit depth") {
    CHECK(encoder_read(180.0, 8) == 128);
    CHECK(encoder_read(359.9999, 8) == 0); // rounds up to the wrap
}

TEST_CASE("idle step advances only the clock") {
    Runtime rt(HandConfig{}, 1);
    const HandState before = rt.state();
    rt.step(0.25);
    rt.step(1.0);
    const HandState& after = rt.state();
    CHECK(after.clock_s == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(after.wheel_angle_deg == before.wheel_angle_deg);
    CHECK(after.spindle_position == before.spindle_position);
    CHECK(after.engaged == before.engaged);
    CHECK_THROWS_AS(rt.step(0.0), std::invalid_argument);
    CHECK_THROWS_AS(rt.step(-1.0), std::invalid_argument);
}

TEST_CASE("released disturbance halves every ln(2)/rate") {
    HandConfig cfg;
    cfg.magnet_reset_rate = 1.0;
    Runtime rt(cfg, 1);
    rt.apply_disturbance(0, Joint::pip, 10.0, 0.5);
    rt.step(0.5); // release boundary
    rt.step(std::log(2.0));
    CHECK(rt.state().disturbance_deg[0][static_cast<std::size_t>(Joint::pip)] ==
          doctest::Approx(5.0).epsilon(1e-9));
    CHECK(rt.state().joints[0].theta2_deg == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("disturbance while active holds, decays only after release") {
    HandConfig cfg;
    cfg.magnet_reset_rate = 2.0;
    Runtime rt(cfg, 1);
    rt.apply_disturbance(1, Joint::pitch, 15.0, 1.0);
    rt.step(0.6);
    CHECK(rt.state().disturbance_deg[1][static_cast<std::size_t>(Joint::pitch)] == 15.0);
    // 5 time constants after release: residual below 0.11 deg (15 * e^-5).
    rt.step(0.4 + 5.0 / cfg.magnet_reset_rate);
    const double residual = rt.state().disturbance_deg[1][static_cast<std::size_t>(Joint::pitch)];
    CHECK(residual < 0.11);
    CHECK(residual > 0.0);
    CHECK(residual == doctest::Approx(15.0 * std::exp(-5.0)).epsilon(1e-9));
}

TEST_CASE("an immediately released disturbance vanishes with a fast magnet") {
    HandConfig cfg;
    cfg.magnet_reset_rate = 1e9;
    Runtime rt(cfg, 1);
    rt.apply_disturbance(2, Joint::dip, 20.0, 1e-6);
    rt.step(1e-6); // release
    rt.step(0.001);
    CHECK(rt.state().disturbance_deg[2][static_cast<std::size_t>(Joint::dip)] == 0.0);
    CHECK(rt.state().joints[2].theta1_deg == 0.0);
}

TEST_CASE("a DIP disturbance shifts only the DIP joint") {
    Runtime rt(HandConfig{}, 1);
    rt.apply_disturbance(0, Joint::dip, 12.0, 1.0);
    const FingerPose& f0 = rt.state().joints[0];
    CHECK(f0.theta1_deg == 12.0);
    CHECK(f0.theta2_deg == 0.0);
    CHECK(f0.theta3_deg == 0.0);
    CHECK(f0.phi3_deg == 0.0);
    CHECK(rt.state().joints[1].theta1_deg == 0.0);
}

TEST_CASE("overlapping disturbances on one joint are rejected") {
    Runtime rt(HandConfig{}, 1);
    rt.apply_disturbance(0, Joint::pip, 5.0, 1.0);
    CHECK_THROWS_AS(rt.apply_disturbance(0, Joint::pip, 3.0, 0.5), StateError);
    rt.apply_disturbance(0, Joint::pitch, 3.0, 0.5); // other joint fine
    rt.step(2.0);
    rt.apply_disturbance(0, Joint::pip, 3.0, 0.5); // previous one released
    CHECK_THROWS_AS(rt.release_disturbance(1, Joint::pip), StateError);
    rt.release_disturbance(0, Joint::pip);
}

TEST_CASE("schedule execution timeline: boundary-exact stepping") {
    HandConfig cfg;
    cfg.alignment_error_max_deg = 0.0;
    MotionDemand d;
    d.wheel_deg[0] = 30.0;
    d.wheel_deg[1] = 20.0;
    const Schedule sched = plan_sequential(d, cfg);

    // One big step vs many small ones land on identical state.
    Runtime coarse(cfg, 5);
    coarse.enqueue(sched);
    const double end = coarse.timeline_end();
    coarse.step(end + 0.1);

    Runtime fine(cfg, 5);
    fine.enqueue(sched);
    const int n = 1000;
    for (int i = 0; i < n; ++i) fine.step((end + 0.1) / n);

    for (int s = 0; s < 9; ++s)
        CHECK(std::abs(coarse.state().wheel_angle_deg[static_cast<std::size_t>(s)] -
                       fine.state().wheel_angle_deg[static_cast<std::size_t>(s)]) <= 1e-9);
    CHECK(coarse.state().wheel_angle_deg[0] == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(coarse.state().wheel_angle_deg[1] == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(coarse.state().spindle_position == fine.state().spindle_position);
    CHECK(coarse.idle());
    CHECK(fine.idle());
}

TEST_CASE("a step across a phase boundary splits exactly at the boundary") {
    HandConfig cfg;
    cfg.alignment_error_max_deg = 0.0;
    MotionDemand d;
    d.wheel_deg[0] = 10.0;
    const Schedule sched = plan_sequential(d, cfg);
    REQUIRE(sched.phases.size() == 1);
    const double settle_end = cfg.timing.settle_time_s; // position 0: no rotation first

    Runtime split(cfg, 1);
    split.enqueue(sched);
    split.step(settle_end);          // exactly at engage completion
    split.step(0.02);                // into the run
    Runtime whole(cfg, 1);
    whole.enqueue(sched);
    whole.step(settle_end + 0.02);   // same instant in one step
    CHECK(split.state().wheel_angle_deg[0] == whole.state().wheel_angle_deg[0]);
    CHECK(split.state().clock_s == whole.state().clock_s);
    // Mid-run the wheel has moved but not completed.
    CHECK(whole.state().wheel_angle_deg[0] > 0.0);
    CHECK(whole.state().wheel_angle_deg[0] < 10.0);
    // Motors are engaged during the run window.
    CHECK(whole.state().engaged_count() == 1);
}

TEST_CASE("energy-free holding under arbitrary step sequences") {
    HandConfig cfg;
    cfg.alignment_error_max_deg = 0.0;
    MotionDemand d;
    d.wheel_deg[4] = 25.0;
    Runtime rt(cfg, 2);
    rt.enqueue(plan_sequential(d, cfg));
    rt.step(rt.timeline_end() + 1.0);
    const HandState settled = rt.state();

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> dt(1e-4, 0.7);
    for (int i = 0; i < 50; ++i) rt.step(dt(gen));
    CHECK(rt.state().wheel_angle_deg == settled.wheel_angle_deg);
    CHECK(rt.state().spindle_position == settled.spindle_position);
    CHECK(rt.state().joints[1].theta3_deg == settled.joints[1].theta3_deg);
    CHECK(rt.state().clock_s > settled.clock_s);
}

TEST_CASE("telemetry joints equal FK(wheel) plus active disturbance") {
    HandConfig cfg;
    MotionDemand d;
    d.wheel_deg[0] = 20.0;
    Runtime rt(cfg, 3);
    rt.apply_disturbance(0, Joint::pip, 4.0, 100.0);
    rt.enqueue(plan_sequential(d, cfg, PlanOptions{}));
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> dt(1e-3, 0.05);
    while (!rt.idle()) {
        rt.step(dt(gen));
        const TelemetryRecord rec = rt.sample();
        for (int f = 0; f < 3; ++f) {
            const FingerPose fk = forward_finger(finger_wheels(rt.state(), cfg, f), cfg.geometry);
            const auto& dist = rt.state().disturbance_deg[static_cast<std::size_t>(f)];
            CHECK(rec.joints[static_cast<std::size_t>(f)].theta2_deg ==
                  doctest::Approx(fk.theta2_deg + dist[1]).epsilon(1e-12));
            CHECK(rec.joints[static_cast<std::size_t>(f)].theta1_deg ==
                  doctest::Approx(fk.theta1_deg + dist[0]).epsilon(1e-12));
        }
        for (std::size_t s = 0; s < 9; ++s)
            CHECK(rec.encoder_codes[s] ==
                  encoder_read(rec.wheel_deg[s], cfg.timing.encoder_bits));
    }
}

TEST_CASE("telemetry CSV layout") {
    Runtime rt(HandConfig{}, 1);
    const std::string header = telemetry_header();
    CHECK(header.rfind("t_s,spindle_pos,engaged", 0) == 0);
    CHECK(header.find("wheel_0") != std::string::npos);
    CHECK(header.find("wheel_8") != std::string::npos);
    CHECK(header.find("f0_th1") != std::string::npos);
    CHECK(header.find("f2_phi3") != std::string::npos);
    CHECK(header.find("enc_0") != std::string::npos);
    CHECK(header.find("enc_8") != std::string::npos);

    // 3 + 9 + 12 + 9 columns.
    const auto cols = 1 + std::count(header.begin(), header.end(), ',');
    CHECK(cols == 33);

    std::ostringstream os;
    const std::vector<TelemetryRecord> recs{rt.sample()};
    write_telemetry_csv(os, recs);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == header);
    std::getline(is, line);
    CHECK(1 + std::count(line.begin(), line.end(), ',') == 33);
}

TEST_CASE("runtime timeline and direct tdmm execution agree bit for bit") {
    HandConfig cfg; // alignment errors ON: both paths must sample identically
    MotionDemand d;
    d.wheel_deg[0] = 30.0;
    d.wheel_deg[4] = 18.0;
    d.wheel_deg[8] = -25.0;
    const Schedule sched = plan_sequential(d, cfg);
    const std::uint64_t seed = 4242;

    Runtime rt(cfg, seed);
    rt.enqueue(sched);
    rt.step(rt.timeline_end() - rt.state().clock_s);

    HandState direct;
    refresh_joints(direct, cfg);
    Rng rng(seed);
    EventLog direct_log;
    execute_schedule(direct, sched, cfg, rng, &direct_log);

    CHECK(rt.state().wheel_angle_deg == direct.wheel_angle_deg);
    CHECK(rt.state().clock_s == direct.clock_s);
    CHECK(rt.state().spindle_position == direct.spindle_position);

    const EventLog& timeline_log = rt.events();
    REQUIRE(timeline_log.size() == direct_log.size());
    for (std::size_t i = 0; i < direct_log.size(); ++i) {
        CHECK(timeline_log[i].kind == direct_log[i].kind);
        CHECK(timeline_log[i].motor == direct_log[i].motor);
        CHECK(timeline_log[i].shaft == direct_log[i].shaft);
        CHECK(timeline_log[i].amount_deg == direct_log[i].amount_deg);
        CHECK(timeline_log[i].t_start_s == direct_log[i].t_start_s);
        CHECK(timeline_log[i].duration_s == direct_log[i].duration_s);
    }
}

TEST_CASE("runtime rejects stacked schedules and mismatched start position") {
    HandConfig cfg;
    cfg.alignment_error_max_deg = 0.0;
    MotionDemand d;
    d.wheel_deg[1] = 5.0;
    Runtime rt(cfg, 1);
    rt.enqueue(plan_sequential(d, cfg));
    CHECK_THROWS_AS(rt.enqueue(plan_sequential(d, cfg)), StateError);
    rt.step(rt.timeline_end() + 1e-9);

    MotionDemand d2;
    d2.wheel_deg[2] = 5.0;
    Schedule wrong = plan_sequential(d2, cfg); // assumes start position 0
    REQUIRE(rt.state().spindle_position != 0);
    CHECK_THROWS_AS(rt.enqueue(wrong), StateError);
}
