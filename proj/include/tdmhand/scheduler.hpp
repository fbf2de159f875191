#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tdmhand/errors.hpp"
#include "tdmhand/kinematics.hpp"
#include "tdmhand/schedule.hpp"

namespace tdmhand {

// Converts a 9-shaft motion demand into a sequence of phases, choosing the
// phase order and the concrete spindle position inside each position class
// to minimize makespan. Planning is a pure function of (demand, config,
// options); returned schedules are immutable.

struct PlanOptions {
    int start_position = 0;
    std::array<double, 9> initial_wheel_deg{};
};

/// One position class: the set of shafts reachable together, plus every
/// spindle position exposing that set.
struct PositionClass {
    std::array<int, 3> shafts;       ///< sorted engaged set
    std::vector<int> positions;      ///< ascending
};

inline std::vector<PositionClass> position_classes(const ShaftMap& m) {
    std::map<std::array<int, 3>, std::vector<int>> by_set;
    for (int p = 0; p < m.num_positions; ++p) {
        auto set = m.engaged_set(p);
        std::sort(set.begin(), set.end());
        by_set[set].push_back(p);
    }
    std::vector<PositionClass> out;
    out.reserve(by_set.size());
    for (auto& [set, positions] : by_set) out.push_back({set, std::move(positions)});
    // Deterministic order: by first exposing position.
    std::sort(out.begin(), out.end(),
              [](const PositionClass& a, const PositionClass& b) {
                  return a.positions.front() < b.positions.front();
              });
    return out;
}

/// Rejects demands whose resulting wheel angles leave the kinematic domain.
/// Errors name the finger and joint.
inline void validate_demand(const MotionDemand& demand, const HandConfig& cfg,
                            const std::array<double, 9>& initial_wheel_deg) {
    constexpr double kTol = 1e-9;
    for (int f = 0; f < 3; ++f) {
        for (int j = 0; j < 3; ++j) {
            const auto shaft = static_cast<std::size_t>(cfg.shaft_map.shaft_of(f, j));
            if (demand.wheel_deg[shaft] == 0.0) continue;
            const double target = initial_wheel_deg[shaft] + demand.wheel_deg[shaft];
            const char* names[3] = {"pip", "pitch", "roll"};
            std::string who = "finger " + std::to_string(f) + " " + names[j];
            if (j == 0 && (target < -kTol || target > pip_wheel_limit_deg(cfg.geometry) + kTol))
                throw KinematicRangeError(who + ": wheel target " + std::to_string(target) +
                                          " deg outside [0, " +
                                          std::to_string(pip_wheel_limit_deg(cfg.geometry)) + "]");
            if (j == 1 && (target < -kTol || target > pitch_wheel_limit_deg(cfg.geometry) + kTol))
                throw KinematicRangeError(who + ": wheel target " + std::to_string(target) +
                                          " deg outside [0, " +
                                          std::to_string(pitch_wheel_limit_deg(cfg.geometry)) +
                                          "]");
            if (j == 2 && std::abs(target) > roll_wheel_limit_deg(cfg.geometry) + kTol)
                throw KinematicRangeError(who + ": wheel target " + std::to_string(target) +
                                          " deg outside +/-" +
                                          std::to_string(roll_wheel_limit_deg(cfg.geometry)));
        }
    }
}

namespace detail {

// Needed classes with their demanded shafts. Classes are chosen greedily to
// cover all demanded shafts (with the default map each shaft lives in exactly
// one class, so this is simply the partition restricted to the demand).
struct NeededClass {
    PositionClass cls;
    std::vector<int> shafts; ///< demanded shafts served in this class
};

inline std::vector<NeededClass> needed_classes(const MotionDemand& demand, const ShaftMap& map) {
    const auto classes = position_classes(map);
    std::vector<int> wanted;
    for (int s = 0; s < 9; ++s)
        if (demand.wheel_deg[static_cast<std::size_t>(s)] != 0.0) wanted.push_back(s);

    std::vector<NeededClass> out;
    std::vector<bool> covered(9, false);
    auto uncovered_in = [&](const PositionClass& c) {
        std::vector<int> hit;
        for (int s : wanted)
            if (!covered[static_cast<std::size_t>(s)] &&
                std::find(c.shafts.begin(), c.shafts.end(), s) != c.shafts.end())
                hit.push_back(s);
        return hit;
    };
    while (true) {
        std::size_t best = classes.size();
        std::vector<int> best_hit;
        for (std::size_t i = 0; i < classes.size(); ++i) {
            auto hit = uncovered_in(classes[i]);
            if (hit.size() > best_hit.size()) {
                best = i;
                best_hit = std::move(hit);
            }
        }
        if (best == classes.size() || best_hit.empty()) break;
        for (int s : best_hit) covered[static_cast<std::size_t>(s)] = true;
        out.push_back({classes[best], std::move(best_hit)});
    }
    // Keep a deterministic base order.
    std::sort(out.begin(), out.end(), [](const NeededClass& a, const NeededClass& b) {
        return a.cls.positions.front() < b.cls.positions.front();
    });
    return out;
}

inline double phase_run_time(const NeededClass& nc, const MotionDemand& demand,
                             const HandConfig& cfg) {
    const double k = reduction_ratio(cfg.gears);
    double longest = 0.0;
    for (int s : nc.shafts)
        longest = std::max(longest, std::abs(demand.wheel_deg[static_cast<std::size_t>(s)] * k) /
                                        cfg.timing.motor_speed_deg_s);
    return longest;
}

// Candidate tour: visiting order of the needed classes plus the concrete
// position chosen inside each class.
struct Tour {
    std::vector<std::size_t> order;
    std::vector<int> positions; ///< positions[i] chosen for class order[i]
};

inline double tour_cost(const Tour& t, const std::vector<double>& run_time,
                        const HandConfig& cfg, int start_position) {
    double cost = 0.0;
    int pos = start_position;
    for (std::size_t i = 0; i < t.order.size(); ++i) {
        cost += position_arc_deg(pos, t.positions[i], cfg.shaft_map.num_positions) /
                cfg.timing.spindle_speed_deg_s;
        pos = t.positions[i];
        cost += cfg.timing.settle_time_s;
        cost += run_time[t.order[i]];
    }
    return cost;
}

inline bool tour_preferred(const Tour& a, double ca, const Tour& b, double cb) {
    if (ca != cb) return ca < cb;
    return a.positions < b.positions; // lowest position sequence wins ties
}

// Exhaustive product of per-class position choices for one visiting order.
inline void enumerate_positions(const std::vector<NeededClass>& ncs,
                                const std::vector<std::size_t>& order,
                                const std::vector<double>& run_time, const HandConfig& cfg,
                                int start_position, std::optional<Tour>& best,
                                double& best_cost) {
    std::vector<int> chosen(order.size(), 0);
    std::vector<std::size_t> idx(order.size(), 0);
    while (true) {
        Tour t{order, chosen};
        for (std::size_t i = 0; i < order.size(); ++i)
            t.positions[i] = ncs[order[i]].cls.positions[idx[i]];
        const double c = tour_cost(t, run_time, cfg, start_position);
        if (!best || tour_preferred(t, c, *best, best_cost)) {
            best = t;
            best_cost = c;
        }
        std::size_t i = 0;
        for (; i < order.size(); ++i) {
            if (++idx[i] < ncs[order[i]].cls.positions.size()) break;
            idx[i] = 0;
        }
        if (i == order.size()) break;
    }
}

// Greedy nearest-position choice for one visiting order.
inline Tour greedy_positions(const std::vector<NeededClass>& ncs,
                             const std::vector<std::size_t>& order, const HandConfig& cfg,
                             int start_position) {
    Tour t{order, {}};
    int pos = start_position;
    for (std::size_t cls_idx : order) {
        int best_p = ncs[cls_idx].cls.positions.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (int p : ncs[cls_idx].cls.positions) {
            const double d = position_arc_deg(pos, p, cfg.shaft_map.num_positions);
            if (d < best_d) {
                best_d = d;
                best_p = p;
            }
        }
        t.positions.push_back(best_p);
        pos = best_p;
    }
    return t;
}

inline Tour best_tour(const std::vector<NeededClass>& ncs, const std::vector<double>& run_time,
                      const HandConfig& cfg, int start_position) {
    const std::size_t n = ncs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::size_t combos = 1;
    for (const auto& nc : ncs)
        combos = std::min<std::size_t>(combos * nc.cls.positions.size(), 100000);

    std::optional<Tour> best;
    double best_cost = std::numeric_limits<double>::infinity();
    if (n <= 3) {
        // <= 6 orderings: exhaustive over order and, when tractable, over the
        // full product of position choices.
        do {
            if (combos <= 4096) {
                enumerate_positions(ncs, order, run_time, cfg, start_position, best, best_cost);
            } else {
                Tour t = greedy_positions(ncs, order, cfg, start_position);
                const double c = tour_cost(t, run_time, cfg, start_position);
                if (!best || tour_preferred(t, c, *best, best_cost)) {
                    best = t;
                    best_cost = c;
                }
            }
        } while (std::next_permutation(order.begin(), order.end()));
        return *best;
    }

    // Larger instances: nearest-neighbour order, then 2-opt until no swap
    // improves the cost.
    std::vector<bool> used(n, false);
    std::vector<std::size_t> greedy_order;
    int pos = start_position;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        double pick_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            for (int p : ncs[i].cls.positions) {
                const double d = position_arc_deg(pos, p, cfg.shaft_map.num_positions);
                if (d < pick_d) {
                    pick_d = d;
                    pick = i;
                }
            }
        }
        used[pick] = true;
        greedy_order.push_back(pick);
        pos = greedy_positions(ncs, {pick}, cfg, pos).positions.front();
    }
    Tour current = greedy_positions(ncs, greedy_order, cfg, start_position);
    double current_cost = tour_cost(current, run_time, cfg, start_position);
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                auto candidate_order = current.order;
                std::reverse(candidate_order.begin() + static_cast<std::ptrdiff_t>(i),
                             candidate_order.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                Tour cand = greedy_positions(ncs, candidate_order, cfg, start_position);
                const double c = tour_cost(cand, run_time, cfg, start_position);
                if (c < current_cost) {
                    current = cand;
                    current_cost = c;
                    improved = true;
                }
            }
        }
    }
    return current;
}

inline std::vector<MotorRun> runs_at_position(const NeededClass& nc, int position,
                                              const std::array<double, 9>& amounts_wheel_deg,
                                              const HandConfig& cfg) {
    const double k = reduction_ratio(cfg.gears);
    std::vector<MotorRun> runs;
    for (int m = 0; m < 3; ++m) {
        const int shaft = cfg.shaft_map.shaft_at(m, position);
        if (std::find(nc.shafts.begin(), nc.shafts.end(), shaft) == nc.shafts.end()) continue;
        const double wheel = amounts_wheel_deg[static_cast<std::size_t>(shaft)];
        if (wheel == 0.0) continue;
        runs.push_back({m, shaft, wheel * k});
    }
    std::sort(runs.begin(), runs.end(),
              [](const MotorRun& a, const MotorRun& b) { return a.motor < b.motor; });
    return runs;
}

inline Phase make_phase(int from_position, int position, std::vector<MotorRun> runs,
                        const HandConfig& cfg) {
    Phase ph;
    ph.position = position;
    ph.runs = std::move(runs);
    double run_max = 0.0;
    for (const MotorRun& r : ph.runs)
        run_max = std::max(run_max, std::abs(r.motor_deg) / cfg.timing.motor_speed_deg_s);
    ph.duration_s = position_arc_deg(from_position, position, cfg.shaft_map.num_positions) /
                        cfg.timing.spindle_speed_deg_s +
                    cfg.timing.settle_time_s + run_max;
    return ph;
}

} // namespace detail

/// Minimal-makespan plan visiting each needed position class exactly once.
/// Exhaustive over visiting orders for up to 3 classes (6 orderings),
/// greedy + 2-opt beyond.
inline Schedule plan_sequential(const MotionDemand& demand, const HandConfig& cfg,
                                const PlanOptions& opt = {}) {
    validate_demand(demand, cfg, opt.initial_wheel_deg);
    Schedule sched;
    sched.start_position = opt.start_position;
    if (demand.empty()) return sched;

    const auto ncs = detail::needed_classes(demand, cfg.shaft_map);
    std::vector<double> run_time;
    run_time.reserve(ncs.size());
    for (const auto& nc : ncs) run_time.push_back(detail::phase_run_time(nc, demand, cfg));

    const detail::Tour tour = detail::best_tour(ncs, run_time, cfg, opt.start_position);
    int pos = opt.start_position;
    for (std::size_t i = 0; i < tour.order.size(); ++i) {
        const auto& nc = ncs[tour.order[i]];
        auto runs = detail::runs_at_position(nc, tour.positions[i], demand.wheel_deg, cfg);
        sched.phases.push_back(detail::make_phase(pos, tour.positions[i], std::move(runs), cfg));
        pos = tour.positions[i];
    }
    sched.makespan_s = makespan(sched, cfg);
    return sched;
}

/// Quasi-simultaneous plan: every demanded shaft advances proportionally in
/// N = max_s ceil(|d_s| / chunk) rounds, the classes being visited round-robin
/// in the order the sequential planner would choose. At any phase boundary
/// two demanded shafts' completed fractions differ by at most 1/N, which is
/// within chunk/|d| for every demanded shaft.
inline Schedule plan_interleaved(const MotionDemand& demand, const HandConfig& cfg,
                                 double chunk_wheel_deg, const PlanOptions& opt = {}) {
    if (!(chunk_wheel_deg > 0.0))
        throw std::invalid_argument("plan_interleaved: chunk must be positive");
    validate_demand(demand, cfg, opt.initial_wheel_deg);
    Schedule sched;
    sched.start_position = opt.start_position;
    if (demand.empty()) return sched;

    int rounds = 1;
    for (double d : demand.wheel_deg)
        rounds = std::max(rounds, static_cast<int>(std::ceil(std::abs(d) / chunk_wheel_deg)));

    const auto ncs = detail::needed_classes(demand, cfg.shaft_map);
    std::vector<double> run_time;
    run_time.reserve(ncs.size());
    for (const auto& nc : ncs) run_time.push_back(detail::phase_run_time(nc, demand, cfg));
    const detail::Tour tour = detail::best_tour(ncs, run_time, cfg, opt.start_position);

    int pos = opt.start_position;
    for (int round = 1; round <= rounds; ++round) {
        // Telescoping split: the per-shaft amounts over all rounds sum to the
        // demand without accumulating rounding drift.
        std::array<double, 9> amounts{};
        for (std::size_t s = 0; s < 9; ++s) {
            const double d = demand.wheel_deg[s];
            amounts[s] = d * (static_cast<double>(round) / rounds) -
                         d * (static_cast<double>(round - 1) / rounds);
        }
        for (std::size_t i = 0; i < tour.order.size(); ++i) {
            const auto& nc = ncs[tour.order[i]];
            auto runs = detail::runs_at_position(nc, tour.positions[i], amounts, cfg);
            if (runs.empty()) continue;
            sched.phases.push_back(
                detail::make_phase(pos, tour.positions[i], std::move(runs), cfg));
            pos = tour.positions[i];
        }
    }
    sched.makespan_s = makespan(sched, cfg);
    return sched;
}

/// Exact brute-force reference: enumerates every assignment of demanded
/// shafts to covering classes, every visiting order and every position
/// choice. Independent of the production planner's search; only small
/// instances are accepted.
inline Schedule oracle_optimal(const MotionDemand& demand, const HandConfig& cfg,
                               const PlanOptions& opt = {}) {
    validate_demand(demand, cfg, opt.initial_wheel_deg);
    Schedule best;
    best.start_position = opt.start_position;
    if (demand.empty()) return best;

    const auto classes = position_classes(cfg.shaft_map);
    std::vector<int> wanted;
    for (int s = 0; s < 9; ++s)
        if (demand.wheel_deg[static_cast<std::size_t>(s)] != 0.0) wanted.push_back(s);

    // Candidate classes per demanded shaft.
    std::vector<std::vector<std::size_t>> candidates(wanted.size());
    for (std::size_t wi = 0; wi < wanted.size(); ++wi) {
        for (std::size_t ci = 0; ci < classes.size(); ++ci)
            if (std::find(classes[ci].shafts.begin(), classes[ci].shafts.end(), wanted[wi]) !=
                classes[ci].shafts.end())
                candidates[wi].push_back(ci);
    }
    std::size_t assign_combos = 1;
    for (const auto& c : candidates) {
        assign_combos *= c.size();
        if (assign_combos > 4096)
            throw std::invalid_argument("oracle_optimal: too many shaft-to-class assignments");
    }

    const double k = reduction_ratio(cfg.gears);
    double best_cost = std::numeric_limits<double>::infinity();
    std::optional<std::vector<Phase>> best_phases;

    std::vector<std::size_t> pick(wanted.size(), 0);
    while (true) {
        // Group shafts by assigned class.
        std::map<std::size_t, std::vector<int>> group;
        for (std::size_t wi = 0; wi < wanted.size(); ++wi)
            group[candidates[wi][pick[wi]]].push_back(wanted[wi]);
        std::vector<std::size_t> cls_ids;
        for (const auto& [ci, _] : group) cls_ids.push_back(ci);

        if (cls_ids.size() <= 4) {
            std::sort(cls_ids.begin(), cls_ids.end());
            do {
                // Enumerate position choices for this visiting order.
                std::vector<std::size_t> idx(cls_ids.size(), 0);
                while (true) {
                    double cost = 0.0;
                    int pos = opt.start_position;
                    std::vector<Phase> phases;
                    for (std::size_t i = 0; i < cls_ids.size(); ++i) {
                        const auto& cls = classes[cls_ids[i]];
                        const int p = cls.positions[idx[i]];
                        cost += position_arc_deg(pos, p, cfg.shaft_map.num_positions) /
                                cfg.timing.spindle_speed_deg_s;
                        cost += cfg.timing.settle_time_s;
                        double run_max = 0.0;
                        std::vector<MotorRun> runs;
                        for (int m = 0; m < 3; ++m) {
                            const int shaft = cfg.shaft_map.shaft_at(m, p);
                            const auto& members = group[cls_ids[i]];
                            if (std::find(members.begin(), members.end(), shaft) == members.end())
                                continue;
                            const double wheel = demand.wheel_deg[static_cast<std::size_t>(shaft)];
                            runs.push_back({m, shaft, wheel * k});
                            run_max = std::max(run_max, std::abs(wheel * k) /
                                                            cfg.timing.motor_speed_deg_s);
                        }
                        cost += run_max;
                        Phase ph;
                        ph.position = p;
                        ph.runs = std::move(runs);
                        ph.duration_s = position_arc_deg(pos, p, cfg.shaft_map.num_positions) /
                                            cfg.timing.spindle_speed_deg_s +
                                        cfg.timing.settle_time_s + run_max;
                        phases.push_back(std::move(ph));
                        pos = p;
                    }
                    bool better = cost < best_cost;
                    if (!better && cost == best_cost && best_phases) {
                        std::vector<int> a, b;
                        for (const auto& ph : phases) a.push_back(ph.position);
                        for (const auto& ph : *best_phases) b.push_back(ph.position);
                        better = a < b;
                    }
                    if (better) {
                        best_cost = cost;
                        best_phases = phases;
                    }
                    std::size_t i = 0;
                    for (; i < cls_ids.size(); ++i) {
                        if (++idx[i] < classes[cls_ids[i]].positions.size()) break;
                        idx[i] = 0;
                    }
                    if (i == cls_ids.size()) break;
                }
            } while (std::next_permutation(cls_ids.begin(), cls_ids.end()));
        }

        std::size_t wi = 0;
        for (; wi < wanted.size(); ++wi) {
            if (++pick[wi] < candidates[wi].size()) break;
            pick[wi] = 0;
        }
        if (wi == wanted.size()) break;
    }

    if (!best_phases)
        throw std::invalid_argument("oracle_optimal: needs more than 4 position classes");
    best.phases = std::move(*best_phases);
    best.makespan_s = makespan(best, cfg);
    return best;
}

/// Parses a demand file: 9 signed wheel-side degrees, one per line; blank
/// lines and '#' comments allowed.
inline MotionDemand parse_demand(std::istream& in) {
    MotionDemand d;
    std::string line;
    std::size_t count = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (count >= 9)
            throw ParseError("demand line " + std::to_string(lineno) + ": more than 9 entries");
        const std::string body = line.substr(first);
        std::size_t used = 0;
        try {
            d.wheel_deg[count] = std::stod(body, &used);
        } catch (const std::exception&) {
            throw ParseError("demand line " + std::to_string(lineno) + ": not a number: " + line);
        }
        const auto rest = body.find_first_not_of(" \t\r", used);
        if (rest != std::string::npos && body[rest] != '#')
            throw ParseError("demand line " + std::to_string(lineno) +
                             ": trailing characters after the value: " + line);
        ++count;
    }
    if (count != 9)
        throw ParseError("demand file: expected 9 entries, found " + std::to_string(count));
    return d;
}

} // namespace tdmhand
