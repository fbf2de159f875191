#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdmhand/angles.hpp"
#include "tdmhand/config.hpp"
#include "tdmhand/errors.hpp"

namespace tdmhand {

// Closed-form tendon kinematics of one finger. All functions are pure and
// re-entrant. Angles are degrees at the API boundary, radians inside.
//
// The PIP drive cable is wound by the wheel (radius r3) and is tangent to the
// PIP rolling joint (radius r2); the DIP joint is not actuated, it follows the
// PIP joint through a coupling cable over the DIP rolling joint (radius r1).
// The MCP pitch joint repeats the PIP construction with r_pitch; the MCP roll
// joint rolls on the wheel like a gear pair (pure arc-length transfer).

namespace detail {

// asin with a tolerance band for arguments that land a few ulps outside
// [-1, 1]; anything further out is a genuine domain violation.
inline double checked_asin(double arg, const char* what) {
    constexpr double kTol = 1e-12;
    if (arg > 1.0) {
        if (arg > 1.0 + kTol)
            throw KinematicRangeError(std::string(what) + ": arcsin argument " +
                                      std::to_string(arg) + " above 1");
        arg = 1.0;
    } else if (arg < -1.0) {
        if (arg < -1.0 - kTol)
            throw KinematicRangeError(std::string(what) + ": arcsin argument " +
                                      std::to_string(arg) + " below -1");
        arg = -1.0;
    }
    return std::asin(arg);
}

} // namespace detail

/// Drive-cable shortening (mm) produced by a wheel rotation of phi1 degrees.
inline double cable_displacement_mm(double phi1_deg, double r3_mm) {
    if (phi1_deg < 0.0)
        throw KinematicRangeError("cable_displacement: wheel angle " + std::to_string(phi1_deg) +
                                  " deg is negative");
    return deg2rad(phi1_deg) * r3_mm;
}

/// Virtual-link length l2 between the cable anchor and the PIP joint centre.
inline double pip_link_length_mm(double dx2_mm, double r2_mm) {
    if (dx2_mm < 0.0 || dx2_mm > 2.0 * r2_mm)
        throw KinematicRangeError("pip_link_length: dx2=" + std::to_string(dx2_mm) +
                                  " mm outside [0, " + std::to_string(2.0 * r2_mm) + "]");
    const double a = 2.0 * r2_mm - dx2_mm;
    return std::sqrt(r2_mm * r2_mm + a * a);
}

/// Rotation (deg) of the virtual link relative to the PIP joint.
inline double pip_half_angle_deg(double l2_mm, double r2_mm) {
    const double arg = (5.0 * r2_mm * r2_mm - l2_mm * l2_mm) / (4.0 * r2_mm * r2_mm);
    return rad2deg(detail::checked_asin(arg, "pip_half_angle"));
}

namespace detail {

// Shared form of the PIP / DIP / MCP-pitch maps:
// theta = 2*asin(dx/r - (dx/2r)^2).
inline double rolling_joint_angle_deg(double dx_mm, double r_mm, double dx_max_mm,
                                      const char* what) {
    if (dx_mm < 0.0 || dx_mm > dx_max_mm)
        throw KinematicRangeError(std::string(what) + ": cable displacement " +
                                  std::to_string(dx_mm) + " mm outside [0, " +
                                  std::to_string(dx_max_mm) + "]");
    const double u = dx_mm / r_mm;
    return rad2deg(2.0 * checked_asin(u - 0.25 * u * u, what));
}

} // namespace detail

/// PIP joint angle theta2 (deg) from drive-cable shortening dx2.
inline double pip_angle_deg(double dx2_mm, double r2_mm) {
    return detail::rolling_joint_angle_deg(dx2_mm, r2_mm, 2.0 * r2_mm, "pip_angle");
}

/// Coupling-cable length change dx1 (mm) from the PIP virtual link.
inline double coupling_displacement_mm(double l2_mm, double alpha2_deg) {
    constexpr double kTol = 1e-9; // rounding noise at the domain edges
    if (alpha2_deg < -kTol || alpha2_deg > 90.0 + kTol)
        throw KinematicRangeError("coupling_displacement: alpha2=" + std::to_string(alpha2_deg) +
                                  " deg outside [0, 90]");
    if (alpha2_deg < 0.0) alpha2_deg = 0.0;
    if (alpha2_deg > 90.0) alpha2_deg = 90.0;
    return 2.0 * l2_mm * std::sin(deg2rad(alpha2_deg));
}

/// DIP joint angle theta1 (deg) from coupling-cable length change dx1.
/// The coupling cable may legitimately produce dx1 > 2*r1 for some radii; the
/// map stays defined as long as the arcsin argument is in [0, 1].
inline double dip_angle_deg(double dx1_mm, double r1_mm) {
    if (dx1_mm < 0.0) {
        if (dx1_mm < -1e-9 * r1_mm)
            throw KinematicRangeError("dip_angle: dx1=" + std::to_string(dx1_mm) +
                                      " mm is negative");
        dx1_mm = 0.0;
    }
    const double u = dx1_mm / r1_mm;
    const double arg = u - 0.25 * u * u;
    if (arg < -1e-12)
        throw KinematicRangeError("dip_angle: dx1=" + std::to_string(dx1_mm) +
                                  " mm beyond the DIP kinematic range");
    return rad2deg(2.0 * detail::checked_asin(arg, "dip_angle"));
}

/// MCP pitch joint angle theta3 (deg); same construction as the PIP joint.
inline double mcp_pitch_angle_deg(double dx_pitch_mm, double r_pitch_mm) {
    return detail::rolling_joint_angle_deg(dx_pitch_mm, r_pitch_mm, 2.0 * r_pitch_mm,
                                           "mcp_pitch_angle");
}

/// MCP roll joint angle phi3 (deg): equal arc length on wheel and joint.
inline double mcp_roll_angle_deg(double phi2_deg, double r3_mm, double r_roll_mm) {
    return phi2_deg * (r3_mm / r_roll_mm);
}

// ---------------------------------------------------------------------------
// Whole-finger maps
// ---------------------------------------------------------------------------

/// Winding-wheel angles (deg) of the three shafts driving one finger.
struct WheelAngles {
    double pip_deg   = 0.0;
    double pitch_deg = 0.0;
    double roll_deg  = 0.0;
};

struct FingerPose {
    double theta1_deg = 0.0; ///< DIP
    double theta2_deg = 0.0; ///< PIP
    double theta3_deg = 0.0; ///< MCP pitch
    double phi3_deg   = 0.0; ///< MCP roll
};

/// DIP angle implied by a PIP drive-cable shortening (link length, half
/// angle and coupling displacement chained).
inline double dip_angle_from_dx2_deg(double dx2_mm, double r1_mm, double r2_mm) {
    const double l2 = pip_link_length_mm(dx2_mm, r2_mm);
    const double a2 = pip_half_angle_deg(l2, r2_mm);
    return dip_angle_deg(coupling_displacement_mm(l2, a2), r1_mm);
}

/// Full forward map of one finger. Each pose component depends only on its
/// own wheel angle. Domain errors name the offending joint.
inline FingerPose forward_finger(const WheelAngles& w, const FingerGeometry& g) {
    FingerPose pose;
    try {
        const double dx2 = cable_displacement_mm(w.pip_deg, g.r3_mm);
        pose.theta2_deg = pip_angle_deg(dx2, g.r2_mm);
        pose.theta1_deg = dip_angle_from_dx2_deg(dx2, g.r1_mm, g.r2_mm);
    } catch (const KinematicRangeError& e) {
        throw KinematicRangeError("pip/dip: " + std::string(e.what()));
    }
    try {
        const double dxp = cable_displacement_mm(w.pitch_deg, g.r3_mm);
        pose.theta3_deg = mcp_pitch_angle_deg(dxp, g.r_pitch_mm);
    } catch (const KinematicRangeError& e) {
        throw KinematicRangeError("mcp_pitch: " + std::string(e.what()));
    }
    pose.phi3_deg = mcp_roll_angle_deg(w.roll_deg, g.r3_mm, g.r_roll_mm);
    if (std::abs(pose.phi3_deg) > g.roll_range_deg + 1e-9)
        throw KinematicRangeError("mcp_roll: phi3=" + std::to_string(pose.phi3_deg) +
                                  " deg outside the +/-" + std::to_string(g.roll_range_deg) +
                                  " roll range");
    return pose;
}

/// Wheel angle (deg) that produces PIP angle theta2 (closed-form inverse).
inline double inverse_pip_deg(double theta2_deg, double r2_mm, double r3_mm) {
    if (theta2_deg < 0.0 || theta2_deg > 180.0)
        throw KinematicRangeError("inverse_pip: theta2=" + std::to_string(theta2_deg) +
                                  " deg outside [0, 180]");
    const double s = std::sin(deg2rad(theta2_deg) / 2.0);
    const double dx2 = 2.0 * r2_mm * (1.0 - std::sqrt(1.0 - s));
    return rad2deg(dx2 / r3_mm);
}

/// Wheel angle (deg) that produces MCP pitch angle theta3.
inline double inverse_pitch_deg(double theta3_deg, double r_pitch_mm, double r3_mm) {
    if (theta3_deg < 0.0 || theta3_deg > 180.0)
        throw KinematicRangeError("inverse_pitch: theta3=" + std::to_string(theta3_deg) +
                                  " deg outside [0, 180]");
    const double s = std::sin(deg2rad(theta3_deg) / 2.0);
    const double dxp = 2.0 * r_pitch_mm * (1.0 - std::sqrt(1.0 - s));
    return rad2deg(dxp / r3_mm);
}

/// Wheel angle (deg) that produces MCP roll angle phi3.
inline double inverse_roll_deg(double phi3_deg, double r3_mm, double r_roll_mm) {
    return phi3_deg * (r_roll_mm / r3_mm);
}

/// Largest admissible wheel angle (deg) of the PIP drive shaft (dx2 = 2*r2).
inline double pip_wheel_limit_deg(const FingerGeometry& g) {
    return rad2deg(2.0 * g.r2_mm / g.r3_mm);
}

/// Largest admissible wheel angle (deg) of the MCP pitch drive shaft.
inline double pitch_wheel_limit_deg(const FingerGeometry& g) {
    return rad2deg(2.0 * g.r_pitch_mm / g.r3_mm);
}

/// Wheel-angle magnitude (deg) at which phi3 reaches the roll range limit.
inline double roll_wheel_limit_deg(const FingerGeometry& g) {
    return g.roll_range_deg * (g.r_roll_mm / g.r3_mm);
}

/// Cartesian fingertip position (mm). The finger is a planar three-link chain
/// bending about MCP-pitch, PIP and DIP, rotated by phi3 about the base axis.
/// Zero pose points along +z (straight finger).
inline std::array<double, 3> fingertip_position_mm(const FingerPose& pose,
                                                   const FingerGeometry& g) {
    const double a1 = deg2rad(pose.theta3_deg);
    const double a2 = a1 + deg2rad(pose.theta2_deg);
    const double a3 = a2 + deg2rad(pose.theta1_deg);
    const double x = g.link_lengths_mm[0] * std::sin(a1) + g.link_lengths_mm[1] * std::sin(a2) +
                     g.link_lengths_mm[2] * std::sin(a3);
    const double z = g.link_lengths_mm[0] * std::cos(a1) + g.link_lengths_mm[1] * std::cos(a2) +
                     g.link_lengths_mm[2] * std::cos(a3);
    const double roll = deg2rad(pose.phi3_deg);
    return {x * std::cos(roll), x * std::sin(roll), z};
}

// ---------------------------------------------------------------------------
// Linear regression (curve fitting of the joint-vs-wheel relationships)
// ---------------------------------------------------------------------------

struct LinearFit {
    double slope     = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares y = slope*x + intercept. R^2 is defined as 1 for a
/// zero-variance target (the fit then has zero residuals).
inline LinearFit fit_linear_map(std::span<const std::pair<double, double>> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("fit_linear_map: need at least 2 samples");
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : samples) {
        sx += x;
        sy += y;
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : samples) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_linear_map: all abscissae equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r_squared = 1.0;
    } else {
        double ss_res = 0.0;
        for (const auto& [x, y] : samples) {
            const double r = y - (fit.slope * x + fit.intercept);
            ss_res += r * r;
        }
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Curve sampling (joint-vs-wheel reproduction)
// ---------------------------------------------------------------------------

struct JointCurveRow {
    double phi1_deg;
    double theta1_deg;
    double theta2_deg;
    double theta3_deg;
};

struct RollCurveRow {
    double phi2_deg;
    double phi3_deg;
};

/// Samples theta1/theta2/theta3 against the wheel angle, from the straight
/// pose up to theta2 = 90 deg (or the pitch limit if that is tighter).
inline std::vector<JointCurveRow> sample_joint_curves(const FingerGeometry& g, int rows = 181) {
    if (rows < 2) throw std::invalid_argument("sample_joint_curves: need at least 2 rows");
    const double phi_max = std::min(inverse_pip_deg(90.0, g.r2_mm, g.r3_mm),
                                    inverse_pitch_deg(90.0, g.r_pitch_mm, g.r3_mm));
    std::vector<JointCurveRow> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double phi = phi_max * static_cast<double>(i) / static_cast<double>(rows - 1);
        const double dx2 = cable_displacement_mm(phi, g.r3_mm);
        const double dxp = cable_displacement_mm(phi, g.r3_mm);
        out.push_back({phi, dip_angle_from_dx2_deg(dx2, g.r1_mm, g.r2_mm),
                       pip_angle_deg(dx2, g.r2_mm), mcp_pitch_angle_deg(dxp, g.r_pitch_mm)});
    }
    return out;
}

/// Samples phi3 against the wheel angle over [0, 90] wheel degrees (clipped
/// to the roll range).
inline std::vector<RollCurveRow> sample_roll_curve(const FingerGeometry& g, int rows = 91) {
    if (rows < 2) throw std::invalid_argument("sample_roll_curve: need at least 2 rows");
    const double phi_max = std::min(90.0, roll_wheel_limit_deg(g));
    std::vector<RollCurveRow> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double phi = phi_max * static_cast<double>(i) / static_cast<double>(rows - 1);
        out.push_back({phi, mcp_roll_angle_deg(phi, g.r3_mm, g.r_roll_mm)});
    }
    return out;
}

struct CurveFits {
    LinearFit theta1; ///< over the wheel range where theta1 is in [0, 90] deg
    LinearFit theta2; ///< over the wheel range where theta2 is in [0, 90] deg
    LinearFit theta3; ///< over the wheel range where theta3 is in [0, 90] deg
    double roll_slope = 0.0; ///< exact: r3 / r_roll
};

namespace detail {

// First wheel angle at which `f` reaches `target` (f monotone increasing on
// the bracketing prefix; bisection after a dense scan for the bracket).
template <typename F>
double wheel_angle_reaching(F&& f, double target, double phi_hi) {
    double lo = 0.0, hi = phi_hi;
    const int kScan = 4096;
    for (int i = 1; i <= kScan; ++i) {
        const double phi = phi_hi * static_cast<double>(i) / static_cast<double>(kScan);
        if (f(phi) >= target) {
            hi = phi;
            lo = phi_hi * static_cast<double>(i - 1) / static_cast<double>(kScan);
            break;
        }
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// OLS fits of each joint angle against the wheel angle, each over its own
/// [0, 90] deg joint range, sampled at `n` points.
inline CurveFits fit_joint_curves(const FingerGeometry& g, int n = 100) {
    CurveFits fits;
    auto fit_over = [&](auto&& joint_of_phi, double phi_max) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double phi = phi_max * static_cast<double>(i) / static_cast<double>(n - 1);
            pts.emplace_back(phi, joint_of_phi(phi));
        }
        return fit_linear_map(pts);
    };

    auto theta2_of = [&](double phi) {
        return pip_angle_deg(cable_displacement_mm(phi, g.r3_mm), g.r2_mm);
    };
    auto theta3_of = [&](double phi) {
        return mcp_pitch_angle_deg(cable_displacement_mm(phi, g.r3_mm), g.r_pitch_mm);
    };
    auto theta1_of = [&](double phi) {
        return dip_angle_from_dx2_deg(cable_displacement_mm(phi, g.r3_mm), g.r1_mm, g.r2_mm);
    };

    const double pip_90 = inverse_pip_deg(90.0, g.r2_mm, g.r3_mm);
    fits.theta2 = fit_over(theta2_of, pip_90);
    fits.theta3 = fit_over(theta3_of, inverse_pitch_deg(90.0, g.r_pitch_mm, g.r3_mm));
    fits.theta1 = fit_over(theta1_of, detail::wheel_angle_reaching(theta1_of, 90.0, pip_90));
    fits.roll_slope = g.r3_mm / g.r_roll_mm;
    return fits;
}

} // namespace tdmhand
