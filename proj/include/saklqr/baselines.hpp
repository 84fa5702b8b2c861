#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "saklqr/common.hpp"

namespace saklqr {

struct PidParams {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double deriv_filter_tau = 0.05;  // s
    double windup_clamp = 5.0;       // N*s
    double output_clamp = 250.0;
};

struct PidState {
    double integral = 0.0;
    double filt_deriv = 0.0;
    double prev_error = 0.0;
    bool primed = false;
};

/// Discrete PID with a first-order low-pass on the derivative and a
/// clamped integrator. Returns the scalar command.
inline double pid_step(const PidParams& params, PidState& state, double e, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("pid_step: dt must be > 0");
    }
    state.integral = clamp(state.integral + e * dt, -params.windup_clamp,
                           params.windup_clamp);
    const double raw_deriv = state.primed ? (e - state.prev_error) / dt : 0.0;
    const double alpha = dt / (params.deriv_filter_tau + dt);
    state.filt_deriv += alpha * (raw_deriv - state.filt_deriv);
    state.prev_error = e;
    state.primed = true;

    const double u = params.kp * e + params.ki * state.integral + params.kd * state.filt_deriv;
    return clamp(u, -params.output_clamp, params.output_clamp);
}

/// Nominal second-order force dynamics used by the SMC feedforward:
/// y_ddot = f0 + b0 * u with f0 = g_theta * (-damping * theta_dot
/// - k_handle * theta). Obtained by linearizing the surrogate at nominal
/// contact.
struct SmcNominalSpec {
    double g_theta = 0.0;   // measured-force sensitivity to roll, N/rad
    double damping = 0.0;
    double k_handle = 0.0;

    double f0(double theta, double theta_dot) const {
        return g_theta * (-damping * theta_dot - k_handle * theta);
    }
};

struct SmcParams {
    double lambda1 = 0.15;   // surface weight on e_dot
    double lambda2 = 1.5;    // surface weight on the error integral
    double k1 = 2.5;
    double k2 = 1.2;
    double epsilon = 2.0;    // switching gain
    double ks = 2.0;         // surface gain
    double b0 = 1.0;         // nominal input gain, != 0
    SmcNominalSpec f0_spec;
    double boundary_layer = 1.2;  // phi
    bool hard_sign = false;       // restore sign(s) for fidelity runs
    double output_clamp = 250.0;
};

inline double smc_sliding_surface(const SmcParams& p, double e, double e_dot,
                                  double e_int) {
    return e + p.lambda1 * e_dot + p.lambda2 * e_int;
}

/// Sliding-mode command. The switching term uses a boundary-layer
/// saturation unless hard_sign is set.
inline double smc_step(const SmcParams& p, double e, double e_dot, double e_int,
                       double r_ddot, double f0) {
    if (p.b0 == 0.0) {
        throw std::invalid_argument("smc_step: b0 must be nonzero");
    }
    const double s = smc_sliding_surface(p, e, e_dot, e_int);
    double sw;
    if (p.hard_sign) {
        sw = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
    } else {
        sw = clamp(s / p.boundary_layer, -1.0, 1.0);
    }
    const double u = (r_ddot - f0) / p.b0 + p.k1 * e + p.k2 * e_dot +
                     p.epsilon * sw + p.ks * s;
    return clamp(u, -p.output_clamp, p.output_clamp);
}

// ---------------------------------------------------------------------------
// Ziegler-Nichols tuning

struct ZnProbeSpec {
    double gain_start = 0.5;
    double gain_budget = 1e4;     // abort threshold for the upward sweep
    double resolution_rel = 5e-3; // bisection stop, relative to K_u
    double settle_fraction = 0.3; // part of the trace skipped as transient
    double sustain_ratio = 0.9;   // tail amplitude ratio deemed sustained
    double amp_floor = 0.1;
};

struct ZnTuning {
    double k_ultimate = 0.0;
    double t_ultimate = 0.0;
};

namespace detail {

struct OscillationStats {
    bool sustained = false;
    double period = 0.0;
};

inline OscillationStats analyze_oscillation(const std::vector<double>& trace, double dt,
                                            const ZnProbeSpec& spec) {
    OscillationStats out;
    const size_t start = static_cast<size_t>(trace.size() * spec.settle_fraction);
    if (trace.size() < 16 || start + 8 >= trace.size()) {
        return out;
    }
    double mean = 0.0;
    for (size_t i = start; i < trace.size(); ++i) {
        mean += trace[i];
    }
    mean /= static_cast<double>(trace.size() - start);

    const size_t mid = start + (trace.size() - start) / 2;
    double amp_a = 0.0;
    double amp_b = 0.0;
    for (size_t i = start; i < mid; ++i) {
        amp_a = std::max(amp_a, std::abs(trace[i] - mean));
    }
    for (size_t i = mid; i < trace.size(); ++i) {
        amp_b = std::max(amp_b, std::abs(trace[i] - mean));
    }
    if (!std::isfinite(amp_a) || !std::isfinite(amp_b)) {
        // Diverging loop counts as past the stability boundary.
        out.sustained = true;
        return out;
    }
    out.sustained = amp_b > spec.amp_floor && amp_b >= spec.sustain_ratio * amp_a;

    // Period from upward zero crossings of the demeaned tail.
    std::vector<double> crossings;
    for (size_t i = mid + 1; i < trace.size(); ++i) {
        const double prev = trace[i - 1] - mean;
        const double cur = trace[i] - mean;
        if (prev <= 0.0 && cur > 0.0) {
            const double frac = prev == cur ? 0.0 : -prev / (cur - prev);
            crossings.push_back((static_cast<double>(i - 1) + frac) * dt);
        }
    }
    if (crossings.size() >= 2) {
        out.period = (crossings.back() - crossings.front()) /
                     static_cast<double>(crossings.size() - 1);
    }
    return out;
}

}  // namespace detail

/// Locate the ultimate gain and period by doubling until sustained
/// oscillation appears, then bisecting the onset. `probe` runs the
/// proportional-only closed loop at the given gain and returns the error
/// trace sampled at dt.
inline ZnTuning zn_find_ultimate(const std::function<std::vector<double>(double)>& probe,
                                 double dt, const ZnProbeSpec& spec = {}) {
    double hi = spec.gain_start;
    detail::OscillationStats hi_stats;
    while (true) {
        hi_stats = detail::analyze_oscillation(probe(hi), dt, spec);
        if (hi_stats.sustained) {
            break;
        }
        hi *= 2.0;
        if (hi > spec.gain_budget) {
            throw std::runtime_error(
                "zn_find_ultimate: no sustained oscillation within gain budget");
        }
    }
    double lo = hi * 0.5;
    while ((hi - lo) / hi > spec.resolution_rel) {
        const double mid = 0.5 * (lo + hi);
        if (detail::analyze_oscillation(probe(mid), dt, spec).sustained) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    const auto onset = detail::analyze_oscillation(probe(hi), dt, spec);
    if (!(onset.period > 0.0)) {
        throw std::runtime_error("zn_find_ultimate: could not measure oscillation period");
    }
    return {hi, onset.period};
}

/// Classic Ziegler-Nichols PID table.
inline PidParams pid_from_ultimate(const ZnTuning& zn) {
    PidParams p;
    p.kp = 0.6 * zn.k_ultimate;
    p.ki = 2.0 * p.kp / zn.t_ultimate;
    p.kd = p.kp * zn.t_ultimate / 8.0;
    return p;
}

}  // namespace saklqr
