#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>

#include "saklqr/common.hpp"
#include "saklqr/force_grid.hpp"

namespace saklqr {

/// Nonlinear ADC response of the embedded force-sensitive resistor.
/// Low forces are attenuated (the sponge absorbs part of the load),
/// high forces are amplified (the compressed sponge transmits more
/// efficiently); the two gains blend through a logistic knee.
struct SensorCurve {
    double under_gain = 0.70;   // attenuation below the knee
    double over_gain = 1.25;    // amplification above the knee
    double knee_force = 12.0;   // N, transition center
    double knee_width = 3.0;    // N, transition smoothness
    double adc_scale = 32.0;    // counts per N
    double adc_max = 1023.0;    // saturation count
};

/// Footprint geometry of the sponge on the contact pad. Lateral drag
/// trails the pressure patch behind the motion; rolling the handle tips
/// it sideways. The embedded FSR reads the patch through a Gaussian
/// transmission window centered on the sponge tip.
struct PadModel {
    double footprint_sigma_cells = 1.0;
    double drag_shift_cells_per_mps = 10.0;  // along motion (x and y)
    double tilt_shift_cells_per_rad = 12.0;  // along x, via sin(theta)
    double fsr_spread_cells = 12.0;
};

struct PlantParams {
    double k_handle = 400.0;        // handle rotational stiffness, N*m/rad
    double k_sponge0 = 2500.0;      // dry sponge contact stiffness, N/m
    double compression_sat = 0.02;  // saturation depth, m
    double wetness_rate = 0.005;    // saturation growth per contact-second
    double wet_soften = 0.30;       // stiffness reduction at wetness = 1
    double damping = 40.0;          // viscous damping on every velocity axis
    double roll_force_gain = 2.5;   // force modulation exponent per sin(theta)
    Mat46 j_eff = default_j_eff();  // torque -> end-effector acceleration
    SensorCurve sensor;
    PadModel pad;
    double noise_std = 6.0;         // measurement noise, counts
    int sensor_delay_steps = 5;     // force-path latency in control steps

    static Mat46 default_j_eff() {
        Mat46 j;
        // Frozen-configuration map; full row rank by construction.
        j << 0.80, 0.10, 0.00, 0.05, 0.00, 0.02,
             0.00, 0.60, 0.10, 0.00, 0.05, 0.00,
             0.05, 0.00, 0.70, 0.10, 0.00, 0.03,
             0.00, 0.05, 0.00, 0.60, 0.10, 0.20;
        return j;
    }

    Eigen::Matrix<double, 6, 4> j_eff_pinv() const {
        return j_eff.completeOrthogonalDecomposition().pseudoInverse();
    }
};

/// Full surrogate world state. The Koopman state x = (theta, pos) is a
/// projection of this; wetness and time are hidden from the controller.
struct PlantState {
    double theta = 0.0;                       // roll angle, rad
    Eigen::Vector3d pos{0.05, 0.05, 0.0};     // end-effector position, m
    Vec4 vel = Vec4::Zero();                  // (roll rate, vx, vy, vz)
    double wetness = 0.0;                     // in [0, 1]
    double t = 0.0;                           // s

    Vec4 koopman_state() const {
        return Vec4(theta, pos.x(), pos.y(), pos.z());
    }
};

inline bool in_contact(const PlantState& state) {
    return state.pos.z() < 0.0;
}

inline double penetration(const PlantState& state, const PlantParams& params) {
    return clamp(-state.pos.z(), 0.0, params.compression_sat);
}

/// Total normal force transmitted through the sponge. Zero out of
/// contact; in contact it combines quadratic sponge compression with an
/// exponential handle-bending roll factor (strictly positive, strictly
/// increasing in theta for |theta| < pi/2), softened by wetness.
inline double contact_force(const PlantState& state, const PlantParams& params) {
    if (!in_contact(state)) {
        return 0.0;
    }
    const double depth = penetration(state, params);
    const double k_eff = params.k_sponge0 * (1.0 - params.wet_soften * state.wetness);
    const double stiffen = 1.0 + depth / params.compression_sat;
    const double roll_factor = std::exp(params.roll_force_gain * std::sin(state.theta));
    return k_eff * depth * stiffen * roll_factor;
}

/// Pressure-patch displacement relative to the sponge tip, in cell units.
/// Drag trails the patch along the motion; rolling tips it along x, the
/// axis the centroid regulator corrects. Callers may add an exogenous
/// shift (surface texture, sponge anisotropy).
inline Eigen::Vector2d footprint_shift_cells(
    const PlantState& state, const PlantParams& params,
    const Eigen::Vector2d& extra_shift_cells = Eigen::Vector2d::Zero()) {
    const PadModel& pad = params.pad;
    const double sx = pad.drag_shift_cells_per_mps * state.vel(1) +
                      pad.tilt_shift_cells_per_rad * std::sin(state.theta);
    const double sy = pad.drag_shift_cells_per_mps * state.vel(2);
    return Eigen::Vector2d(sx, sy) + extra_shift_cells;
}

/// Fraction of the contact force seen by the embedded single-cell FSR.
/// Equals 1 when the pressure patch is centered on the sponge tip and
/// decays as the patch displaces.
inline double fsr_transmission(
    const PlantState& state, const PlantParams& params,
    const Eigen::Vector2d& extra_shift_cells = Eigen::Vector2d::Zero()) {
    const Eigen::Vector2d s = footprint_shift_cells(state, params, extra_shift_cells);
    const double spread2 = params.pad.fsr_spread_cells * params.pad.fsr_spread_cells;
    return std::exp(-s.squaredNorm() / (2.0 * spread2));
}

/// Noise-free ADC reading for a given applied force.
inline double sense_fsr(double force, const SensorCurve& curve) {
    if (!(force >= 0.0) || !std::isfinite(force)) {
        throw std::invalid_argument("sense_fsr: force must be finite and >= 0");
    }
    const double z = (force - curve.knee_force) / curve.knee_width;
    const double sigmoid = 1.0 / (1.0 + std::exp(-z));
    const double gain = curve.under_gain + (curve.over_gain - curve.under_gain) * sigmoid;
    return clamp(curve.adc_scale * force * gain, 0.0, curve.adc_max);
}

/// ADC reading with additive Gaussian noise drawn from rng.
inline double sense_fsr(double force, const SensorCurve& curve, double noise_std,
                        Rng& rng) {
    return sense_fsr(force, curve) + noise_std * rng.normal();
}

/// One semi-implicit Euler step. Restoring terms (handle bending on the
/// roll axis, sponge normal force on z) act only while in contact, so a
/// free-floating tool with zero velocity and zero torque is an exact
/// equilibrium.
inline PlantState step_plant(const PlantState& state, const Vec6& u, double dt,
                             const PlantParams& params) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw std::invalid_argument("step_plant: dt must be finite and > 0");
    }
    require_finite(u, "step_plant: torque input");
    require_finite(state.vel, "step_plant: state velocity");

    const bool contact = in_contact(state);

    Vec4 accel = params.j_eff * u - params.damping * state.vel;
    if (contact) {
        accel(0) -= params.k_handle * state.theta;
        accel(3) += contact_force(state, params);
    }

    PlantState next = state;
    next.vel = state.vel + dt * accel;
    next.theta = state.theta + dt * next.vel(0);
    next.pos += dt * next.vel.tail<3>();

    // Penetration is bounded by the sponge's saturation depth.
    if (next.pos.z() < -params.compression_sat) {
        next.pos.z() = -params.compression_sat;
        if (next.vel(3) < 0.0) {
            next.vel(3) = 0.0;
        }
    }

    if (contact) {
        next.wetness = clamp(state.wetness + params.wetness_rate * dt, 0.0, 1.0);
    }
    next.t = state.t + dt;
    return next;
}

/// Distribute the contact force over the 16x16 pad as a normalized
/// Gaussian footprint. The footprint center is the tool's (x, y)
/// position plus the drag/tilt shift; cells outside the pad are clipped
/// and the remainder renormalized, so the grid always sums to the
/// contact force exactly.
inline ForceGrid sample_pad(
    const PlantState& state, const PlantParams& params,
    const Eigen::Vector2d& extra_shift_cells = Eigen::Vector2d::Zero()) {
    ForceGrid grid;
    if (!in_contact(state)) {
        return grid;
    }
    const double force = contact_force(state, params);
    const Eigen::Vector2d shift = footprint_shift_cells(state, params, extra_shift_cells);
    const double cx = state.pos.x() / kPadPitchMeters - 0.5 + shift.x();
    const double cy = state.pos.y() / kPadPitchMeters - 0.5 + shift.y();
    const double sigma2 = params.pad.footprint_sigma_cells * params.pad.footprint_sigma_cells;

    double weight_sum = 0.0;
    for (int i = 0; i < kGridDim; ++i) {
        for (int j = 0; j < kGridDim; ++j) {
            const double dx = static_cast<double>(i) - cx;
            const double dy = static_cast<double>(j) - cy;
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma2));
            grid.cells(i, j) = w;
            weight_sum += w;
        }
    }
    grid.cells *= force / weight_sum;
    return grid;
}

}  // namespace saklqr
