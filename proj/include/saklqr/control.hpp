#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "saklqr/common.hpp"
#include "saklqr/koopman.hpp"

namespace saklqr {

struct LqrGains {
    Mat64 k_fb = Mat64::Zero();  // state feedback, 6 x 4
    Vec6 k_r = Vec6::Zero();     // reference feedforward
    Vec6 k_i = Vec6::Zero();     // integral gain
    Mat4 p = Mat4::Zero();       // Riccati solution
};

struct Quaternion {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double w = 1.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }

    Quaternion normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n, w / n};
    }
};

/// Incremental roll-axis rotation (sin(theta/2), 0, 0, cos(theta/2)).
inline Quaternion roll_increment(double theta_step) {
    if (!std::isfinite(theta_step)) {
        throw std::invalid_argument("roll_increment: non-finite angle");
    }
    return {std::sin(0.5 * theta_step), 0.0, 0.0, std::cos(0.5 * theta_step)};
}

/// Hamilton product q_current (x) q_inc, renormalized.
inline Quaternion apply_rotation(const Quaternion& q, const Quaternion& r) {
    Quaternion out;
    out.w = q.w * r.w - q.x * r.x - q.y * r.y - q.z * r.z;
    out.x = q.w * r.x + q.x * r.w + q.y * r.z - q.z * r.y;
    out.y = q.w * r.y - q.x * r.z + q.y * r.w + q.z * r.x;
    out.z = q.w * r.z + q.x * r.y - q.y * r.x + q.z * r.w;
    return out.normalized();
}

inline double spectral_radius(const Mat4& m) {
    return Eigen::EigenSolver<Mat4>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Discrete-time Riccati equation solved by fixed-point iteration from
/// P0 = Q. Converges when the infinity-norm update drops below tol,
/// measured relative to max(1, |P|) so large solutions are not defeated
/// by their own rounding floor. Throws after max_iter.
inline Mat4 solve_riccati(const Mat4& a, const Mat46& b, const Mat4& q_mat,
                          const Eigen::Matrix<double, 6, 6>& r_mat,
                          double tol = 1e-12, int max_iter = 100000) {
    Mat4 p = q_mat;
    double residual = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::Matrix<double, 6, 6> denom = r_mat + b.transpose() * p * b;
        const auto llt = denom.llt();
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("solve_riccati: R + B'PB is not positive definite");
        }
        const Mat4 next = q_mat + a.transpose() * p * a -
                          a.transpose() * p * b * llt.solve(b.transpose() * p * a);
        residual = (next - p).cwiseAbs().maxCoeff();
        p = 0.5 * (next + next.transpose());
        if (residual < tol * std::max(1.0, p.cwiseAbs().maxCoeff())) {
            return p;
        }
    }
    throw std::runtime_error("solve_riccati: no convergence, final residual " +
                             std::to_string(residual));
}

/// Full gain synthesis. k_fb is the optimal LQR feedback; k_r is scaled
/// for unit DC gain from the reference to c_out * x on the closed loop;
/// k_i = ki_scale * k_r.
inline LqrGains lqr_gains(const Mat4& a, const Mat46& b, const Mat4& q_mat,
                          const Eigen::Matrix<double, 6, 6>& r_mat, double ki_scale,
                          const Eigen::RowVector4d& c_out = Eigen::RowVector4d(1, 0, 0, 0),
                          double riccati_tol = 1e-12) {
    LqrGains gains;
    gains.p = solve_riccati(a, b, q_mat, r_mat, riccati_tol);

    const Eigen::Matrix<double, 6, 6> denom = r_mat + b.transpose() * gains.p * b;
    const auto lu = denom.fullPivLu();
    if (!lu.isInvertible()) {
        throw std::runtime_error("lqr_gains: R + B'PB is singular");
    }
    gains.k_fb = lu.solve(b.transpose() * gains.p * a);

    const Mat4 closed = a - b * gains.k_fb;
    if (spectral_radius(closed) >= 1.0) {
        throw std::runtime_error("lqr_gains: closed loop is not Schur stable");
    }

    // DC gain from reference injection to c_out * x.
    const Eigen::RowVector<double, 6> m_dc =
        c_out * (Mat4::Identity() - closed).inverse() * b;
    const double mag2 = m_dc.squaredNorm();
    if (!(mag2 > 1e-18)) {
        throw std::runtime_error("lqr_gains: reference has no DC authority over the output");
    }
    gains.k_r = m_dc.transpose() / mag2;
    gains.k_i = ki_scale * gains.k_r;
    return gains;
}

/// Nearest-region selection, ties broken toward the lowest index.
inline int select_operator(const Vec4& x, const RegionSet& regions) {
    return nearest_center(x, regions.centers);
}

/// Buffered operator transition: (1 - beta) * previous + beta * selected.
inline MatX blend_operator(const MatX& k_prev, const MatX& k_sel, double beta) {
    if (k_prev.rows() != k_sel.rows() || k_prev.cols() != k_sel.cols()) {
        throw std::invalid_argument("blend_operator: dimension mismatch");
    }
    if (!(beta > 0.0) || beta > 1.0) {
        throw std::invalid_argument("blend_operator: beta must be in (0, 1]");
    }
    return (1.0 - beta) * k_prev + beta * k_sel;
}

/// Everything the controller needs about one region: synthesized gains
/// plus the operating point the deviation coordinates are measured from.
struct RegionGains {
    LqrGains lqr;
    Vec4 x_op = Vec4::Zero();
    double y_op = 0.0;  // measured output at the operating point
};

struct SaKlqrOptions {
    double beta = 0.2;
    double beta_distance_gain = 0.0;  // adaptive-beta hook; 0 keeps beta constant
    double integral_clamp = 1.5;      // N*s
    double torque_clamp = 250.0;
};

/// Mutable controller state owned by a single control loop.
struct ControllerState {
    double integral_acc = 0.0;
    Mat64 k_fb_current = Mat64::Zero();
    Mat64 k_fb_previous = Mat64::Zero();
    Vec6 k_r_current = Vec6::Zero();
    Vec6 k_i_current = Vec6::Zero();
    Vec4 x_op_current = Vec4::Zero();
    double y_op_current = 0.0;
    int active_region = -1;
    Quaternion q_current;
    double beta = 0.2;
    double prev_theta = 0.0;
    Vec6 last_u = Vec6::Zero();
    bool fault = false;
};

/// One SA-KLQR update: select the nearest region, blend the active
/// operator toward it, integrate the force error, and apply the control
/// law in deviation coordinates. Returns the torque command.
inline Vec6 control_step(ControllerState& ctrl, const Vec4& x, double y_meas,
                         double v_ref, double dt, const RegionSet& regions,
                         const std::vector<RegionGains>& gains,
                         const SaKlqrOptions& opt = {}) {
    if (!x.allFinite() || !std::isfinite(y_meas)) {
        ctrl.fault = true;
        return ctrl.last_u;
    }
    if (static_cast<int>(gains.size()) != regions.size()) {
        throw std::invalid_argument("control_step: gains/regions size mismatch");
    }

    const int sel = select_operator(x, regions);
    const RegionGains& target = gains[sel];

    if (ctrl.active_region < 0) {
        ctrl.k_fb_current = target.lqr.k_fb;
        ctrl.k_r_current = target.lqr.k_r;
        ctrl.k_i_current = target.lqr.k_i;
        ctrl.x_op_current = target.x_op;
        ctrl.y_op_current = target.y_op;
        ctrl.prev_theta = x(0);
    } else {
        double beta = opt.beta;
        if (opt.beta_distance_gain > 0.0 && regions.size() > 1) {
            // Blend faster the deeper the state sits inside the selected region.
            double d_sel = (x - regions.centers[sel]).norm();
            double d_next = std::numeric_limits<double>::infinity();
            for (int i = 0; i < regions.size(); ++i) {
                if (i != sel) {
                    d_next = std::min(d_next, (x - regions.centers[i]).norm());
                }
            }
            const double margin = (d_next - d_sel) / std::max(d_next + d_sel, 1e-12);
            beta = clamp(beta * (1.0 + opt.beta_distance_gain * margin), 1e-3, 1.0);
        }
        ctrl.beta = beta;
        ctrl.k_fb_previous = ctrl.k_fb_current;
        ctrl.k_fb_current = blend_operator(ctrl.k_fb_current, target.lqr.k_fb, beta);
        ctrl.k_r_current = blend_operator(ctrl.k_r_current, target.lqr.k_r, beta);
        ctrl.k_i_current = blend_operator(ctrl.k_i_current, target.lqr.k_i, beta);
        ctrl.x_op_current = (1.0 - beta) * ctrl.x_op_current + beta * target.x_op;
        ctrl.y_op_current = (1.0 - beta) * ctrl.y_op_current + beta * target.y_op;
    }
    ctrl.active_region = sel;

    const double e = v_ref - y_meas;
    ctrl.integral_acc =
        clamp(ctrl.integral_acc + e * dt, -opt.integral_clamp, opt.integral_clamp);

    const Vec4 x_dev = x - ctrl.x_op_current;
    const double v_dev = v_ref - ctrl.y_op_current;
    Vec6 u = -ctrl.k_fb_current * x_dev + ctrl.k_r_current * v_dev +
             ctrl.k_i_current * ctrl.integral_acc;
    u = u.cwiseMax(-opt.torque_clamp).cwiseMin(opt.torque_clamp);

    ctrl.q_current = apply_rotation(ctrl.q_current, roll_increment(x(0) - ctrl.prev_theta));
    ctrl.prev_theta = x(0);
    ctrl.last_u = u;
    return u;
}

}  // namespace saklqr
