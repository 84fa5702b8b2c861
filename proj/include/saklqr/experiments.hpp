#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "saklqr/baselines.hpp"
#include "saklqr/centroid.hpp"
#include "saklqr/config.hpp"
#include "saklqr/control.hpp"
#include "saklqr/csv.hpp"
#include "saklqr/koopman.hpp"
#include "saklqr/plant.hpp"
#include "saklqr/training.hpp"
#include "saklqr/trajectory.hpp"

namespace saklqr {

enum class ControllerKind { SaKlqr, Pid, Smc };

inline const char* to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::SaKlqr: return "saklqr";
        case ControllerKind::Pid: return "pid";
        case ControllerKind::Smc: return "smc";
    }
    return "unknown";
}

inline ControllerKind controller_kind_from_string(const std::string& s) {
    if (s == "saklqr") return ControllerKind::SaKlqr;
    if (s == "pid") return ControllerKind::Pid;
    if (s == "smc") return ControllerKind::Smc;
    throw std::invalid_argument("unknown controller: " + s);
}

/// Everything produced by the identification stage: dictionary, region
/// models, and per-region LQR gains in measured-force units.
struct FittedStack {
    Dictionary dict;
    RegionSet regions;
    std::vector<RegionGains> gains;
    std::vector<std::array<bool, kStateDim>> servo_owned;  // unidentifiable channels
    double kr_ref = 0.0;   // ensemble-median |k_r| along the roll channel
    double depth0 = 0.0;   // nominal press depth, m
    double nominal_force = 10.0;
    std::vector<TimedWaypoint> path;
};

inline std::vector<VecX> joint_samples(const TrajectoryDataset& data, int max_samples = 3000) {
    const int stride = std::max(1, data.size() / max_samples);
    std::vector<VecX> samples;
    samples.reserve(data.size() / stride + 1);
    for (int k = 0; k < data.size(); k += stride) {
        VecX z(kJointDim);
        z << data.records[k].x, data.records[k].u;
        samples.push_back(z);
    }
    return samples;
}

/// Per-dimension standard deviation of the joint samples, floored so a
/// degenerate dimension cannot blow up the scaling.
inline VecX feature_scales(const std::vector<VecX>& samples) {
    VecX mean = VecX::Zero(kJointDim);
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    VecX var = VecX::Zero(kJointDim);
    for (const auto& s : samples) var += (s - mean).array().square().matrix();
    var /= static_cast<double>(samples.size());
    VecX scale = var.cwiseSqrt();
    for (int d = 0; d < kJointDim; ++d) {
        scale(d) = std::max(scale(d), 1e-6);
    }
    return scale;
}

inline Dictionary build_dictionary(const DictionarySpec& spec,
                                   const TrajectoryDataset& train) {
    auto samples = joint_samples(train);
    const VecX scale = feature_scales(samples);
    for (auto& s : samples) {
        s = s.cwiseQuotient(scale);
    }

    Dictionary dict;
    switch (spec.kind) {
        case DictionaryKind::Raw:
            dict = Dictionary::raw();
            break;
        case DictionaryKind::Poly2:
            dict = Dictionary::poly2();
            break;
        case DictionaryKind::Poly3:
            dict = Dictionary::poly3();
            break;
        case DictionaryKind::Rbf: {
            auto centers = kmeans_centers(samples, spec.n_rbf_centers);
            dict = Dictionary::rbf(centers, median_pairwise_distance(centers));
            break;
        }
        case DictionaryKind::Fourier:
            dict = Dictionary::fourier(
                build_fourier_freqs(samples, spec.n_fourier_freqs, spec.fourier_seed));
            break;
        case DictionaryKind::Combined: {
            auto centers = kmeans_centers(samples, spec.n_rbf_centers);
            dict = Dictionary::combined(centers, median_pairwise_distance(centers));
            break;
        }
    }
    dict.scale = scale;
    return dict;
}

/// Zigzag waypoints mapped into Koopman state space at contact depth.
inline std::vector<Vec4> path_states(const std::vector<TimedWaypoint>& path, double depth0) {
    std::vector<Vec4> states;
    states.reserve(path.size());
    for (const auto& wp : path) {
        states.push_back(Vec4(0.0, wp.pos.x(), wp.pos.y(), -depth0));
    }
    return states;
}

/// State channels whose within-region excitation stays below this level
/// are owned by the posture servo, not the force loop; their deviation
/// dynamics cannot be identified from parked data.
inline constexpr double kIdentifiableStd = 5e-4;

/// Scalar roll-channel LQR: the force loop actuates the roll-torque
/// direction only, so the design uses the model's authority along that
/// direction and the gains are composed back onto the joint torques
/// (rank one). The tangent is evaluated at x_eval.
inline LqrGains synthesize_roll_gains(const ExperimentConfig& cfg, const KoopmanModel& model,
                                      const std::array<bool, kStateDim>& servo_owned,
                                      const Vec4& x_eval, const Vec6& d_roll) {
    const Mat4 q = cfg.controller.q_diag.asDiagonal();
    const Eigen::Matrix<double, 6, 6> r_mat =
        cfg.controller.r_scale * Eigen::Matrix<double, 6, 6>::Identity();

    const auto [dpsi_dx, dpsi_du] = jacobians(x_eval, model.u_op, model.dict);
    Eigen::RowVector4d c_out = (model.c * dpsi_dx) / cfg.plant.sensor.adc_scale;
    for (int ch = 0; ch < kStateDim; ++ch) {
        if (servo_owned[ch]) {
            c_out(ch) = 0.0;
        }
    }

    Mat46 b_eff = Mat46::Zero();
    b_eff.col(0) = model.b * d_roll;
    LqrGains gains = lqr_gains(model.a, b_eff, q, r_mat, cfg.controller.ki_scale, c_out);
    gains.k_fb = (d_roll * gains.k_fb.row(0)).eval();
    gains.k_r = (d_roll * gains.k_r(0)).eval();
    gains.k_i = cfg.controller.ki_scale * gains.k_r;
    return gains;
}

/// Identification stage: excite the surrogate, fit per-region Koopman
/// models, synthesize LQR gains about each region center. Rows of (a, b)
/// belonging to servo-held channels are replaced by the dead-beat servo
/// prior (the Cartesian loop settles within one control tick), which
/// keeps the gain synthesis away from unidentifiable directions.
inline FittedStack fit_pipeline(const ExperimentConfig& cfg) {
    FittedStack stack;
    stack.nominal_force = cfg.trajectory.f0 + 0.5 * cfg.trajectory.f_amp;
    stack.depth0 = nominal_penetration(cfg.plant, stack.nominal_force);
    stack.path = zigzag_path(kPadSideMeters, cfg.ablation.n_passes, cfg.ablation.speed);

    const TrajectoryDataset data =
        collect_training_data(cfg.plant, cfg.excitation, cfg.seed, cfg.dt, stack.path,
                              stack.nominal_force, cfg.control_stride);
    if (data.truncated) {
        throw std::runtime_error("fit_pipeline: excitation produced non-finite states");
    }

    stack.dict = build_dictionary(cfg.dictionary, data);
    stack.regions = segment_regions(path_states(stack.path, stack.depth0), cfg.n_regions,
                                    data, stack.dict, cfg.svd_tol);

    // Per-region, per-channel excitation level of the snapshot states.
    MatX channel_std = MatX::Zero(stack.regions.size(), kStateDim);
    {
        std::vector<MatX> sums(stack.regions.size(), MatX::Zero(2, kStateDim));
        std::vector<int> counts(stack.regions.size(), 0);
        for (const auto& rec : data.records) {
            const int r = nearest_center(rec.x, stack.regions.centers);
            sums[r].row(0) += rec.x.transpose();
            sums[r].row(1) += rec.x.transpose().array().square().matrix();
            counts[r] += 1;
        }
        for (int r = 0; r < stack.regions.size(); ++r) {
            if (counts[r] > 1) {
                const auto mean = sums[r].row(0) / counts[r];
                const auto mom2 = sums[r].row(1) / counts[r];
                channel_std.row(r) =
                    (mom2 - mean.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
            }
        }
    }

    const Vec6 d_roll = cfg.plant.j_eff_pinv().col(0);

    stack.gains.reserve(stack.regions.size());
    stack.servo_owned.reserve(stack.regions.size());
    for (int r = 0; r < stack.regions.size(); ++r) {
        KoopmanModel& model = stack.regions.models[r];
        std::array<bool, kStateDim> owned{};
        for (int ch = 0; ch < kStateDim; ++ch) {
            owned[ch] = channel_std(r, ch) < kIdentifiableStd;
            if (owned[ch]) {
                // Neither the channel's own evolution nor its couplings
                // into other channels are identifiable from parked data.
                model.a.row(ch).setZero();
                model.a.col(ch).setZero();
                model.b.row(ch).setZero();
            }
        }
        stack.servo_owned.push_back(owned);

        RegionGains rg;
        rg.lqr = synthesize_roll_gains(cfg, model, owned, model.x_op, d_roll);
        rg.x_op = model.x_op;
        rg.y_op = model.y_op / cfg.plant.sensor.adc_scale;
        stack.gains.push_back(rg);
    }

    // The regions share the same local physics, so their loop-gain
    // estimates must agree; an outlier is a fit artifact and inherits the
    // median region's gain set.
    {
        std::vector<double> kr_mags;
        for (const auto& rg : stack.gains) {
            kr_mags.push_back(rg.lqr.k_r.norm());
        }
        std::vector<double> sorted = kr_mags;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        stack.kr_ref = sorted[sorted.size() / 2];
        int median_region = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < stack.regions.size(); ++r) {
            const double d = std::abs(kr_mags[r] - stack.kr_ref);
            if (d < best) {
                best = d;
                median_region = r;
            }
        }
        for (int r = 0; r < stack.regions.size(); ++r) {
            if (kr_mags[r] > 4.0 * stack.kr_ref || kr_mags[r] < stack.kr_ref / 4.0) {
                stack.gains[r].lqr = stack.gains[median_region].lqr;
                stack.regions.fallback[r] = true;
            }
        }
    }
    return stack;
}

/// Gains recomputed from a live tangent (extract_ab at the current
/// state). Implausible results (outside the ensemble gain range) and
/// synthesis failures fall back to the cached region gains.
inline RegionGains live_region_gains(const ExperimentConfig& cfg, const FittedStack& stack,
                                     int region, const Vec4& x_live, const Vec6& d_roll) {
    RegionGains rg = stack.gains[region];
    try {
        const KoopmanModel& model = stack.regions.models[region];
        auto [a, b] = extract_ab(model, x_live, model.u_op);
        KoopmanModel live = model;
        live.a = a;
        live.b = b;
        for (int ch = 0; ch < kStateDim; ++ch) {
            if (stack.servo_owned[region][ch]) {
                live.a.row(ch).setZero();
                live.a.col(ch).setZero();
                live.b.row(ch).setZero();
            }
        }
        const LqrGains gains =
            synthesize_roll_gains(cfg, live, stack.servo_owned[region], x_live, d_roll);
        const double mag = gains.k_r.norm();
        if (stack.kr_ref <= 0.0 ||
            (mag <= 4.0 * stack.kr_ref && mag >= stack.kr_ref / 4.0)) {
            rg.lqr = gains;
        }
    } catch (const std::exception&) {
        // keep the cached gains
    }
    return rg;
}

// ---------------------------------------------------------------------------
// Closed-loop runners

namespace detail {

/// FIFO emulating the force-path latency; primed with the first reading.
class DelayLine {
public:
    explicit DelayLine(int delay_steps) : delay_(std::max(0, delay_steps)) {}

    double push(double v) {
        if (buf_.empty()) {
            buf_.assign(delay_ + 1, v);
        }
        buf_.push_back(v);
        const double out = buf_.front();
        buf_.pop_front();
        return out;
    }

private:
    int delay_;
    std::deque<double> buf_;
};

inline double measured_force_n(const PlantState& state, const PlantParams& params,
                               Rng* noise_rng,
                               const Eigen::Vector2d& extra_shift = Eigen::Vector2d::Zero()) {
    const double transmitted =
        contact_force(state, params) * fsr_transmission(state, params, extra_shift);
    const double counts = noise_rng && params.noise_std > 0.0
                              ? sense_fsr(transmitted, params.sensor, params.noise_std,
                                          *noise_rng)
                              : sense_fsr(transmitted, params.sensor);
    return counts / params.sensor.adc_scale;
}

/// Measured-force sensitivity to the roll angle at an operating state,
/// by central difference; feeds the SMC nominal model.
inline double g_theta_at(const PlantState& op, const PlantParams& params) {
    const double h = 1e-4;
    PlantState hi = op;
    hi.theta += h;
    PlantState lo = op;
    lo.theta -= h;
    return (measured_force_n(hi, params, nullptr) - measured_force_n(lo, params, nullptr)) /
           (2.0 * h);
}

inline PlantState pressed_state(const Eigen::Vector2d& xy, double depth0) {
    PlantState state;
    state.pos = Eigen::Vector3d(xy.x(), xy.y(), -depth0);
    return state;
}

inline double reference_second_derivative(const ReferenceTrajectory& traj, double t) {
    if (traj.kind == WaveKind::Sine) {
        const double w = 2.0 * M_PI * traj.omega;
        return -0.5 * traj.f_amp * w * w * std::sin(w * t);
    }
    return 0.0;  // triangle: piecewise linear
}

}  // namespace detail

/// Ziegler-Nichols on the surrogate: proportional-only force loop on the
/// roll channel, ultimate gain and period by bisection on the
/// oscillation onset, then the classic table.
inline PidParams zn_tune(const ExperimentConfig& cfg, const ZnProbeSpec& probe_spec = {}) {
    const double nominal_force = cfg.trajectory.f0 + 0.5 * cfg.trajectory.f_amp;
    const double depth0 = nominal_penetration(cfg.plant, nominal_force);
    const Eigen::Vector2d center(0.5 * kPadSideMeters, 0.5 * kPadSideMeters);
    const PostureServo servo(cfg.plant);
    const Vec6 d_roll = cfg.plant.j_eff_pinv().col(0);
    const double dt_ctrl = cfg.dt_control();
    const int n_ticks = static_cast<int>(8.0 / dt_ctrl);

    auto probe = [&](double kp) {
        PlantState state = detail::pressed_state(center, depth0);
        detail::DelayLine delay(cfg.plant.sensor_delay_steps);
        double y_delayed = delay.push(detail::measured_force_n(state, cfg.plant, nullptr));
        std::vector<double> trace;
        trace.reserve(n_ticks);
        for (int k = 0; k < n_ticks; ++k) {
            const double e = nominal_force - y_delayed;
            trace.push_back(e);
            // The probe saturates exactly like the deployed PID.
            const double cmd = clamp(kp * e, -cfg.pid.params.output_clamp,
                                     cfg.pid.params.output_clamp);
            const Vec6 u_ctrl = cmd * d_roll;
            for (int i = 0; i < cfg.control_stride; ++i) {
                const Vec6 u = u_ctrl + servo.torques(state, center, -depth0);
                state = step_plant(state, u, cfg.dt, cfg.plant);
                if (!state.koopman_state().allFinite()) {
                    trace.resize(n_ticks, 1e12);
                    return trace;
                }
                y_delayed = delay.push(detail::measured_force_n(state, cfg.plant, nullptr));
            }
        }
        return trace;
    };

    const ZnTuning zn = zn_find_ultimate(probe, dt_ctrl, probe_spec);
    PidParams tuned = pid_from_ultimate(zn);
    tuned.deriv_filter_tau = cfg.pid.params.deriv_filter_tau;
    tuned.windup_clamp = cfg.pid.params.windup_clamp;
    tuned.output_clamp = cfg.pid.params.output_clamp;
    return tuned;
}

inline PidParams resolve_pid(const ExperimentConfig& cfg) {
    return cfg.pid.auto_zn ? zn_tune(cfg, cfg.pid.probe) : cfg.pid.params;
}

struct TrackingResult {
    Metrics metrics;
    bool aborted = false;
    std::string csv_path;
};

inline const std::vector<std::string>& tracking_csv_header() {
    static const std::vector<std::string> header = {
        "t",  "reference", "measured_force", "error", "u1", "u2",    "u3",        "u4",
        "u5", "u6",        "theta",          "x",     "y",  "z",     "region",    "controller"};
    return header;
}

/// Fixed-step closed loop (controller -> plant -> sensor) over a force
/// reference at a static contact location. All controllers share the
/// posture servo, the sensor path, and its latency.
inline TrackingResult run_tracking_experiment(const ExperimentConfig& cfg,
                                              const FittedStack& stack,
                                              ControllerKind kind,
                                              const std::string& csv_path,
                                              const PidParams* pid_override = nullptr) {
    const ReferenceTrajectory& traj = cfg.trajectory;
    const double dt_ctrl = cfg.dt_control();
    const Eigen::Vector2d center(0.5 * kPadSideMeters, 0.5 * kPadSideMeters);
    const double depth0 = stack.depth0;
    const PostureServo servo(cfg.plant);
    const Vec6 d_roll = cfg.plant.j_eff_pinv().col(0);

    PidParams pid_params = cfg.pid.params;
    if (kind == ControllerKind::Pid) {
        pid_params = pid_override ? *pid_override : resolve_pid(cfg);
    }
    SmcParams smc_params = cfg.smc;
    ControllerState ctrl;
    PidState pid_state;
    double smc_e_int = 0.0;
    double smc_prev_e = 0.0;
    double smc_filt_deriv = 0.0;
    bool smc_primed = false;
    const double smc_deriv_tau = 2.0 * dt_ctrl;

    PlantState state = detail::pressed_state(center, depth0);
    if (kind == ControllerKind::Smc) {
        smc_params.f0_spec.g_theta = detail::g_theta_at(state, cfg.plant);
        smc_params.f0_spec.damping = cfg.plant.damping;
        smc_params.f0_spec.k_handle = cfg.plant.k_handle;
        smc_params.b0 = smc_params.f0_spec.g_theta;
    }

    Rng noise_rng(cfg.seed ^ 0xf005ba11ULL);
    detail::DelayLine delay(cfg.plant.sensor_delay_steps);
    double y_now = detail::measured_force_n(state, cfg.plant, &noise_rng);
    double y_delayed = delay.push(y_now);

    std::vector<RegionGains> gains_buf = stack.gains;
    auto saklqr_gains = [&](const Vec4& x) -> const std::vector<RegionGains>& {
        if (!cfg.controller.live_gains) {
            return stack.gains;
        }
        const int sel = select_operator(x, stack.regions);
        gains_buf[sel] = live_region_gains(cfg, stack, sel, x, d_roll);
        return gains_buf;
    };

    auto control = [&](const PlantState& st, double y_n, double v, double t) -> Vec6 {
        switch (kind) {
            case ControllerKind::SaKlqr:
                return control_step(ctrl, st.koopman_state(), y_n, v, dt_ctrl,
                                    stack.regions, saklqr_gains(st.koopman_state()),
                                    cfg.controller.options);
            case ControllerKind::Pid:
                return pid_step(pid_params, pid_state, v - y_n, dt_ctrl) * d_roll;
            case ControllerKind::Smc: {
                const double e = v - y_n;
                smc_e_int = clamp(smc_e_int + e * dt_ctrl, -5.0, 5.0);
                const double raw = smc_primed ? (e - smc_prev_e) / dt_ctrl : 0.0;
                smc_filt_deriv += dt_ctrl / (smc_deriv_tau + dt_ctrl) * (raw - smc_filt_deriv);
                smc_prev_e = e;
                smc_primed = true;
                const double f0 = smc_params.f0_spec.f0(st.theta, st.vel(0));
                const double r_dd = detail::reference_second_derivative(traj, t);
                return smc_step(smc_params, e, smc_filt_deriv, smc_e_int, r_dd, f0) * d_roll;
            }
        }
        return Vec6::Zero();
    };

    // Advance the plant one control tick under a held command.
    auto advance = [&](const Vec6& u_ctrl) {
        for (int i = 0; i < cfg.control_stride; ++i) {
            const Vec6 u = u_ctrl + servo.torques(state, center, -depth0);
            state = step_plant(state, u, cfg.dt, cfg.plant);
            if (!state.koopman_state().allFinite()) {
                return false;
            }
            y_now = detail::measured_force_n(state, cfg.plant, &noise_rng);
            y_delayed = delay.push(y_now);
        }
        return true;
    };

    // Settle at the initial reference before the scored window.
    const double v0 = reference_at(traj, 0.0);
    for (int k = 0; k < static_cast<int>(2.0 / dt_ctrl); ++k) {
        if (!advance(control(state, y_delayed, v0, 0.0))) {
            break;
        }
    }

    TrackingResult result;
    result.csv_path = csv_path;
    CsvWriter csv(csv_path, tracking_csv_header());

    const int n_ticks = static_cast<int>(traj.duration / dt_ctrl);
    std::vector<double> refs;
    std::vector<double> meas;
    refs.reserve(n_ticks);
    meas.reserve(n_ticks);

    for (int k = 0; k < n_ticks; ++k) {
        const double t = k * dt_ctrl;
        const double v = reference_at(traj, t);
        // The command computed now is held over [t, t+dt); it aims at the
        // reference sample it is supposed to realize.
        const double v_cmd = v;
        const Vec6 u_ctrl = control(state, y_delayed, v_cmd, t);

        // The log carries the current sensor sample (offline analysis
        // aligns streams by sample time); the controller sees it late.
        refs.push_back(v);
        meas.push_back(y_now);
        csv.write_row({format_double(t), format_double(v), format_double(y_now),
                       format_double(v - y_now), format_double(u_ctrl(0)),
                       format_double(u_ctrl(1)), format_double(u_ctrl(2)),
                       format_double(u_ctrl(3)), format_double(u_ctrl(4)),
                       format_double(u_ctrl(5)), format_double(state.theta),
                       format_double(state.pos.x()), format_double(state.pos.y()),
                       format_double(state.pos.z()),
                       std::to_string(kind == ControllerKind::SaKlqr ? ctrl.active_region : -1),
                       to_string(kind)});

        if (!advance(u_ctrl)) {
            result.aborted = true;
            break;
        }
    }
    csv.flush();

    const int n = static_cast<int>(meas.size());
    if (n >= 2) {
        VecX pred = Eigen::Map<VecX>(meas.data(), n);
        VecX actual = Eigen::Map<VecX>(refs.data(), n);
        result.metrics = eval_metrics(pred, actual);
    }
    return result;
}

/// Recompute tracking metrics from an emitted CSV; every reported number
/// must be reproducible from the log alone.
inline Metrics metrics_from_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int c_ref = table.column("reference");
    const int c_meas = table.column("measured_force");
    const int n = static_cast<int>(table.rows.size());
    VecX pred(n);
    VecX actual(n);
    for (int i = 0; i < n; ++i) {
        pred(i) = table.rows[i][c_meas];
        actual(i) = table.rows[i][c_ref];
    }
    return eval_metrics(pred, actual);
}

struct ComparisonRow {
    std::string controller;
    std::string wave;
    double omega = 0.0;
    Metrics metrics;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;

    const ComparisonRow& find(const std::string& controller, const std::string& wave,
                              double omega) const {
        for (const auto& r : rows) {
            if (r.controller == controller && r.wave == wave && r.omega == omega) {
                return r;
            }
        }
        throw std::runtime_error("ComparisonReport: missing row " + controller + "/" + wave);
    }
};

/// Table II analog: sine/triangle at low/high frequency, all three
/// controllers on identical plants and seeds.
inline ComparisonReport run_comparison(const ExperimentConfig& cfg, const FittedStack& stack,
                                       const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const PidParams pid_params = resolve_pid(cfg);

    ComparisonReport report;
    CsvWriter summary(out_dir + "/comparison_summary.csv",
                      {"controller", "wave", "omega", "rmse", "mae", "max_ae"});

    for (WaveKind wave : {WaveKind::Sine, WaveKind::Triangle}) {
        for (double omega : {0.5, 2.0}) {
            ExperimentConfig run_cfg = cfg;
            run_cfg.trajectory.kind = wave;
            run_cfg.trajectory.omega = omega;
            run_cfg.trajectory.duration = cfg.trajectory_cycles / omega;
            for (ControllerKind kind :
                 {ControllerKind::SaKlqr, ControllerKind::Pid, ControllerKind::Smc}) {
                const std::string name = std::string(to_string(wave)) + "_" +
                                         (omega < 1.0 ? "low" : "high") + "_" +
                                         to_string(kind);
                const auto result = run_tracking_experiment(
                    run_cfg, stack, kind, out_dir + "/track_" + name + ".csv", &pid_params);
                if (result.aborted) {
                    throw std::runtime_error("run_comparison: plant diverged in " + name);
                }
                report.rows.push_back(
                    {to_string(kind), to_string(wave), omega, result.metrics});
                summary.write_row({to_string(kind), to_string(wave), format_double(omega),
                                   format_double(result.metrics.rmse),
                                   format_double(result.metrics.mae),
                                   format_double(result.metrics.max_ae)});
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Centroid ablation

struct AblationRow {
    double mean_centroid_error_cm = 0.0;
    double coverage_pct = 0.0;
    double mean_force_error_pct = 0.0;
    double completion_time_s = 0.0;
};

struct AblationReport {
    AblationRow standard;
    AblationRow regulated;
};

namespace detail {

inline AblationRow run_sweep(const ExperimentConfig& cfg, const FittedStack& stack,
                             bool regulated, const std::string& csv_path,
                             const std::string& coverage_path) {
    const double dt_ctrl = cfg.dt_control();
    const AblationSpec& ab = cfg.ablation;
    const auto& path = stack.path;
    const double duration = path_duration(path);
    const PostureServo servo(cfg.plant);
    const Vec6 d_roll = cfg.plant.j_eff_pinv().col(0);

    CentroidMonitor monitor = make_monitor(cfg.centroid, Eigen::Vector2d(7.5, 7.5));
    ControllerState ctrl;
    Rng noise_rng(cfg.seed ^ 0xf005ba11ULL);
    Rng dist_rng(cfg.seed ^ 0xd157ULL);
    // Exogenous pressure-centroid drift: a persistent bias plus a slow
    // wander, identical in both runs. The force loop cannot see it; only
    // the centroid regulator can counter it with roll.
    BandNoise drift_noise(ab.drift_amp_cells, ab.drift_bandwidth, dt_ctrl, dist_rng);
    Eigen::Vector2d drift(ab.drift_bias_cells, 0.0);
    DelayLine delay(cfg.plant.sensor_delay_steps);

    PlantState state = pressed_state(path.front().pos, stack.depth0);
    double y_delayed = delay.push(measured_force_n(state, cfg.plant, &noise_rng, drift));

    std::vector<RegionGains> gains_buf = stack.gains;
    auto saklqr_gains = [&](const Vec4& x) -> const std::vector<RegionGains>& {
        if (!cfg.controller.live_gains) {
            return stack.gains;
        }
        const int sel = select_operator(x, stack.regions);
        gains_buf[sel] = live_region_gains(cfg, stack, sel, x, d_roll);
        return gains_buf;
    };

    // Advance one control tick: held force command, per-step posture servo
    // toward the moving waypoint.
    auto advance = [&](const Vec6& u_ctrl, double t0, double z_ref) {
        for (int i = 0; i < cfg.control_stride; ++i) {
            const Eigen::Vector2d pos_ref = path_position(path, t0 + i * cfg.dt);
            const Vec6 u = u_ctrl + servo.torques(state, pos_ref, z_ref);
            state = step_plant(state, u, cfg.dt, cfg.plant);
            if (!state.koopman_state().allFinite()) {
                throw std::runtime_error("run_centroid_ablation: plant diverged");
            }
            y_delayed = delay.push(measured_force_n(state, cfg.plant, &noise_rng, drift));
        }
    };

    // Settle the loops at the sweep start before moving.
    for (int k = 0; k < static_cast<int>(1.5 / dt_ctrl); ++k) {
        const Vec6 u_ctrl =
            control_step(ctrl, state.koopman_state(), y_delayed, ab.hold_force, dt_ctrl,
                         stack.regions, saklqr_gains(state.koopman_state()),
                         cfg.controller.options);
        advance(u_ctrl, 0.0, -stack.depth0);
    }

    CsvWriter csv(csv_path,
                  {"t", "reference", "measured_force", "error", "u1", "u2", "u3", "u4",
                   "u5", "u6", "theta", "x", "y", "z", "region", "controller", "true_force",
                   "cx", "cy", "d_cm", "fuzzyen", "roll_adjust", "force_scale",
                   "correction_freq"});

    ForceGrid coverage;  // per-cell max over the run
    double theta_ref = 0.0;
    double z_trim = 0.0;
    const double trim_gain = 4e-3;  // m per N*s, slow press-depth trim
    double v_eff = ab.hold_force;
    double next_correction_t = 0.0;

    Eigen::Vector2d cen(7.5, 7.5);
    double d_cm = 0.0;
    double fuzzyen = 0.0;
    CorrectionCommand cmd;
    cmd.correction_freq = monitor.correction_rate;

    double d_sum = 0.0;
    int d_count = 0;
    double force_err_sum = 0.0;
    int force_count = 0;

    const int n_ticks = static_cast<int>(duration / dt_ctrl);
    for (int k = 0; k < n_ticks; ++k) {
        const double t = k * dt_ctrl;
        const Eigen::Vector2d pos_ref = path_position(path, t);
        const double f_true = contact_force(state, cfg.plant);
        const double y_n = y_delayed;
        drift.x() = ab.drift_bias_cells + drift_noise.next();

        const ForceGrid grid = sample_pad(state, cfg.plant, drift);
        coverage.cells = coverage.cells.cwiseMax(grid.cells);

        // Monitor runs at the control cadence; corrections are applied at
        // the commanded correction frequency.
        monitor.target = Eigen::Vector2d(pos_ref.x() / kPadPitchMeters - 0.5,
                                         pos_ref.y() / kPadPitchMeters - 0.5);
        cmd = regulate(monitor, grid);
        if (!cmd.fault) {
            cen = monitor.last_centroid;
            d_cm = monitor.d_history.empty() ? 0.0 : monitor.d_history.back();
            fuzzyen = monitor.last_fuzzyen;
            d_sum += d_cm;
            ++d_count;
        }
        if (regulated && !cmd.fault) {
            if (t >= next_correction_t && cmd.roll_adjust != 0.0) {
                theta_ref = clamp(theta_ref + cmd.roll_adjust, -0.5, 0.5);
                next_correction_t = t + 1.0 / cmd.correction_freq;
            }
            v_eff = ab.hold_force * cmd.force_scale;
        }

        // Slow press-depth trim keeps the force loop honest while the
        // roll channel is busy with alignment; identical in both runs.
        z_trim = clamp(z_trim + trim_gain * (v_eff - y_n) * dt_ctrl, -0.004, 0.004);
        const double z_ref = -stack.depth0 - z_trim;

        Vec4 x_ctrl = state.koopman_state();
        x_ctrl(0) -= theta_ref;
        const Vec6 u_ctrl = control_step(ctrl, x_ctrl, y_n, v_eff, dt_ctrl, stack.regions,
                                         saklqr_gains(x_ctrl), cfg.controller.options);

        force_err_sum += std::abs(f_true - ab.hold_force) / ab.hold_force;
        ++force_count;

        csv.write_row({format_double(t), format_double(v_eff), format_double(y_n),
                       format_double(v_eff - y_n), format_double(u_ctrl(0)),
                       format_double(u_ctrl(1)), format_double(u_ctrl(2)),
                       format_double(u_ctrl(3)), format_double(u_ctrl(4)),
                       format_double(u_ctrl(5)), format_double(state.theta),
                       format_double(state.pos.x()), format_double(state.pos.y()),
                       format_double(state.pos.z()), std::to_string(ctrl.active_region),
                       regulated ? "saklqr+centroid" : "saklqr", format_double(f_true),
                       format_double(cen.x()), format_double(cen.y()), format_double(d_cm),
                       format_double(fuzzyen), format_double(cmd.roll_adjust),
                       format_double(cmd.force_scale), format_double(cmd.correction_freq)});

        advance(u_ctrl, t, z_ref);
    }
    csv.flush();

    // Final coverage map as a 16x16 CSV block.
    {
        std::ofstream out(coverage_path, std::ios::binary);
        for (int i = 0; i < kGridDim; ++i) {
            for (int j = 0; j < kGridDim; ++j) {
                if (j > 0) out << ',';
                out << format_double(coverage.cells(i, j));
            }
            out << '\n';
        }
    }

    AblationRow row;
    row.mean_centroid_error_cm = d_count > 0 ? d_sum / d_count : 0.0;
    row.coverage_pct = coverage_percentage(coverage, ab.coverage_threshold);
    row.mean_force_error_pct = force_count > 0 ? 100.0 * force_err_sum / force_count : 0.0;
    row.completion_time_s = duration;
    return row;
}

}  // namespace detail

/// Table III analog: one sweep with the centroid regulator off, one with
/// it on, identical seeds and disturbances.
inline AblationReport run_centroid_ablation(const ExperimentConfig& cfg,
                                            const FittedStack& stack,
                                            const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    AblationReport report;
    report.standard = detail::run_sweep(cfg, stack, false, out_dir + "/ablation_standard.csv",
                                        out_dir + "/coverage_standard.csv");
    report.regulated = detail::run_sweep(cfg, stack, true, out_dir + "/ablation_regulated.csv",
                                         out_dir + "/coverage_regulated.csv");

    CsvWriter summary(out_dir + "/ablation_summary.csv",
                      {"condition", "mean_centroid_error_cm", "coverage_pct",
                       "mean_force_error_pct", "completion_time_s"});
    auto write = [&](const char* name, const AblationRow& row) {
        summary.write_row({name, format_double(row.mean_centroid_error_cm),
                           format_double(row.coverage_pct),
                           format_double(row.mean_force_error_pct),
                           format_double(row.completion_time_s)});
    };
    write("standard", report.standard);
    write("centroid_regulated", report.regulated);
    return report;
}

// ---------------------------------------------------------------------------
// Observable comparison

struct ObservableRow {
    std::string method;
    bool failed = false;
    std::string error;
    double avg_rmse = 0.0;
    double avg_r2 = 0.0;
    double avg_mae = 0.0;
    double output_r2 = 0.0;
};

struct ObservableReport {
    std::vector<ObservableRow> rows;  // ranked by avg_r2, best first

    const ObservableRow& find(const std::string& method) const {
        for (const auto& r : rows) {
            if (r.method == method) {
                return r;
            }
        }
        throw std::runtime_error("ObservableReport: missing method " + method);
    }
};

/// Held-out one-step prediction quality of one dictionary: per-state R^2,
/// RMSE, MAE plus the output map, averaged.
inline ObservableRow evaluate_dictionary(DictionaryKind kind, const DictionarySpec& spec,
                                         const TrajectoryDataset& train,
                                         const TrajectoryDataset& holdout, double svd_tol) {
    ObservableRow row;
    row.method = to_string(kind);
    try {
        DictionarySpec local = spec;
        local.kind = kind;
        const Dictionary dict = build_dictionary(local, train);
        KoopmanModel model = fit_edmd(train, dict, svd_tol);
        fit_output_map(train, model);

        const auto pairs = holdout.pair_indices();
        if (pairs.size() < 2) {
            throw std::runtime_error("holdout too small");
        }
        const int n = static_cast<int>(pairs.size());
        const MatX advance = model.k_d.transpose();

        MatX pred_states(n, kStateDim);
        MatX true_states(n, kStateDim);
        VecX pred_out(n);
        VecX true_out(n);
        for (int i = 0; i < n; ++i) {
            const int k = pairs[i];
            const VecX psi = lift(holdout.records[k].x, holdout.records[k].u, dict);
            const VecX next = advance * psi;
            pred_states.row(i) = dict.raw_state_of(next).transpose();
            true_states.row(i) = holdout.records[k + 1].x.transpose();
            pred_out(i) = model.c.dot(psi);
            true_out(i) = holdout.records[k].y;
        }

        double rmse_sum = 0.0;
        double r2_sum = 0.0;
        double mae_sum = 0.0;
        for (int s = 0; s < kStateDim; ++s) {
            const Metrics m = eval_metrics(pred_states.col(s), true_states.col(s));
            rmse_sum += m.rmse;
            mae_sum += m.mae;
            r2_sum += m.r2.value_or(0.0);
        }
        const Metrics mo = eval_metrics(pred_out, true_out);
        row.output_r2 = mo.r2.value_or(0.0);
        row.avg_rmse = (rmse_sum + mo.rmse) / 5.0;
        row.avg_mae = (mae_sum + mo.mae) / 5.0;
        row.avg_r2 = (r2_sum + row.output_r2) / 5.0;
    } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
    }
    return row;
}

/// Table I analog: every in-scope dictionary fitted on identical data,
/// scored on the held-out tail of each episode, ranked by average R^2.
inline ObservableReport run_observable_comparison(const ExperimentConfig& cfg,
                                                  const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto path = zigzag_path(kPadSideMeters, cfg.ablation.n_passes, cfg.ablation.speed);
    const double nominal_force = cfg.trajectory.f0 + 0.5 * cfg.trajectory.f_amp;
    const TrajectoryDataset data =
        collect_training_data(cfg.plant, cfg.excitation, cfg.seed, cfg.dt, path,
                              nominal_force, cfg.control_stride);
    const auto [train, holdout] = split_dataset(data, cfg.holdout_fraction);

    ObservableReport report;
    for (DictionaryKind kind :
         {DictionaryKind::Poly2, DictionaryKind::Poly3, DictionaryKind::Rbf,
          DictionaryKind::Fourier, DictionaryKind::Combined}) {
        report.rows.push_back(
            evaluate_dictionary(kind, cfg.dictionary, train, holdout, cfg.svd_tol));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ObservableRow& a, const ObservableRow& b) {
                         if (a.failed != b.failed) return !a.failed;
                         return a.avg_r2 > b.avg_r2;
                     });

    CsvWriter csv(out_dir + "/observables.csv",
                  {"method", "status", "avg_rmse", "avg_r2", "avg_mae", "output_r2"});
    for (const auto& row : report.rows) {
        csv.write_row({row.method, row.failed ? "failed" : "ok", format_double(row.avg_rmse),
                       format_double(row.avg_r2), format_double(row.avg_mae),
                       format_double(row.output_r2)});
    }
    return report;
}

}  // namespace saklqr
