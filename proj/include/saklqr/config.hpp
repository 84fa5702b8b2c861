#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "saklqr/baselines.hpp"
#include "saklqr/centroid.hpp"
#include "saklqr/control.hpp"
#include "saklqr/observables.hpp"
#include "saklqr/plant.hpp"
#include "saklqr/trajectory.hpp"

namespace saklqr {

inline constexpr int kConfigSchemaVersion = 1;

struct DictionarySpec {
    DictionaryKind kind = DictionaryKind::Combined;
    int n_rbf_centers = 24;
    int n_fourier_freqs = 8;
    std::uint64_t fourier_seed = 7;
};

struct ExcitationSpec {
    double episode_duration = 8.0;   // s per episode
    int n_episodes = 16;
    double torque_amp = 0.5;         // bound on the random torque, N*m
    double torque_bandwidth = 25.0;  // Hz; ~white at the model tick rate
    double theta_sweep_amp = 0.25;   // rad, quasi-static roll amplitude
    double theta_sweep_freq = 0.5;   // Hz
    double z_sweep_amp = 0.0018;     // m of extra press depth
    double z_sweep_freq = 0.17;      // Hz
    bool park_on_path = true;        // park episodes at zigzag sites
    int n_park_sites = 8;
};

struct ControllerSpec {
    Vec4 q_diag = Vec4(50.0, 1.0, 1.0, 1.0);
    double r_scale = 1e-8;
    double ki_scale = 4.0;
    bool live_gains = true;  // re-extract the tangent at the live state
    SaKlqrOptions options;
};

struct PidSpec {
    bool auto_zn = true;  // tune via Ziegler-Nichols on the surrogate
    PidParams params;
    ZnProbeSpec probe;
};

struct CentroidSpec {
    int window = 50;
    FuzzyParams fuzzy;
    CentroidThresholds thresholds;
    double correction_rate = 10.0;
    double correction_freq_cap = 40.0;
    double roll_gain_rad_per_cm = 0.05;
    double roll_adjust_sat = 0.15;
};

struct AblationSpec {
    double hold_force = 10.0;       // N, reference during the sweep
    int n_passes = 8;
    double speed = 0.02;            // m/s
    double drift_bias_cells = 1.6;  // persistent pressure-centroid offset
    double drift_amp_cells = 0.8;   // wandering component bound
    double drift_bandwidth = 0.1;   // Hz
    double coverage_threshold = 0.5;  // N per cell
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    double dt = 0.002;       // plant integration step
    int control_stride = 10; // control/model ticks every N plant steps

    double dt_control() const { return dt * control_stride; }
    PlantParams plant;
    DictionarySpec dictionary;
    int n_regions = 8;
    double svd_tol = 1e-8;
    double holdout_fraction = 0.2;
    ControllerSpec controller;
    PidSpec pid;
    SmcParams smc;
    ReferenceTrajectory trajectory;
    double trajectory_cycles = 2.0;
    ExcitationSpec excitation;
    CentroidSpec centroid;
    AblationSpec ablation;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::runtime_error("config: unknown key '" + scope + it.key() + "'");
        }
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

inline void parse_sensor(const json& j, SensorCurve& s) {
    reject_unknown_keys(j, {"under_gain", "over_gain", "knee_force", "knee_width",
                            "adc_scale", "adc_max"},
                        "plant.sensor.");
    read_if(j, "under_gain", s.under_gain);
    read_if(j, "over_gain", s.over_gain);
    read_if(j, "knee_force", s.knee_force);
    read_if(j, "knee_width", s.knee_width);
    read_if(j, "adc_scale", s.adc_scale);
    read_if(j, "adc_max", s.adc_max);
}

inline void parse_pad(const json& j, PadModel& p) {
    reject_unknown_keys(j, {"footprint_sigma_cells", "drag_shift_cells_per_mps",
                            "tilt_shift_cells_per_rad", "fsr_spread_cells"},
                        "plant.pad.");
    read_if(j, "footprint_sigma_cells", p.footprint_sigma_cells);
    read_if(j, "drag_shift_cells_per_mps", p.drag_shift_cells_per_mps);
    read_if(j, "tilt_shift_cells_per_rad", p.tilt_shift_cells_per_rad);
    read_if(j, "fsr_spread_cells", p.fsr_spread_cells);
}

inline void parse_plant(const json& j, PlantParams& p) {
    reject_unknown_keys(j, {"k_handle", "k_sponge0", "compression_sat", "wetness_rate",
                            "wet_soften", "damping", "roll_force_gain", "noise_std",
                            "sensor_delay_steps", "sensor", "pad"},
                        "plant.");
    read_if(j, "k_handle", p.k_handle);
    read_if(j, "k_sponge0", p.k_sponge0);
    read_if(j, "compression_sat", p.compression_sat);
    read_if(j, "wetness_rate", p.wetness_rate);
    read_if(j, "wet_soften", p.wet_soften);
    read_if(j, "damping", p.damping);
    read_if(j, "roll_force_gain", p.roll_force_gain);
    read_if(j, "noise_std", p.noise_std);
    read_if(j, "sensor_delay_steps", p.sensor_delay_steps);
    if (j.contains("sensor")) parse_sensor(j.at("sensor"), p.sensor);
    if (j.contains("pad")) parse_pad(j.at("pad"), p.pad);
    if (!(p.k_handle > 0.0) || !(p.k_sponge0 > 0.0) || !(p.damping > 0.0) ||
        !(p.compression_sat > 0.0)) {
        throw std::runtime_error("config: plant stiffness/damping must be positive");
    }
    if (!(p.wet_soften >= 0.0 && p.wet_soften < 1.0)) {
        throw std::runtime_error("config: wet_soften must lie in [0, 1)");
    }
}

inline void parse_dictionary(const json& j, DictionarySpec& d) {
    reject_unknown_keys(j, {"kind", "n_rbf_centers", "n_fourier_freqs", "fourier_seed"},
                        "dictionary.");
    if (j.contains("kind")) {
        d.kind = dictionary_kind_from_string(j.at("kind").get<std::string>());
    }
    read_if(j, "n_rbf_centers", d.n_rbf_centers);
    read_if(j, "n_fourier_freqs", d.n_fourier_freqs);
    read_if(j, "fourier_seed", d.fourier_seed);
}

inline void parse_controller(const json& j, ControllerSpec& c) {
    reject_unknown_keys(j, {"q_diag", "r_scale", "ki_scale", "live_gains", "beta",
                            "beta_distance_gain", "integral_clamp", "torque_clamp"},
                        "controller.");
    read_if(j, "live_gains", c.live_gains);
    if (j.contains("q_diag")) {
        const auto v = j.at("q_diag").get<std::vector<double>>();
        if (v.size() != 4) {
            throw std::runtime_error("config: controller.q_diag needs 4 entries");
        }
        c.q_diag = Vec4(v[0], v[1], v[2], v[3]);
    }
    read_if(j, "r_scale", c.r_scale);
    read_if(j, "ki_scale", c.ki_scale);
    read_if(j, "beta", c.options.beta);
    read_if(j, "beta_distance_gain", c.options.beta_distance_gain);
    read_if(j, "integral_clamp", c.options.integral_clamp);
    read_if(j, "torque_clamp", c.options.torque_clamp);
}

inline void parse_pid(const json& j, PidSpec& p) {
    reject_unknown_keys(j, {"auto_zn", "kp", "ki", "kd", "deriv_filter_tau",
                            "windup_clamp", "output_clamp"},
                        "pid.");
    read_if(j, "auto_zn", p.auto_zn);
    read_if(j, "kp", p.params.kp);
    read_if(j, "ki", p.params.ki);
    read_if(j, "kd", p.params.kd);
    read_if(j, "deriv_filter_tau", p.params.deriv_filter_tau);
    read_if(j, "windup_clamp", p.params.windup_clamp);
    read_if(j, "output_clamp", p.params.output_clamp);
}

inline void parse_smc(const json& j, SmcParams& s) {
    reject_unknown_keys(j, {"lambda1", "lambda2", "k1", "k2", "epsilon", "ks",
                            "boundary_layer", "hard_sign", "output_clamp"},
                        "smc.");
    read_if(j, "lambda1", s.lambda1);
    read_if(j, "lambda2", s.lambda2);
    read_if(j, "k1", s.k1);
    read_if(j, "k2", s.k2);
    read_if(j, "epsilon", s.epsilon);
    read_if(j, "ks", s.ks);
    read_if(j, "boundary_layer", s.boundary_layer);
    read_if(j, "hard_sign", s.hard_sign);
    read_if(j, "output_clamp", s.output_clamp);
}

inline void parse_trajectory(const json& j, ReferenceTrajectory& t, double& cycles) {
    reject_unknown_keys(j, {"kind", "f0", "f_amp", "omega", "cycles"}, "trajectory.");
    if (j.contains("kind")) {
        t.kind = wave_kind_from_string(j.at("kind").get<std::string>());
    }
    read_if(j, "f0", t.f0);
    read_if(j, "f_amp", t.f_amp);
    read_if(j, "omega", t.omega);
    read_if(j, "cycles", cycles);
    t.duration = cycles / t.omega;
}

inline void parse_excitation(const json& j, ExcitationSpec& e) {
    reject_unknown_keys(j, {"episode_duration", "n_episodes", "torque_amp",
                            "torque_bandwidth", "theta_sweep_amp", "theta_sweep_freq",
                            "z_sweep_amp", "z_sweep_freq", "park_on_path", "n_park_sites"},
                        "excitation.");
    read_if(j, "episode_duration", e.episode_duration);
    read_if(j, "n_episodes", e.n_episodes);
    read_if(j, "torque_amp", e.torque_amp);
    read_if(j, "torque_bandwidth", e.torque_bandwidth);
    read_if(j, "theta_sweep_amp", e.theta_sweep_amp);
    read_if(j, "theta_sweep_freq", e.theta_sweep_freq);
    read_if(j, "z_sweep_amp", e.z_sweep_amp);
    read_if(j, "z_sweep_freq", e.z_sweep_freq);
    read_if(j, "park_on_path", e.park_on_path);
    read_if(j, "n_park_sites", e.n_park_sites);
}

inline void parse_centroid(const json& j, CentroidSpec& c) {
    reject_unknown_keys(j, {"window", "m", "r_scale", "r_floor", "d_max_cm",
                            "fuzzyen_max", "correction_rate", "correction_freq_cap",
                            "roll_gain_rad_per_cm", "roll_adjust_sat"},
                        "centroid.");
    read_if(j, "window", c.window);
    read_if(j, "m", c.fuzzy.m);
    read_if(j, "r_scale", c.fuzzy.r_scale);
    read_if(j, "r_floor", c.fuzzy.r_floor);
    read_if(j, "d_max_cm", c.thresholds.d_max_cm);
    read_if(j, "fuzzyen_max", c.thresholds.fuzzyen_max);
    read_if(j, "correction_rate", c.correction_rate);
    read_if(j, "correction_freq_cap", c.correction_freq_cap);
    read_if(j, "roll_gain_rad_per_cm", c.roll_gain_rad_per_cm);
    read_if(j, "roll_adjust_sat", c.roll_adjust_sat);
}

inline void parse_ablation(const json& j, AblationSpec& a) {
    reject_unknown_keys(j, {"hold_force", "n_passes", "speed", "drift_bias_cells",
                            "drift_amp_cells", "drift_bandwidth", "coverage_threshold"},
                        "ablation.");
    read_if(j, "hold_force", a.hold_force);
    read_if(j, "n_passes", a.n_passes);
    read_if(j, "speed", a.speed);
    read_if(j, "drift_bias_cells", a.drift_bias_cells);
    read_if(j, "drift_amp_cells", a.drift_amp_cells);
    read_if(j, "drift_bandwidth", a.drift_bandwidth);
    read_if(j, "coverage_threshold", a.coverage_threshold);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::read_if;
    detail::reject_unknown_keys(
        j,
        {"schema_version", "seed", "out_dir", "dt", "control_stride", "plant", "dictionary",
         "koopman", "controller", "pid", "smc", "trajectory", "excitation", "centroid",
         "ablation"},
        "");
    if (!j.contains("schema_version")) {
        throw std::runtime_error("config: schema_version is mandatory");
    }
    ExperimentConfig cfg;
    cfg.schema_version = j.at("schema_version").get<int>();
    if (cfg.schema_version != kConfigSchemaVersion) {
        throw std::runtime_error("config: unsupported schema_version " +
                                 std::to_string(cfg.schema_version));
    }
    read_if(j, "seed", cfg.seed);
    read_if(j, "out_dir", cfg.out_dir);
    read_if(j, "dt", cfg.dt);
    read_if(j, "control_stride", cfg.control_stride);
    if (!(cfg.dt > 0.0)) {
        throw std::runtime_error("config: dt must be > 0");
    }
    if (cfg.control_stride < 1) {
        throw std::runtime_error("config: control_stride must be >= 1");
    }
    if (j.contains("plant")) detail::parse_plant(j.at("plant"), cfg.plant);
    if (j.contains("dictionary")) detail::parse_dictionary(j.at("dictionary"), cfg.dictionary);
    if (j.contains("koopman")) {
        const auto& k = j.at("koopman");
        detail::reject_unknown_keys(k, {"n_regions", "svd_tol", "holdout_fraction"},
                                    "koopman.");
        read_if(k, "n_regions", cfg.n_regions);
        read_if(k, "svd_tol", cfg.svd_tol);
        read_if(k, "holdout_fraction", cfg.holdout_fraction);
    }
    if (j.contains("controller")) detail::parse_controller(j.at("controller"), cfg.controller);
    if (j.contains("pid")) detail::parse_pid(j.at("pid"), cfg.pid);
    if (j.contains("smc")) detail::parse_smc(j.at("smc"), cfg.smc);
    if (j.contains("trajectory")) {
        detail::parse_trajectory(j.at("trajectory"), cfg.trajectory, cfg.trajectory_cycles);
    }
    if (j.contains("excitation")) detail::parse_excitation(j.at("excitation"), cfg.excitation);
    if (j.contains("centroid")) detail::parse_centroid(j.at("centroid"), cfg.centroid);
    if (j.contains("ablation")) detail::parse_ablation(j.at("ablation"), cfg.ablation);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open " + path);
    }
    nlohmann::json j;
    in >> j;
    return parse_config(j);
}

inline CentroidMonitor make_monitor(const CentroidSpec& spec, const Eigen::Vector2d& target) {
    CentroidMonitor monitor;
    monitor.target = target;
    monitor.window = spec.window;
    monitor.fuzzy = spec.fuzzy;
    monitor.thresholds = spec.thresholds;
    monitor.correction_rate = spec.correction_rate;
    monitor.correction_freq_cap = spec.correction_freq_cap;
    monitor.roll_gain_rad_per_cm = spec.roll_gain_rad_per_cm;
    monitor.roll_adjust_sat = spec.roll_adjust_sat;
    return monitor;
}

}  // namespace saklqr
