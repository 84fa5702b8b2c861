#pragma once

#include <cmath>
#include <vector>

#include "saklqr/common.hpp"
#include "saklqr/config.hpp"
#include "saklqr/koopman.hpp"
#include "saklqr/plant.hpp"
#include "saklqr/trajectory.hpp"

namespace saklqr {

/// Stiff Cartesian posture servo emulating the arm holding its commanded
/// pose; the force controller's torques ride on top of this.
class PostureServo {
public:
    // Stiff relative to the sponge so commanded press depths are realized.
    explicit PostureServo(const PlantParams& params, double kp = 4.0e4, double kd = 400.0)
        : j_pinv_(params.j_eff_pinv()), kp_(kp), kd_(kd) {}

    Vec6 torques(const PlantState& state, const Eigen::Vector2d& xy_ref,
                 double z_ref) const {
        Vec4 accel_des = Vec4::Zero();
        accel_des(1) = kp_ * (xy_ref.x() - state.pos.x()) - kd_ * state.vel(1);
        accel_des(2) = kp_ * (xy_ref.y() - state.pos.y()) - kd_ * state.vel(2);
        accel_des(3) = kp_ * (z_ref - state.pos.z()) - kd_ * state.vel(3);
        return j_pinv_ * accel_des;
    }

    double stiffness() const { return kp_; }

private:
    Eigen::Matrix<double, 6, 4> j_pinv_;
    double kp_;
    double kd_;
};

/// Press depth that yields the requested contact force at theta = 0 and
/// zero wetness: solve k * d * (1 + d / sat) = force for d.
inline double nominal_penetration(const PlantParams& params, double force) {
    const double k = params.k_sponge0;
    const double sat = params.compression_sat;
    return 0.5 * sat * (std::sqrt(1.0 + 4.0 * force / (k * sat)) - 1.0);
}

/// Band-limited scalar noise: first-order filtered white noise, clamped
/// to the amplitude bound.
class BandNoise {
public:
    BandNoise(double amp, double bandwidth_hz, double dt, Rng& rng)
        : amp_(amp), rho_(std::exp(-2.0 * M_PI * bandwidth_hz * dt)), rng_(rng) {}

    double next() {
        value_ = rho_ * value_ + std::sqrt(1.0 - rho_ * rho_) * rng_.normal();
        return clamp(amp_ * value_, -amp_, amp_);
    }

private:
    double amp_;
    double rho_;
    double value_ = 0.0;
    Rng& rng_;
};

/// Excited closed-posture rollout. Episodes park at arc-length-uniform
/// sites along the sweep path (round-robin) so every trajectory region
/// sees data; every excitation channel -- band-limited joint noise, the
/// roll sweep, and the press-depth sweep -- enters through the recorded
/// torque, so the apparent dynamics are stationary and fully driven by
/// logged inputs. Records the Koopman state, the excitation torque, and
/// the FSR reading at each step.
inline TrajectoryDataset collect_training_data(const PlantParams& params,
                                               const ExcitationSpec& spec,
                                               std::uint64_t seed, double dt,
                                               const std::vector<TimedWaypoint>& path,
                                               double nominal_force = 10.0,
                                               int stride = 10) {
    TrajectoryDataset data;
    data.episode_starts.clear();

    const double depth0 = nominal_penetration(params, nominal_force);
    const PostureServo servo(params);
    const Eigen::Matrix<double, 6, 4> j_pinv = params.j_eff_pinv();
    const Eigen::Vector2d center(0.5 * kPadSideMeters, 0.5 * kPadSideMeters);

    std::vector<Eigen::Vector2d> sites;
    if (spec.park_on_path && path.size() >= 2) {
        const double total = path_duration(path);
        for (int s = 0; s < spec.n_park_sites; ++s) {
            sites.push_back(path_position(path, total * (s + 0.5) / spec.n_park_sites));
        }
    } else {
        sites.push_back(center);
    }

    Rng rng(seed);
    Rng noise_rng(seed ^ 0x5eed5eedULL);

    data.dt = dt * stride;
    const double dt_model = dt * stride;
    const int ticks_per_episode = static_cast<int>(spec.episode_duration / dt_model);
    for (int ep = 0; ep < spec.n_episodes; ++ep) {
        const Eigen::Vector2d site = sites[ep % sites.size()];
        // Band-limited sweeps, sized for quasi-static amplitudes against
        // the handle stiffness (roll) and the posture servo (press).
        BandNoise roll_sweep(params.k_handle * spec.theta_sweep_amp, spec.theta_sweep_freq,
                             dt_model, rng);
        BandNoise press_sweep(servo.stiffness() * spec.z_sweep_amp, spec.z_sweep_freq,
                              dt_model, rng);
        std::vector<BandNoise> torque_noise;
        torque_noise.reserve(6);
        for (int i = 0; i < 6; ++i) {
            torque_noise.emplace_back(spec.torque_amp, spec.torque_bandwidth, dt_model, rng);
        }

        PlantState state;
        state.pos = Eigen::Vector3d(site.x(), site.y(), -depth0);
        data.episode_starts.push_back(data.size());

        bool ok = true;
        for (int k = 0; k < ticks_per_episode && ok; ++k) {
            // Excitation torque held over one model tick (zero-order hold).
            // Sweeps ride on the deployment directions (roll channel and
            // press channel), white noise on every joint.
            Vec6 u_exc = Vec6::Zero();
            for (int i = 0; i < 6; ++i) {
                u_exc(i) = torque_noise[i].next();
            }
            u_exc += j_pinv.col(0) * roll_sweep.next();
            u_exc += j_pinv.col(3) * press_sweep.next();
            if (!u_exc.allFinite()) {
                data.truncated = true;
                break;
            }

            const double force = contact_force(state, params) * fsr_transmission(state, params);
            const double reading = params.noise_std > 0.0
                                       ? sense_fsr(force, params.sensor, params.noise_std,
                                                   noise_rng)
                                       : sense_fsr(force, params.sensor);

            data.records.push_back({state.koopman_state(), u_exc, reading});

            for (int i = 0; i < stride && ok; ++i) {
                const Vec6 u_total = u_exc + servo.torques(state, site, -depth0);
                if (!u_total.allFinite()) {
                    data.truncated = true;
                    ok = false;
                    break;
                }
                PlantState next = step_plant(state, u_total, dt, params);
                if (!next.koopman_state().allFinite() || !next.vel.allFinite()) {
                    data.truncated = true;
                    ok = false;
                } else {
                    state = next;
                }
            }
        }
    }
    if (data.episode_starts.empty()) {
        data.episode_starts.push_back(0);
    }
    return data;
}

/// Train/holdout split: the final `holdout_fraction` of every episode is
/// held out, episode boundaries preserved.
inline std::pair<TrajectoryDataset, TrajectoryDataset> split_dataset(
    const TrajectoryDataset& data, double holdout_fraction) {
    TrajectoryDataset train;
    TrajectoryDataset holdout;
    train.dt = holdout.dt = data.dt;
    train.episode_starts.clear();
    holdout.episode_starts.clear();

    const int n_eps = static_cast<int>(data.episode_starts.size());
    for (int e = 0; e < n_eps; ++e) {
        const int begin = data.episode_starts[e];
        const int end = (e + 1 < n_eps) ? data.episode_starts[e + 1] : data.size();
        const int cut = begin + static_cast<int>((end - begin) * (1.0 - holdout_fraction));
        train.episode_starts.push_back(train.size());
        for (int k = begin; k < cut; ++k) {
            train.records.push_back(data.records[k]);
        }
        holdout.episode_starts.push_back(holdout.size());
        for (int k = cut; k < end; ++k) {
            holdout.records.push_back(data.records[k]);
        }
    }
    if (train.episode_starts.empty()) train.episode_starts.push_back(0);
    if (holdout.episode_starts.empty()) holdout.episode_starts.push_back(0);
    return {train, holdout};
}

}  // namespace saklqr
