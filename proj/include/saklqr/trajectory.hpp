#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace saklqr {

enum class WaveKind { Sine, Triangle };

inline const char* to_string(WaveKind kind) {
    return kind == WaveKind::Sine ? "sine" : "triangle";
}

inline WaveKind wave_kind_from_string(const std::string& s) {
    if (s == "sine") return WaveKind::Sine;
    if (s == "triangle") return WaveKind::Triangle;
    throw std::invalid_argument("unknown trajectory kind: " + s);
}

/// Force reference envelope: minimum f0, maximum f0 + f_amp, period
/// 1/omega. The sine follows f0 + f_amp*(sin(2*pi*omega*t)+1)/2; the
/// triangle shares the same envelope and starts at its minimum.
struct ReferenceTrajectory {
    WaveKind kind = WaveKind::Sine;
    double f0 = 5.0;      // N
    double f_amp = 10.0;  // N
    double omega = 0.5;   // Hz
    double duration = 4.0;  // s, two full cycles at 0.5 Hz
};

inline double reference_at(const ReferenceTrajectory& traj, double t) {
    if (!(t >= 0.0)) {
        throw std::invalid_argument("reference_at: t must be >= 0");
    }
    if (traj.kind == WaveKind::Sine) {
        return traj.f0 + traj.f_amp * (std::sin(2.0 * M_PI * traj.omega * t) + 1.0) / 2.0;
    }
    const double period = 1.0 / traj.omega;
    const double phase = std::fmod(t, period) / period;  // in [0, 1)
    const double rise = phase < 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
    return traj.f0 + traj.f_amp * rise;
}

struct TimedWaypoint {
    double t = 0.0;
    Eigen::Vector2d pos = Eigen::Vector2d::Zero();
};

/// Boustrophedon sweep of a square area: n_passes parallel passes along
/// y with uniform spacing area/n_passes, connected by cross-steps in x,
/// traversed at constant speed. Path length is n_passes*area +
/// (n_passes-1)*spacing.
inline std::vector<TimedWaypoint> zigzag_path(double area, int n_passes, double speed) {
    if (n_passes < 2) {
        throw std::invalid_argument("zigzag_path: need at least 2 passes");
    }
    if (!(area > 0.0) || !(speed > 0.0)) {
        throw std::invalid_argument("zigzag_path: area and speed must be > 0");
    }
    const double spacing = area / n_passes;
    std::vector<TimedWaypoint> path;
    double t = 0.0;
    Eigen::Vector2d cur((0.5) * spacing, 0.0);
    path.push_back({t, cur});
    for (int p = 0; p < n_passes; ++p) {
        const double y_end = (p % 2 == 0) ? area : 0.0;
        Eigen::Vector2d next(cur.x(), y_end);
        t += (next - cur).norm() / speed;
        cur = next;
        path.push_back({t, cur});
        if (p + 1 < n_passes) {
            next = Eigen::Vector2d(cur.x() + spacing, cur.y());
            t += (next - cur).norm() / speed;
            cur = next;
            path.push_back({t, cur});
        }
    }
    return path;
}

inline double path_duration(const std::vector<TimedWaypoint>& path) {
    return path.empty() ? 0.0 : path.back().t;
}

inline double path_length(const std::vector<TimedWaypoint>& path) {
    double len = 0.0;
    for (size_t i = 1; i < path.size(); ++i) {
        len += (path[i].pos - path[i - 1].pos).norm();
    }
    return len;
}

/// Piecewise-linear position at time t (clamped to the path ends).
inline Eigen::Vector2d path_position(const std::vector<TimedWaypoint>& path, double t) {
    if (path.empty()) {
        throw std::invalid_argument("path_position: empty path");
    }
    if (t <= path.front().t) {
        return path.front().pos;
    }
    for (size_t i = 1; i < path.size(); ++i) {
        if (t <= path[i].t) {
            const double span = path[i].t - path[i - 1].t;
            const double alpha = span > 0.0 ? (t - path[i - 1].t) / span : 1.0;
            return path[i - 1].pos + alpha * (path[i].pos - path[i - 1].pos);
        }
    }
    return path.back().pos;
}

}  // namespace saklqr
