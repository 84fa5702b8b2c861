#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "saklqr/common.hpp"
#include "saklqr/force_grid.hpp"

namespace saklqr {

/// Force-weighted mean cell coordinate of the grid. Throws on an
/// all-zero grid (no contact).
inline Eigen::Vector2d compute_centroid(const ForceGrid& grid) {
    const double total = grid.total();
    if (!(total > 0.0)) {
        throw std::runtime_error("compute_centroid: no contact (all-zero grid)");
    }
    double cx = 0.0;
    double cy = 0.0;
    for (int i = 0; i < kGridDim; ++i) {
        for (int j = 0; j < kGridDim; ++j) {
            cx += static_cast<double>(i) * grid.cells(i, j);
            cy += static_cast<double>(j) * grid.cells(i, j);
        }
    }
    return {cx / total, cy / total};
}

/// Euclidean centroid error in centimeters.
inline double centroid_error(const Eigen::Vector2d& c, const Eigen::Vector2d& target,
                             double pitch = kPadPitchMeters) {
    require_finite(c, "centroid_error: centroid");
    require_finite(target, "centroid_error: target");
    return (c - target).norm() * pitch * 100.0;
}

/// Fuzzy entropy of a series: delay-embed into length-m vectors, score
/// pair similarity as exp(-d/r) with Chebyshev distance d, and return
/// -ln of the mean similarity over all ordered pairs i != j. Zero for a
/// constant series, non-negative always.
inline double fuzzy_entropy(const std::vector<double>& series, int m, double r) {
    const int n = static_cast<int>(series.size());
    if (n <= m + 1) {
        throw std::invalid_argument("fuzzy_entropy: series length must exceed m + 1");
    }
    if (!(r > 0.0)) {
        throw std::invalid_argument("fuzzy_entropy: r must be > 0");
    }
    const int n_vec = n - m + 1;
    double sim_sum = 0.0;
    int count = 0;
    for (int i = 0; i < n_vec; ++i) {
        for (int j = 0; j < n_vec; ++j) {
            if (i == j) {
                continue;
            }
            double d = 0.0;
            for (int k = 0; k < m; ++k) {
                d = std::max(d, std::abs(series[i + k] - series[j + k]));
            }
            sim_sum += std::exp(-d / r);
            ++count;
        }
    }
    const double mean_sim = sim_sum / count;
    return -std::log(mean_sim);
}

struct FuzzyParams {
    int m = 2;                 // embedding dimension
    double r_scale = 0.2;      // r = r_scale * std(history), floored
    double r_floor = 1e-3;
};

struct CentroidThresholds {
    double d_max_cm = 1.0;
    double fuzzyen_max = 0.7;
};

struct CorrectionCommand {
    double roll_adjust = 0.0;       // rad, signed
    double force_scale = 1.0;       // in [0.5, 1.5]
    double correction_freq = 0.0;   // Hz
    bool smooth_trajectory = false;
    bool fault = false;             // set on a no-contact grid
};

/// Rolling monitor over the centroid-error series.
struct CentroidMonitor {
    Eigen::Vector2d target = Eigen::Vector2d(7.5, 7.5);  // cell coordinates
    int window = 50;
    FuzzyParams fuzzy;
    CentroidThresholds thresholds;
    double correction_rate = 10.0;       // Hz, base
    double correction_freq_cap = 40.0;   // Hz
    double roll_gain_rad_per_cm = 0.05;
    double roll_adjust_sat = 0.15;       // rad
    double pitch = kPadPitchMeters;

    std::deque<double> d_history;
    Eigen::Vector2d last_centroid = Eigen::Vector2d::Zero();
    double last_fuzzyen = 0.0;

    void push(double d) {
        d_history.push_back(d);
        while (static_cast<int>(d_history.size()) > window) {
            d_history.pop_front();
        }
    }

    /// Windowed FuzzyEn with r tied to the signal scale; 0 while the
    /// window is too short to embed.
    double windowed_fuzzyen() const {
        const int n = static_cast<int>(d_history.size());
        if (n <= fuzzy.m + 1) {
            return 0.0;
        }
        std::vector<double> series(d_history.begin(), d_history.end());
        double mean = 0.0;
        for (double v : series) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : series) {
            var += (v - mean) * (v - mean);
        }
        const double r = std::max(fuzzy.r_scale * std::sqrt(var / n), fuzzy.r_floor);
        return fuzzy_entropy(series, fuzzy.m, r);
    }
};

/// One regulation update: track the centroid error, command a corrective
/// roll when the error exceeds d_max, and raise the correction cadence
/// when the error series turns erratic (high FuzzyEn).
inline CorrectionCommand regulate(CentroidMonitor& monitor, const ForceGrid& grid) {
    CorrectionCommand cmd;
    cmd.correction_freq = monitor.correction_rate;
    if (!(grid.total() > 0.0)) {
        cmd.fault = true;
        return cmd;
    }
    const Eigen::Vector2d c = compute_centroid(grid);
    const double d_cm = centroid_error(c, monitor.target, monitor.pitch);
    monitor.last_centroid = c;
    monitor.push(d_cm);

    if (d_cm > monitor.thresholds.d_max_cm) {
        const double offset_x_cm =
            (c.x() - monitor.target.x()) * monitor.pitch * 100.0;
        cmd.roll_adjust = clamp(-monitor.roll_gain_rad_per_cm * offset_x_cm,
                                -monitor.roll_adjust_sat, monitor.roll_adjust_sat);
        cmd.force_scale = clamp(1.0 - 0.1 * (d_cm - monitor.thresholds.d_max_cm), 0.5, 1.5);
    }

    monitor.last_fuzzyen = monitor.windowed_fuzzyen();
    if (monitor.last_fuzzyen > monitor.thresholds.fuzzyen_max) {
        cmd.correction_freq =
            std::min(2.0 * monitor.correction_rate, monitor.correction_freq_cap);
        cmd.smooth_trajectory = true;
    }
    return cmd;
}

/// Fraction of cells whose accumulated per-cell maximum force reaches the
/// contact threshold, as a percentage.
inline double coverage_percentage(const ForceGrid& accumulated, double contact_threshold) {
    int covered = 0;
    for (int i = 0; i < kGridDim; ++i) {
        for (int j = 0; j < kGridDim; ++j) {
            if (accumulated.cells(i, j) >= contact_threshold) {
                ++covered;
            }
        }
    }
    return 100.0 * covered / (kGridDim * kGridDim);
}

}  // namespace saklqr
