#pragma once

#include <Eigen/Dense>

namespace saklqr {

inline constexpr int kGridDim = 16;
inline constexpr double kPadSideMeters = 0.10;
inline constexpr double kPadPitchMeters = kPadSideMeters / kGridDim;  // 6.25 mm

/// 16x16 non-negative force map over the contact pad. Cell (i, j) covers
/// x in [i*pitch, (i+1)*pitch), y likewise; cell-center coordinate of
/// index i is simply i, so the pad center sits at (7.5, 7.5).
struct ForceGrid {
    Eigen::Matrix<double, kGridDim, kGridDim> cells =
        Eigen::Matrix<double, kGridDim, kGridDim>::Zero();
    double pitch = kPadPitchMeters;
    Eigen::Vector2d origin = Eigen::Vector2d::Zero();

    double total() const { return cells.sum(); }
};

}  // namespace saklqr
