#include <catch.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "saklqr/centroid.hpp"
#include "saklqr/common.hpp"

using namespace saklqr;

namespace {

ForceGrid single_cell(int i, int j, double f = 1.0) {
    ForceGrid g;
    g.cells(i, j) = f;
    return g;
}

// Monotone-chain convex hull and point-in-convex-polygon, used as an
// independent geometric oracle.
double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    std::vector<Eigen::Vector2d> hull(2 * pts.size());
    size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const size_t lower = k + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;
}

bool inside_hull(const std::vector<Eigen::Vector2d>& hull, const Eigen::Vector2d& p,
                 double tol = 1e-9) {
    if (hull.size() == 1) {
        return (hull[0] - p).norm() < tol;
    }
    if (hull.size() == 2) {
        const Eigen::Vector2d d = hull[1] - hull[0];
        const double t = d.dot(p - hull[0]) / d.squaredNorm();
        return (hull[0] + clamp(t, 0.0, 1.0) * d - p).norm() < tol;
    }
    for (size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        if (cross(a, b, p) < -tol) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("uniform grid centroid sits at the pad center") {
    ForceGrid g;
    g.cells.setConstant(0.5);
    const Eigen::Vector2d c = compute_centroid(g);
    CHECK(c.x() == Approx(7.5).margin(1e-12));
    CHECK(c.y() == Approx(7.5).margin(1e-12));
}

TEST_CASE("single-cell centroid is that cell") {
    const Eigen::Vector2d c = compute_centroid(single_cell(3, 12));
    CHECK(c.x() == 3.0);
    CHECK(c.y() == 12.0);
}

TEST_CASE("weighted two-cell centroids match hand arithmetic") {
    ForceGrid equal;
    equal.cells(0, 0) = 1.0;
    equal.cells(15, 15) = 1.0;
    const Eigen::Vector2d c1 = compute_centroid(equal);
    CHECK(c1.x() == Approx(7.5));
    CHECK(c1.y() == Approx(7.5));

    ForceGrid skewed;
    skewed.cells(0, 0) = 1.0;
    skewed.cells(15, 15) = 3.0;
    const Eigen::Vector2d c2 = compute_centroid(skewed);
    CHECK(c2.x() == Approx(11.25));
    CHECK(c2.y() == Approx(11.25));
}

TEST_CASE("all-zero grid has no centroid") {
    ForceGrid g;
    CHECK_THROWS_WITH(compute_centroid(g), Catch::Contains("no contact"));
}

TEST_CASE("centroid error follows the 3-4-5 triangle") {
    const Eigen::Vector2d c(10.0, 11.0);
    const Eigen::Vector2d target(7.0, 7.0);
    CHECK(centroid_error(c, target) == Approx(5.0 * 0.625).margin(1e-12));
    CHECK(centroid_error(c, c) == 0.0);
    CHECK(centroid_error(c, target) == centroid_error(target, c));
}

TEST_CASE("fuzzy entropy of a constant series is exactly zero") {
    const std::vector<double> series(20, 1.7);
    CHECK(fuzzy_entropy(series, 2, 0.5) == 0.0);
}

TEST_CASE("fuzzy entropy is non-negative") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> series;
        for (int k = 0; k < 30; ++k) {
            series.push_back(rng.uniform(-1.0, 1.0));
        }
        CHECK(fuzzy_entropy(series, 2, 0.25) >= 0.0);
    }
}

TEST_CASE("six-point series matches an exhaustive pair enumeration") {
    const std::vector<double> series{0.0, 1.0, 0.0, 1.0, 0.0, 1.0};
    const int m = 2;
    const double r = 1.0;

    // Oracle: embed explicitly and enumerate every ordered pair.
    const int n_vec = static_cast<int>(series.size()) - m + 1;
    double sim_sum = 0.0;
    int count = 0;
    for (int i = 0; i < n_vec; ++i) {
        for (int j = 0; j < n_vec; ++j) {
            if (i == j) continue;
            double d01 = std::abs(series[i] - series[j]);
            double d12 = std::abs(series[i + 1] - series[j + 1]);
            sim_sum += std::exp(-std::max(d01, d12) / r);
            ++count;
        }
    }
    const double expected = -std::log(sim_sum / count);
    CHECK(fuzzy_entropy(series, m, r) == Approx(expected).margin(1e-15));
    CHECK(expected > 0.0);
}

TEST_CASE("insufficient length and bad r are rejected") {
    const std::vector<double> tiny{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(fuzzy_entropy(tiny, 2, 0.5), std::invalid_argument);
    const std::vector<double> ok(10, 0.0);
    CHECK_THROWS_AS(fuzzy_entropy(ok, 2, 0.0), std::invalid_argument);
}

TEST_CASE("noise of growing amplitude never decreases fuzzy entropy") {
    Rng rng(79);
    std::vector<double> base;
    for (int k = 0; k < 60; ++k) {
        base.push_back(rng.normal());
    }
    double prev = -1.0;
    for (double amp : {0.05, 0.1, 0.2, 0.4, 0.8}) {
        std::vector<double> series;
        for (double b : base) {
            series.push_back(1.0 + amp * b);
        }
        const double fe = fuzzy_entropy(series, 2, 0.1);
        CHECK(fe >= prev);
        prev = fe;
    }
}

TEST_CASE("centroid scale invariance and hull membership on random grids") {
    Rng rng(83);
    for (int trial = 0; trial < 1000; ++trial) {
        ForceGrid g;
        const int n_cells = 1 + static_cast<int>(rng.uniform(0.0, 12.0));
        std::vector<Eigen::Vector2d> pts;
        for (int c = 0; c < n_cells; ++c) {
            const int i = static_cast<int>(rng.uniform(0.0, 16.0));
            const int j = static_cast<int>(rng.uniform(0.0, 16.0));
            g.cells(i, j) += rng.uniform(0.1, 2.0);
        }
        for (int i = 0; i < kGridDim; ++i) {
            for (int j = 0; j < kGridDim; ++j) {
                if (g.cells(i, j) > 0.0) {
                    pts.push_back(Eigen::Vector2d(i, j));
                }
            }
        }
        const Eigen::Vector2d c = compute_centroid(g);

        ForceGrid scaled = g;
        scaled.cells *= 37.5;
        const Eigen::Vector2d cs = compute_centroid(scaled);
        CHECK((c - cs).norm() < 1e-12);

        CHECK(inside_hull(convex_hull(pts), c));
    }
}

TEST_CASE("regulate returns a neutral command for a centered calm grid") {
    CentroidMonitor monitor;
    monitor.target = Eigen::Vector2d(7.5, 7.5);
    ForceGrid g;
    g.cells.setConstant(0.05);
    for (int k = 0; k < 10; ++k) {
        const CorrectionCommand cmd = regulate(monitor, g);
        CHECK(cmd.roll_adjust == 0.0);
        CHECK(cmd.force_scale == 1.0);
        CHECK(cmd.correction_freq == monitor.correction_rate);
        CHECK(!cmd.smooth_trajectory);
        CHECK(!cmd.fault);
    }
}

TEST_CASE("an x-displaced centroid commands a negative roll correction") {
    CentroidMonitor monitor;
    monitor.target = Eigen::Vector2d(7.5, 7.5);
    const CorrectionCommand cmd = regulate(monitor, single_cell(12, 7));
    // +4.5 cells in x is far past d_max = 1 cm.
    CHECK(cmd.roll_adjust < 0.0);
    CHECK(std::abs(cmd.roll_adjust) <= monitor.roll_adjust_sat);
    CHECK(cmd.force_scale < 1.0);
    CHECK(cmd.force_scale >= 0.5);
}

TEST_CASE("no-contact grid yields a neutral fault command") {
    CentroidMonitor monitor;
    ForceGrid empty;
    const CorrectionCommand cmd = regulate(monitor, empty);
    CHECK(cmd.fault);
    CHECK(cmd.roll_adjust == 0.0);
    CHECK(cmd.force_scale == 1.0);
}

TEST_CASE("correction frequency doubles exactly when FuzzyEn first crosses the threshold") {
    CentroidMonitor monitor;
    monitor.target = Eigen::Vector2d(7.5, 7.5);
    monitor.window = 30;
    monitor.thresholds.fuzzyen_max = 0.4;

    // Scripted drift: calm at first, then erratic jumps.
    Rng rng(89);
    std::vector<ForceGrid> grids;
    for (int k = 0; k < 120; ++k) {
        double cx = 7.5;
        if (k >= 40) {
            cx = 7.5 + 3.0 * (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
        }
        const int i = static_cast<int>(std::round(clamp(cx, 0.0, 15.0)));
        grids.push_back(single_cell(i, 7));
    }

    // Independent replay: recompute the windowed FuzzyEn trace exactly as
    // the monitor defines it, from its own copy of the history.
    std::vector<double> history;
    std::vector<double> fuzzyen_trace;
    for (const auto& g : grids) {
        const Eigen::Vector2d c = compute_centroid(g);
        history.push_back(centroid_error(c, monitor.target));
        if (static_cast<int>(history.size()) > monitor.window) {
            history.erase(history.begin());
        }
        double fe = 0.0;
        const int n = static_cast<int>(history.size());
        if (n > monitor.fuzzy.m + 1) {
            double mean = 0.0;
            for (double v : history) mean += v;
            mean /= n;
            double var = 0.0;
            for (double v : history) var += (v - mean) * (v - mean);
            const double r = std::max(monitor.fuzzy.r_scale * std::sqrt(var / n),
                                      monitor.fuzzy.r_floor);
            fe = fuzzy_entropy(history, monitor.fuzzy.m, r);
        }
        fuzzyen_trace.push_back(fe);
    }

    int expected_first = -1;
    for (size_t k = 0; k < fuzzyen_trace.size(); ++k) {
        if (fuzzyen_trace[k] > monitor.thresholds.fuzzyen_max) {
            expected_first = static_cast<int>(k);
            break;
        }
    }
    REQUIRE(expected_first > 0);

    int observed_first = -1;
    for (size_t k = 0; k < grids.size(); ++k) {
        const CorrectionCommand cmd = regulate(monitor, grids[k]);
        if (cmd.correction_freq == Approx(2.0 * monitor.correction_rate) &&
            observed_first < 0) {
            observed_first = static_cast<int>(k);
        }
        if (observed_first < 0) {
            CHECK(cmd.correction_freq == monitor.correction_rate);
        }
    }
    CHECK(observed_first == expected_first);
}

TEST_CASE("regulate replays deterministically") {
    Rng rng(97);
    std::vector<ForceGrid> grids;
    for (int k = 0; k < 60; ++k) {
        grids.push_back(single_cell(static_cast<int>(rng.uniform(0, 16)),
                                    static_cast<int>(rng.uniform(0, 16)),
                                    rng.uniform(0.5, 2.0)));
    }
    CentroidMonitor m1;
    CentroidMonitor m2;
    for (const auto& g : grids) {
        const CorrectionCommand c1 = regulate(m1, g);
        const CorrectionCommand c2 = regulate(m2, g);
        CHECK(c1.roll_adjust == c2.roll_adjust);
        CHECK(c1.force_scale == c2.force_scale);
        CHECK(c1.correction_freq == c2.correction_freq);
    }
    CHECK(m1.d_history == m2.d_history);
}

TEST_CASE("coverage percentage counts thresholded cells") {
    ForceGrid all;
    all.cells.setConstant(1.0);
    CHECK(coverage_percentage(all, 0.5) == 100.0);

    ForceGrid none;
    CHECK(coverage_percentage(none, 0.5) == 0.0);

    ForceGrid quarter;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            quarter.cells(i, j) = 1.0;
        }
    }
    CHECK(coverage_percentage(quarter, 0.5) == 25.0);
}
