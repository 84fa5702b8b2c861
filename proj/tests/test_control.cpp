#include <catch.hpp>

#include <cmath>

#include "saklqr/control.hpp"

using namespace saklqr;

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Scalar problem a = b = q = r = 1 embedded in the first coordinate.
struct ScalarEmbed {
    Mat4 a = Mat4::Zero();
    Mat46 b = Mat46::Zero();
    Mat4 q = Mat4::Zero();
    Mat6 r = Mat6::Identity();

    ScalarEmbed() {
        a(0, 0) = 1.0;
        b(0, 0) = 1.0;
        q(0, 0) = 1.0;
    }
};

RegionSet two_region_set() {
    RegionSet set;
    set.centers.push_back(Vec4(0.0, 0.0, 0.0, 0.0));
    set.centers.push_back(Vec4(0.0, 1.0, 0.0, 0.0));
    set.models.resize(2);
    set.fallback.assign(2, false);
    return set;
}

std::vector<RegionGains> simple_gains(double scale_a, double scale_b) {
    std::vector<RegionGains> gains(2);
    gains[0].lqr.k_fb = Mat64::Constant(scale_a);
    gains[1].lqr.k_fb = Mat64::Constant(scale_b);
    gains[0].lqr.k_r = Vec6::Constant(0.1 * scale_a);
    gains[1].lqr.k_r = Vec6::Constant(0.1 * scale_b);
    gains[0].lqr.k_i = Vec6::Constant(0.01 * scale_a);
    gains[1].lqr.k_i = Vec6::Constant(0.01 * scale_b);
    return gains;
}

}  // namespace

TEST_CASE("scalar riccati fixed point is the golden ratio") {
    const ScalarEmbed e;
    const Mat4 p = solve_riccati(e.a, e.b, e.q, e.r, 1e-14);
    const double golden = 0.5 * (1.0 + std::sqrt(5.0));
    CHECK(p(0, 0) == Approx(golden).margin(1e-9));
    // Decoupled zero rows stay zero.
    CHECK(std::abs(p(1, 1)) < 1e-12);
    CHECK(std::abs(p(2, 3)) < 1e-12);
}

TEST_CASE("riccati collapses to Q when a and b vanish") {
    Mat4 q = Vec4(3.0, 2.0, 1.0, 0.5).asDiagonal();
    const Mat4 p = solve_riccati(Mat4::Zero(), Mat46::Zero(), q, Mat6::Identity());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("riccati residual self-check on a random stabilizable pair") {
    Rng rng(41);
    Mat4 a;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    a *= 0.85 / spectral_radius(a);
    Mat46 b;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) b(i, j) = rng.uniform(-1.0, 1.0);
    Mat4 q = Vec4(2.0, 1.0, 0.5, 0.25).asDiagonal();
    Mat6 r = 0.5 * Mat6::Identity();

    const double tol = 1e-12;
    const Mat4 p = solve_riccati(a, b, q, r, tol);

    const Mat4 rhs = q + a.transpose() * p * a -
                     a.transpose() * p * b *
                         (r + b.transpose() * p * b).inverse() * b.transpose() * p * a;
    CHECK((p - rhs).cwiseAbs().maxCoeff() < 10.0 * tol);

    Eigen::SelfAdjointEigenSolver<Mat4> es(p);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
    CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("scalar lqr feedback is p / (1 + p)") {
    const ScalarEmbed e;
    const LqrGains gains = lqr_gains(e.a, e.b, e.q, e.r, 0.0);
    const double golden = 0.5 * (1.0 + std::sqrt(5.0));
    CHECK(gains.k_fb(0, 0) == Approx(golden / (1.0 + golden)).margin(1e-9));
    CHECK(spectral_radius(e.a - e.b * gains.k_fb) < 1.0);
}

TEST_CASE("uniform cost scaling leaves the feedback gain unchanged") {
    const ScalarEmbed e;
    const LqrGains g1 = lqr_gains(e.a, e.b, e.q, e.r, 0.1);
    const LqrGains g2 = lqr_gains(e.a, e.b, (3.7 * e.q).eval(), (3.7 * e.r).eval(), 0.1);
    CHECK((g1.k_fb - g2.k_fb).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("k_r yields unit DC gain on the linear closed loop") {
    Rng rng(43);
    Mat4 a;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = rng.uniform(-0.5, 0.5);
    a *= 0.8 / spectral_radius(a);
    Mat46 b;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) b(i, j) = rng.uniform(-1.0, 1.0);
    const Mat4 q = Vec4(50.0, 1.0, 1.0, 1.0).asDiagonal();
    const Mat6 r = 0.1 * Mat6::Identity();
    const Eigen::RowVector4d c_out(1.0, 0.2, -0.1, 0.05);

    const LqrGains gains = lqr_gains(a, b, q, r, 0.0, c_out);
    const double v = 2.5;
    Vec4 x = Vec4::Zero();
    for (int k = 0; k < 20000; ++k) {
        const Vec6 u = -gains.k_fb * x + gains.k_r * v;
        x = a * x + b * u;
    }
    CHECK(std::abs(c_out * x - v) < 1e-6);
}

TEST_CASE("select_operator matches an exhaustive scan") {
    Rng rng(47);
    RegionSet set;
    for (int i = 0; i < 8; ++i) {
        set.centers.push_back(Vec4(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-1, 1), rng.uniform(-1, 1)));
    }
    set.models.resize(8);
    set.fallback.assign(8, false);

    CHECK(select_operator(set.centers[3], set) == 3);

    for (int trial = 0; trial < 1000; ++trial) {
        Vec4 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
               rng.uniform(-2, 2));
        int best = 0;
        double best_d = (x - set.centers[0]).norm();
        for (int i = 1; i < 8; ++i) {
            const double d = (x - set.centers[i]).norm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        CHECK(select_operator(x, set) == best);
    }
}

TEST_CASE("equidistant states resolve to the lowest region index") {
    RegionSet set;
    set.centers.push_back(Vec4(0.0, -1.0, 0.0, 0.0));
    set.centers.push_back(Vec4(0.0, 1.0, 0.0, 0.0));
    set.models.resize(2);
    set.fallback.assign(2, false);
    CHECK(select_operator(Vec4::Zero(), set) == 0);
}

TEST_CASE("selection is invariant to a common positive scaling") {
    Rng rng(53);
    RegionSet set;
    for (int i = 0; i < 5; ++i) {
        set.centers.push_back(Vec4(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-1, 1), rng.uniform(-1, 1)));
    }
    set.models.resize(5);
    set.fallback.assign(5, false);
    for (int trial = 0; trial < 200; ++trial) {
        Vec4 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
               rng.uniform(-2, 2));
        const int sel = select_operator(x, set);
        RegionSet scaled = set;
        const double alpha = 3.7;
        for (auto& c : scaled.centers) {
            c *= alpha;
        }
        CHECK(select_operator((alpha * x).eval(), scaled) == sel);
    }
}

TEST_CASE("blend_operator endpoint and fixed-point behavior") {
    MatX k_prev = MatX::Constant(6, 4, 2.0);
    MatX k_sel = MatX::Constant(6, 4, -1.0);
    CHECK((blend_operator(k_prev, k_sel, 1.0) - k_sel).cwiseAbs().maxCoeff() == 0.0);
    CHECK((blend_operator(k_sel, k_sel, 0.3) - k_sel).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(blend_operator(k_prev, MatX::Zero(3, 3), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(blend_operator(k_prev, k_sel, 0.0), std::invalid_argument);
}

TEST_CASE("repeated blending contracts geometrically") {
    Rng rng(59);
    MatX k = MatX::Zero(6, 4);
    MatX target = MatX::Zero(6, 4);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) {
            k(i, j) = rng.uniform(-2, 2);
            target(i, j) = rng.uniform(-2, 2);
        }
    const double beta = 0.2;
    const double initial = (k - target).norm();
    double bound = initial;
    for (int n = 1; n <= 50; ++n) {
        k = blend_operator(k, target, beta);
        bound *= (1.0 - beta);
        CHECK((k - target).norm() <= bound * (1.0 + 1e-12));
    }
}

TEST_CASE("control step is zero at the origin with zero reference") {
    RegionSet set = two_region_set();
    auto gains = simple_gains(1.0, 2.0);
    ControllerState ctrl;
    const Vec6 u = control_step(ctrl, Vec4::Zero(), 0.0, 0.0, 0.002, set, gains);
    CHECK(u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ctrl.active_region == 0);
}

TEST_CASE("integral accumulates e*dt and respects the clamp") {
    RegionSet set = two_region_set();
    auto gains = simple_gains(1.0, 2.0);
    SaKlqrOptions opt;
    opt.integral_clamp = 5.0;

    ControllerState ctrl;
    const double dt = 0.002;
    const int n = 250;
    for (int k = 0; k < n; ++k) {
        control_step(ctrl, Vec4::Zero(), 0.0, 1.0, dt, set, gains, opt);  // e = 1
    }
    CHECK(ctrl.integral_acc == Approx(n * dt).margin(1e-12));

    for (int k = 0; k < 20000; ++k) {
        control_step(ctrl, Vec4::Zero(), 0.0, 10.0, dt, set, gains, opt);
    }
    CHECK(ctrl.integral_acc <= opt.integral_clamp + 1e-15);
}

TEST_CASE("a region boundary crossing changes the region once and keeps u continuous") {
    RegionSet set = two_region_set();
    auto gains = simple_gains(1.0, 3.0);
    SaKlqrOptions opt;
    opt.beta = 0.2;

    ControllerState ctrl;
    const double dt = 0.002;
    const double v = 0.0;

    // March the state across the midpoint (y = 0.5) in 20 steps, then hold.
    int changes = 0;
    int prev_region = -1;
    Vec6 prev_u = Vec6::Zero();
    double max_jump = 0.0;
    Vec4 x_at_switch = Vec4::Zero();
    for (int k = 0; k < 60; ++k) {
        const double y_pos = k < 20 ? 0.3 + 0.02 * k : 0.7;
        const Vec4 x(0.0, y_pos, 0.0, 0.0);
        const Vec6 u = control_step(ctrl, x, 0.0, v, dt, set, gains, opt);
        if (prev_region >= 0 && ctrl.active_region != prev_region) {
            ++changes;
            x_at_switch = x;
            max_jump = std::max(max_jump, (u - prev_u).norm());
        }
        prev_region = ctrl.active_region;
        prev_u = u;
    }
    CHECK(changes == 1);

    // The switch-step jump is bounded by the blended gain difference plus
    // the state-motion term; the full gain swap would be much larger.
    const double gain_gap = (gains[0].lqr.k_fb - gains[1].lqr.k_fb).norm();
    const double state_norm = x_at_switch.norm();
    const double motion = 0.02 * gains[1].lqr.k_fb.norm();
    CHECK(max_jump <= opt.beta * gain_gap * state_norm + motion + 1e-9);
    CHECK(max_jump < gain_gap * state_norm);  // strictly below a hard switch
}

TEST_CASE("non-finite measurement holds the previous command and flags a fault") {
    RegionSet set = two_region_set();
    auto gains = simple_gains(1.0, 2.0);
    ControllerState ctrl;
    const Vec4 x(0.1, 0.2, 0.0, 0.0);
    const Vec6 u1 = control_step(ctrl, x, 1.0, 2.0, 0.002, set, gains);
    const Vec6 u2 = control_step(ctrl, x, std::numeric_limits<double>::quiet_NaN(), 2.0,
                                 0.002, set, gains);
    CHECK((u1 - u2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ctrl.fault);
}

TEST_CASE("roll increments follow the stated quaternion form") {
    const Quaternion q0 = roll_increment(0.0);
    CHECK(q0.x == 0.0);
    CHECK(q0.y == 0.0);
    CHECK(q0.z == 0.0);
    CHECK(q0.w == 1.0);

    const Quaternion qpi = roll_increment(M_PI);
    CHECK(qpi.x == Approx(1.0).margin(1e-15));
    CHECK(std::abs(qpi.w) < 1e-15);

    Quaternion id;
    const Quaternion same = apply_rotation(id, q0);
    CHECK(same.w == Approx(1.0).margin(1e-15));
}

TEST_CASE("two half increments compose to one full increment") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const double theta = rng.uniform(-3.0, 3.0);
        Quaternion q;
        q = apply_rotation(q, roll_increment(0.5 * theta));
        q = apply_rotation(q, roll_increment(0.5 * theta));
        const Quaternion full = roll_increment(theta);
        CHECK(std::abs(q.x - full.x) < 1e-12);
        CHECK(std::abs(q.y - full.y) < 1e-12);
        CHECK(std::abs(q.z - full.z) < 1e-12);
        CHECK(std::abs(q.w - full.w) < 1e-12);
    }
}

TEST_CASE("quaternion norm survives many random increments") {
    Rng rng(67);
    Quaternion q;
    for (int k = 0; k < 100000; ++k) {
        q = apply_rotation(q, roll_increment(rng.uniform(-0.2, 0.2)));
        if (k % 1000 == 0) {
            CHECK(std::abs(q.norm() - 1.0) < 1e-9);
        }
    }
    CHECK(std::abs(q.norm() - 1.0) < 1e-9);
}
