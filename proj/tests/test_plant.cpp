#include <catch.hpp>

#include <cmath>

#include "saklqr/plant.hpp"

using namespace saklqr;

namespace {

PlantState airborne_state() {
    PlantState s;
    s.pos = Eigen::Vector3d(0.05, 0.05, 0.01);  // above the contact plane
    return s;
}

PlantState pressed(double depth, double theta = 0.0, double wetness = 0.0) {
    PlantState s;
    s.theta = theta;
    s.pos = Eigen::Vector3d(0.05, 0.05, -depth);
    s.wetness = wetness;
    return s;
}

}  // namespace

TEST_CASE("free tool with zero torque and zero velocity is an equilibrium") {
    PlantParams params;
    PlantState s = airborne_state();
    s.theta = 0.3;  // handle restoring acts only in contact
    const PlantState next = step_plant(s, Vec6::Zero(), 0.002, params);
    CHECK(next.theta == s.theta);
    CHECK(next.pos == s.pos);
    CHECK(next.vel == s.vel);
    CHECK(next.wetness == s.wetness);
    CHECK(next.t == Approx(s.t + 0.002));
}

TEST_CASE("two half steps and one double step both stay finite") {
    PlantParams params;
    Vec6 u;
    u << 0.4, -0.2, 0.1, 0.3, -0.1, 0.2;
    PlantState s = pressed(0.003);

    PlantState twice = step_plant(step_plant(s, u, 0.002, params), u, 0.002, params);
    PlantState once = step_plant(s, u, 0.004, params);
    CHECK(twice.koopman_state().allFinite());
    CHECK(once.koopman_state().allFinite());
    CHECK(twice.vel.allFinite());
    CHECK(once.vel.allFinite());
}

TEST_CASE("holding torque keeps velocity constant out of contact") {
    PlantParams params;
    PlantState s = airborne_state();
    s.vel << 0.2, -0.1, 0.05, 0.15;
    // Solve the one-step update for the torque that cancels damping.
    const Vec6 u = params.j_eff_pinv() * (params.damping * s.vel);
    const PlantState next = step_plant(s, u, 0.002, params);
    CHECK((next.vel - s.vel).norm() < 1e-9);
}

TEST_CASE("non-finite torque input is rejected") {
    PlantParams params;
    Vec6 u = Vec6::Zero();
    u(2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(step_plant(airborne_state(), u, 0.002, params), std::invalid_argument);
    CHECK_THROWS_AS(step_plant(airborne_state(), Vec6::Zero(), 0.0, params),
                    std::invalid_argument);
}

TEST_CASE("contact force vanishes out of contact and at zero penetration") {
    PlantParams params;
    CHECK(contact_force(airborne_state(), params) == 0.0);
    PlantState touching = pressed(0.0);
    CHECK(contact_force(touching, params) == 0.0);
}

TEST_CASE("wet sponge softens the force by exactly (1 - wet_soften)") {
    PlantParams params;
    const PlantState dry = pressed(0.004, 0.2, 0.0);
    const PlantState wet = pressed(0.004, 0.2, 1.0);
    const double ratio = contact_force(wet, params) / contact_force(dry, params);
    CHECK(ratio == Approx(1.0 - params.wet_soften).epsilon(1e-12));
}

TEST_CASE("contact force increases strictly with roll angle") {
    PlantParams params;
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
        const double theta = -0.4 + 0.8 * i / 99.0;
        const double f = contact_force(pressed(0.004, theta), params);
        CHECK(f > prev);
        prev = f;
    }
}

TEST_CASE("contact force increases strictly with penetration") {
    PlantParams params;
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
        const double depth = params.compression_sat * i / 100.0;
        const double f = contact_force(pressed(depth), params);
        CHECK(f > prev);
        prev = f;
    }
}

TEST_CASE("fsr reading is zero at zero force and rejects negatives") {
    SensorCurve curve;
    CHECK(sense_fsr(0.0, curve) == 0.0);
    CHECK_THROWS_AS(sense_fsr(-1.0, curve), std::invalid_argument);
}

TEST_CASE("fsr gain approaches over_gain far above the knee") {
    SensorCurve curve;
    curve.adc_max = 1e9;  // keep the asymptote away from saturation
    const double force = curve.knee_force + 50.0 * curve.knee_width;
    const double ratio = sense_fsr(force, curve) / (curve.adc_scale * force);
    CHECK(ratio == Approx(curve.over_gain).epsilon(1e-6));
}

TEST_CASE("fsr readings are sorted over a sorted force grid") {
    SensorCurve curve;
    double prev = -1.0;
    for (int i = 0; i < 1000; ++i) {
        const double force = 30.0 * i / 999.0;
        const double r = sense_fsr(force, curve);
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("centered static contact puts the grid centroid at the pad center") {
    PlantParams params;
    const ForceGrid grid = sample_pad(pressed(0.004), params);
    double total = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    for (int i = 0; i < kGridDim; ++i) {
        for (int j = 0; j < kGridDim; ++j) {
            total += grid.cells(i, j);
            cx += i * grid.cells(i, j);
            cy += j * grid.cells(i, j);
        }
    }
    CHECK(cx / total == Approx(7.5).margin(1e-9));
    CHECK(cy / total == Approx(7.5).margin(1e-9));
}

TEST_CASE("grid force sums to the contact force") {
    PlantParams params;
    PlantState s = pressed(0.005, 0.15);
    s.vel << 0.05, 0.01, -0.02, 0.0;
    const ForceGrid grid = sample_pad(s, params);
    CHECK(grid.total() == Approx(contact_force(s, params)).margin(1e-6));
    CHECK((grid.cells.array() >= 0.0).all());
}

TEST_CASE("opposite lateral velocities mirror the footprint") {
    PlantParams params;
    PlantState plus = pressed(0.004);
    PlantState minus = pressed(0.004);
    plus.vel(2) = 0.03;
    minus.vel(2) = -0.03;
    const ForceGrid gp = sample_pad(plus, params);
    const ForceGrid gm = sample_pad(minus, params);
    for (int i = 0; i < kGridDim; ++i) {
        for (int j = 0; j < kGridDim; ++j) {
            CHECK(gp.cells(i, j) == Approx(gm.cells(i, kGridDim - 1 - j)).margin(1e-12));
        }
    }
}

TEST_CASE("no contact yields an all-zero grid") {
    PlantParams params;
    const ForceGrid grid = sample_pad(airborne_state(), params);
    CHECK(grid.total() == 0.0);
}

TEST_CASE("identical inputs step to bit-identical states") {
    PlantParams params;
    Vec6 u;
    u << 0.1, 0.2, -0.3, 0.05, 0.0, -0.1;
    PlantState a = pressed(0.004, 0.1);
    PlantState b = pressed(0.004, 0.1);
    for (int k = 0; k < 500; ++k) {
        a = step_plant(a, u, 0.002, params);
        b = step_plant(b, u, 0.002, params);
    }
    CHECK(a.theta == b.theta);
    CHECK(a.pos == b.pos);
    CHECK(a.vel == b.vel);
    CHECK(a.wetness == b.wetness);
}

TEST_CASE("velocity norm decays without input out of contact") {
    PlantParams params;
    PlantState s = airborne_state();
    s.vel << 0.5, -0.3, 0.2, 0.4;
    double prev = s.vel.norm();
    for (int k = 0; k < 200; ++k) {
        s = step_plant(s, Vec6::Zero(), 0.002, params);
        CHECK(s.vel.norm() <= prev + 1e-15);
        prev = s.vel.norm();
    }
}

TEST_CASE("wetness stays clamped to [0, 1] and grows only in contact") {
    PlantParams params;
    params.wetness_rate = 0.5;
    PlantState dry = airborne_state();
    dry = step_plant(dry, Vec6::Zero(), 0.002, params);
    CHECK(dry.wetness == 0.0);

    PlantState wet = pressed(0.004);
    wet.wetness = 0.9999;
    for (int k = 0; k < 200; ++k) {
        wet = step_plant(wet, Vec6::Zero(), 0.002, params);
        CHECK(wet.wetness <= 1.0);
    }
    CHECK(wet.wetness == 1.0);
}

TEST_CASE("penetration is clamped at the sponge saturation depth") {
    PlantParams params;
    PlantState s = pressed(params.compression_sat * 0.9);
    s.vel(3) = -5.0;  // slamming downward
    for (int k = 0; k < 100; ++k) {
        s = step_plant(s, Vec6::Zero(), 0.002, params);
        CHECK(s.pos.z() >= -params.compression_sat - 1e-15);
    }
}

TEST_CASE("j_eff has full row rank") {
    PlantParams params;
    Eigen::JacobiSVD<MatX> svd(params.j_eff);
    CHECK(svd.singularValues().minCoeff() > 0.1);
}
