#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skewlab/ode.hpp"
#include "skewlab/tridiag.hpp"

using namespace skewlab;

TEST_CASE("scalar decay hits e^{-1}") {
    FlowSystem sys(forcing::RotationVector::standard_quasiperiodic());
    sys.n = 1;
    sys.rhs = [](const TorusPoint&, const Eigen::VectorXd& x) { return (-x).eval(); };

    IntegratorOptions opts;
    opts.tol = 1e-10;
    const Orbit orbit = integrate_flow(sys, TorusPoint::zero(2), Eigen::VectorXd::Ones(1), 1.0, opts);
    CHECK(orbit.x.back()(0) == Catch::Approx(std::exp(-1.0)).margin(1e-6));
}

TEST_CASE("linear cooperative system matches the matrix exponential") {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, 1, 0;
    const auto spec = tridiag::linear_system(a);
    Eigen::VectorXd x0(2);
    x0 << 1, 0;
    const Orbit orbit = tridiag::integrate(spec, TorusPoint::zero(2), x0, 1.0, 1e-10);
    CHECK(orbit.x.back()(0) == Catch::Approx(std::cosh(1.0)).margin(1e-6));
    CHECK(orbit.x.back()(1) == Catch::Approx(std::sinh(1.0)).margin(1e-6));
}

TEST_CASE("semiflow property: restart matches straight-through run") {
    const auto spec = tridiag::default_cubic_pair();
    Eigen::VectorXd x0(2);
    x0 << 1.7, -0.4;
    const double tol = 1e-9;
    const Orbit full = tridiag::integrate(spec, TorusPoint::zero(2), x0, 3.0, tol);

    const Orbit leg1 = tridiag::integrate(spec, TorusPoint::zero(2), x0, 1.2, tol);
    const auto theta_mid = forcing::advance_base(TorusPoint::zero(2), spec.rot, 1.2);
    const Orbit leg2 = tridiag::integrate(spec, theta_mid, leg1.x.back(), 1.8, tol);

    CHECK((full.x.back() - leg2.x.back()).norm() < 10 * tol);
}

TEST_CASE("dense output interpolates smoothly") {
    FlowSystem sys(forcing::RotationVector::standard_quasiperiodic());
    sys.n = 1;
    sys.rhs = [](const TorusPoint&, const Eigen::VectorXd& x) { return (-x).eval(); };
    IntegratorOptions opts;
    opts.tol = 1e-9;
    const Orbit orbit = integrate_flow(sys, TorusPoint::zero(2), Eigen::VectorXd::Ones(1), 2.0, opts);
    for (double t = 0.0; t <= 2.0; t += 0.11)
        CHECK(orbit.state_at(t)(0) == Catch::Approx(std::exp(-t)).margin(1e-7));
    CHECK_THROWS_AS(orbit.state_at(2.5), std::out_of_range);
}

TEST_CASE("step-size underflow reports the last valid time") {
    FlowSystem sys(forcing::RotationVector::standard_quasiperiodic());
    sys.n = 1;
    // Finite-time blow-up at t = 1 from x0 = 1.
    sys.rhs = [](const TorusPoint&, const Eigen::VectorXd& x) { return (x.array().square()).matrix().eval(); };
    IntegratorOptions opts;
    opts.tol = 1e-8;
    try {
        integrate_flow(sys, TorusPoint::zero(2), Eigen::VectorXd::Ones(1), 2.0, opts);
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& err) {
        CHECK(err.last_valid_time > 0.5);
        CHECK(err.last_valid_time <= 1.05);
    }
}

TEST_CASE("halving the tolerance cuts the error against a reference") {
    const auto spec = tridiag::default_chain5();
    Eigen::VectorXd x0(5);
    x0 << 1.2, -0.5, 0.8, 0.1, -1.0;
    const auto theta = TorusPoint::zero(2);

    const Eigen::VectorXd ref = tridiag::integrate(spec, theta, x0, 5.0, 1e-4 / 100).x.back();
    const double err_coarse = (tridiag::integrate(spec, theta, x0, 5.0, 1e-4).x.back() - ref).norm();
    const double err_fine = (tridiag::integrate(spec, theta, x0, 5.0, 5e-5).x.back() - ref).norm();
    CHECK(err_fine * 2.0 <= err_coarse + 1e-15);
}
