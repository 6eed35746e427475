#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skewlab/cones.hpp"
#include "skewlab/rng.hpp"
#include "skewlab/tridiag.hpp"

using namespace skewlab;
using namespace skewlab::cones;

static Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

TEST_CASE("sigma on canonical vectors") {
    auto r = sigma(vec({1, 1, 1}));
    CHECK(r.regular);
    CHECK(r.sigma == 0);

    r = sigma(vec({1, -1, 1}));
    CHECK(r.regular);
    CHECK(r.sigma == 2);

    r = sigma(vec({1, 0, -1}), 1e-9);
    CHECK(r.regular);  // interior zero with strictly opposite neighbors
    CHECK(r.sigma == 1);

    r = sigma(vec({0, 1, 1}));
    CHECK_FALSE(r.regular);

    r = sigma(vec({1, 0, 1}));  // zero with same-sign neighbors
    CHECK_FALSE(r.regular);
}

TEST_CASE("sigma is scale invariant") {
    auto rng = make_rng(3);
    for (int k = 0; k < 200; ++k) {
        const Eigen::VectorXd x = rng.normal_vector(6);
        const auto base = sigma(x);
        for (double lambda : {2.0, -1.0, 1e-3, -37.5}) {
            const auto scaled = sigma((lambda * x).eval());
            CHECK(scaled.regular == base.regular);
            if (base.regular) CHECK(scaled.sigma == base.sigma);
        }
    }
}

TEST_CASE("cone membership on canonical vectors") {
    CHECK(cone_membership_vec(vec({1, 2, 3}), 1).location == Location::interior);
    CHECK(cone_membership_vec(vec({1, -1, 1}), 2).location == Location::outside);
    CHECK(cone_membership_vec(vec({1, -1, 1}), 3).location == Location::interior);
}

TEST_CASE("cone verdicts are scale invariant and nested") {
    auto rng = make_rng(17);
    for (int k = 0; k < 10000; ++k) {
        const Eigen::VectorXd x = rng.normal_vector(5);
        for (int i = 1; i < 5; ++i) {
            const auto a = cone_membership_vec(x, i);
            const auto b = cone_membership_vec((-2.5 * x).eval(), i);
            CHECK(a.location == b.location);
            if (a.location == Location::interior)
                CHECK(cone_membership_vec(x, i + 1).location == Location::interior);
        }
    }
}

TEST_CASE("zero number of grid samples") {
    const int N = 128;
    Eigen::VectorXd u(N + 1);

    for (int j = 0; j <= N; ++j) u(j) = std::cos(M_PI * j / N);
    auto r = zero_number_values(u, 1.0 / N);
    CHECK(r.zeros == 1);
    CHECK(r.all_simple);

    u.setOnes();
    r = zero_number_values(u, 1.0 / N);
    CHECK(r.zeros == 0);
    CHECK(r.all_simple);

    for (int j = 0; j <= N; ++j) u(j) = std::cos(3 * M_PI * j / N);
    r = zero_number_values(u, 1.0 / N);
    CHECK(r.zeros == 3);
    CHECK(r.all_simple);

    // Grazing zero: touches without crossing.
    for (int j = 0; j <= N; ++j) {
        const double x = static_cast<double>(j) / N;
        u(j) = (x - 0.5) * (x - 0.5);
    }
    r = zero_number_values(u, 1.0 / N, 1e-5);
    CHECK(r.zeros == 0);
    CHECK_FALSE(r.all_simple);
}

TEST_CASE("zero number is stable under grid refinement for smooth data") {
    for (int waves : {1, 3, 5}) {
        int prev = 1 << 30;
        for (int N : {64, 128, 256}) {
            Eigen::VectorXd u(N + 1);
            for (int j = 0; j <= N; ++j) u(j) = std::cos(waves * M_PI * j / N);
            const auto r = zero_number_values(u, 1.0 / N);
            CHECK(r.zeros <= prev);
            prev = r.zeros;
        }
        CHECK(prev == waves);
    }
}

TEST_CASE("hyperplane split in vector and grid conventions") {
    const auto a = hyperplane_split(vec({2, 5, -1}));
    CHECK(a.s == Catch::Approx(2.0));
    CHECK(a.side == Location::interior);
    CHECK(a.h_part(0) == Catch::Approx(0.0).margin(1e-15));

    const auto b = hyperplane_split(vec({0, 3, 4}));
    CHECK(b.side == Location::boundary);

    Eigen::VectorXd u(9);
    u << -0.5, 0.1, 0.3, 0.2, 0.0, -0.1, 0.4, 0.6, 0.2;
    const auto c = hyperplane_split_grid(u);
    CHECK(c.s == Catch::Approx(-0.5));
    CHECK(c.side == Location::outside);

    // Reconstruction x = s u_plus + h_part.
    const Eigen::VectorXd back = c.s * Eigen::VectorXd::Ones(9) + c.h_part;
    CHECK((back - u).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("fiber order on explicit orbits") {
    FlowSystem sys(forcing::RotationVector::standard_quasiperiodic());
    sys.n = 1;
    sys.rhs = [](const TorusPoint&, const Eigen::VectorXd& x) { return (-x).eval(); };
    IntegratorOptions opts;
    opts.tol = 1e-10;

    const Orbit ox = integrate_flow(sys, TorusPoint::zero(2), Eigen::VectorXd::Ones(1), 10.0, opts);
    const Orbit oy = integrate_flow(sys, TorusPoint::zero(2), Eigen::VectorXd::Zero(1), 10.0, opts);

    CHECK(fiber_order(ox, oy, 1.0, 8.0) == FiberOrder::greater);
    CHECK(fiber_order(oy, ox, 1.0, 8.0) == FiberOrder::less);
    CHECK(fiber_order(ox, ox, 1.0, 8.0) == FiberOrder::equal);
}

TEST_CASE("fiber order reports sign-flipping differences as undecided") {
    // Synthetic pair: difference oscillates.
    const auto rot = forcing::RotationVector::standard_quasiperiodic();
    Orbit ox(TorusPoint::zero(2), rot), oy(TorusPoint::zero(2), rot);
    for (int k = 0; k <= 200; ++k) {
        const double t = 0.05 * k;
        ox.t.push_back(t);
        oy.t.push_back(t);
        ox.x.push_back(Eigen::VectorXd::Constant(1, std::sin(3 * t)));
        oy.x.push_back(Eigen::VectorXd::Zero(1));
        ox.dx.push_back(Eigen::VectorXd::Constant(1, 3 * std::cos(3 * t)));
        oy.dx.push_back(Eigen::VectorXd::Zero(1));
    }
    CHECK(fiber_order(ox, oy, 0.0, 10.0) == FiberOrder::undecided);
}

TEST_CASE("sigma is non-increasing along cooperative orbit differences") {
    const auto spec = tridiag::default_chain5();
    auto rng = make_rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd x0 = rng.uniform_vector(5, -1.0, 1.0);
        const Eigen::VectorXd y0 = rng.uniform_vector(5, -1.0, 1.0);
        const TorusPoint th(rng.uniform_vector(2, 0.0, forcing::two_pi));
        const Orbit ox = tridiag::integrate(spec, th, x0, 20.0, 1e-9);
        const Orbit oy = tridiag::integrate(spec, th, y0, 20.0, 1e-9);

        int last = 1 << 30;
        for (double t = 0.0; t <= 20.0; t += 0.25) {
            Eigen::VectorXd d = ox.state_at(t) - oy.state_at(t);
            const double nd = d.norm();
            if (nd < 1e-14) break;
            const auto sc = sigma((d / nd).eval(), 1e-7);
            if (!sc.regular) continue;  // flagged instants are excluded
            CHECK(sc.sigma <= last);
            last = sc.sigma;
        }
    }
}

TEST_CASE("monotonicity: cooperative flow preserves the componentwise order") {
    const auto spec = tridiag::default_cubic_pair();
    auto rng = make_rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd x0 = rng.uniform_vector(2, -2.0, 2.0);
        Eigen::VectorXd y0 = x0 + rng.uniform_vector(2, 0.0, 1.0);
        const TorusPoint th(rng.uniform_vector(2, 0.0, forcing::two_pi));
        const Orbit ox = tridiag::integrate(spec, th, x0, 8.0, 1e-9);
        const Orbit oy = tridiag::integrate(spec, th, y0, 8.0, 1e-9);
        for (double t = 0.0; t <= 8.0; t += 0.5) {
            const Eigen::VectorXd a = ox.state_at(t), b = oy.state_at(t);
            CHECK((b - a).minCoeff() >= -1e-8);
        }
    }
}

TEST_CASE("parabolic cone spans: trig polynomials sit in the expected cones") {
    // span{1, cos pi x, ..., cos((i-1) pi x)} lies in C_i; leading cos(i pi x)
    // content pushes the sample outside C_i.
    auto rng = make_rng(31);
    const int N = 128;
    const double h = 1.0 / N;
    for (int i = 1; i <= 4; ++i) {
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd inside = Eigen::VectorXd::Zero(N + 1);
            Eigen::VectorXd coef = rng.normal_vector(i);
            for (int m = 0; m < i; ++m)
                for (int j = 0; j <= N; ++j) inside(j) += coef(m) * std::cos(m * M_PI * j * h);
            const auto rz = zero_number_values(inside, h, 1e-9);
            CHECK(rz.zeros <= i - 1);

            Eigen::VectorXd outside = Eigen::VectorXd::Zero(N + 1);
            double lead = rng.normal();
            while (std::abs(lead) < 0.2) lead = rng.normal();
            const double next = 0.1 * rng.normal();
            for (int j = 0; j <= N; ++j)
                outside(j) = lead * std::cos(i * M_PI * j * h) +
                             next * std::cos((i + 1) * M_PI * j * h);
            const auto ro = zero_number_values(outside, h, 1e-9);
            CHECK(ro.zeros >= i);
        }
    }
}
