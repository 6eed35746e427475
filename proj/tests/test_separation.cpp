#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skewlab/separation.hpp"
#include "skewlab/tridiag.hpp"

using namespace skewlab;
using namespace skewlab::separation;

namespace {

CocycleTrack constant_track(const Eigen::MatrixXd& a) {
    const auto sys = tridiag::linear_system(a).flow();
    cocycle::CocyclePoint z{Eigen::VectorXd::Zero(a.rows()), Eigen::VectorXd::Zero(a.rows()),
                            TorusPoint::zero(2)};
    return build_track(sys, z, 1.0, /*stationary=*/true, 1e-13);
}

// n = 5 symmetric tridiagonal with well separated gaps; the slow 2-block is
// exactly decoupled from the fast 3-block so the complement bundle is an
// exactly invariant coordinate subspace. The standing linear test case for
// the constants ledger.
Eigen::MatrixXd linear_test_matrix() {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 5);
    a.diagonal() << 0.0, -0.6, -3.0, -5.0, -7.0;
    for (int i = 0; i < 4; ++i)
        if (i != 1) a(i, i + 1) = a(i + 1, i) = 0.3;
    return a;
}

// Synthetic splitting set from orthonormal frames (orthogonal projections).
SplittingSet synthetic_set(const std::vector<Eigen::MatrixXd>& frames) {
    SplittingSet set;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        Splitting sp;
        sp.k = static_cast<int>(frames[i].cols());
        sp.V = frames[i];
        sp.L = frames[i];
        sp.P = frames[i] * frames[i].transpose();
        sp.Q = Eigen::MatrixXd::Identity(frames[i].rows(), frames[i].rows()) - sp.P;
        sp.gamma = 1.0;
        set.by_index.push_back(std::move(sp));
    }
    return set;
}

}  // namespace

TEST_CASE("splitting oracle: swap matrix") {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, 1, 0;
    auto rng = make_rng(41);
    const auto track = constant_track(a);
    const auto sp = compute_splitting(track, 1, 20.0, 2, rng);

    Eigen::VectorXd dominant(2), recessive(2);
    dominant << 1, 1;
    recessive << 1, -1;
    CHECK(subspace_angle(sp.V, dominant.normalized()) < 1e-6);
    // Anih(L) = null(P) must be the recessive eigendirection.
    CHECK((sp.P * recessive).norm() < 1e-6);
    CHECK(sp.gamma == Catch::Approx(2.0).margin(1e-4));
    CHECK((sp.P * sp.P - sp.P).norm() < 1e-10);
}

TEST_CASE("splitting oracle: diagonal spectrum") {
    Eigen::MatrixXd a = Eigen::Vector3d(3, 2, 1).asDiagonal();
    auto rng = make_rng(42);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 3, SplittingOptions{}, rng);
    const auto& sp2 = st.anchors.front().at(2);
    Eigen::MatrixXd e12 = Eigen::MatrixXd::Identity(3, 3).leftCols(2);
    CHECK(subspace_angle(sp2.V, e12) < 1e-6);
    CHECK(sp2.gamma == Catch::Approx(1.0).margin(1e-4));

    // Full-space index: identity projection.
    const auto& sp3 = st.anchors.front().at(3);
    CHECK((sp3.P - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
    CHECK(sp3.Q.norm() == 0.0);
}

TEST_CASE("splitting frames match the eigendecomposition for the linear test system") {
    const Eigen::MatrixXd a = linear_test_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);  // ascending eigenvalues
    auto rng = make_rng(43);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 4, SplittingOptions{}, rng);
    for (int i = 1; i <= 4; ++i) {
        const auto& sp = st.anchors.front().at(i);
        const Eigen::MatrixXd top = eig.eigenvectors().rightCols(i);
        CHECK(subspace_angle(sp.V, top) < 1e-6);
        CHECK(subspace_angle(sp.L, top) < 1e-6);  // symmetric: adjoint frame coincides
        const double gap = eig.eigenvalues()(5 - i) - eig.eigenvalues()(4 - i);
        CHECK(sp.gamma == Catch::Approx(gap).margin(1e-4));
    }
}

TEST_CASE("degenerate growth gap raises") {
    auto rng = make_rng(44);
    const auto track = constant_track(Eigen::MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(compute_splittings(track, 2, SplittingOptions{}, rng),
                    DegenerateSplittingError);
}

TEST_CASE("restart disagreement raises for a gapless pair") {
    Eigen::MatrixXd a = Eigen::Vector3d(2, 2, 0).asDiagonal();  // double leading eigenvalue
    auto rng = make_rng(45);
    const auto track = constant_track(a);
    CHECK_THROWS_AS(compute_splittings(track, 1, SplittingOptions{}, rng),
                    DegenerateSplittingError);
}

TEST_CASE("lambda0 formula") {
    CHECK(lambda0_of(0.01, 2.0, 0.25) == Catch::Approx(0.5452525253).margin(1e-9));
    CHECK(lambda0_of(1e-12, 1.7, 0.25) == Catch::Approx(0.5).margin(1e-10));
}

TEST_CASE("constants ledger on the linear test system") {
    const Eigen::MatrixXd a = linear_test_matrix();
    auto rng = make_rng(46);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 4, SplittingOptions{}, rng);
    const auto p = compute_constants(track, st, 0.01, 0.25, rng);

    CHECK(p.N0 == 2);  // the tail from index 3 on decays faster than lambda1^t
    CHECK(p.lambda0 < 1.0);
    CHECK(p.lambda0 > 0.0);
    CHECK(p.c == Catch::Approx(100.0));
    CHECK(p.r >= 1.0);
    CHECK(p.zeta >= 1.0);
    CHECK(p.gamma > 0.5);

    // Bisection contracts.
    const double thr = p.transport_opening();
    CHECK(p.c * p.M * std::exp(-p.gamma * p.T1) <= thr + 1e-6);
    CHECK(p.c * p.M * std::exp(-p.gamma * (p.T1 - 0.01)) > thr);
    CHECK(p.T0 > p.T1 + 1.0);
    auto lhs = [&](double t) {
        return (t - p.T1) * std::log(p.lambda0 - p.delta) + p.T1 * std::log(p.delta + p.zeta) -
               t * std::log(p.lambda0);
    };
    CHECK(lhs(p.T0) <= 1e-6);
    CHECK(lhs(p.T0 + 5.0) <= 0.0);
    CHECK(lhs(p.T0 - 0.5) > 0.0);

    const auto j = p.to_json();
    CHECK(j.contains("T0"));
    CHECK(j["N0"].get<int>() == 2);

    CHECK_THROWS_AS(compute_constants(track, st, 0.45, 0.9, rng), InfeasibleParamsError);
}

TEST_CASE("cone membership margins") {
    const Eigen::MatrixXd a = linear_test_matrix();
    auto rng = make_rng(47);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 4, SplittingOptions{}, rng);
    const auto& set = st.anchors.front();
    const auto& sp = set.at(2);

    const Eigen::VectorXd in_v = (sp.V * rng.normal_vector(2)).normalized();
    CHECK(cone_C_D_W_membership(in_v, set, 2, 0.0, ConeKind::C).member);

    Eigen::VectorXd in_q = sp.Q * rng.normal_vector(5);
    in_q.normalize();
    const auto d = cone_C_D_W_membership(in_q, set, 2, 0.4, ConeKind::D);
    CHECK(d.member);
    CHECK(d.margin == Catch::Approx(0.4 * in_q.norm()).margin(1e-9));

    // ||Q u|| / ||P u|| = 0.3 against s = 0.25: not a C-member.
    const Eigen::VectorXd mixed =
        ((sp.V * Eigen::Vector2d(1, 0)) + 0.3 * in_q).normalized();
    CHECK_FALSE(cone_C_D_W_membership(mixed, set, 2, 0.25, ConeKind::C).member);
    CHECK(cone_C_D_W_membership(mixed, set, 2, 0.35, ConeKind::C).member);
}

TEST_CASE("delta searches: orthogonal, rotated, and degenerate geometries") {
    auto rng = make_rng(48);

    // Single base, orthogonal splitting in R^2: cones meet only at 0 for all
    // s < 1, so the search certifies the full grid.
    Eigen::MatrixXd e1 = Eigen::MatrixXd::Identity(2, 2).leftCols(1);
    const auto ortho = synthetic_set({e1});
    DeltaSearchOptions opts;
    opts.sphere_samples = 2000;
    const auto res1 = find_delta0_delta1({ortho}, 1, rng, opts);
    CHECK(res1.delta0 == Catch::Approx(1.0));

    // Second base with V^1 rotated by 60 degrees: overlap opens at tan(15deg).
    const double th = M_PI / 3.0;
    Eigen::MatrixXd r60(2, 1);
    r60 << std::cos(th), std::sin(th);
    const auto rotated = synthetic_set({r60});
    const auto res2 = find_delta0_delta1({ortho, rotated}, 1, rng, opts);
    CHECK(res2.delta0 == Catch::Approx(0.25));  // largest grid point below tan(15 deg)
    CHECK(res2.delta0 < res1.delta0);

    // Hyperplane contains range(P^1): no positive delta1 exists.
    Eigen::MatrixXd e2 = Eigen::MatrixXd::Identity(2, 2).rightCols(1);
    const auto degenerate = synthetic_set({e2});
    CHECK_THROWS_AS(find_delta0_delta1({degenerate}, 1, rng, opts), DegenerateGeometryError);
}

TEST_CASE("neighborhood persistence of cone membership (opening bound)") {
    const Eigen::MatrixXd a = linear_test_matrix();
    auto rng = make_rng(49);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 2, SplittingOptions{}, rng);
    const auto& set = st.anchors.front();

    const double s1 = 0.1, s2 = 0.35;
    const double c_p = spectral_norm(set.at(2).P), c_q = spectral_norm(set.at(2).Q);
    const double rho0 = std::min((s2 - s1) / (2.0 * (c_q + c_p * s1) * (1.0 + s1)),
                                 1.0 / (2.0 * c_p * (1.0 + s1)));
    for (int trial = 0; trial < 300; ++trial) {
        const Eigen::VectorXd u =
            separation::detail::sample_with_ratio(set.at(2), s1 * 0.999, rng);
        REQUIRE(cone_C_D_W_membership(u, set, 2, s1, ConeKind::C).member);
        const Eigen::VectorXd u2 = (u + 0.95 * rho0 * rng.unit_vector(5)).normalized();
        REQUIRE(cone_C_D_W_membership(u2, set, 2, s2, ConeKind::C).member);
    }
}

TEST_CASE("separation inequality and transport hold with the fitted constants") {
    const Eigen::MatrixXd a = linear_test_matrix();
    auto rng = make_rng(50);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 4, SplittingOptions{}, rng);
    const auto p = compute_constants(track, st, 0.01, 0.25, rng);

    for (int i = 1; i <= p.N0; ++i) {
        const auto check = separation_inequality_check(track, st, i, 15.0, 30, rng);
        CHECK(check.violations == 0);
        CHECK(check.worst_margin > 0.0);
    }

    const auto transport = transport_check(track, st, p, 1000, rng);
    CHECK(transport.violations == 0);
    CHECK(transport.worst_margin > 0.0);

    for (double t : {1.0, 2.0, 5.0})
        CHECK(bundle_invariance_angle(track, st, 2, t) < 1e-5);
}

TEST_CASE("perturbed cone suite: unperturbed, admissible, and stress regimes") {
    const Eigen::MatrixXd a = linear_test_matrix();
    auto rng = make_rng(51);
    const auto track = constant_track(a);
    const auto st = compute_splittings(track, 4, SplittingOptions{}, rng);
    const auto p = compute_constants(track, st, 0.01, 0.25, rng);

    PerturbedSuiteOptions opts;
    opts.trials = 20;
    opts.time_samples = 4;

    const auto clean = perturbed_cone_suite(track, st, p, 0.0, rng, opts);
    CHECK(clean.passed());
    CHECK(clean.decay.trials > 0);  // the unperturbed case exercises the decay bound
    CHECK(clean.invariance.worst_margin > 0.0);

    const double eps1 = find_epsilon1(track, st, p, rng);
    CHECK(eps1 > 0.0);

    const auto mid = perturbed_cone_suite(track, st, p, eps1 / 2.0, rng, opts);
    CHECK(mid.passed());

    const auto stress = perturbed_cone_suite(track, st, p, 100.0 * eps1, rng, opts);
    CHECK_FALSE(stress.passed());
    CHECK(stress.invariance.violations + stress.nesting.violations + stress.decay.violations +
              stress.contraction.violations + stress.inclusion.violations >
          0);

    const auto j = stress.to_json();
    CHECK(j["invariance"]["trials"].get<int>() > 0);
}
