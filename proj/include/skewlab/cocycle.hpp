#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/cones.hpp"
#include "skewlab/linalg.hpp"
#include "skewlab/ode.hpp"
#include "skewlab/rng.hpp"

#include <nlohmann/json.hpp>

namespace skewlab::cocycle {

using forcing::TorusPoint;

// z = (x, y, theta): the pair of states whose difference the linearized
// operator T(t, z) transports, over the system's base flow.
struct CocyclePoint {
    Eigen::VectorXd x, y;
    TorusPoint theta = TorusPoint(Eigen::VectorXd::Zero(1));
};

// Mean-value coefficient matrix a(t): Jacobian of the field averaged along the
// segment s x + (1-s) y by 16-node Gauss-Legendre. Exact for polynomial fields,
// so T(t,z)(x - y) = phi(t,x) - phi(t,y) holds to integrator precision.
// Tridiagonal sparsity of the field's Jacobian is inherited entry-wise.
inline Eigen::MatrixXd meanvalue_jacobian(const FlowSystem& sys, const TorusPoint& theta,
                                          const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const auto& rule = gl16();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(sys.n, sys.n);
    for (int q = 0; q < 16; ++q) {
        const double s = rule.node[q];
        a += rule.weight[q] * sys.jacobian(theta, (s * x + (1.0 - s) * y).eval());
    }
    return a;
}

// Evaluates a(t) along two stored orbits sharing a base trajectory.
inline Eigen::MatrixXd meanvalue_coefficients(const FlowSystem& sys, const Orbit& ox,
                                              const Orbit& oy, double t) {
    if (t < ox.t_begin() - 1e-12 || t > ox.t_end() + 1e-12 || t < oy.t_begin() - 1e-12 ||
        t > oy.t_end() + 1e-12)
        throw std::out_of_range("meanvalue_coefficients: orbit unavailable at requested time");
    return meanvalue_jacobian(sys, ox.base_at(t), ox.state_at(t), oy.state_at(t));
}

// Pair of nonlinear orbits plus tangent data (a vector or a full fundamental
// matrix), integrated as one augmented system so every stage shares the same
// mean-value coefficients. All three parts are densely evaluable.
struct PairPropagation {
    Orbit ox, oy;
    Orbit tangent;  // states are the stacked tangent columns
    int cols = 0;

    PairPropagation(TorusPoint theta, RotationVector rot)
        : ox(theta, rot), oy(theta, rot), tangent(std::move(theta), std::move(rot)) {}

    int dim() const { return ox.dim(); }

    Eigen::VectorXd v_at(double t) const {
        if (cols != 1) throw std::logic_error("v_at: tangent is not a single vector");
        return tangent.state_at(t);
    }
    Eigen::VectorXd v_end() const { return tangent.x.back(); }

    Eigen::MatrixXd phi_at(double t) const {
        const int n = dim();
        if (cols != n) throw std::logic_error("phi_at: tangent is not a fundamental matrix");
        const Eigen::VectorXd flat = tangent.state_at(t);
        return Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, n);
    }
    Eigen::MatrixXd phi_end() const {
        const int n = dim();
        return Eigen::Map<const Eigen::MatrixXd>(tangent.x.back().data(), n, n);
    }
};

namespace detail {

inline PairPropagation propagate_augmented(const FlowSystem& sys, const CocyclePoint& z,
                                           const Eigen::MatrixXd& tangent0, double t_end,
                                           double tol) {
    if (t_end < 0.0) throw std::invalid_argument("propagate: t must be nonnegative");
    const int n = sys.n;
    const int cols = static_cast<int>(tangent0.cols());
    Eigen::VectorXd state(2 * n + n * cols);
    state.segment(0, n) = z.x;
    state.segment(n, n) = z.y;
    Eigen::Map<Eigen::MatrixXd>(state.data() + 2 * n, n, cols) = tangent0;

    Orbit aug(z.theta, sys.rot);
    IntegratorOptions opts;
    opts.tol = tol;
    auto rhs = [&sys, &z, n, cols](double t, const Eigen::VectorXd& s) {
        const TorusPoint th = forcing::advance_base(z.theta, sys.rot, t);
        const Eigen::VectorXd x = s.segment(0, n);
        const Eigen::VectorXd y = s.segment(n, n);
        Eigen::VectorXd out(s.size());
        out.segment(0, n) = sys.rhs(th, x);
        out.segment(n, n) = sys.rhs(th, y);
        const Eigen::MatrixXd a = meanvalue_jacobian(sys, th, x, y);
        for (int c = 0; c < cols; ++c)
            out.segment(2 * n + c * n, n) = a * s.segment(2 * n + c * n, n);
        return out;
    };
    integrate_adaptive(rhs, aug, state, 0.0, t_end, opts);

    PairPropagation out(z.theta, sys.rot);
    out.cols = cols;
    const std::size_t m = aug.t.size();
    for (std::size_t k = 0; k < m; ++k) {
        out.ox.t.push_back(aug.t[k]);
        out.oy.t.push_back(aug.t[k]);
        out.tangent.t.push_back(aug.t[k]);
        out.ox.x.push_back(aug.x[k].segment(0, n));
        out.oy.x.push_back(aug.x[k].segment(n, n));
        out.tangent.x.push_back(aug.x[k].segment(2 * n, n * cols));
        out.ox.dx.push_back(aug.dx[k].segment(0, n));
        out.oy.dx.push_back(aug.dx[k].segment(n, n));
        out.tangent.dx.push_back(aug.dx[k].segment(2 * n, n * cols));
    }
    return out;
}

}  // namespace detail

// T(t, z) v by integrating dv/dt = a(t) v alongside the two nonlinear orbits.
inline PairPropagation propagate(const FlowSystem& sys, const CocyclePoint& z,
                                 const Eigen::VectorXd& v0, double t_end, double tol = 1e-10) {
    return detail::propagate_augmented(sys, z, v0, t_end, tol);
}

// Fundamental matrix Phi(t, z): all n tangent columns at once.
inline PairPropagation propagate_matrix(const FlowSystem& sys, const CocyclePoint& z, double t_end,
                                        double tol = 1e-10) {
    return detail::propagate_augmented(sys, z, Eigen::MatrixXd::Identity(sys.n, sys.n), t_end,
                                       tol);
}

// ---- Axiom battery --------------------------------------------------------

struct AxiomTrialSummary {
    int trials = 0;
    int failures = 0;
    double worst_margin = 1e300;
    std::vector<std::string> counterexamples;
};

struct AxiomBatteryReport {
    AxiomTrialSummary h1, h3, h4, h5;
    bool h2_structural = true;  // compactness is vacuous in finite dimension
    bool passed() const {
        return h1.failures == 0 && h3.failures == 0 && h4.failures == 0 && h5.failures == 0;
    }
    nlohmann::json to_json() const;
};

struct AxiomSamplePlan {
    int h1_trials = 20;
    int h3_trials = 40;
    int h4_trials = 40;
    int h5_trials = 30;
    double t_min = 0.5;  // matches the [1/2, 1] operator window
    double horizon = 6.0;
    double composition_tol = 1e-8;
    double cone_tol = 1e-9;
    double state_radius = 1.0;
    double integrator_tol = 1e-11;
};

namespace detail {

inline Eigen::VectorXd sample_in_cone(Rng& rng, int n, int i, double cone_tol) {
    // Rejection sampling: Gaussian vectors stratify across the sigma classes.
    for (int attempt = 0; attempt < 4000; ++attempt) {
        Eigen::VectorXd v = rng.unit_vector(n);
        const auto sc = cones::sigma(v, cone_tol);
        if (sc.regular && sc.sigma <= i - 1) return v;
    }
    throw std::runtime_error("sample_in_cone: rejection sampling failed");
}

inline std::string describe_vector(const Eigen::VectorXd& v) {
    std::string s = "[";
    for (int i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(v(i));
    }
    return s + "]";
}

}  // namespace detail

// Runs the (H1)/(H3)/(H4)/(H5) checks on sampled pairs and tangent vectors.
// (H2) is recorded as structurally satisfied: the operators are matrices.
// Failures become report entries with the offending sample, never exceptions.
inline AxiomBatteryReport axiom_battery(const FlowSystem& sys, const AxiomSamplePlan& plan,
                                        Rng& rng) {
    AxiomBatteryReport rep;
    const int n = sys.n;
    if (n < 2) throw std::invalid_argument("axiom_battery: needs state dimension >= 2");

    auto random_point = [&]() {
        CocyclePoint z;
        z.x = rng.uniform_vector(n, -plan.state_radius, plan.state_radius);
        z.y = rng.uniform_vector(n, -plan.state_radius, plan.state_radius);
        z.theta = TorusPoint(rng.uniform_vector(sys.rot.dim(), 0.0, forcing::two_pi));
        return z;
    };

    // (H1): cocycle composition plus the t -> 0 limit.
    for (int trial = 0; trial < plan.h1_trials; ++trial) {
        ++rep.h1.trials;
        const CocyclePoint z = random_point();
        const Eigen::VectorXd v = rng.unit_vector(n);
        const double t1 = rng.uniform(0.25, 2.0), t2 = rng.uniform(0.25, 2.0);

        const auto full = propagate(sys, z, v, t1 + t2, plan.integrator_tol);
        const auto first = propagate(sys, z, v, t1, plan.integrator_tol);
        const CocyclePoint z1{first.ox.x.back(), first.oy.x.back(),
                              forcing::advance_base(z.theta, sys.rot, t1)};
        const auto second = propagate(sys, z1, first.v_end(), t2, plan.integrator_tol);
        const double comp_resid = (full.v_end() - second.v_end()).norm();

        const auto tiny = propagate(sys, z, v, 1e-4, plan.integrator_tol);
        const double cont_resid = (tiny.v_end() - v).norm();

        rep.h1.worst_margin = std::min(rep.h1.worst_margin, plan.composition_tol - comp_resid);
        if (comp_resid > plan.composition_tol || cont_resid > 1e-3) {
            ++rep.h1.failures;
            rep.h1.counterexamples.push_back("composition residual " + std::to_string(comp_resid));
        }
    }

    // (H3): every propagated nonzero vector lands interior to some cone for t >= t_min.
    for (int trial = 0; trial < plan.h3_trials; ++trial) {
        ++rep.h3.trials;
        const CocyclePoint z = random_point();
        const Eigen::VectorXd v = rng.unit_vector(n);
        const auto pp = propagate(sys, z, v, plan.horizon, plan.integrator_tol);
        double worst = 1e300;
        bool ok = true;
        for (double t = plan.t_min; t <= plan.horizon + 1e-12; t += 0.25) {
            Eigen::VectorXd w = pp.v_at(std::min(t, pp.tangent.t_end()));
            const double nw = w.norm();
            if (nw < 1e-280) {
                ok = false;
                break;
            }
            const auto sc = cones::sigma(w / nw, plan.cone_tol);
            worst = std::min(worst, sc.margin);
            if (!sc.regular) ok = false;
        }
        rep.h3.worst_margin = std::min(rep.h3.worst_margin, worst);
        if (!ok) {
            ++rep.h3.failures;
            rep.h3.counterexamples.push_back("v = " + detail::describe_vector(v));
        }
    }

    // (H4): cones map strictly inside themselves; probes include members
    // pushed near the regular-set edge.
    for (int trial = 0; trial < plan.h4_trials; ++trial) {
        ++rep.h4.trials;
        const CocyclePoint z = random_point();
        const int i =
            1 + static_cast<int>(rng.integer() % static_cast<unsigned>(std::max(1, n - 1)));
        Eigen::VectorXd v = detail::sample_in_cone(rng, n, i, plan.cone_tol);
        if (trial % 2 == 1) {
            Eigen::VectorXd w = v;
            w(0) = 64.0 * plan.cone_tol * (v(0) >= 0 ? 1.0 : -1.0);
            w.normalize();
            const auto sc = cones::sigma(w, plan.cone_tol);
            if (sc.regular && sc.sigma <= i - 1) v = w;
        }
        const double t = rng.uniform(plan.t_min, 1.0);
        const auto pp = propagate(sys, z, v, t, plan.integrator_tol);
        const Eigen::VectorXd w = pp.v_end().normalized();
        const auto verdict = cones::cone_membership_vec(w, i, plan.cone_tol);
        const double margin =
            (verdict.location == cones::Location::interior) ? verdict.margin : -verdict.margin;
        rep.h4.worst_margin = std::min(rep.h4.worst_margin, margin);
        if (verdict.location != cones::Location::interior) {
            ++rep.h4.failures;
            rep.h4.counterexamples.push_back("i=" + std::to_string(i) +
                                             " v=" + detail::describe_vector(v) +
                                             " t=" + std::to_string(t));
        }
    }

    // (H5): search for a cone member whose image sits on the hyperplane while
    // still in C_i \ C_{i-1}; detected by a tracked sign change of the
    // hyperplane coordinate or by a direct near-zero hit at a locked instant.
    for (int trial = 0; trial < plan.h5_trials; ++trial) {
        ++rep.h5.trials;
        const CocyclePoint z = random_point();
        const int i = 1 + static_cast<int>(rng.integer() % static_cast<unsigned>(n));
        const Eigen::VectorXd v = detail::sample_in_cone(rng, n, i, plan.cone_tol);
        const auto pp = propagate(sys, z, v, plan.horizon, plan.integrator_tol);

        double worst = 1e300;
        bool counterexample = false;
        bool prev_locked = false;
        double prev_s = 0.0;
        for (double t = plan.t_min; t <= plan.horizon + 1e-12; t += 0.1) {
            Eigen::VectorXd w = pp.v_at(std::min(t, pp.tangent.t_end()));
            const double nw = w.norm();
            if (nw < 1e-280) break;
            w /= nw;
            const auto sc = cones::sigma(w, plan.cone_tol);
            const bool locked = sc.regular && sc.sigma == i - 1;
            const double s = cones::hyperplane_split(w).s;
            if (locked) {
                worst = std::min(worst, std::abs(s));
                if (std::abs(s) <= plan.cone_tol) counterexample = true;
                if (prev_locked && prev_s * s < 0.0) counterexample = true;
            }
            prev_locked = locked;
            prev_s = s;
        }
        rep.h5.worst_margin = std::min(rep.h5.worst_margin, worst);
        if (counterexample) {
            ++rep.h5.failures;
            rep.h5.counterexamples.push_back("i=" + std::to_string(i) +
                                             " v=" + detail::describe_vector(v));
        }
    }
    return rep;
}

inline nlohmann::json AxiomBatteryReport::to_json() const {
    auto enc = [](const AxiomTrialSummary& s) {
        nlohmann::json j;
        j["trials"] = s.trials;
        j["failures"] = s.failures;
        j["worst_margin"] = s.worst_margin;
        j["counterexamples"] = s.counterexamples;
        return j;
    };
    nlohmann::json j;
    j["H1"] = enc(h1);
    j["H2"] = {{"structural", h2_structural}};
    j["H3"] = enc(h3);
    j["H4"] = enc(h4);
    j["H5"] = enc(h5);
    return j;
}

}  // namespace skewlab::cocycle
