#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/cones.hpp"
#include "skewlab/linalg.hpp"
#include "skewlab/ode.hpp"

namespace skewlab::parabolic {

using forcing::RotationVector;
using forcing::TorusPoint;

enum class BoundaryCondition { neumann, dirichlet };

// Grid sample of u over [0,1]. Conventions:
//   neumann:   nodes x_j = j h, j = 0..N, h = 1/N (endpoints stored; ghost
//              reflection u_{-1} = u_1 enforces u_x = 0 at second order)
//   dirichlet: nodes x_j = j h, j = 1..N, h = 1/(N+1) (boundary values are 0)
struct GridFunction {
    int N;
    BoundaryCondition bc;
    Eigen::VectorXd values;

    GridFunction(int n, BoundaryCondition b) : N(n), bc(b) {
        if (n < 8) throw std::invalid_argument("GridFunction: N >= 8 required");
        values = Eigen::VectorXd::Zero(nodes());
    }
    GridFunction(int n, BoundaryCondition b, Eigen::VectorXd v) : N(n), bc(b), values(std::move(v)) {
        if (n < 8) throw std::invalid_argument("GridFunction: N >= 8 required");
        if (values.size() != nodes()) throw std::invalid_argument("GridFunction: value count");
    }

    int nodes() const { return bc == BoundaryCondition::neumann ? N + 1 : N; }
    double h() const { return bc == BoundaryCondition::neumann ? 1.0 / N : 1.0 / (N + 1); }
    double x_of(int j) const {
        return bc == BoundaryCondition::neumann ? j * h() : (j + 1) * h();
    }

    template <typename F>
    static GridFunction sample(int n, BoundaryCondition b, F&& f) {
        GridFunction g(n, b);
        for (int j = 0; j < g.nodes(); ++j) g.values(j) = f(g.x_of(j));
        return g;
    }

    // Discrete C^1 proxy ||u||_inf + ||D_h u||_inf.
    double c1_norm() const {
        return values.lpNorm<Eigen::Infinity>() + gradient().lpNorm<Eigen::Infinity>();
    }

    // Centered first differences with the BC ghost convention.
    Eigen::VectorXd gradient() const {
        const int m = nodes();
        const double hh = h();
        Eigen::VectorXd g(m);
        for (int j = 0; j < m; ++j) {
            const double up = (j + 1 < m) ? values(j + 1)
                              : (bc == BoundaryCondition::neumann ? values(j - 1) : 0.0);
            const double dn = (j - 1 >= 0) ? values(j - 1)
                              : (bc == BoundaryCondition::neumann ? values(j + 1) : 0.0);
            g(j) = (up - dn) / (2.0 * hh);
        }
        return g;
    }
};

// Nonlinearity f(theta, x, u, p) with the partials the linearized equation needs.
struct Nonlinearity {
    std::function<double(const TorusPoint&, double, double, double)> f;
    std::function<double(const TorusPoint&, double, double, double)> du;  // d3 f
    std::function<double(const TorusPoint&, double, double, double)> dp;  // d4 f
};

enum class PerturbationKind { none, nonlocal, chemotaxis };

struct ParabolicSpec {
    int N = 128;
    BoundaryCondition bc = BoundaryCondition::neumann;
    RotationVector rot;
    Nonlinearity f;
    PerturbationKind kind = PerturbationKind::none;
    double eps = 0.0;

    // nonlocal: + eps c(theta, x) * integral nu(x) u dx
    std::function<double(const TorusPoint&, double)> c;
    std::function<double(double)> nu;
    double c_inf = 0.0, nu_inf = 0.0;

    // dissipativity constants declared by the model
    double xi = 0.0, M0 = 0.0, M1 = 0.0;

    explicit ParabolicSpec(RotationVector r) : rot(std::move(r)) {}
};

// ||v||_inf <= C ||u||_inf for the chemotaxis elliptic solve.
inline double chemo_bound_constant() {
    const double e = std::exp(1.0);
    return (3.0 * e * e - e) / (2.0 * (e - 1.0));
}

// Solves v_xx - v + u = 0 with homogeneous Neumann data by the discrete
// three-point operator (tridiagonal solve). The paper's printed quadrature
// formula is kept separately as a cross-check; the residual equation is
// normative here.
inline GridFunction solve_chemo_v(const GridFunction& u) {
    if (u.bc != BoundaryCondition::neumann)
        throw std::invalid_argument("solve_chemo_v: Neumann data required");
    const int m = u.nodes();
    const double h2 = u.h() * u.h();
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(m, 1.0 + 2.0 / h2);
    Eigen::VectorXd sub = Eigen::VectorXd::Constant(m - 1, -1.0 / h2);
    Eigen::VectorXd super = Eigen::VectorXd::Constant(m - 1, -1.0 / h2);
    super(0) = -2.0 / h2;
    sub(m - 2) = -2.0 / h2;
    GridFunction v(u.N, u.bc);
    v.values = solve_tridiagonal(diag, sub, super, u.values);
    return v;
}

// Discrete residual v_xx - v + u under the ghost convention; sup norm.
inline double chemo_residual(const GridFunction& u, const GridFunction& v) {
    const int m = u.nodes();
    const double h2 = u.h() * u.h();
    double worst = 0.0;
    for (int j = 0; j < m; ++j) {
        const double vm = (j - 1 >= 0) ? v.values(j - 1) : v.values(j + 1);
        const double vp = (j + 1 < m) ? v.values(j + 1) : v.values(j - 1);
        const double vxx = (vm - 2.0 * v.values(j) + vp) / h2;
        worst = std::max(worst, std::abs(vxx - v.values(j) + u.values(j)));
    }
    return worst;
}

// The printed closed-form solution (Liouville formula), evaluated by trapezoid
// quadrature on the grid. As printed it returns -v; the global sign is flipped
// here so it can serve as a cross-check against the tridiagonal solve.
inline GridFunction chemo_v_series(const GridFunction& u) {
    if (u.bc != BoundaryCondition::neumann)
        throw std::invalid_argument("chemo_v_series: Neumann data required");
    const int m = u.nodes();
    const double h = u.h();
    const double e2 = std::exp(2.0);

    Eigen::VectorXd cw(m);
    for (int j = 0; j < m; ++j) {
        const double y = u.x_of(j);
        cw(j) = (std::exp(2.0 - y) + std::exp(y)) / (2.0 * (e2 - 1.0)) * u.values(j);
    }
    const double c0 = -trapezoid(cw, h);

    GridFunction v(u.N, u.bc);
    for (int j = 0; j < m; ++j) {
        const double x = u.x_of(j);
        Eigen::VectorXd integrand(j + 1);
        for (int i = 0; i <= j; ++i)
            integrand(i) = std::sinh(x - u.x_of(i)) * u.values(i);
        const double inner = (j == 0) ? 0.0 : trapezoid(integrand.head(j + 1), h);
        v.values(j) = -(c0 * (std::exp(x) + std::exp(-x)) + inner);
    }
    return v;
}

struct DissipativityBounds {
    double M_star = 0.0;
    double M1_star = 0.0;
    bool feasible = false;
};

// Absorbing-ball radii for the two perturbation families, with the eps
// feasibility windows 0 <= eps < xi/(|c| |nu|) resp. |eps| < xi/(C+1).
inline DissipativityBounds dissipativity_bounds(const ParabolicSpec& spec, double eps) {
    DissipativityBounds out;
    if (spec.kind == PerturbationKind::nonlocal) {
        const double load = eps * spec.c_inf * spec.nu_inf;
        out.feasible = eps >= 0.0 && load < spec.xi;
        if (out.feasible) out.M_star = spec.M0 / (spec.xi - load);
    } else if (spec.kind == PerturbationKind::chemotaxis) {
        const double cap = spec.xi / (chemo_bound_constant() + 1.0);
        out.feasible = std::abs(eps) < cap;
        if (out.feasible)
            out.M1_star =
                std::sqrt(spec.M1 / (spec.xi - (chemo_bound_constant() + 1.0) * std::abs(eps)));
    } else {
        out.feasible = true;
    }
    return out;
}

// Method of lines: second-order central u_xx (Neumann via ghost points),
// centered u_x, trapezoid rule for the nonlocal integral, explicit elliptic
// solve for the chemotaxis coupling.
inline FlowSystem semidiscretize(const ParabolicSpec& spec) {
    if (spec.N < 8) throw std::invalid_argument("semidiscretize: N >= 8 required");
    const GridFunction proto(spec.N, spec.bc);
    const int m = proto.nodes();
    const double h = proto.h();
    const double h2 = h * h;
    const bool neu = spec.bc == BoundaryCondition::neumann;

    Eigen::VectorXd xs(m), nu_weights(m);
    for (int j = 0; j < m; ++j) xs(j) = proto.x_of(j);
    if (spec.kind == PerturbationKind::nonlocal) {
        if (!spec.nu || !spec.c) throw std::invalid_argument("semidiscretize: nonlocal needs c, nu");
        for (int j = 0; j < m; ++j) nu_weights(j) = spec.nu(xs(j));
    }

    FlowSystem sys(spec.rot);
    sys.n = m;
    const ParabolicSpec cfg = spec;

    sys.rhs = [cfg, m, h, h2, neu, xs, nu_weights](const TorusPoint& th,
                                                   const Eigen::VectorXd& u) {
        auto at = [&](int j) -> double {
            if (j >= 0 && j < m) return u(j);
            if (neu) return (j < 0) ? u(-j) : u(2 * (m - 1) - j);
            return 0.0;
        };
        Eigen::VectorXd du(m);
        double nonlocal_term = 0.0;
        if (cfg.kind == PerturbationKind::nonlocal) {
            Eigen::VectorXd w(m);
            for (int j = 0; j < m; ++j) w(j) = nu_weights(j) * u(j);
            // Dirichlet grids omit the zero-valued endpoints, so the full
            // trapezoid rule over [0,1] reduces to h * sum.
            nonlocal_term = cfg.eps * (neu ? trapezoid(w, h) : h * w.sum());
        }
        Eigen::VectorXd v, vx;
        if (cfg.kind == PerturbationKind::chemotaxis) {
            GridFunction ug(cfg.N, cfg.bc, u);
            const GridFunction vg = solve_chemo_v(ug);
            v = vg.values;
            vx = vg.gradient();
        }
        for (int j = 0; j < m; ++j) {
            const double uxx = (at(j - 1) - 2.0 * u(j) + at(j + 1)) / h2;
            const double ux = (at(j + 1) - at(j - 1)) / (2.0 * h);
            double val = uxx + cfg.f.f(th, xs(j), u(j), ux);
            if (cfg.kind == PerturbationKind::nonlocal)
                val += cfg.c(th, xs(j)) * nonlocal_term;
            else if (cfg.kind == PerturbationKind::chemotaxis)
                val += cfg.eps * (-vx(j) * ux - u(j) * v(j) + u(j) * u(j));
            du(j) = val;
        }
        return du;
    };

    // Tridiagonal Jacobian of the local part; the nonlocal coupling adds a
    // rank-one block which the cone machinery never needs.
    sys.jacobian = [cfg, m, h, h2, neu, xs](const TorusPoint& th, const Eigen::VectorXd& u) {
        if (cfg.kind == PerturbationKind::chemotaxis)
            throw std::logic_error("semidiscretize: chemotaxis Jacobian not provided");
        auto at = [&](int j) -> double {
            if (j >= 0 && j < m) return u(j);
            if (neu) return (j < 0) ? u(-j) : u(2 * (m - 1) - j);
            return 0.0;
        };
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            const double ux = (at(j + 1) - at(j - 1)) / (2.0 * h);
            const double fu = cfg.f.du(th, xs(j), u(j), ux);
            const double fp = cfg.f.dp(th, xs(j), u(j), ux);
            jac(j, j) = -2.0 / h2 + fu;
            if (j - 1 >= 0) jac(j, j - 1) += 1.0 / h2 - fp / (2.0 * h);
            if (j + 1 < m) jac(j, j + 1) += 1.0 / h2 + fp / (2.0 * h);
            if (neu && j == 0) jac(0, 1) += 1.0 / h2 - fp / (2.0 * h);
            if (neu && j == m - 1) jac(m - 1, m - 2) += 1.0 / h2 + fp / (2.0 * h);
        }
        return jac;
    };
    return sys;
}

// Path of the linearized equation v_t = v_xx + a v_x + b v along a pair of
// solutions, with a and b from 16-node quadrature over the homotopy parameter.
// The pair and the tangent integrate as one augmented system, so when v starts
// at u1 - u2 it tracks the difference to integrator tolerance.
struct LinearizedPath {
    Orbit u1, u2, v;
    int grid_nodes = 0;
};

inline LinearizedPath linearized_parabolic(const ParabolicSpec& spec, const GridFunction& u1_0,
                                           const GridFunction& u2_0, const TorusPoint& theta0,
                                           double t_end, double tol = 1e-7) {
    if (spec.kind != PerturbationKind::none)
        throw std::invalid_argument(
            "linearized_parabolic: configured for the unperturbed equation only");
    if (u1_0.N != spec.N || u2_0.N != spec.N || u1_0.bc != spec.bc || u2_0.bc != spec.bc)
        throw std::invalid_argument("linearized_parabolic: grid/node mismatch");

    const FlowSystem sys = semidiscretize(spec);
    const int m = sys.n;
    const double h = u1_0.h();
    const bool neu = spec.bc == BoundaryCondition::neumann;
    const auto& rule = gl16();

    Eigen::VectorXd xs(m);
    for (int j = 0; j < m; ++j) xs(j) = u1_0.x_of(j);

    auto gradient_of = [m, h, neu](const Eigen::VectorXd& u) {
        Eigen::VectorXd g(m);
        for (int j = 0; j < m; ++j) {
            const double up = (j + 1 < m) ? u(j + 1) : (neu ? u(j - 1) : 0.0);
            const double dn = (j - 1 >= 0) ? u(j - 1) : (neu ? u(j + 1) : 0.0);
            g(j) = (up - dn) / (2.0 * h);
        }
        return g;
    };

    auto rhs = [&](double t, const Eigen::VectorXd& s) {
        const TorusPoint th = forcing::advance_base(theta0, spec.rot, t);
        const Eigen::VectorXd u1 = s.segment(0, m);
        const Eigen::VectorXd u2 = s.segment(m, m);
        const Eigen::VectorXd v = s.segment(2 * m, m);
        Eigen::VectorXd out(3 * m);
        out.segment(0, m) = sys.rhs(th, u1);
        out.segment(m, m) = sys.rhs(th, u2);

        const Eigen::VectorXd p1 = gradient_of(u1), p2 = gradient_of(u2);
        const Eigen::VectorXd vx = gradient_of(v);
        const double h2 = h * h;
        for (int j = 0; j < m; ++j) {
            double a = 0.0, b = 0.0;
            for (int q = 0; q < 16; ++q) {
                const double sq = rule.node[q];
                a += rule.weight[q] *
                     spec.f.dp(th, xs(j), u1(j), p2(j) + sq * (p1(j) - p2(j)));
                b += rule.weight[q] *
                     spec.f.du(th, xs(j), u2(j) + sq * (u1(j) - u2(j)), p2(j));
            }
            const double vm = (j - 1 >= 0) ? v(j - 1) : (neu ? v(j + 1) : 0.0);
            const double vp = (j + 1 < m) ? v(j + 1) : (neu ? v(j - 1) : 0.0);
            const double vxx = (vm - 2.0 * v(j) + vp) / h2;
            out(2 * m + j) = vxx + a * vx(j) + b * v(j);
        }
        return out;
    };

    Eigen::VectorXd state(3 * m);
    state << u1_0.values, u2_0.values, (u1_0.values - u2_0.values);

    Orbit aug(theta0, spec.rot);
    IntegratorOptions opts;
    opts.tol = tol;
    integrate_adaptive(rhs, aug, state, 0.0, t_end, opts);

    LinearizedPath out{Orbit(theta0, spec.rot), Orbit(theta0, spec.rot), Orbit(theta0, spec.rot),
                       m};
    for (std::size_t k = 0; k < aug.t.size(); ++k) {
        out.u1.t.push_back(aug.t[k]);
        out.u2.t.push_back(aug.t[k]);
        out.v.t.push_back(aug.t[k]);
        out.u1.x.push_back(aug.x[k].segment(0, m));
        out.u2.x.push_back(aug.x[k].segment(m, m));
        out.v.x.push_back(aug.x[k].segment(2 * m, m));
        out.u1.dx.push_back(aug.dx[k].segment(0, m));
        out.u2.dx.push_back(aug.dx[k].segment(m, m));
        out.v.dx.push_back(aug.dx[k].segment(2 * m, m));
    }
    return out;
}

}  // namespace skewlab::parabolic
