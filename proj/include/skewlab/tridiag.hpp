#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/forcing.hpp"
#include "skewlab/ode.hpp"
#include "skewlab/rng.hpp"

namespace skewlab::tridiag {

using forcing::RotationVector;
using forcing::TorusPoint;

// Competitive-cooperative tridiagonal system dx_i/dt = f_i(theta, x_{i-1}, x_i, x_{i+1})
// plus an eps-scaled bounded perturbation g. delta_signs carries the +-1
// interaction pattern; after the gauge transform the off-diagonal Jacobian
// entries are >= eps0 on the declared box.
struct TridiagSpec {
    int n = 0;
    std::vector<int> delta_signs;  // length n-1
    double eps0 = 0.0;             // cooperativity margin
    RotationVector rot;

    // Field and tridiagonal Jacobian of the unperturbed part.
    std::function<Eigen::VectorXd(const TorusPoint&, const Eigen::VectorXd&)> field;
    std::function<Eigen::MatrixXd(const TorusPoint&, const Eigen::VectorXd&)> jacobian;

    // Perturbation g with scale eps, and its sup bound M_g.
    std::function<Eigen::VectorXd(const TorusPoint&, const Eigen::VectorXd&)> g;
    double eps = 0.0;
    double Mg = 0.0;

    // Dissipativity constants: f_i <= -delta_D once x_i >= C_D dominates its
    // neighbors (and symmetrically below). The weaker one-sided variant is
    // carried in configs but not validated here.
    double delta_D = 0.0;
    double C_D = 0.0;

    double box_radius = 1e6;

    explicit TridiagSpec(RotationVector r) : rot(std::move(r)) {}

    FlowSystem flow() const {
        FlowSystem sys(rot);
        sys.n = n;
        sys.box_radius = box_radius;
        const auto f = field;
        const auto gp = g;
        const double e = eps;
        if (gp && e != 0.0) {
            sys.rhs = [f, gp, e](const TorusPoint& th, const Eigen::VectorXd& x) {
                return (f(th, x) + e * gp(th, x)).eval();
            };
        } else {
            sys.rhs = f;
        }
        sys.jacobian = jacobian;
        return sys;
    }
};

// mu_1 = 1, mu_i = delta_{i-1} mu_{i-1}; x_i -> mu_i x_i makes the system cooperative.
inline std::vector<int> gauge_transform(const std::vector<int>& delta_signs) {
    for (int d : delta_signs)
        if (d != 1 && d != -1) throw std::invalid_argument("gauge_transform: signs must be +-1");
    std::vector<int> mu(delta_signs.size() + 1);
    mu[0] = 1;
    for (std::size_t i = 1; i < mu.size(); ++i) mu[i] = delta_signs[i - 1] * mu[i - 1];
    return mu;
}

inline Orbit integrate(const TridiagSpec& spec, const TorusPoint& theta, const Eigen::VectorXd& x0,
                       double t_end, double tol = 1e-8) {
    if (!x0.allFinite()) throw std::invalid_argument("integrate: non-finite initial state");
    if (tol <= 0.0) throw std::invalid_argument("integrate: tol must be positive");
    IntegratorOptions opts;
    opts.tol = tol;
    return integrate_flow(spec.flow(), theta, x0, t_end, opts);
}

struct DissipativeBoxReport {
    bool entered_all = true;
    double max_entry_time = 0.0;
    struct Violation {
        int sample;
        double time;
        Eigen::VectorXd state;
    };
    std::vector<Violation> violations;
};

// Samples initial conditions and base points, then verifies each orbit enters
// the box {|x_i| <= C_D} in finite time and never leaves it on the tested
// horizon. Violations are findings, not exceptions; the eps precondition
// |eps| M_g < delta_D is a hard error.
inline DissipativeBoxReport check_dissipative_box(const TridiagSpec& spec, int sample_count,
                                                  Rng& rng, double horizon = 40.0,
                                                  double start_radius = 5.0, double tol = 1e-8) {
    if (spec.delta_D <= 0.0 || spec.C_D <= 0.0)
        throw std::invalid_argument("check_dissipative_box: dissipativity constants not declared");
    if (std::abs(spec.eps) * spec.Mg >= spec.delta_D)
        throw std::invalid_argument("check_dissipative_box: |eps| M_g exceeds the smallness bound");

    DissipativeBoxReport report;
    const double slack = 1e-7;  // integration tolerance allowance at the box face
    for (int s = 0; s < sample_count; ++s) {
        const Eigen::VectorXd x0 = rng.uniform_vector(spec.n, -start_radius, start_radius);
        const TorusPoint th(rng.uniform_vector(spec.rot.dim(), 0.0, forcing::two_pi));
        const Orbit orbit = integrate(spec, th, x0, horizon, tol);

        auto inside = [&](const Eigen::VectorXd& x) {
            return x.lpNorm<Eigen::Infinity>() <= spec.C_D + slack;
        };

        double entry = -1.0;
        bool violated = false;
        const double dt = 0.05;
        for (double t = 0.0; t <= horizon + 1e-12; t += dt) {
            const Eigen::VectorXd x = orbit.state_at(std::min(t, horizon));
            if (entry < 0.0) {
                if (inside(x)) entry = t;
            } else if (!inside(x)) {
                report.violations.push_back({s, t, x});
                violated = true;
                break;
            }
        }
        if (entry < 0.0) {
            report.violations.push_back({s, horizon, orbit.x.back()});
            violated = true;
        }
        if (violated) report.entered_all = false;
        if (entry >= 0.0) report.max_entry_time = std::max(report.max_entry_time, entry);
    }
    return report;
}

// ---- Built-in system families -------------------------------------------

// Cubic chain: dx_i/dt = lin_i x_i - cub_i x_i^3 + sum of couplings to the
// neighbors + amp * w_i (sin theta_1 + sin theta_2). Couplings enter as
// coupling_{i} * (x_{i+1} - x_i) styled terms only through the plain product
// form K x_{i+-1}, keeping the Jacobian off-diagonal exactly K.
struct CubicChainParams {
    Eigen::VectorXd lin;       // linear diagonal coefficients
    Eigen::VectorXd cub;       // cubic damping coefficients (>= 0)
    Eigen::VectorXd coupling;  // length n-1, strength of each neighbor link
    Eigen::VectorXd forcing_weight;
    double forcing_amp = 0.0;
    std::vector<int> delta_signs;  // optional competitive pattern; default all +1
};

inline TridiagSpec make_cubic_chain(const CubicChainParams& p, RotationVector rot,
                                    double delta_D, double C_D) {
    const int n = static_cast<int>(p.lin.size());
    if (p.cub.size() != n || p.forcing_weight.size() != n || p.coupling.size() != n - 1)
        throw std::invalid_argument("make_cubic_chain: inconsistent parameter sizes");
    std::vector<int> signs = p.delta_signs.empty() ? std::vector<int>(n - 1, 1) : p.delta_signs;
    if (static_cast<int>(signs.size()) != n - 1)
        throw std::invalid_argument("make_cubic_chain: delta_signs length");

    TridiagSpec spec(rot);
    spec.n = n;
    spec.delta_signs = signs;
    spec.eps0 = (n > 1) ? p.coupling.minCoeff() : 1.0;
    spec.delta_D = delta_D;
    spec.C_D = C_D;

    const CubicChainParams prm = p;
    const std::vector<int> sg = signs;
    spec.field = [prm, sg, n](const TorusPoint& th, const Eigen::VectorXd& x) {
        const double q = (th.dim() >= 2) ? std::sin(th.angles(0)) + std::sin(th.angles(1))
                                         : std::sin(th.angles(0));
        Eigen::VectorXd dx(n);
        for (int i = 0; i < n; ++i) {
            double v = prm.lin(i) * x(i) - prm.cub(i) * x(i) * x(i) * x(i) +
                       prm.forcing_amp * prm.forcing_weight(i) * q;
            if (i > 0) v += sg[i - 1] * prm.coupling(i - 1) * x(i - 1);
            if (i < n - 1) v += sg[i] * prm.coupling(i) * x(i + 1);
            dx(i) = v;
        }
        return dx;
    };
    spec.jacobian = [prm, sg, n](const TorusPoint&, const Eigen::VectorXd& x) {
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            j(i, i) = prm.lin(i) - 3.0 * prm.cub(i) * x(i) * x(i);
            if (i > 0) j(i, i - 1) = sg[i - 1] * prm.coupling(i - 1);
            if (i < n - 1) j(i, i + 1) = sg[i] * prm.coupling(i);
        }
        return j;
    };
    return spec;
}

// x1' = -x1^3 + x2, x2' = x1 - x2^3; enters {|x_i| <= 2} from anywhere.
inline TridiagSpec default_cubic_pair(RotationVector rot = RotationVector::standard_quasiperiodic()) {
    CubicChainParams p;
    p.lin = Eigen::VectorXd::Zero(2);
    p.cub = Eigen::VectorXd::Ones(2);
    p.coupling = Eigen::VectorXd::Ones(1);
    p.forcing_weight = Eigen::VectorXd::Zero(2);
    p.forcing_amp = 0.0;
    return make_cubic_chain(p, rot, 1.0, 2.0);
}

// Cooperative n=5 chain with quasi-periodic forcing of amplitude 0.05.
inline TridiagSpec default_chain5(RotationVector rot = RotationVector::standard_quasiperiodic()) {
    const int n = 5;
    CubicChainParams p;
    p.lin = Eigen::VectorXd::Constant(n, -1.0);
    p.cub = Eigen::VectorXd::Constant(n, 1.0);
    p.coupling = Eigen::VectorXd::Constant(n - 1, 0.5);
    p.forcing_weight = Eigen::VectorXd::Ones(n);
    p.forcing_amp = 0.05;
    return make_cubic_chain(p, rot, 0.5, 1.5);
}

// Scalar forced pitchfork dx/dt = x - x^3 + amp (sin theta_1 + sin theta_2).
inline TridiagSpec forced_pitchfork(double amp,
                                    RotationVector rot = RotationVector::standard_quasiperiodic()) {
    CubicChainParams p;
    p.lin = Eigen::VectorXd::Constant(1, 1.0);
    p.cub = Eigen::VectorXd::Constant(1, 1.0);
    p.coupling = Eigen::VectorXd(0);
    p.forcing_weight = Eigen::VectorXd::Ones(1);
    p.forcing_amp = amp;
    return make_cubic_chain(p, rot, 0.5, 2.0);
}

// Constant-coefficient linear system dx/dt = A x (A tridiagonal for the
// cone work; arbitrary matrices accepted for oracles).
inline TridiagSpec linear_system(const Eigen::MatrixXd& a,
                                 RotationVector rot = RotationVector::standard_quasiperiodic()) {
    const int n = static_cast<int>(a.rows());
    if (a.cols() != n) throw std::invalid_argument("linear_system: square matrix required");
    TridiagSpec spec(rot);
    spec.n = n;
    spec.delta_signs.assign(std::max(0, n - 1), 1);
    double off = 1e300;
    for (int i = 0; i + 1 < n; ++i) off = std::min({off, a(i, i + 1), a(i + 1, i)});
    spec.eps0 = (n > 1) ? off : 1.0;
    spec.field = [a](const TorusPoint&, const Eigen::VectorXd& x) { return (a * x).eval(); };
    spec.jacobian = [a](const TorusPoint&, const Eigen::VectorXd&) { return a; };
    spec.delta_D = 0.0;
    spec.C_D = 0.0;
    return spec;
}

// Spot check of post-gauge cooperativity on random box samples; returns the
// worst off-diagonal Jacobian entry seen.
inline double cooperativity_margin(const TridiagSpec& spec, Rng& rng, int samples = 1000,
                                   double radius = 2.0) {
    const std::vector<int> mu = gauge_transform(spec.delta_signs);
    double worst = 1e300;
    for (int s = 0; s < samples; ++s) {
        const Eigen::VectorXd x = rng.uniform_vector(spec.n, -radius, radius);
        const TorusPoint th(rng.uniform_vector(spec.rot.dim(), 0.0, forcing::two_pi));
        const Eigen::MatrixXd j = spec.jacobian(th, x);
        for (int i = 0; i + 1 < spec.n; ++i) {
            worst = std::min(worst, mu[i] * mu[i + 1] * j(i, i + 1));
            worst = std::min(worst, mu[i] * mu[i + 1] * j(i + 1, i));
        }
    }
    return worst;
}

}  // namespace skewlab::tridiag
