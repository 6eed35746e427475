#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/forcing.hpp"

namespace skewlab {

using forcing::RotationVector;
using forcing::TorusPoint;

struct IntegrationError : std::runtime_error {
    double last_valid_time;
    IntegrationError(const std::string& what, double t)
        : std::runtime_error(what), last_valid_time(t) {}
};

struct IntegratorOptions {
    double tol = 1e-8;       // governs both absolute and relative local error
    double h_init = 1e-3;
    double h_max = 1.0;
    double h_min = 1e-14;
    long max_steps = 20000000;
};

// Time grid + states of one trajectory, tied to its base-point motion.
// Stored derivatives make the orbit densely evaluable by cubic Hermite
// interpolation between accepted integrator steps.
struct Orbit {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::VectorXd> dx;
    TorusPoint base;
    RotationVector rot;

    Orbit(TorusPoint theta0, RotationVector rotation)
        : base(std::move(theta0)), rot(std::move(rotation)) {}

    int dim() const { return t.empty() ? 0 : static_cast<int>(x.front().size()); }
    double t_begin() const { return t.front(); }
    double t_end() const { return t.back(); }

    TorusPoint base_at(double time) const { return forcing::advance_base(base, rot, time); }

    Eigen::VectorXd state_at(double time) const {
        if (t.empty()) throw std::runtime_error("Orbit::state_at: empty orbit");
        if (time < t.front() - 1e-12 || time > t.back() + 1e-12)
            throw std::out_of_range("Orbit::state_at: time outside stored range");
        time = std::clamp(time, t.front(), t.back());
        const auto it = std::upper_bound(t.begin(), t.end(), time);
        std::size_t hi = std::min<std::size_t>(t.size() - 1, static_cast<std::size_t>(it - t.begin()));
        if (hi == 0) hi = 1;
        const std::size_t lo = hi - 1;
        const double h = t[hi] - t[lo];
        if (h <= 0.0) return x[lo];
        const double s = (time - t[lo]) / h;
        // Cubic Hermite basis.
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * x[lo] + h10 * h * dx[lo] + h01 * x[hi] + h11 * h * dx[hi];
    }
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // 4th-order weights for the embedded error estimate.
    static constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                            e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;
};

}  // namespace detail

// Integrates dx/dt = rhs(t, x) over [t0, t1] with adaptive embedded steps,
// appending accepted points to the orbit. rhs: (double, const VectorXd&) -> VectorXd.
template <typename Rhs>
void integrate_adaptive(Rhs&& rhs, Orbit& orbit, Eigen::VectorXd x0, double t0, double t1,
                        const IntegratorOptions& opts = {}) {
    using D = detail::Dopri5;
    const int n = static_cast<int>(x0.size());
    double t = t0;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd k1 = rhs(t, x);
    if (!k1.allFinite()) throw IntegrationError("integrate_adaptive: non-finite rhs at start", t);

    if (orbit.t.empty() || std::abs(orbit.t.back() - t0) > 1e-12) {
        orbit.t.push_back(t);
        orbit.x.push_back(x);
        orbit.dx.push_back(k1);
    }
    if (t1 <= t0) return;

    double h = std::min(opts.h_init, t1 - t0);
    Eigen::VectorXd k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), x5(n), err(n);

    for (long step = 0; step < opts.max_steps; ++step) {
        if (t >= t1 - 1e-14 * std::max(1.0, std::abs(t1))) return;
        h = std::min(h, t1 - t);
        if (h < opts.h_min)
            throw IntegrationError("integrate_adaptive: step size underflow", t);

        k2 = rhs(t + D::c2 * h, x + h * (D::a21 * k1));
        k3 = rhs(t + D::c3 * h, x + h * (D::a31 * k1 + D::a32 * k2));
        k4 = rhs(t + D::c4 * h, x + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
        k5 = rhs(t + D::c5 * h, x + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
        k6 = rhs(t + h, x + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5));
        x5 = x + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        k7 = rhs(t + h, x5);  // FSAL
        err = x5 - (x + h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 +
                             D::e7 * k7));

        if (!x5.allFinite() || !err.allFinite())
            throw IntegrationError("integrate_adaptive: non-finite state (blow-up?)", t);

        double err_norm = 0.0;
        for (int i = 0; i < n; ++i) {
            const double scale = opts.tol * (1.0 + std::max(std::abs(x(i)), std::abs(x5(i))));
            err_norm = std::max(err_norm, std::abs(err(i)) / scale);
        }

        if (err_norm <= 1.0) {
            t += h;
            x = x5;
            k1 = k7;
            orbit.t.push_back(t);
            orbit.x.push_back(x);
            orbit.dx.push_back(k1);
        }
        const double factor = (err_norm > 0.0)
                                  ? std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0)
                                  : 5.0;
        h = std::min(h * factor, opts.h_max);
    }
    throw IntegrationError("integrate_adaptive: max step count exceeded", t);
}

// A forced vector field bundled with its base rotation; the common currency
// between the concrete systems and the cocycle/separation machinery.
struct FlowSystem {
    int n = 0;
    RotationVector rot;
    std::function<Eigen::VectorXd(const TorusPoint&, const Eigen::VectorXd&)> rhs;
    // Jacobian of the unperturbed field; tridiagonal for the systems studied here.
    std::function<Eigen::MatrixXd(const TorusPoint&, const Eigen::VectorXd&)> jacobian;
    double box_radius = 1e6;

    FlowSystem() : rot(RotationVector(Eigen::VectorXd::Ones(1))) {}
    explicit FlowSystem(RotationVector r) : rot(std::move(r)) {}
};

inline Orbit integrate_flow(const FlowSystem& sys, const TorusPoint& theta0,
                            const Eigen::VectorXd& x0, double t_end,
                            const IntegratorOptions& opts = {}) {
    Orbit orbit(theta0, sys.rot);
    auto rhs = [&](double t, const Eigen::VectorXd& x) {
        return sys.rhs(forcing::advance_base(theta0, sys.rot, t), x);
    };
    integrate_adaptive(rhs, orbit, x0, 0.0, t_end, opts);
    return orbit;
}

}  // namespace skewlab
