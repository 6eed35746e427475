#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/ode.hpp"

namespace skewlab::cones {

// Verdict of the sign-change functional sigma on R^n. The functional is only
// continuous on the regular set (first/last entries nonzero, interior zeros
// flanked by strict sign changes); irregular inputs return regular = false
// with the margin telling how far inside/outside the regular set the point sits.
struct SignChangeResult {
    bool regular = false;
    int sigma = 0;      // valid when regular
    double margin = 0;  // distance proxy to the boundary of the regular set
};

inline SignChangeResult sigma(const Eigen::VectorXd& x, double tol = 1e-9) {
    const int n = static_cast<int>(x.size());
    if (n < 2) throw std::invalid_argument("sigma: need dimension >= 2");

    double margin = std::min(std::abs(x(0)), std::abs(x(n - 1)));
    for (int i = 1; i < n - 1; ++i) {
        const double cross = x(i - 1) * x(i + 1);
        // Interior entries only constrain regularity near zero: a vanishing
        // x_i needs strictly opposite neighbors.
        const double d = (cross < 0.0) ? std::max(std::abs(x(i)), std::sqrt(-cross))
                                       : std::abs(x(i));
        margin = std::min(margin, d);
    }

    SignChangeResult out;
    out.margin = margin;
    out.regular = margin > tol;

    // Count sign changes with near-zero entries removed; this matches the
    // discrete Lyapunov functional of Smillie/Smith rather than the literal
    // cardinality formula, which double-counts around interior zeros.
    int count = 0;
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
        if (std::abs(x(i)) <= tol) continue;
        if (prev != 0.0 && x(i) * prev < 0.0) ++count;
        prev = x(i);
    }
    out.sigma = count;
    return out;
}

enum class Location { interior, boundary, outside };

struct ConeMembership {
    int index = 0;
    Location location = Location::outside;
    double margin = 0.0;
};

// Membership in the closed cone C_i = cl{ x regular : sigma(x) <= i-1 }.
// Three-valued with an explicit tolerance: closures are undecidable pointwise
// in floating point, so near-ties report boundary. C_n is all of R^n.
inline ConeMembership cone_membership_vec(const Eigen::VectorXd& x, int i, double tol = 1e-9) {
    const int n = static_cast<int>(x.size());
    if (i < 1 || i > n) throw std::invalid_argument("cone_membership_vec: index out of range");
    ConeMembership out;
    out.index = i;
    if (i == n) {  // sigma <= n-1 always
        out.location = Location::interior;
        out.margin = std::numeric_limits<double>::infinity();
        return out;
    }
    const SignChangeResult sc = sigma(x, tol);
    out.margin = sc.margin;
    if (sc.sigma <= i - 1) {
        out.location = (sc.regular && sc.margin > tol) ? Location::interior : Location::boundary;
    } else {
        // Above the sign-change budget: outside unless a tol-perturbation
        // could still collapse the verdict.
        out.location = (sc.margin > tol) ? Location::outside : Location::boundary;
    }
    return out;
}

struct ZeroNumberResult {
    int zeros = 0;
    bool all_simple = false;
};

// Zero number of a grid sample of u over [0,1]: sign changes of the nodal
// values with near-zero nodes merged into their crossing. all_simple demands
// every detected zero crossing have local slope above tol/h and flags grazing
// (same-sign flanked) near-zero runs as non-simple.
inline ZeroNumberResult zero_number_values(const Eigen::VectorXd& values, double h,
                                           double tol = 1e-9) {
    const int n = static_cast<int>(values.size());
    ZeroNumberResult out;
    if (n == 0) return out;

    std::vector<int> solid;
    solid.reserve(n);
    for (int j = 0; j < n; ++j)
        if (std::abs(values(j)) > tol) solid.push_back(j);
    if (solid.empty()) return out;  // indistinguishable from zero: Z=0, not simple

    out.all_simple = true;
    // Leading/trailing near-zero runs count as grazing contact with 0.
    if (solid.front() != 0 || solid.back() != n - 1) out.all_simple = false;

    for (std::size_t s = 1; s < solid.size(); ++s) {
        const int j0 = solid[s - 1], j1 = solid[s];
        const bool change = values(j0) * values(j1) < 0.0;
        if (change) {
            ++out.zeros;
            const double slope = (values(j1) - values(j0)) / (h * (j1 - j0));
            if (std::abs(slope) <= tol / h) out.all_simple = false;
        } else if (j1 - j0 > 1) {
            // Near-zero run with same-sign flanks: a grazing (multiple) zero.
            out.all_simple = false;
        }
    }
    return out;
}

// Coordinates relative to the splitting X = H (+) span{u_plus}, where the
// projection pi reads off the first stored component and pi(u_plus) = 1.
struct HyperplaneCoord {
    double s = 0.0;
    Eigen::VectorXd h_part;
    Location side = Location::boundary;  // interior = X^+, outside = X^-, boundary = H
};

inline HyperplaneCoord hyperplane_split(const Eigen::VectorXd& x, const Eigen::VectorXd& u_plus,
                                        double tol = 1e-12) {
    if (x.size() != u_plus.size())
        throw std::invalid_argument("hyperplane_split: dimension mismatch");
    if (std::abs(u_plus(0) - 1.0) > 1e-12)
        throw std::invalid_argument("hyperplane_split: convention requires pi(u_plus) = 1");
    HyperplaneCoord out;
    out.s = x(0);
    out.h_part = x - out.s * u_plus;
    out.side = (out.s > tol) ? Location::interior
                             : (out.s < -tol ? Location::outside : Location::boundary);
    return out;
}

// Default conventions: first coordinate unit vector for state vectors, the
// constant-1 grid function for grid data.
inline HyperplaneCoord hyperplane_split(const Eigen::VectorXd& x, double tol = 1e-12) {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(x.size());
    e1(0) = 1.0;
    return hyperplane_split(x, e1, tol);
}

inline HyperplaneCoord hyperplane_split_grid(const Eigen::VectorXd& values, double tol = 1e-12) {
    return hyperplane_split(values, Eigen::VectorXd::Ones(values.size()), tol);
}

enum class FiberOrder { greater, less, equal, undecided };

// Order of two orbits over a shared base trajectory, decided by the sign of
// the hyperplane coordinate of their difference over the tail window.
// A non-uniform sign is reported as undecided, never silently resolved.
inline FiberOrder fiber_order(const Orbit& ox, const Orbit& oy, double tail_begin,
                              double tail_end, int samples = 64, double tol = 1e-10) {
    if (ox.dim() != oy.dim()) throw std::invalid_argument("fiber_order: dimension mismatch");
    if (forcing::torus_distance(ox.base, oy.base) > 1e-12 ||
        (ox.rot.omega - oy.rot.omega).norm() > 1e-12)
        throw std::invalid_argument("fiber_order: orbits do not share a base trajectory");
    if (tail_end > std::min(ox.t_end(), oy.t_end()) + 1e-9 || tail_begin >= tail_end)
        throw std::invalid_argument("fiber_order: tail window outside common time grid");

    bool all_pos = true, all_neg = true, all_small = true;
    for (int k = 0; k <= samples; ++k) {
        const double t = tail_begin + (tail_end - tail_begin) * k / samples;
        const Eigen::VectorXd d = ox.state_at(t) - oy.state_at(t);
        if (d.norm() >= tol) all_small = false;
        const double s = d(0);
        if (s <= tol) all_pos = false;
        if (s >= -tol) all_neg = false;
    }
    if (all_small) return FiberOrder::equal;
    if (all_pos) return FiberOrder::greater;
    if (all_neg) return FiberOrder::less;
    return FiberOrder::undecided;
}

}  // namespace skewlab::cones
