#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace skewlab::forcing {

inline constexpr double two_pi = 6.283185307179586476925286766559;

namespace detail {

// True when x is matched exactly by a continued-fraction convergent with
// denominator <= max_denom, i.e. rational at the declared precision.
inline bool rational_at_precision(double x, std::uint64_t max_denom, double tol) {
    double frac = x - std::floor(x);
    std::uint64_t p_prev = 1, q_prev = 0;
    std::uint64_t p = static_cast<std::uint64_t>(std::floor(x)), q = 1;
    double approx_err = std::abs(x - static_cast<double>(p) / static_cast<double>(q));
    for (int it = 0; it < 64; ++it) {
        if (approx_err < tol) return true;
        if (frac < 1e-18) return true;
        const double inv = 1.0 / frac;
        const double a_real = std::floor(inv);
        if (a_real > 1e18) return true;
        const auto a = static_cast<std::uint64_t>(a_real);
        const std::uint64_t q_next = a * q + q_prev;
        if (q_next > max_denom) return false;
        const std::uint64_t p_next = a * p + p_prev;
        p_prev = p; q_prev = q; p = p_next; q = q_next;
        approx_err = std::abs(x - static_cast<double>(p) / static_cast<double>(q));
        frac = inv - a_real;
    }
    return false;
}

}  // namespace detail

// Frequencies of the driving torus rotation. Construction verifies that some
// pair of frequencies has irrational ratio, to continued-fraction precision
// with denominators up to 10^6 (an exactly rational hull would be a circle,
// not the intended torus).
struct RotationVector {
    Eigen::VectorXd omega;

    explicit RotationVector(Eigen::VectorXd frequencies) : omega(std::move(frequencies)) {
        if (omega.size() < 1) throw std::invalid_argument("RotationVector: need at least one frequency");
        if (omega.size() >= 2) {
            bool found_irrational = false;
            for (int i = 0; i < omega.size() && !found_irrational; ++i)
                for (int j = i + 1; j < omega.size() && !found_irrational; ++j) {
                    if (omega(j) == 0.0) continue;
                    if (!detail::rational_at_precision(std::abs(omega(i) / omega(j)), 1000000, 1e-13))
                        found_irrational = true;
                }
            if (!found_irrational)
                throw std::invalid_argument(
                    "RotationVector: all frequency ratios rational at precision 1e6");
        }
    }

    int dim() const { return static_cast<int>(omega.size()); }

    static RotationVector standard_quasiperiodic() {
        Eigen::VectorXd w(2);
        w << 1.0, std::sqrt(2.0);
        return RotationVector(w);
    }
};

// A point on the torus hull; angles reduced to [0, 2*pi).
struct TorusPoint {
    Eigen::VectorXd angles;

    explicit TorusPoint(Eigen::VectorXd a) : angles(std::move(a)) { reduce(); }

    void reduce() {
        for (int i = 0; i < angles.size(); ++i) {
            angles(i) = std::fmod(angles(i), two_pi);
            if (angles(i) < 0.0) angles(i) += two_pi;
        }
    }

    int dim() const { return static_cast<int>(angles.size()); }

    static TorusPoint zero(int m) { return TorusPoint(Eigen::VectorXd::Zero(m)); }
};

// The base flow theta . t of the skew product.
inline TorusPoint advance_base(const TorusPoint& theta, const RotationVector& rot, double t) {
    if (theta.dim() != rot.dim())
        throw std::invalid_argument("advance_base: dimension mismatch");
    return TorusPoint(theta.angles + rot.omega * t);
}

// Angular distance on the torus, max over components.
inline double torus_distance(const TorusPoint& a, const TorusPoint& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("torus_distance: dimension mismatch");
    double d = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        double di = std::abs(a.angles(i) - b.angles(i));
        di = std::min(di, two_pi - di);
        d = std::max(d, di);
    }
    return d;
}

// One trigonometric mode: coefficient(x) * sin(k . angles).
struct ForcingMode {
    Eigen::VectorXi wave;  // multi-index k
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> coefficient;
};

// Finite trigonometric sum over the torus: F(theta, x) = sum_m c_m(x) sin(k_m . theta).
// Coefficients must be C^1 on the declared box ||x||_inf <= box_radius.
struct ForcingSpec {
    std::vector<ForcingMode> modes;
    RotationVector rotation;
    int state_dim = 1;
    double box_radius = 1e6;
    double declared_bound = 1e6;  // admissibility bound on ||F||_inf over the box
};

inline Eigen::VectorXd eval_forcing(const ForcingSpec& spec, const TorusPoint& theta,
                                    const Eigen::VectorXd& x) {
    if (x.size() != spec.state_dim)
        throw std::invalid_argument("eval_forcing: state dimension mismatch");
    if (x.lpNorm<Eigen::Infinity>() > spec.box_radius)
        throw std::domain_error("eval_forcing: state outside the declared box");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.state_dim);
    for (const auto& mode : spec.modes) {
        if (mode.wave.size() != theta.dim())
            throw std::invalid_argument("eval_forcing: wave index dimension mismatch");
        const double phase = mode.wave.cast<double>().dot(theta.angles);
        out += mode.coefficient(x) * std::sin(phase);
    }
    return out;
}

// Grid search for an eps-almost-period of a sampled signal. samples[i] is the
// signal at t = i * dt covering [0, horizon]; candidate shifts run over grid
// multiples up to horizon / 2. Returns the smallest accepted shift.
inline std::optional<double> find_almost_period(const std::vector<double>& samples, double dt,
                                                double eps) {
    if (eps <= 0.0) throw std::invalid_argument("find_almost_period: eps must be positive");
    if (dt <= 0.0) throw std::invalid_argument("find_almost_period: dt must be positive");
    const int n = static_cast<int>(samples.size());
    const int max_shift = (n - 1) / 2;
    for (int k = 1; k <= max_shift; ++k) {
        double worst = 0.0;
        for (int i = 0; i + k < n; ++i)
            worst = std::max(worst, std::abs(samples[i + k] - samples[i]));
        if (worst < eps) return k * dt;
    }
    return std::nullopt;
}

}  // namespace skewlab::forcing
