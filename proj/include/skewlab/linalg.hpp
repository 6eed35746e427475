#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace skewlab {

// Spectral norm ||A||_2 (largest singular value).
inline double spectral_norm(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0);
}

// Orthonormalize the columns of a (thin QR). Column count is preserved;
// throws if the frame is numerically rank deficient.
inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& a) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(a.cols(), a.cols()).triangularView<Eigen::Upper>();
    for (int j = 0; j < a.cols(); ++j)
        if (std::abs(r(j, j)) < 1e-300) throw std::runtime_error("orthonormalize: rank-deficient frame");
    return q;
}

// QR with the diagonal of R forced positive; used by growth-rate accumulation.
struct QrStep {
    Eigen::MatrixXd q;
    Eigen::VectorXd log_r_diag;
};

inline QrStep qr_with_positive_diag(const Eigen::MatrixXd& a) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(a.cols(), a.cols()).triangularView<Eigen::Upper>();
    Eigen::VectorXd logs(a.cols());
    for (int j = 0; j < a.cols(); ++j) {
        const double d = r(j, j);
        if (d < 0.0) q.col(j) = -q.col(j);
        const double mag = std::abs(d);
        if (mag < 1e-300) throw std::runtime_error("qr_with_positive_diag: collapsed frame");
        logs(j) = std::log(mag);
    }
    return {std::move(q), std::move(logs)};
}

// Largest principal angle (radians) between the column spans of two
// orthonormal frames of equal dimension.
inline double subspace_angle(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
    if (u.cols() != v.cols() || u.rows() != v.rows())
        throw std::invalid_argument("subspace_angle: frame shape mismatch");
    if (u.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(u.transpose() * v);
    double c = svd.singularValues().minCoeff();
    c = std::min(1.0, std::max(-1.0, c));
    return std::acos(c);
}

// Tridiagonal solve (Thomas algorithm): diag a (n), sub b (n-1), super c (n-1).
inline Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& diag,
                                         const Eigen::VectorXd& sub,
                                         const Eigen::VectorXd& super,
                                         const Eigen::VectorXd& rhs) {
    const int n = static_cast<int>(diag.size());
    if (sub.size() != n - 1 || super.size() != n - 1 || rhs.size() != n)
        throw std::invalid_argument("solve_tridiagonal: size mismatch");
    Eigen::VectorXd cp(n - 1), dp(n);
    double denom = diag(0);
    if (std::abs(denom) < 1e-300) throw std::runtime_error("solve_tridiagonal: zero pivot");
    if (n > 1) cp(0) = super(0) / denom;
    dp(0) = rhs(0) / denom;
    for (int i = 1; i < n; ++i) {
        denom = diag(i) - sub(i - 1) * cp(i - 1);
        if (std::abs(denom) < 1e-300) throw std::runtime_error("solve_tridiagonal: zero pivot");
        if (i < n - 1) cp(i) = super(i) / denom;
        dp(i) = (rhs(i) - sub(i - 1) * dp(i - 1)) / denom;
    }
    Eigen::VectorXd x(n);
    x(n - 1) = dp(n - 1);
    for (int i = n - 2; i >= 0; --i) x(i) = dp(i) - cp(i) * x(i + 1);
    return x;
}

// 16-node Gauss-Legendre rule on [0, 1].
struct GaussLegendre16 {
    std::array<double, 16> node;
    std::array<double, 16> weight;

    GaussLegendre16() {
        // Nodes/weights on [-1, 1], mapped to [0, 1].
        static const double x[8] = {
            0.0950125098376374401853, 0.2816035507792589132305,
            0.4580167776572273863424, 0.6178762444026437484467,
            0.7554044083550030338951, 0.8656312023878317438805,
            0.9445750230732325760780, 0.9894009349916499325962};
        static const double w[8] = {
            0.1894506104550684962854, 0.1826034150449235888667,
            0.1691565193950025381893, 0.1495959888165767320815,
            0.1246289712555338720525, 0.0951585116824927848099,
            0.0622535239386478928628, 0.0271524594117540948518};
        for (int i = 0; i < 8; ++i) {
            node[2 * i] = 0.5 * (1.0 - x[i]);
            node[2 * i + 1] = 0.5 * (1.0 + x[i]);
            weight[2 * i] = 0.5 * w[i];
            weight[2 * i + 1] = 0.5 * w[i];
        }
    }
};

inline const GaussLegendre16& gl16() {
    static const GaussLegendre16 rule;
    return rule;
}

// Trapezoid rule over a uniform grid with spacing h.
inline double trapezoid(const Eigen::VectorXd& values, double h) {
    const int n = static_cast<int>(values.size());
    if (n < 2) return 0.0;
    double s = 0.5 * (values(0) + values(n - 1));
    for (int i = 1; i < n - 1; ++i) s += values(i);
    return s * h;
}

}  // namespace skewlab
