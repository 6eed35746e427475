#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace skewlab {

// Seeded random source with fully specified output sequences. All sampling in
// the library flows through this type so that a (config, seed) pair pins every
// generated number; std::*_distribution is avoided because its output is
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t integer() { return engine_(); }

    // Box-Muller; one deviate per call, cache holds its twin.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        cached_ = r * std::sin(2.0 * M_PI * u2);
        have_cached_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    Eigen::VectorXd normal_vector(int n) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    Eigen::VectorXd uniform_vector(int n, double lo, double hi) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = uniform(lo, hi);
        return v;
    }

    Eigen::MatrixXd normal_matrix(int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    // Uniform on the unit sphere of R^n.
    Eigen::VectorXd unit_vector(int n) {
        Eigen::VectorXd v = normal_vector(n);
        double nv = v.norm();
        while (nv < 1e-12) {
            v = normal_vector(n);
            nv = v.norm();
        }
        return v / nv;
    }

    // Deterministic derived seed for sub-tasks (sweep points, worker lanes).
    std::uint64_t derive(std::uint64_t salt) const {
        std::uint64_t x = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ULL);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

    void note_seed(std::uint64_t s) { seed_mix_ = s; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_mix_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

inline Rng make_rng(std::uint64_t seed) {
    Rng r(seed);
    r.note_seed(seed);
    return r;
}

}  // namespace skewlab
