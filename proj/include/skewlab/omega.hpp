#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skewlab/cones.hpp"
#include "skewlab/forcing.hpp"
#include "skewlab/ode.hpp"
#include "skewlab/separation.hpp"

#include <nlohmann/json.hpp>

namespace skewlab::omega {

using forcing::RotationVector;
using forcing::TorusPoint;

struct InsufficientRecurrenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Times t = 2 pi k / omega_1 at which every torus angle has returned within
// eta of its start; integer combinations enumerated up to the horizon.
inline std::vector<double> base_return_times(const RotationVector& rot, double eta,
                                             double horizon) {
    if (rot.dim() < 1) throw std::invalid_argument("base_return_times: empty rotation");
    const double w1 = std::abs(rot.omega(0));
    if (w1 <= 0.0) throw std::invalid_argument("base_return_times: omega_1 must be nonzero");
    const double period1 = forcing::two_pi / w1;
    std::vector<double> out;
    for (long k = 1; k * period1 <= horizon; ++k) {
        const double t = k * period1;
        bool good = true;
        for (int j = 1; j < rot.dim() && good; ++j) {
            double a = std::fmod(std::abs(rot.omega(j)) * t, forcing::two_pi);
            a = std::min(a, forcing::two_pi - a);
            if (a > eta) good = false;
        }
        if (good) out.push_back(t);
    }
    return out;
}

// States of one orbit collected at the recurrence times of one reference fiber,
// clustered by single linkage.
struct FiberCloud {
    double ref_offset = 0.0;  // reference point is theta0 . ref_offset
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
    std::vector<int> cluster;  // cluster id per state
    int n_clusters = 0;
    std::vector<double> cluster_diameter;
    std::vector<double> cluster_s_min, cluster_s_max;  // hyperplane coordinate range
    std::vector<int> cluster_size;
};

namespace detail {

inline void single_linkage(FiberCloud& cloud, double radius) {
    const int m = static_cast<int>(cloud.states.size());
    std::vector<int> parent(m);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b)
            if ((cloud.states[a] - cloud.states[b]).norm() <= radius) {
                const int ra = find(a), rb = find(b);
                if (ra != rb) parent[ra] = rb;
            }
    std::vector<int> ids(m, -1);
    int next = 0;
    cloud.cluster.assign(m, -1);
    for (int a = 0; a < m; ++a) {
        const int root = find(a);
        if (ids[root] < 0) ids[root] = next++;
        cloud.cluster[a] = ids[root];
    }
    cloud.n_clusters = next;
    cloud.cluster_diameter.assign(next, 0.0);
    cloud.cluster_s_min.assign(next, std::numeric_limits<double>::infinity());
    cloud.cluster_s_max.assign(next, -std::numeric_limits<double>::infinity());
    cloud.cluster_size.assign(next, 0);
    for (int a = 0; a < m; ++a) {
        const int ca = cloud.cluster[a];
        ++cloud.cluster_size[ca];
        const double s = cloud.states[a](0);
        cloud.cluster_s_min[ca] = std::min(cloud.cluster_s_min[ca], s);
        cloud.cluster_s_max[ca] = std::max(cloud.cluster_s_max[ca], s);
        for (int b = a + 1; b < m; ++b)
            if (cloud.cluster[b] == ca)
                cloud.cluster_diameter[ca] =
                    std::max(cloud.cluster_diameter[ca], (cloud.states[a] - cloud.states[b]).norm());
    }
}

}  // namespace detail

// Collects the orbit's states at the return times of each reference fiber
// (reference j sits at theta0 . ref_offsets[j]; its return times are
// ref_offset + the base return times). Clouds are clustered by single linkage
// at the given radius. Fibers with fewer than min_returns usable returns after
// the transient cut raise InsufficientRecurrenceError.
inline std::vector<FiberCloud> capture_omega(const Orbit& orbit,
                                             const std::vector<double>& base_times,
                                             const std::vector<double>& ref_offsets,
                                             double transient_cut, double cluster_radius,
                                             int min_returns = 10) {
    std::vector<FiberCloud> clouds;
    for (const double off : ref_offsets) {
        FiberCloud cloud;
        cloud.ref_offset = off;
        for (const double tb : base_times) {
            const double t = off + tb;
            if (t <= transient_cut || t > orbit.t_end() + 1e-9) continue;
            cloud.times.push_back(t);
            cloud.states.push_back(orbit.state_at(std::min(t, orbit.t_end())));
        }
        if (static_cast<int>(cloud.times.size()) < min_returns)
            throw InsufficientRecurrenceError(
                "capture_omega: fiber at offset " + std::to_string(off) + " has only " +
                std::to_string(cloud.times.size()) + " returns");
        detail::single_linkage(cloud, cluster_radius);
        clouds.push_back(std::move(cloud));
    }
    return clouds;
}

// ---- Dichotomy --------------------------------------------------------------

enum class DichotomyBranch { decay, cone_lock };

struct DichotomyVerdict {
    DichotomyBranch branch = DichotomyBranch::decay;
    bool conclusive = true;
    double rate = 0.0;       // fitted log-slope (decay branch)
    int lock_index = 0;      // minimal stable index (cone_lock branch)
    double onset = 0.0;      // T*
    bool h_crossing_free = true;  // no hyperplane crossing after onset
    double lock_margin = 0.0;
};

struct DichotomyOptions {
    double sample_dt = 0.25;
    double min_tail = 5.0;       // the verdict must be stable at least this long
    double fit_tol = 0.15;       // slack on log lambda0 for the decay fit
    double zero_tol = 1e-13;
    double h_tol = 1e-11;
};

// Resolves the two-branch alternative for one orbit difference: either the
// difference leaves the widest constructed cone and decays at least like
// lambda0^t, or it locks into int(C_i) \ C_{i-1} from some onset time on and
// stays clear of the hyperplane afterwards.
inline DichotomyVerdict dichotomy_check(const Orbit& ox, const Orbit& oy,
                                        const separation::SplittingTrack& cones,
                                        const separation::ConeParams& p,
                                        const DichotomyOptions& opts = {}) {
    if (std::abs(ox.t_end() - oy.t_end()) > 1e-9)
        throw std::invalid_argument("dichotomy_check: mismatched horizons");
    const double horizon = ox.t_end();

    std::vector<double> ts;
    std::vector<Eigen::VectorXd> dirs;
    std::vector<double> lognorms;
    bool identically_zero = true;
    for (double t = 0.0; t <= horizon + 1e-9; t += opts.sample_dt) {
        const double tc = std::min(t, horizon);
        Eigen::VectorXd d = ox.state_at(tc) - oy.state_at(tc);
        const double nd = d.norm();
        ts.push_back(tc);
        if (nd > opts.zero_tol) {
            identically_zero = false;
            dirs.push_back(d / nd);
            lognorms.push_back(std::log(nd));
        } else {
            dirs.push_back(Eigen::VectorXd::Zero(d.size()));
            lognorms.push_back(-std::numeric_limits<double>::infinity());
        }
    }

    DichotomyVerdict out;
    if (identically_zero) {
        out.branch = DichotomyBranch::decay;
        out.rate = -std::numeric_limits<double>::infinity();
        return out;
    }

    const int n0 = p.N0;
    const int m = static_cast<int>(ts.size());

    // Minimal cone index at each instant (0 = outside every constructed cone,
    // including the zero vector case).
    std::vector<int> min_index(m, 0);
    std::vector<double> margins(m, 0.0);
    for (int k = 0; k < m; ++k) {
        if (!std::isfinite(lognorms[k])) continue;
        const auto& set = cones.nearest(ts[k]);
        for (int i = 1; i <= n0; ++i) {
            const auto verdict = separation::cone_C_D_W_membership(
                dirs[k], set, i, p.cone_opening(i), separation::ConeKind::C);
            if (verdict.member) {
                min_index[k] = i;
                margins[k] = verdict.margin;
                break;
            }
        }
    }

    // Longest stable tail of a constant verdict.
    const int tail_needed = std::max(2, static_cast<int>(opts.min_tail / opts.sample_dt));
    int tail_start = m - 1;
    while (tail_start > 0 && min_index[tail_start - 1] == min_index[m - 1]) --tail_start;
    const int tail_len = m - tail_start;
    const int tail_value = min_index[m - 1];

    if (tail_len < tail_needed) {
        out.conclusive = false;
        return out;
    }
    out.onset = ts[tail_start];

    if (tail_value == 0) {
        // Outside the widest cone: the decay branch, with the fitted slope
        // required to beat log(lambda0).
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        for (int k = tail_start; k < m; ++k) {
            if (!std::isfinite(lognorms[k])) continue;
            sx += ts[k];
            sy += lognorms[k];
            sxx += ts[k] * ts[k];
            sxy += ts[k] * lognorms[k];
            ++cnt;
        }
        if (cnt < 2) {
            out.branch = DichotomyBranch::decay;
            out.rate = -std::numeric_limits<double>::infinity();
            return out;
        }
        const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        out.branch = DichotomyBranch::decay;
        out.rate = slope;
        if (slope > std::log(p.lambda0) + opts.fit_tol) out.conclusive = false;
        return out;
    }

    out.branch = DichotomyBranch::cone_lock;
    out.lock_index = tail_value;
    out.lock_margin = *std::min_element(margins.begin() + tail_start, margins.end());

    // Hyperplane avoidance after onset: the first coordinate of the (unit)
    // difference keeps one strict sign.
    for (int k = tail_start; k < m; ++k) {
        if (!std::isfinite(lognorms[k])) continue;
        const double s = dirs[k](0);
        if (std::abs(s) <= opts.h_tol) out.h_crossing_free = false;
    }
    for (int k = tail_start + 1; k < m; ++k) {
        if (!std::isfinite(lognorms[k]) || !std::isfinite(lognorms[k - 1])) continue;
        if (dirs[k](0) * dirs[k - 1](0) < 0.0) out.h_crossing_free = false;
    }
    return out;
}

// ---- Trichotomy -------------------------------------------------------------

enum class OmegaClass {
    single_minimal,
    minimal_plus_connector,
    two_minimal_plus_connector,
    inconclusive
};

struct OmegaReport {
    OmegaClass classification = OmegaClass::inconclusive;
    int minimal_count = 0;
    struct FiberStat {
        double ref_offset = 0.0;
        int clusters = 0;
        int candidates = 0;
        double max_candidate_diameter = 0.0;
        double gap = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<FiberStat> fiber_stats;
    double gap = std::numeric_limits<double>::quiet_NaN();  // inf over fibers of m2 - M1
    std::vector<double> recurrence_times;
    bool connector_forward_checked = false;  // alpha-limit side stays unevaluated

    nlohmann::json to_json() const {
        static const char* names[] = {"single-minimal", "minimal-plus-connector",
                                      "two-minimal-plus-connector", "inconclusive"};
        nlohmann::json fibers = nlohmann::json::array();
        for (const auto& f : fiber_stats)
            fibers.push_back({{"ref_offset", f.ref_offset},
                              {"clusters", f.clusters},
                              {"candidates", f.candidates},
                              {"max_candidate_diameter", f.max_candidate_diameter},
                              {"gap", f.gap}});
        return nlohmann::json{{"classification", names[static_cast<int>(classification)]},
                              {"minimal_count", minimal_count},
                              {"fibers", fibers},
                              {"gap", gap},
                              {"recurrence_times", recurrence_times}};
    }
};

struct TrichotomyOptions {
    double min_visit_fraction = 0.8;  // recurrently revisited proxy for minimality
    int window_size = 3;
};

// Classifies captured clouds: clusters revisited in at least min_visit_fraction
// of the return windows are the minimal candidates; the fiber-wise candidate
// counts decide the branch and the s-coordinate extremes give the gap.
// Inconclusive is a valid outcome, reported rather than resolved.
inline OmegaReport classify_trichotomy(const std::vector<FiberCloud>& clouds,
                                       const TrichotomyOptions& opts = {}) {
    OmegaReport rep;
    if (clouds.empty()) return rep;
    rep.recurrence_times = clouds.front().times;

    int max_candidates = 0;
    bool any_connector = false;
    double global_gap = std::numeric_limits<double>::infinity();
    bool gap_defined = false;

    for (const auto& cloud : clouds) {
        const int m = static_cast<int>(cloud.states.size());
        const int w = std::max(1, opts.window_size);
        const int n_windows = (m + w - 1) / w;
        std::vector<std::vector<char>> visited(cloud.n_clusters,
                                               std::vector<char>(n_windows, 0));
        for (int a = 0; a < m; ++a) visited[cloud.cluster[a]][a / w] = 1;

        std::vector<int> candidates;
        for (int cidx = 0; cidx < cloud.n_clusters; ++cidx) {
            const int hits = std::accumulate(visited[cidx].begin(), visited[cidx].end(), 0);
            if (hits >= opts.min_visit_fraction * n_windows) candidates.push_back(cidx);
        }

        OmegaReport::FiberStat stat;
        stat.ref_offset = cloud.ref_offset;
        stat.clusters = cloud.n_clusters;
        stat.candidates = static_cast<int>(candidates.size());
        for (int cidx : candidates)
            stat.max_candidate_diameter =
                std::max(stat.max_candidate_diameter, cloud.cluster_diameter[cidx]);

        if (candidates.size() == 2) {
            // Order the two candidates by the hyperplane coordinate.
            int lo = candidates[0], hi = candidates[1];
            if (cloud.cluster_s_min[lo] > cloud.cluster_s_min[hi]) std::swap(lo, hi);
            stat.gap = cloud.cluster_s_min[hi] - cloud.cluster_s_max[lo];
            global_gap = std::min(global_gap, stat.gap);
            gap_defined = true;
        }
        if (static_cast<int>(candidates.size()) < cloud.n_clusters) any_connector = true;
        max_candidates = std::max(max_candidates, stat.candidates);
        rep.fiber_stats.push_back(stat);
    }

    rep.minimal_count = max_candidates;
    if (gap_defined) rep.gap = global_gap;
    if (max_candidates == 1) {
        rep.classification =
            any_connector ? OmegaClass::minimal_plus_connector : OmegaClass::single_minimal;
    } else if (max_candidates == 2) {
        rep.classification = OmegaClass::two_minimal_plus_connector;
    } else {
        rep.classification = OmegaClass::inconclusive;
    }
    return rep;
}

// ---- Almost 1-cover ----------------------------------------------------------

struct AlmostOneCoverResult {
    double fraction_single = 0.0;
    double max_fiber_diameter = 0.0;
    int fibers = 0;
};

// Fraction of sampled fibers whose cloud is one cluster of diameter below
// tolerance. At finite horizon a fraction below one is expected; the
// meaningful check is that it grows with the horizon.
inline AlmostOneCoverResult almost_one_cover_test(const std::vector<FiberCloud>& clouds,
                                                  double diameter_tol) {
    AlmostOneCoverResult out;
    out.fibers = static_cast<int>(clouds.size());
    int single = 0;
    for (const auto& cloud : clouds) {
        double diam = 0.0;
        for (double d : cloud.cluster_diameter) diam = std::max(diam, d);
        out.max_fiber_diameter = std::max(out.max_fiber_diameter, diam);
        if (cloud.n_clusters == 1 && diam < diameter_tol) ++single;
    }
    if (out.fibers > 0) out.fraction_single = static_cast<double>(single) / out.fibers;
    return out;
}

}  // namespace skewlab::omega
