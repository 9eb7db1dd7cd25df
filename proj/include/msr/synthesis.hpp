#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "msr/analysis.hpp"
#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/numerics.hpp"
#include "msr/policy.hpp"

namespace msr {

struct SynthesisResult {
    std::vector<Schedule> candidates;  // lexicographically sorted support, |.| <= K
    Vec pi;
    Vec rho_per_type;
    double rho_max = 0.0;
    bool feasible = false;  // rho_max < 1
};

namespace detail {

// Caratheodory-style support reduction: while more than K candidates carry
// weight, move along a null direction of the K completion-rate rows plus the
// sum row until a weight hits zero. Preserves sum(pi) and pi*W exactly, so
// the objective never degrades. The LP's basic optimum already satisfies the
// K bound in practice; this is a constructive safety net.
inline void reduce_support(std::vector<std::size_t>& support, Vec& pi,
                           const std::vector<Schedule>& cands, std::size_t K) {
    while (support.size() > K) {
        const std::size_t m = support.size();
        Matrix a(K + 1, m);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < K; ++i) a(i, j) = cands[support[j]][i];
            a(K, j) = 1.0;
        }
        // Null vector via row-reduction; m > K+1 guarantees one exists.
        std::vector<std::size_t> pivot_col(K + 1, m);
        std::size_t rank = 0;
        for (std::size_t col = 0; col < m && rank <= K; ++col) {
            std::size_t piv = rank;
            for (std::size_t r = rank; r <= K; ++r)
                if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
            if (rank > K || std::abs(a(piv, col)) < 1e-11) continue;
            for (std::size_t j = 0; j < m; ++j) std::swap(a(piv, j), a(rank, j));
            double p = a(rank, col);
            for (std::size_t j = 0; j < m; ++j) a(rank, j) /= p;
            for (std::size_t r = 0; r <= K; ++r) {
                if (r == rank) continue;
                double f = a(r, col);
                if (f == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) a(r, j) -= f * a(rank, j);
            }
            pivot_col[rank] = col;
            ++rank;
        }
        std::vector<bool> is_pivot(m, false);
        for (std::size_t r = 0; r < rank; ++r) is_pivot[pivot_col[r]] = true;
        std::size_t free_col = m;
        for (std::size_t j = 0; j < m; ++j)
            if (!is_pivot[j]) { free_col = j; break; }
        if (free_col == m) return;  // full column rank: cannot reduce further
        Vec eta(m, 0.0);
        eta[free_col] = 1.0;
        for (std::size_t r = 0; r < rank; ++r) eta[pivot_col[r]] = -a(r, free_col);

        // Step to the first zero in the direction that keeps weights >= 0.
        double t_pos = std::numeric_limits<double>::infinity();
        double t_neg = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            if (eta[j] > 1e-14) t_pos = std::min(t_pos, pi[support[j]] / eta[j]);
            if (eta[j] < -1e-14) t_neg = std::min(t_neg, pi[support[j]] / -eta[j]);
        }
        double t = std::isfinite(t_pos) ? t_pos : -t_neg;
        for (std::size_t j = 0; j < m; ++j) pi[support[j]] -= t * eta[j];
        std::vector<std::size_t> next;
        for (std::size_t idx : support) {
            if (pi[idx] > 1e-12) next.push_back(idx);
            else pi[idx] = 0.0;
        }
        if (next.size() == support.size()) return;  // numerical stall; keep as-is
        support.swap(next);
    }
}

}  // namespace detail

// Candidate-set optimization: minimizes the worst per-type load max_i rho_i
// over mixtures of maximal schedules via the LP
//   maximize z  s.t.  sum_s pi_s u_{s,i} >= z * lambda_i/mu_i,  sum pi = 1,
// then rho_max = 1/z*. Deterministic: candidates are lexicographically
// sorted and the simplex uses Bland's rule, so equal-optimum workloads give
// identical supports. The arrival direction is L1-normalized internally,
// which makes the support and weights invariant under scaling lambda.
inline SynthesisResult synthesize(const Workload& w, std::size_t cap = kDefaultEnumerationCap) {
    w.validate();
    const std::size_t K = w.num_types();
    Vec a(K);
    double total = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        a[i] = w.types[i].lambda / w.types[i].mu;
        total += a[i];
    }
    if (total == 0.0) throw InvalidInput("synthesize: all arrival rates are zero");

    auto cands = enumerate_maximal_schedules(w, cap);
    detail::LoadLp lp = detail::solve_load_lp(cands, a, /*weights_sum_to_one=*/true);
    if (lp.z <= 1e-9) detail::throw_unservable(w, cands, a);

    std::vector<std::size_t> support;
    for (std::size_t j = 0; j < cands.size(); ++j)
        if (lp.pi[j] > 1e-12) support.push_back(j);
    detail::reduce_support(support, lp.pi, cands, K);

    SynthesisResult res;
    double mass = 0.0;
    for (std::size_t idx : support) mass += lp.pi[idx];
    for (std::size_t idx : support) {
        res.candidates.push_back(cands[idx]);
        res.pi.push_back(lp.pi[idx] / mass);
    }
    res.rho_per_type.assign(K, 0.0);
    res.rho_max = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        if (a[i] <= 0.0) continue;
        double served = 0.0;
        for (std::size_t j = 0; j < res.candidates.size(); ++j)
            served += res.pi[j] * res.candidates[j][i];
        res.rho_per_type[i] = a[i] / served;
        res.rho_max = std::max(res.rho_max, res.rho_per_type[i]);
    }
    res.feasible = res.rho_max < 1.0;
    return res;
}

inline PolicySpec to_policy_spec(const SynthesisResult& res, PolicyMode mode, double alpha,
                                 double gamma = 0.0) {
    PolicySpec spec;
    spec.candidates = res.candidates;
    spec.pi = res.pi;
    spec.mode = mode;
    spec.alpha = alpha;
    spec.gamma = gamma;
    return spec;
}

struct AlphaCurvePoint {
    double alpha = 0.0;
    double mean_response = 0.0;  // predicted E[T]; +inf when unstable
    bool stable = false;
};

struct AlphaPrediction {
    double alpha_star = 0.0;
    std::vector<AlphaCurvePoint> curve;
};

// Scans the alpha grid, building the modulating process and evaluating the
// analytic E[T] approximation at each point. Unstable points are kept in the
// curve as +inf but skipped for the argmin; ties go to the first grid point.
inline AlphaPrediction predict_alpha_star(const Workload& w, const PolicySpec& family,
                                          const Vec& alpha_grid) {
    if (alpha_grid.empty()) throw InvalidInput("predict_alpha_star: empty grid");
    for (std::size_t i = 0; i + 1 < alpha_grid.size(); ++i)
        if (!(alpha_grid[i] < alpha_grid[i + 1]))
            throw InvalidInput("predict_alpha_star: grid must be strictly increasing");
    if (!(alpha_grid.front() > 0.0)) throw InvalidInput("predict_alpha_star: grid must be positive");

    AlphaPrediction out;
    std::size_t best = alpha_grid.size();
    for (double alpha : alpha_grid) {
        PolicySpec spec = family;
        spec.alpha = alpha;
        AlphaCurvePoint pt;
        pt.alpha = alpha;
        try {
            ModulatingProcess mp = build_policy(w, spec);
            AnalysisReport rep = analyze(mp, w);
            if (rep.any_unstable) {
                pt.mean_response = std::numeric_limits<double>::infinity();
            } else {
                pt.mean_response = rep.mean_response_time;
                pt.stable = true;
            }
        } catch (const UnstableType&) {
            pt.mean_response = std::numeric_limits<double>::infinity();
        }
        out.curve.push_back(pt);
        if (pt.stable &&
            (best == alpha_grid.size() || pt.mean_response < out.curve[best].mean_response))
            best = out.curve.size() - 1;
    }
    if (best == alpha_grid.size())
        throw InfeasibleWorkload("predict_alpha_star: no stable grid point");
    out.alpha_star = out.curve[best].alpha;
    return out;
}

}  // namespace msr
