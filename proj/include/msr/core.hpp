#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "msr/errors.hpp"
#include "msr/numerics.hpp"

namespace msr {

// A schedule says how many jobs of each type run in parallel.
using Schedule = std::vector<int>;

struct JobType {
    std::string name;
    Vec demand;          // resource demand per job, length R
    double lambda = 0.0; // arrival rate (0 for trace-driven types)
    double mu = 1.0;     // service rate
};

// K job types sharing one server with capacity vector P.
struct Workload {
    Vec capacity;
    std::vector<JobType> types;

    std::size_t num_resources() const { return capacity.size(); }
    std::size_t num_types() const { return types.size(); }

    // Structural validation. Demands exceeding capacity are allowed here and
    // surface later as an unservable type; all-zero demands are rejected
    // because they would make schedules unbounded.
    void validate() const {
        if (capacity.empty()) throw InvalidInput("workload: capacity must have at least one resource");
        for (double p : capacity)
            if (p < 0.0 || !std::isfinite(p)) throw InvalidInput("workload: capacity entries must be finite and >= 0");
        if (types.empty()) throw InvalidInput("workload: at least one job type required");
        for (const JobType& t : types) {
            if (t.demand.size() != capacity.size())
                throw InvalidInput("workload: demand dimension mismatch for type '" + t.name + "'");
            bool positive = false;
            for (double d : t.demand) {
                if (d < 0.0 || !std::isfinite(d))
                    throw InvalidInput("workload: demand entries must be finite and >= 0 for type '" + t.name + "'");
                if (d > 0.0) positive = true;
            }
            if (!positive) throw InvalidInput("workload: type '" + t.name + "' has all-zero demand");
            if (t.lambda < 0.0 || !std::isfinite(t.lambda))
                throw InvalidInput("workload: lambda must be finite and >= 0 for type '" + t.name + "'");
            if (t.mu <= 0.0 || !std::isfinite(t.mu))
                throw InvalidInput("workload: mu must be finite and > 0 for type '" + t.name + "'");
        }
    }

    Vec lambdas() const {
        Vec v(types.size());
        for (std::size_t i = 0; i < types.size(); ++i) v[i] = types[i].lambda;
        return v;
    }
    Vec mus() const {
        Vec v(types.size());
        for (std::size_t i = 0; i < types.size(); ++i) v[i] = types[i].mu;
        return v;
    }
};

// True iff sum_i u_i * demand_i <= P component-wise (with a tiny relative
// slack for float demands).
inline bool feasible(const Schedule& s, const Workload& w) {
    if (s.size() != w.num_types()) throw InvalidInput("feasible: schedule size does not match type count");
    for (int c : s)
        if (c < 0) throw InvalidInput("feasible: schedule counts must be >= 0");
    for (std::size_t r = 0; r < w.num_resources(); ++r) {
        double used = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) used += s[i] * w.types[i].demand[r];
        if (used > w.capacity[r] + 1e-9 * std::max(1.0, w.capacity[r])) return false;
    }
    return true;
}

inline bool schedule_leq(const Schedule& a, const Schedule& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > b[i]) return false;
    return true;
}

constexpr std::size_t kDefaultEnumerationCap = 200000;

// All maximal feasible schedules (no type can be added), deduplicated and
// lexicographically sorted. DFS over types with per-type capacity bounds;
// `cap` limits visited DFS nodes.
inline std::vector<Schedule> enumerate_maximal_schedules(const Workload& w,
                                                         std::size_t cap = kDefaultEnumerationCap) {
    w.validate();
    const std::size_t K = w.num_types();
    const std::size_t R = w.num_resources();

    std::vector<Schedule> out;
    Schedule cur(K, 0);
    Vec remaining = w.capacity;
    std::size_t visited = 0;

    auto bound_for = [&](std::size_t i) {
        // Largest count of type i fitting in `remaining`; zero-demand
        // resources impose no bound (all-zero demand is rejected upstream).
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < R; ++r) {
            double d = w.types[i].demand[r];
            if (d > 0.0) b = std::min(b, (remaining[r] + 1e-9 * std::max(1.0, w.capacity[r])) / d);
        }
        return static_cast<int>(std::floor(b));
    };

    auto is_maximal = [&]() {
        for (std::size_t i = 0; i < K; ++i) {
            bool fits = true;
            for (std::size_t r = 0; r < R; ++r) {
                double d = w.types[i].demand[r];
                if (d > 0.0 && d > remaining[r] + 1e-9 * std::max(1.0, w.capacity[r])) {
                    fits = false;
                    break;
                }
            }
            if (fits) return false;
        }
        return true;
    };

    auto dfs = [&](auto&& self, std::size_t i) -> void {
        if (++visited > cap)
            throw ResourceLimit("enumerate_maximal_schedules: exceeded enumeration cap of " +
                                std::to_string(cap) + " nodes");
        if (i == K) {
            if (is_maximal()) out.push_back(cur);
            return;
        }
        int hi = bound_for(i);
        for (int c = hi; c >= 0; --c) {
            cur[i] = c;
            for (std::size_t r = 0; r < R; ++r) remaining[r] -= c * w.types[i].demand[r];
            self(self, i + 1);
            for (std::size_t r = 0; r < R; ++r) remaining[r] += c * w.types[i].demand[r];
        }
        cur[i] = 0;
    };
    dfs(dfs, 0);

    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace detail {

// Shared LP behind system_load and the policy optimizer: maximize z with
// sum_s pi_s * u_s >= z * direction (component-wise), sum pi (<=|=) 1.
// The direction is L1-normalized internally so that scaling every arrival
// rate by a constant leaves the pivot sequence (and hence the support and
// weights) unchanged; the caller rescales z accordingly.
struct LoadLp {
    double z = 0.0;   // optimum for the *unnormalized* direction
    Vec pi;           // weight per candidate schedule
};

inline LoadLp solve_load_lp(const std::vector<Schedule>& cands, const Vec& direction,
                            bool weights_sum_to_one) {
    const std::size_t M = cands.size();
    const std::size_t K = direction.size();
    double s = 0.0;
    for (double d : direction) {
        if (d < 0.0 || !std::isfinite(d)) throw InvalidInput("load LP: direction entries must be >= 0");
        s += d;
    }
    if (s == 0.0) throw InvalidInput("load LP: direction must not be all zero");

    LpProblem p;
    p.objective.assign(M + 1, 0.0);
    p.objective[M] = 1.0;  // maximize z
    for (std::size_t i = 0; i < K; ++i) {
        Vec row(M + 1, 0.0);
        for (std::size_t j = 0; j < M; ++j) row[j] = -static_cast<double>(cands[j][i]);
        row[M] = direction[i] / s;
        p.ub_lhs.push_back(std::move(row));
        p.ub_rhs.push_back(0.0);
    }
    Vec ones(M + 1, 1.0);
    ones[M] = 0.0;
    if (weights_sum_to_one) {
        p.eq_lhs.push_back(std::move(ones));
        p.eq_rhs.push_back(1.0);
    } else {
        p.ub_lhs.push_back(std::move(ones));
        p.ub_rhs.push_back(1.0);
    }

    LpSolution sol = lp_maximize(p);
    LoadLp out;
    out.z = sol.value / s;
    out.pi.assign(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(M));
    return out;
}

// When z* collapses to zero some positive-rate type can never run; find it
// for the error message.
inline void throw_unservable(const Workload& w, const std::vector<Schedule>& cands, const Vec& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] <= 0.0) continue;
        int best = 0;
        for (const Schedule& u : cands) best = std::max(best, u[i]);
        if (best == 0)
            throw InfeasibleWorkload("workload infeasible: type '" + w.types[i].name +
                                     "' can never be scheduled");
    }
    throw InfeasibleWorkload("workload infeasible: no schedule mix serves the arrival vector");
}

}  // namespace detail

// System load: the smallest rho such that (lambda/mu)/rho lies in the convex
// hull of the schedulable set (computed as 1/z* of the LP over maximal
// schedules with sub-convex weights). rho < 1 iff the workload is stabilizable.
inline double system_load(const Workload& w, std::size_t cap = kDefaultEnumerationCap) {
    w.validate();
    const std::size_t K = w.num_types();
    Vec a(K);
    double total = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        a[i] = w.types[i].lambda / w.types[i].mu;
        total += a[i];
    }
    if (total == 0.0) throw InvalidInput("system_load: all arrival rates are zero");
    auto cands = enumerate_maximal_schedules(w, cap);
    detail::LoadLp lp = detail::solve_load_lp(cands, a, /*weights_sum_to_one=*/false);
    if (lp.z <= 1e-9) detail::throw_unservable(w, cands, a);
    return 1.0 / lp.z;
}

}  // namespace msr
