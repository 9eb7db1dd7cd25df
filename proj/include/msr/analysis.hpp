#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/numerics.hpp"
#include "msr/policy.hpp"

namespace msr {

// Relative completions for an arbitrary per-state completion-rate vector c:
// solves G*Delta = E[c]*1 - c with the last balance row replaced by the
// normalization sum_s pi_s * Delta_s = 0. Delta(s) is the long-run completion
// surplus of starting in state s versus stationarity.
inline Vec relative_completions_for_rates(const ModulatingProcess& mp, const Vec& rates) {
    const std::size_t n = mp.num_states();
    if (rates.size() != n) throw InvalidInput("relative_completions: rate vector size mismatch");
    Vec pi = stationary_distribution(mp.generator);
    double ec = dot(pi, rates);
    Matrix a(n, n);
    Vec b(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a(i, j) = mp.generator(i, j);
        b[i] = ec - rates[i];
    }
    for (std::size_t j = 0; j < n; ++j) a(n - 1, j) = pi[j];
    b[n - 1] = 0.0;

    Vec delta;
    try {
        delta = solve_linear(a, b);
    } catch (const SingularSystem&) {
        throw SingularSystem("relative_completions: balance system singular beyond the expected rank deficiency");
    }
    // The replaced row is implied by the others; verify the full system at a
    // tolerance scaled to the natural size of G*Delta terms.
    double dnorm = 0.0;
    for (double d : delta) dnorm = std::max(dnorm, std::abs(d));
    double gnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) gnorm = std::max(gnorm, std::abs(mp.generator(i, i)));
    double tol = 1e-9 * (1.0 + gnorm * dnorm + std::abs(ec));
    for (std::size_t i = 0; i < n; ++i) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < n; ++j) lhs += mp.generator(i, j) * delta[j];
        if (std::abs(lhs - (ec - rates[i])) > tol)
            throw SingularSystem("relative_completions: residual too large");
    }
    return delta;
}

// Relative completions for one job type: completion rate in state s is
// mu_i * u_i(s).
inline Vec relative_completions(const ModulatingProcess& mp, std::size_t type, double mu_i) {
    if (!(mu_i > 0.0)) throw InvalidInput("relative_completions: mu must be positive");
    Vec rates(mp.num_states());
    for (std::size_t s = 0; s < mp.num_states(); ++s)
        rates[s] = mu_i * mp.states[s].schedule[type];
    return relative_completions_for_rates(mp, rates);
}

// Completion-weighted stationary distribution: P{nu = s} proportional to
// pi_s * u_i(s).
inline Vec nu_distribution(const ModulatingProcess& mp, std::size_t type) {
    Vec pi = stationary_distribution(mp.generator);
    Vec nu(mp.num_states(), 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < mp.num_states(); ++s) {
        nu[s] = pi[s] * mp.states[s].schedule[type];
        total += nu[s];
    }
    if (total <= 0.0)
        throw TypeNeverServed("nu_distribution: type " + std::to_string(type) +
                              " is never served by this process");
    for (double& v : nu) v /= total;
    return nu;
}

// Per-type analytic results: stability, the queue-length sandwich, and the
// clamped M/M/k*-style approximation. Queue lengths count jobs in system.
struct TypeAnalysis {
    double rho = 0.0;        // lambda_i / (mu_i * E[u_i])
    double beta = 0.0;       // max_s u_i(s)
    Vec delta;               // relative completions per state
    double e_delta_nu = 0.0; // E[Delta(nu)]
    double k_star = 0.0;     // E[u_i]
    double p_queue = 0.0;    // Erlang-C at (k_star, rho)
    double lower = 0.0;
    double upper = 0.0;
    double approx = 0.0;
    bool unstable = false;
};

namespace detail {

inline TypeAnalysis analyze_type(const ModulatingProcess& mp, const Workload& w, std::size_t i,
                                 const Vec& pi_chain) {
    const JobType& jt = w.types[i];
    TypeAnalysis t;
    double e_u = 0.0;
    double beta = 0.0;
    for (std::size_t s = 0; s < mp.num_states(); ++s) {
        e_u += pi_chain[s] * mp.states[s].schedule[i];
        beta = std::max(beta, static_cast<double>(mp.states[s].schedule[i]));
    }
    t.k_star = e_u;
    t.beta = beta;
    if (jt.lambda == 0.0) {
        t.delta.assign(mp.num_states(), 0.0);
        return t;  // no arrivals: empty queue, all metrics zero
    }
    if (e_u <= 0.0)
        throw TypeNeverServed("analysis: type '" + jt.name + "' has positive arrivals but is never served");
    t.rho = jt.lambda / (jt.mu * e_u);
    if (1.0 - t.rho < 1e-9) {
        t.unstable = true;
        throw UnstableType(static_cast<int>(i), t.rho,
                           "analysis: type '" + jt.name + "' is unstable (rho = " + std::to_string(t.rho) + ")");
    }
    t.delta = relative_completions(mp, i, jt.mu);
    Vec nu = nu_distribution(mp, i);
    t.e_delta_nu = dot(nu, t.delta);
    double max_d = *std::max_element(t.delta.begin(), t.delta.end());
    double min_d = *std::min_element(t.delta.begin(), t.delta.end());
    double primary = (t.rho + t.e_delta_nu) / (1.0 - t.rho);
    t.lower = primary - max_d;
    t.upper = primary - min_d + beta;
    t.p_queue = erlang_c(t.k_star, t.rho);
    double raw = t.p_queue * (t.rho + t.rho * t.e_delta_nu) / (1.0 - t.rho) + t.rho * t.k_star;
    t.approx = std::clamp(raw, t.lower, t.upper);
    return t;
}

}  // namespace detail

// Queue-length sandwich for one type; throws UnstableType when rho_i >= 1.
inline TypeAnalysis queue_bounds(const ModulatingProcess& mp, const Workload& w, std::size_t i) {
    if (i >= w.num_types()) throw InvalidInput("queue_bounds: type index out of range");
    Vec pi_chain = stationary_distribution(mp.generator);
    return detail::analyze_type(mp, w, i, pi_chain);
}

// The clamped approximation alone.
inline double queue_approx(const ModulatingProcess& mp, const Workload& w, std::size_t i) {
    return queue_bounds(mp, w, i).approx;
}

struct AnalysisReport {
    std::vector<TypeAnalysis> types;
    bool any_unstable = false;
    // Totals are NaN when any type is unstable.
    double total_lower = 0.0;
    double total_upper = 0.0;
    double total_approx = 0.0;
    double mean_response_time = 0.0;     // sum_i E[Q_i] / Lambda (Little's law)
    double lambda_weighted_queue = 0.0;  // (1/Lambda) * sum_i lambda_i E[Q_i], diagnostic
};

inline AnalysisReport analyze(const ModulatingProcess& mp, const Workload& w) {
    w.validate();
    if (mp.num_types() != w.num_types())
        throw InvalidInput("analyze: process and workload disagree on type count");
    Vec pi_chain = stationary_distribution(mp.generator);
    AnalysisReport rep;
    for (std::size_t i = 0; i < w.num_types(); ++i) {
        try {
            rep.types.push_back(detail::analyze_type(mp, w, i, pi_chain));
        } catch (const UnstableType& e) {
            TypeAnalysis t;
            t.rho = e.rho;
            t.unstable = true;
            double inf = std::numeric_limits<double>::infinity();
            t.lower = t.upper = t.approx = inf;
            rep.types.push_back(std::move(t));
            rep.any_unstable = true;
        }
    }
    double lambda_total = 0.0;
    for (const JobType& t : w.types) lambda_total += t.lambda;
    if (rep.any_unstable || lambda_total <= 0.0) {
        double nan = std::numeric_limits<double>::quiet_NaN();
        rep.total_lower = rep.total_upper = rep.total_approx = nan;
        rep.mean_response_time = rep.lambda_weighted_queue = nan;
        return rep;
    }
    for (std::size_t i = 0; i < rep.types.size(); ++i) {
        rep.total_lower += rep.types[i].lower;
        rep.total_upper += rep.types[i].upper;
        rep.total_approx += rep.types[i].approx;
        rep.lambda_weighted_queue += w.types[i].lambda * rep.types[i].approx;
    }
    rep.mean_response_time = rep.total_approx / lambda_total;
    rep.lambda_weighted_queue /= lambda_total;
    return rep;
}

}  // namespace msr
