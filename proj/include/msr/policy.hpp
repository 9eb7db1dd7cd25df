#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/numerics.hpp"

namespace msr {

enum class PolicyMode { Pmsr, Nmsr, Smsr };

inline std::string to_string(PolicyMode m) {
    switch (m) {
        case PolicyMode::Pmsr: return "pmsr";
        case PolicyMode::Nmsr: return "nmsr";
        case PolicyMode::Smsr: return "smsr";
    }
    return "pmsr";
}

inline PolicyMode policy_mode_from_string(const std::string& s) {
    if (s == "pmsr") return PolicyMode::Pmsr;
    if (s == "nmsr") return PolicyMode::Nmsr;
    if (s == "smsr") return PolicyMode::Smsr;
    throw InvalidInput("unknown policy mode '" + s + "' (expected pmsr|nmsr|smsr)");
}

// Candidate schedules plus the limiting distribution the modulating process
// must realize over them, with the switching parameters.
struct PolicySpec {
    std::vector<Schedule> candidates;
    Vec pi;
    PolicyMode mode = PolicyMode::Pmsr;
    double alpha = 1.0;  // cycle flow rate: each working state j exits at alpha/pi_j
    double gamma = 0.0;  // setup completion rate (smsr only)
};

enum class StateKind { Working, Switching };

struct ModState {
    Schedule schedule;      // effective serving schedule while in this state
    StateKind kind = StateKind::Working;
    Schedule setup_counts;  // smsr: preempted jobs still holding resources
    // nmsr switching states advance when the next potential completion of
    // this type fires (-1 when the transition is an independent timer).
    int teardown_type = -1;
};

struct ModulatingProcess {
    std::vector<ModState> states;
    Matrix generator;
    // Position c in this list is the state index of candidate c.
    std::vector<std::size_t> working_states;

    std::size_t num_states() const { return states.size(); }
    std::size_t num_types() const { return states.empty() ? 0 : states.front().schedule.size(); }
};

namespace detail {

// Validates spec basics and returns candidates/pi with zero-weight
// candidates dropped (a zero weight would need an infinite exit rate).
struct CleanSpec {
    std::vector<Schedule> candidates;
    Vec pi;
    std::size_t dropped = 0;
};

inline CleanSpec clean_spec(const PolicySpec& spec) {
    if (spec.candidates.empty()) throw InvalidInput("policy spec: no candidate schedules");
    if (spec.pi.size() != spec.candidates.size())
        throw InvalidInput("policy spec: pi size must match candidate count");
    if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha))
        throw InvalidInput("policy spec: alpha must be positive");
    const std::size_t K = spec.candidates.front().size();
    double sum = 0.0;
    for (const Schedule& u : spec.candidates) {
        if (u.size() != K) throw InvalidInput("policy spec: candidate dimension mismatch");
        for (int c : u)
            if (c < 0) throw InvalidInput("policy spec: negative schedule count");
    }
    CleanSpec out;
    for (std::size_t j = 0; j < spec.pi.size(); ++j) {
        double p = spec.pi[j];
        if (p < 0.0 || !std::isfinite(p)) throw InvalidInput("policy spec: pi entries must be >= 0");
        sum += p;
        if (p > 0.0) {
            out.candidates.push_back(spec.candidates[j]);
            out.pi.push_back(p);
        } else {
            ++out.dropped;
        }
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("policy spec: pi must sum to 1");
    if (out.candidates.empty()) throw InvalidInput("policy spec: all candidate weights are zero");
    // Renormalize exactly; dropping zero weights does not change the sum but
    // guards against 1e-9-level slack compounding downstream.
    double s2 = std::accumulate(out.pi.begin(), out.pi.end(), 0.0);
    for (double& p : out.pi) p /= s2;
    return out;
}

inline Schedule schedule_min(const Schedule& a, const Schedule& b) {
    Schedule m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = std::min(a[i], b[i]);
    return m;
}

}  // namespace detail

// Preemptive MSR: candidates arranged in a loop, state j exiting at rate
// alpha/pi_j to its successor. Flow balance pi_j * r_j = alpha makes the
// stationary distribution exactly pi for every alpha.
inline ModulatingProcess build_pmsr(const PolicySpec& spec) {
    auto cs = detail::clean_spec(spec);
    const std::size_t N = cs.candidates.size();
    ModulatingProcess mp;
    mp.generator = Matrix(N, N);
    for (std::size_t j = 0; j < N; ++j) {
        mp.states.push_back({cs.candidates[j], StateKind::Working, Schedule(cs.candidates[j].size(), 0), -1});
        mp.working_states.push_back(j);
        if (N > 1) {
            double r = spec.alpha / cs.pi[j];
            mp.generator(j, j) = -r;
            mp.generator(j, (j + 1) % N) = r;
        }
    }
    return mp;
}

// Non-preemptive MSR: the loop transition w_a -> w_b becomes a switching
// route that first copies w_a's schedule, then retires one job at a time
// (types in increasing index, counts down to min(w_a, w_b)) at the potential
// completion rate mu_i * count. The final retirement lands directly in w_b,
// so every working state is visited exactly once per cycle and the
// conditional-on-working distribution is exactly pi at every alpha.
inline ModulatingProcess build_nmsr(const PolicySpec& spec, const Vec& mu) {
    auto cs = detail::clean_spec(spec);
    const std::size_t N = cs.candidates.size();
    const std::size_t K = cs.candidates.front().size();
    if (mu.size() != K) throw InvalidInput("build_nmsr: mu dimension mismatch");
    for (double m : mu)
        if (!(m > 0.0)) throw InvalidInput("build_nmsr: service rates must be positive");
    if (N == 1) return build_pmsr(spec);

    // Lay out states first so generator indices are known.
    ModulatingProcess mp;
    struct Hop {
        std::size_t from;
        std::size_t to;
        double rate;
    };
    std::vector<Hop> hops;
    for (std::size_t j = 0; j < N; ++j) {
        mp.states.push_back({cs.candidates[j], StateKind::Working, Schedule(K, 0), -1});
        mp.working_states.push_back(mp.states.size() - 1);
    }
    for (std::size_t a = 0; a < N; ++a) {
        const std::size_t b = (a + 1) % N;
        const Schedule& wa = cs.candidates[a];
        const Schedule& wb = cs.candidates[b];
        Schedule low = detail::schedule_min(wa, wb);
        std::vector<int> teardown;  // type index per retirement step
        for (std::size_t i = 0; i < K; ++i)
            for (int c = wa[i]; c > low[i]; --c) teardown.push_back(static_cast<int>(i));
        double exit_rate = spec.alpha / cs.pi[a];
        if (teardown.empty()) {
            hops.push_back({mp.working_states[a], mp.working_states[b], exit_rate});
            continue;
        }
        Schedule cur = wa;
        std::size_t prev = mp.working_states[a];
        double prev_rate = exit_rate;
        for (std::size_t step = 0; step < teardown.size(); ++step) {
            int t = teardown[step];
            mp.states.push_back({cur, StateKind::Switching, Schedule(K, 0), t});
            std::size_t here = mp.states.size() - 1;
            hops.push_back({prev, here, prev_rate});
            prev = here;
            prev_rate = mu[static_cast<std::size_t>(t)] * cur[static_cast<std::size_t>(t)];
            --cur[static_cast<std::size_t>(t)];
        }
        hops.push_back({prev, mp.working_states[b], prev_rate});
    }
    mp.generator = Matrix(mp.states.size(), mp.states.size());
    for (const Hop& h : hops) {
        mp.generator(h.from, h.to) += h.rate;
        mp.generator(h.from, h.from) -= h.rate;
    }
    return mp;
}

// Setup MSR: all preempted jobs (w_a minus the overlap with w_b) enter setup
// in parallel; with m setups outstanding the route advances at rate m*gamma.
// The effective serving schedule along the route is min(w_a, w_b) while
// setup_counts keep holding the preempted jobs' resources; releases retire
// types in increasing index order.
inline ModulatingProcess build_smsr(const PolicySpec& spec, double gamma) {
    auto cs = detail::clean_spec(spec);
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw InvalidInput("build_smsr: gamma must be positive");
    const std::size_t N = cs.candidates.size();
    const std::size_t K = cs.candidates.front().size();
    if (N == 1) return build_pmsr(spec);

    ModulatingProcess mp;
    struct Hop {
        std::size_t from;
        std::size_t to;
        double rate;
    };
    std::vector<Hop> hops;
    for (std::size_t j = 0; j < N; ++j) {
        mp.states.push_back({cs.candidates[j], StateKind::Working, Schedule(K, 0), -1});
        mp.working_states.push_back(mp.states.size() - 1);
    }
    for (std::size_t a = 0; a < N; ++a) {
        const std::size_t b = (a + 1) % N;
        const Schedule& wa = cs.candidates[a];
        const Schedule& wb = cs.candidates[b];
        Schedule low = detail::schedule_min(wa, wb);
        Schedule setups(K, 0);
        int total = 0;
        for (std::size_t i = 0; i < K; ++i) {
            setups[i] = wa[i] - low[i];
            total += setups[i];
        }
        double exit_rate = spec.alpha / cs.pi[a];
        if (total == 0) {
            hops.push_back({mp.working_states[a], mp.working_states[b], exit_rate});
            continue;
        }
        std::size_t prev = mp.working_states[a];
        double prev_rate = exit_rate;
        Schedule remaining = setups;
        for (int m = total; m >= 1; --m) {
            mp.states.push_back({low, StateKind::Switching, remaining, -1});
            std::size_t here = mp.states.size() - 1;
            hops.push_back({prev, here, prev_rate});
            prev = here;
            prev_rate = static_cast<double>(m) * gamma;
            for (std::size_t i = 0; i < K; ++i)
                if (remaining[i] > 0) {
                    --remaining[i];
                    break;
                }
        }
        hops.push_back({prev, mp.working_states[b], prev_rate});
    }
    mp.generator = Matrix(mp.states.size(), mp.states.size());
    for (const Hop& h : hops) {
        mp.generator(h.from, h.to) += h.rate;
        mp.generator(h.from, h.from) -= h.rate;
    }
    return mp;
}

// Validated dispatch: checks candidate feasibility against the workload,
// then builds per spec.mode.
inline ModulatingProcess build_policy(const Workload& w, const PolicySpec& spec) {
    w.validate();
    for (const Schedule& u : spec.candidates)
        if (!feasible(u, w))
            throw InvalidInput("policy spec: candidate schedule exceeds server capacity");
    switch (spec.mode) {
        case PolicyMode::Pmsr: return build_pmsr(spec);
        case PolicyMode::Nmsr: return build_nmsr(spec, w.mus());
        case PolicyMode::Smsr: return build_smsr(spec, spec.gamma);
    }
    throw InvalidInput("policy spec: unknown mode");
}

// Steady-state average schedule E[u] (per type, jobs).
inline Vec average_schedule(const ModulatingProcess& mp) {
    if (mp.states.empty()) throw InvalidInput("average_schedule: empty process");
    Vec pi = stationary_distribution(mp.generator);
    Vec avg(mp.num_types(), 0.0);
    for (std::size_t s = 0; s < mp.states.size(); ++s)
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += pi[s] * mp.states[s].schedule[i];
    return avg;
}

}  // namespace msr
