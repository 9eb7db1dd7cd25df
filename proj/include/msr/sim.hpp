#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/policy.hpp"
#include "msr/rng.hpp"

namespace msr {

enum class ArrivalSource { Poisson, Trace };

// One replayed arrival: type index into the workload plus its empirical
// service duration (seconds of slot time).
struct TraceArrival {
    double time = 0.0;
    std::size_t type = 0;
    double size = 0.0;
};

struct SimConfig {
    double horizon = 10000.0;
    double warmup = -1.0;  // < 0 resolves to 0.2 * horizon
    int replications = 5;
    std::uint64_t seed = 1;
    std::uint64_t max_total_jobs = 1000000;  // instability guard
    ArrivalSource source = ArrivalSource::Poisson;
    const std::vector<TraceArrival>* trace = nullptr;
    bool log_events = false;
    std::string event_log_path;
    bool check_invariants = false;

    double resolved_warmup() const { return warmup < 0.0 ? 0.2 * horizon : warmup; }
    void validate() const {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw InvalidInput("sim config: horizon must be positive");
        if (resolved_warmup() >= horizon)
            throw InvalidInput("sim config: warmup must be smaller than horizon");
        if (replications < 1) throw InvalidInput("sim config: replications must be >= 1");
        if (source == ArrivalSource::Trace && trace == nullptr)
            throw InvalidInput("sim config: trace arrival source requires trace data");
    }
};

struct TypeStats {
    double mean_queue = 0.0;  // time-average jobs in system
    double queue_ci = 0.0;    // 95% t half-width over replication means
    double mean_response = 0.0;
    double response_ci = 0.0;
    double unused_fraction = 0.0;  // unused / potential completions
    std::uint64_t completions = 0;
    std::uint64_t potential = 0;
    std::uint64_t unused = 0;
};

struct SimReport {
    std::vector<TypeStats> per_type;
    double total_queue_mean = 0.0;
    double total_queue_ci = 0.0;
    double mean_response = 0.0;
    double response_ci = 0.0;
    double switching_fraction = 0.0;  // fraction of observed time in switching states
    double throughput = 0.0;          // completions per unit observed time
    double delta_unused_mean = 0.0;   // MSR-1 only: mean logged Delta at unused instants
    std::uint64_t delta_unused_events = 0;
    std::uint64_t total_completions = 0;
    std::uint64_t preemptions = 0;  // jobs pulled out of service before completing
    int replications = 0;
    bool unstable = false;
};

namespace detail {

inline double t_critical_95(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) return std::numeric_limits<double>::infinity();
    if (df <= 30) return table[df - 1];
    return 1.960;
}

struct RepAccum {
    Vec queue_integral;  // per-type time integral of jobs in system
    std::vector<std::uint64_t> completions, potential, unused;
    Vec response_sum;
    double observed = 0.0;
    double switching_time = 0.0;
    double delta_unused_sum = 0.0;
    std::uint64_t delta_unused_events = 0;
    std::uint64_t preemptions = 0;
    bool tripped = false;

    explicit RepAccum(std::size_t K)
        : queue_integral(K, 0.0),
          completions(K, 0),
          potential(K, 0),
          unused(K, 0),
          response_sum(K, 0.0) {}
};

// Mean and 95% t-interval half-width over replication-level values; a
// replication without a sample contributes nothing.
inline void mean_ci(const std::vector<double>& values, double& mean, double& ci) {
    const std::size_t n = values.size();
    if (n == 0) {
        mean = std::numeric_limits<double>::quiet_NaN();
        ci = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    mean = 0.0;
    ci = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    if (n < 2) return;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    ci = t_critical_95(static_cast<int>(n) - 1) * sd / std::sqrt(static_cast<double>(n));
}

inline SimReport finalize_report(const std::vector<RepAccum>& reps, std::size_t K) {
    SimReport rep;
    rep.replications = static_cast<int>(reps.size());
    rep.per_type.resize(K);
    double total_observed = 0.0, total_switching = 0.0;
    std::uint64_t grand_completions = 0;
    for (std::size_t i = 0; i < K; ++i) {
        std::vector<double> q_means, r_means;
        TypeStats& ts = rep.per_type[i];
        for (const RepAccum& a : reps) {
            if (a.observed > 1e-12) q_means.push_back(a.queue_integral[i] / a.observed);
            if (a.completions[i] > 0)
                r_means.push_back(a.response_sum[i] / static_cast<double>(a.completions[i]));
            ts.completions += a.completions[i];
            ts.potential += a.potential[i];
            ts.unused += a.unused[i];
        }
        mean_ci(q_means, ts.mean_queue, ts.queue_ci);
        mean_ci(r_means, ts.mean_response, ts.response_ci);
        ts.unused_fraction =
            ts.potential > 0 ? static_cast<double>(ts.unused) / static_cast<double>(ts.potential) : 0.0;
        grand_completions += ts.completions;
    }
    std::vector<double> total_q, total_r;
    for (const RepAccum& a : reps) {
        rep.unstable = rep.unstable || a.tripped;
        total_observed += a.observed;
        total_switching += a.switching_time;
        rep.preemptions += a.preemptions;
        rep.delta_unused_events += a.delta_unused_events;
        rep.delta_unused_mean += a.delta_unused_sum;
        if (a.observed > 1e-12) {
            double q = 0.0;
            for (std::size_t i = 0; i < K; ++i) q += a.queue_integral[i];
            total_q.push_back(q / a.observed);
        }
        std::uint64_t c = 0;
        double rs = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
            c += a.completions[i];
            rs += a.response_sum[i];
        }
        if (c > 0) total_r.push_back(rs / static_cast<double>(c));
    }
    mean_ci(total_q, rep.total_queue_mean, rep.total_queue_ci);
    mean_ci(total_r, rep.mean_response, rep.response_ci);
    rep.switching_fraction = total_observed > 0.0 ? total_switching / total_observed : 0.0;
    rep.throughput =
        total_observed > 0.0 ? static_cast<double>(grand_completions) / total_observed : 0.0;
    rep.delta_unused_mean = rep.delta_unused_events > 0
                                ? rep.delta_unused_mean / static_cast<double>(rep.delta_unused_events)
                                : std::numeric_limits<double>::quiet_NaN();
    rep.total_completions = grand_completions;
    return rep;
}

struct SimJob {
    double arrival = 0.0;
    double size = -1.0;      // remaining service requirement (trace mode only)
    double deadline = -1.0;  // absolute completion time while in service (trace mode)
};

inline PolicyMode infer_mode(const ModulatingProcess& mp) {
    for (const ModState& st : mp.states) {
        for (int c : st.setup_counts)
            if (c > 0) return PolicyMode::Smsr;
    }
    for (const ModState& st : mp.states)
        if (st.teardown_type >= 0) return PolicyMode::Nmsr;
    return PolicyMode::Pmsr;
}

// Event logger shared by all engines; writes one CSV row per event.
struct EventLog {
    std::ofstream out;
    bool enabled = false;

    void open(const SimConfig& cfg) {
        if (!cfg.log_events) return;
        if (cfg.event_log_path.empty())
            throw InvalidInput("sim config: event logging requires event_log_path");
        out.open(cfg.event_log_path);
        if (!out) throw InvalidInput("sim config: cannot open event log " + cfg.event_log_path);
        enabled = true;
        out << "rep,time,event,type,state\n";
    }
    void row(int rep, double t, const char* kind, long type, long state) {
        if (!enabled) return;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%s,%ld,%ld\n", rep, t, kind, type, state);
        out << buf;
    }
};

// ---------------------------------------------------------------------------
// MSR system engine: slots dictated by the modulating process, optional
// BackFilling, Poisson or trace-replay arrivals. One instance per call;
// run() executes a single replication.
// ---------------------------------------------------------------------------
class MsrEngine {
public:
    MsrEngine(const Workload& w, const ModulatingProcess& mp, const SimConfig& cfg, bool backfill)
        : w_(w), mp_(mp), cfg_(cfg), backfill_(backfill), K_(w.num_types()), R_(w.num_resources()) {
        mode_ = infer_mode(mp);
        // Successor lists for independent-timer transitions.
        succ_.resize(mp.num_states());
        uncoupled_rate_.assign(mp.num_states(), 0.0);
        for (std::size_t s = 0; s < mp.num_states(); ++s) {
            for (std::size_t j = 0; j < mp.num_states(); ++j)
                if (j != s && mp.generator(s, j) > 0.0) succ_[s].push_back(j);
            if (mp.states[s].teardown_type < 0) uncoupled_rate_[s] = -mp.generator(s, s);
        }
    }

    RepAccum run(std::uint64_t seed, EventLog& log, int rep) {
        Rng rng(seed);
        RepAccum acc(K_);
        const double horizon = cfg_.horizon;
        const double warmup = cfg_.resolved_warmup();
        const bool replay = cfg_.source == ArrivalSource::Trace;

        t_ = 0.0;
        s_ = mp_.working_states.empty() ? 0 : mp_.working_states[0];
        preempt_count_ = 0;
        waiting_.assign(K_, {});
        in_service_.assign(K_, {});
        parked_.assign(K_, {});
        bf_jobs_.clear();
        bf_count_.assign(K_, 0);
        used_.assign(R_, 0.0);
        in_system_ = 0;
        trace_pos_ = 0;

        std::vector<double> rates(2 * K_ + K_ + 2, 0.0);
        for (;;) {
            const Schedule& u = mp_.states[s_].schedule;
            // Exponential event categories, fixed order: arrivals, slot
            // potentials, backfill completions, phantom teardown, chain timer.
            double total = 0.0;
            for (std::size_t i = 0; i < K_; ++i) {
                rates[i] = replay ? 0.0 : w_.types[i].lambda;
                total += rates[i];
            }
            for (std::size_t i = 0; i < K_; ++i) {
                rates[K_ + i] = replay ? 0.0 : w_.types[i].mu * u[i];
                total += rates[K_ + i];
            }
            for (std::size_t i = 0; i < K_; ++i) {
                rates[2 * K_ + i] = replay ? 0.0 : w_.types[i].mu * static_cast<double>(bf_count_[i]);
                total += rates[2 * K_ + i];
            }
            double phantom = 0.0;
            int td = mp_.states[s_].teardown_type;
            if (replay && td >= 0) {
                auto ti = static_cast<std::size_t>(td);
                phantom = w_.types[ti].mu *
                          static_cast<double>(u[ti] - static_cast<int>(in_service_[ti].size()));
            }
            rates[3 * K_] = phantom;
            rates[3 * K_ + 1] = uncoupled_rate_[s_];
            total += phantom + rates[3 * K_ + 1];

            double t_exp = total > 0.0 ? t_ + rng.exponential(total)
                                       : std::numeric_limits<double>::infinity();

            // Deterministic events (trace mode): next arrival, earliest deadline.
            double t_det = std::numeric_limits<double>::infinity();
            int det_kind = 0;  // 1 arrival, 2 slot completion, 3 backfill completion
            std::size_t det_type = 0, det_idx = 0;
            if (replay) {
                const auto& tr = *cfg_.trace;
                if (trace_pos_ < tr.size() && tr[trace_pos_].time < t_det) {
                    t_det = tr[trace_pos_].time;
                    det_kind = 1;
                }
                for (std::size_t i = 0; i < K_; ++i)
                    for (std::size_t k = 0; k < in_service_[i].size(); ++k)
                        if (in_service_[i][k].deadline < t_det) {
                            t_det = in_service_[i][k].deadline;
                            det_kind = 2;
                            det_type = i;
                            det_idx = k;
                        }
                for (std::size_t k = 0; k < bf_jobs_.size(); ++k)
                    if (bf_jobs_[k].second.deadline < t_det) {
                        t_det = bf_jobs_[k].second.deadline;
                        det_kind = 3;
                        det_idx = k;
                    }
            }

            double t_next = std::min(t_exp, t_det);
            if (t_next >= horizon) {
                integrate(acc, t_, horizon, warmup);
                t_ = horizon;
                acc.preemptions = preempt_count_;
                break;
            }
            integrate(acc, t_, t_next, warmup);
            t_ = t_next;
            bool post = t_ >= warmup;

            if (t_det <= t_exp) {
                if (det_kind == 1) {
                    const TraceArrival& a = (*cfg_.trace)[trace_pos_++];
                    waiting_[a.type].push_back({a.time, a.size, -1.0});
                    ++in_system_;
                    log.row(rep, t_, "arrival", static_cast<long>(a.type), static_cast<long>(s_));
                } else if (det_kind == 2) {
                    complete_slot(acc, det_type, det_idx, post);
                    log.row(rep, t_, "completion", static_cast<long>(det_type), static_cast<long>(s_));
                    if (post) ++acc.potential[det_type];
                    if (mp_.states[s_].teardown_type == static_cast<int>(det_type)) advance(next_state());
                } else {
                    complete_backfilled(acc, det_idx, post);
                    log.row(rep, t_, "bf_completion", -1, static_cast<long>(s_));
                }
            } else {
                double x = rng.uniform01() * total;
                std::size_t cat = 0;
                for (; cat + 1 < rates.size(); ++cat) {
                    if (x < rates[cat] && rates[cat] > 0.0) break;
                    x -= rates[cat];
                }
                while (rates[cat] <= 0.0 && cat > 0) --cat;  // numeric fall-off guard
                if (cat < K_) {
                    waiting_[cat].push_back({t_, -1.0, -1.0});
                    ++in_system_;
                    log.row(rep, t_, "arrival", static_cast<long>(cat), static_cast<long>(s_));
                } else if (cat < 2 * K_) {
                    std::size_t i = cat - K_;
                    if (post) ++acc.potential[i];
                    std::size_t slot = rng.pick(static_cast<std::size_t>(u[i]));
                    if (slot < in_service_[i].size()) {
                        complete_slot(acc, i, slot, post);
                        log.row(rep, t_, "completion", static_cast<long>(i), static_cast<long>(s_));
                    } else {
                        if (post) ++acc.unused[i];
                        log.row(rep, t_, "unused", static_cast<long>(i), static_cast<long>(s_));
                    }
                    if (mp_.states[s_].teardown_type == static_cast<int>(i)) advance(next_state());
                } else if (cat < 3 * K_) {
                    std::size_t i = cat - 2 * K_;
                    std::size_t nth = rng.pick(bf_count_[i]);
                    std::size_t idx = bf_jobs_.size();
                    for (std::size_t k = 0, seen = 0; k < bf_jobs_.size(); ++k)
                        if (bf_jobs_[k].first == i && seen++ == nth) {
                            idx = k;
                            break;
                        }
                    complete_backfilled(acc, idx, post);
                    log.row(rep, t_, "bf_completion", static_cast<long>(i), static_cast<long>(s_));
                } else if (cat == 3 * K_) {
                    // Phantom potential completion of an empty slot (trace
                    // mode) driving a coupled teardown.
                    auto ti = static_cast<std::size_t>(mp_.states[s_].teardown_type);
                    if (post) {
                        ++acc.potential[ti];
                        ++acc.unused[ti];
                    }
                    log.row(rep, t_, "unused", static_cast<long>(ti), static_cast<long>(s_));
                    advance(next_state());
                } else {
                    advance(pick_successor(rng));
                    log.row(rep, t_, "transition", -1, static_cast<long>(s_));
                }
            }

            sync_and_fill();
            if (cfg_.check_invariants) verify_invariants();
            if (in_system_ > cfg_.max_total_jobs) {
                acc.tripped = true;
                acc.preemptions = preempt_count_;
                break;
            }
        }
        return acc;
    }

private:
    std::size_t next_state() const {
        // Teardown states have exactly one outgoing edge.
        return succ_[s_].front();
    }

    std::size_t pick_successor(Rng& rng) const {
        const auto& ss = succ_[s_];
        if (ss.size() == 1) return ss.front();
        double total = 0.0;
        for (std::size_t j : ss) total += mp_.generator(s_, j);
        double x = rng.uniform01() * total;
        for (std::size_t j : ss) {
            double r = mp_.generator(s_, j);
            if (x < r) return j;
            x -= r;
        }
        return ss.back();
    }

    void integrate(RepAccum& acc, double a, double b, double warmup) {
        double lo = std::max(a, warmup);
        if (b <= lo) return;
        double len = b - lo;
        acc.observed += len;
        for (std::size_t i = 0; i < K_; ++i) {
            double n = static_cast<double>(waiting_[i].size() + in_service_[i].size() +
                                           parked_[i].size() + bf_count_[i]);
            acc.queue_integral[i] += len * n;
        }
        if (mp_.states[s_].kind == StateKind::Switching) acc.switching_time += len;
    }

    void complete_slot(RepAccum& acc, std::size_t i, std::size_t idx, bool post) {
        SimJob job = in_service_[i][idx];
        in_service_[i].erase(in_service_[i].begin() + static_cast<std::ptrdiff_t>(idx));
        release_resources(i);
        --in_system_;
        if (post) {
            ++acc.completions[i];
            acc.response_sum[i] += t_ - job.arrival;
        }
    }

    void complete_backfilled(RepAccum& acc, std::size_t idx, bool post) {
        std::size_t i = bf_jobs_[idx].first;
        SimJob job = bf_jobs_[idx].second;
        bf_jobs_.erase(bf_jobs_.begin() + static_cast<std::ptrdiff_t>(idx));
        --bf_count_[i];
        release_resources(i);
        --in_system_;
        if (post) {
            ++acc.completions[i];
            acc.response_sum[i] += t_ - job.arrival;
            ++acc.potential[i];
        }
    }

    void claim_resources(std::size_t i) {
        for (std::size_t r = 0; r < R_; ++r) used_[r] += w_.types[i].demand[r];
    }
    void release_resources(std::size_t i) {
        for (std::size_t r = 0; r < R_; ++r) used_[r] -= w_.types[i].demand[r];
    }

    bool fits(std::size_t i) const {
        for (std::size_t r = 0; r < R_; ++r)
            if (used_[r] + w_.types[i].demand[r] >
                w_.capacity[r] + 1e-9 * std::max(1.0, w_.capacity[r]))
                return false;
        return true;
    }

    // Re-queue a job preserving the waiting deque's sorted-by-arrival order.
    void requeue(std::size_t i, SimJob job) {
        if (job.deadline >= 0.0) {
            job.size = job.deadline - t_;  // resume with remaining work
            job.deadline = -1.0;
        }
        auto& dq = waiting_[i];
        auto it = std::lower_bound(dq.begin(), dq.end(), job,
                                   [](const SimJob& a, const SimJob& b) { return a.arrival < b.arrival; });
        dq.insert(it, job);
    }

    void preempt_backfilled(std::size_t idx) {
        std::size_t i = bf_jobs_[idx].first;
        SimJob job = bf_jobs_[idx].second;
        bf_jobs_.erase(bf_jobs_.begin() + static_cast<std::ptrdiff_t>(idx));
        --bf_count_[i];
        release_resources(i);
        requeue(i, job);
        ++preempt_count_;
    }

    void advance(std::size_t j) {
        std::size_t old = s_;
        s_ = j;
        const ModState& os = mp_.states[old];
        const ModState& ns = mp_.states[j];

        if (mode_ == PolicyMode::Smsr) {
            if (os.kind == StateKind::Working && ns.kind == StateKind::Switching) {
                // Route entry: preempted jobs move to setup, keeping their
                // resources until their individual release fires.
                for (std::size_t i = 0; i < K_; ++i) {
                    int excess = static_cast<int>(in_service_[i].size()) - ns.schedule[i];
                    while (excess-- > 0) {
                        parked_[i].push_back(in_service_[i].back());
                        in_service_[i].pop_back();
                        ++preempt_count_;
                    }
                }
            }
            for (std::size_t i = 0; i < K_; ++i) {
                int target = ns.kind == StateKind::Working ? 0 : ns.setup_counts[i];
                int released = os.setup_counts[i] - target;
                while (released-- > 0 && !parked_[i].empty()) {
                    // Oldest parked job finishes setup first; it releases its
                    // resources and rejoins the head of the queue.
                    SimJob job = parked_[i].front();
                    parked_[i].pop_front();
                    release_resources(i);
                    requeue(i, job);
                }
            }
            if (ns.kind == StateKind::Working) {
                for (std::size_t i = 0; i < K_; ++i)
                    while (!parked_[i].empty()) {
                        SimJob job = parked_[i].front();
                        parked_[i].pop_front();
                        release_resources(i);
                        requeue(i, job);
                    }
            }
        }
        if (mode_ == PolicyMode::Pmsr && backfill_) {
            // Backfilled jobs are preempted on every pMSR state change and
            // must re-earn admission under the new schedule.
            while (!bf_jobs_.empty()) preempt_backfilled(bf_jobs_.size() - 1);
        }
    }

    void sync_and_fill() {
        const Schedule& u = mp_.states[s_].schedule;
        // Shrink: preempt most-recently-started jobs back to the queue head.
        for (std::size_t i = 0; i < K_; ++i) {
            while (static_cast<int>(in_service_[i].size()) > u[i]) {
                SimJob job = in_service_[i].back();
                in_service_[i].pop_back();
                release_resources(i);
                requeue(i, job);
                ++preempt_count_;
            }
        }
        // Promote running backfilled jobs into free same-type slots before
        // drawing new jobs from the queue.
        if (backfill_) {
            for (std::size_t i = 0; i < K_; ++i) {
                while (static_cast<int>(in_service_[i].size()) < u[i] && bf_count_[i] > 0) {
                    std::size_t idx = bf_jobs_.size();
                    for (std::size_t k = 0; k < bf_jobs_.size(); ++k)
                        if (bf_jobs_[k].first == i) {
                            idx = k;
                            break;
                        }
                    in_service_[i].push_back(bf_jobs_[idx].second);
                    bf_jobs_.erase(bf_jobs_.begin() + static_cast<std::ptrdiff_t>(idx));
                    --bf_count_[i];
                }
            }
        }
        // Fill slots FCFS within type. Without backfill the state schedule
        // always fits by construction; with it, slots may have to wait for a
        // backfilled job to clear (pMSR reclaims by preemption instead).
        bool blocked = false;
        for (std::size_t i = 0; i < K_; ++i) {
            while (static_cast<int>(in_service_[i].size()) < u[i] && !waiting_[i].empty()) {
                if (backfill_ && !fits(i)) {
                    if (mode_ == PolicyMode::Pmsr) {
                        while (!fits(i) && !bf_jobs_.empty()) preempt_backfilled(bf_jobs_.size() - 1);
                    }
                    if (!fits(i)) {
                        blocked = true;
                        break;
                    }
                }
                SimJob job = waiting_[i].front();
                waiting_[i].pop_front();
                if (job.size >= 0.0) job.deadline = t_ + job.size;
                in_service_[i].push_back(job);
                claim_resources(i);
            }
        }
        // Admit backfill FCFS across types (skip-scan: all jobs of one type
        // share a demand vector, so skipping a type is exact). Paused while
        // any slot is waiting on capacity, so slots have priority.
        if (backfill_ && !blocked) {
            for (;;) {
                std::size_t best = K_;
                double best_arrival = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < K_; ++i) {
                    if (waiting_[i].empty() || !fits(i)) continue;
                    if (waiting_[i].front().arrival < best_arrival) {
                        best_arrival = waiting_[i].front().arrival;
                        best = i;
                    }
                }
                if (best == K_) break;
                SimJob job = waiting_[best].front();
                waiting_[best].pop_front();
                if (job.size >= 0.0) job.deadline = t_ + job.size;
                bf_jobs_.emplace_back(best, job);
                ++bf_count_[best];
                claim_resources(best);
            }
        }
    }

    void verify_invariants() const {
        Vec actual(R_, 0.0);
        for (std::size_t i = 0; i < K_; ++i) {
            double n = static_cast<double>(in_service_[i].size() + parked_[i].size() + bf_count_[i]);
            for (std::size_t r = 0; r < R_; ++r) actual[r] += n * w_.types[i].demand[r];
        }
        const Schedule& u = mp_.states[s_].schedule;
        for (std::size_t r = 0; r < R_; ++r) {
            if (std::abs(actual[r] - used_[r]) > 1e-6)
                throw std::logic_error("sim invariant: resource ledger drifted");
            if (used_[r] > w_.capacity[r] + 1e-6 * std::max(1.0, w_.capacity[r]))
                throw std::logic_error("sim invariant: capacity exceeded");
        }
        for (std::size_t i = 0; i < K_; ++i) {
            if (static_cast<int>(in_service_[i].size()) > u[i])
                throw std::logic_error("sim invariant: more jobs in slots than scheduled");
            if (mode_ != PolicyMode::Smsr && !parked_[i].empty())
                throw std::logic_error("sim invariant: setup jobs outside sMSR");
        }
    }

    const Workload& w_;
    const ModulatingProcess& mp_;
    const SimConfig& cfg_;
    bool backfill_;
    std::size_t K_, R_;
    PolicyMode mode_ = PolicyMode::Pmsr;
    std::vector<std::vector<std::size_t>> succ_;
    Vec uncoupled_rate_;

    // Per-replication state.
    double t_ = 0.0;
    std::size_t s_ = 0;
    std::vector<std::deque<SimJob>> waiting_;
    std::vector<std::vector<SimJob>> in_service_;
    std::vector<std::deque<SimJob>> parked_;
    std::vector<std::pair<std::size_t, SimJob>> bf_jobs_;  // admission order
    std::vector<std::size_t> bf_count_;
    Vec used_;
    std::uint64_t in_system_ = 0;
    std::size_t trace_pos_ = 0;
    std::uint64_t preempt_count_ = 0;
};

}  // namespace detail

// Validates that every state's schedule plus setup footprint fits the server.
inline void validate_process_for(const Workload& w, const ModulatingProcess& mp) {
    if (mp.states.empty()) throw InvalidInput("modulating process has no states");
    if (mp.num_types() != w.num_types())
        throw InvalidInput("modulating process and workload disagree on type count");
    for (const ModState& st : mp.states) {
        for (std::size_t r = 0; r < w.num_resources(); ++r) {
            double needed = 0.0;
            for (std::size_t i = 0; i < w.num_types(); ++i) {
                double setup = st.setup_counts.empty() ? 0.0 : st.setup_counts[i];
                needed += (st.schedule[i] + setup) * w.types[i].demand[r];
            }
            if (needed > w.capacity[r] + 1e-9 * std::max(1.0, w.capacity[r]))
                throw InvalidInput("modulating process state exceeds server capacity");
        }
    }
}

inline SimReport simulate_msr(const Workload& w, const ModulatingProcess& mp, const SimConfig& cfg,
                              bool backfill = false) {
    w.validate();
    cfg.validate();
    validate_process_for(w, mp);
    if (cfg.source == ArrivalSource::Trace)
        for (const TraceArrival& a : *cfg.trace)
            if (a.type >= w.num_types()) throw InvalidInput("trace arrival references unknown type");
    detail::EventLog log;
    log.open(cfg);
    detail::MsrEngine engine(w, mp, cfg, backfill);
    std::vector<detail::RepAccum> reps;
    for (int r = 0; r < cfg.replications; ++r)
        reps.push_back(engine.run(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)), log, r));
    return detail::finalize_report(reps, w.num_types());
}

// MSR-1 proxy system: a single queue served at rate mu_i * u_i(s) under the
// same modulating process, with chain transitions on independent timers.
// `delta` (optional) is logged at unused-service instants to estimate the
// unused-service expectation in the exact mean-queue identity.
inline SimReport simulate_msr1(const ModulatingProcess& mp, std::size_t type, double lambda_i,
                               double mu_i, const SimConfig& cfg, const Vec* delta = nullptr) {
    cfg.validate();
    if (cfg.source == ArrivalSource::Trace)
        throw InvalidInput("simulate_msr1: trace arrivals are not supported");
    if (mp.states.empty()) throw InvalidInput("simulate_msr1: empty process");
    if (type >= mp.num_types()) throw InvalidInput("simulate_msr1: type index out of range");
    if (!(lambda_i >= 0.0) || !(mu_i > 0.0)) throw InvalidInput("simulate_msr1: bad rates");
    if (delta && delta->size() != mp.num_states())
        throw InvalidInput("simulate_msr1: delta size mismatch");

    detail::EventLog log;
    log.open(cfg);
    const std::size_t N = mp.num_states();
    std::vector<std::vector<std::size_t>> succ(N);
    Vec exit_rate(N, 0.0);
    for (std::size_t s = 0; s < N; ++s) {
        for (std::size_t j = 0; j < N; ++j)
            if (j != s && mp.generator(s, j) > 0.0) succ[s].push_back(j);
        exit_rate[s] = -mp.generator(s, s);
    }

    std::vector<detail::RepAccum> reps;
    for (int r = 0; r < cfg.replications; ++r) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        detail::RepAccum acc(1);
        double t = 0.0;
        std::size_t s = mp.working_states.empty() ? 0 : mp.working_states[0];
        std::deque<double> queue;  // arrival times, FCFS
        const double warmup = cfg.resolved_warmup();
        for (;;) {
            double svc = mu_i * mp.states[s].schedule[type];
            double total = lambda_i + svc + exit_rate[s];
            double t_next = total > 0.0 ? t + rng.exponential(total)
                                        : std::numeric_limits<double>::infinity();
            double upto = std::min(t_next, cfg.horizon);
            double lo = std::max(t, warmup);
            if (upto > lo) {
                acc.observed += upto - lo;
                acc.queue_integral[0] += (upto - lo) * static_cast<double>(queue.size());
                if (mp.states[s].kind == StateKind::Switching) acc.switching_time += upto - lo;
            }
            if (t_next >= cfg.horizon) break;
            t = t_next;
            bool post = t >= warmup;
            double x = rng.uniform01() * total;
            if (x < lambda_i) {
                queue.push_back(t);
                if (queue.size() > cfg.max_total_jobs) {
                    acc.tripped = true;
                    break;
                }
                log.row(r, t, "arrival", 0, static_cast<long>(s));
            } else if (x < lambda_i + svc) {
                if (post) ++acc.potential[0];
                if (!queue.empty()) {
                    double arr = queue.front();
                    queue.pop_front();
                    if (post) {
                        ++acc.completions[0];
                        acc.response_sum[0] += t - arr;
                    }
                    log.row(r, t, "completion", 0, static_cast<long>(s));
                } else {
                    if (post) {
                        ++acc.unused[0];
                        if (delta) {
                            acc.delta_unused_sum += (*delta)[s];
                            ++acc.delta_unused_events;
                        }
                    }
                    log.row(r, t, "unused", 0, static_cast<long>(s));
                }
            } else {
                const auto& ss = succ[s];
                if (!ss.empty()) {
                    double y = rng.uniform01();
                    double acc_rate = 0.0;
                    std::size_t chosen = ss.back();
                    for (std::size_t j : ss) {
                        acc_rate += mp.generator(s, j) / exit_rate[s];
                        if (y < acc_rate) {
                            chosen = j;
                            break;
                        }
                    }
                    s = chosen;
                }
                log.row(r, t, "transition", -1, static_cast<long>(s));
            }
        }
        reps.push_back(acc);
    }
    return detail::finalize_report(reps, 1);
}

namespace detail {

// Lexicographically-first maximizer of <u, counts> over candidate schedules.
// Weights are integer products, so comparisons are exact.
inline std::size_t choose_maxweight(const std::vector<Schedule>& cands,
                                    const std::vector<std::uint64_t>& counts) {
    std::size_t best = 0;
    std::uint64_t best_w = 0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
        std::uint64_t wgt = 0;
        for (std::size_t i = 0; i < counts.size(); ++i)
            wgt += static_cast<std::uint64_t>(cands[j][i]) * counts[i];
        if (j == 0 || wgt > best_w) {
            best = j;
            best_w = wgt;
        }
    }
    return best;
}

}  // namespace detail

// MaxWeight baseline: on every arrival/completion pick the maximal schedule
// maximizing <u, queue lengths>; preemptive with FCFS slots per type.
inline SimReport simulate_maxweight(const Workload& w, const SimConfig& cfg,
                                    std::size_t cap = kDefaultEnumerationCap) {
    w.validate();
    cfg.validate();
    if (cfg.source == ArrivalSource::Trace)
        throw InvalidInput("simulate_maxweight: trace arrivals are not supported");
    auto cands = enumerate_maximal_schedules(w, cap);
    const std::size_t K = w.num_types();
    detail::EventLog log;
    log.open(cfg);

    std::vector<detail::RepAccum> reps;
    for (int r = 0; r < cfg.replications; ++r) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        detail::RepAccum acc(K);
        double t = 0.0;
        const double warmup = cfg.resolved_warmup();
        std::vector<std::deque<detail::SimJob>> waiting(K);
        std::vector<std::vector<detail::SimJob>> in_service(K);
        std::vector<std::uint64_t> counts(K, 0);
        std::uint64_t in_system = 0;
        std::size_t sched = detail::choose_maxweight(cands, counts);

        auto resync = [&]() {
            sched = detail::choose_maxweight(cands, counts);
            const Schedule& u = cands[sched];
            for (std::size_t i = 0; i < K; ++i) {
                while (static_cast<int>(in_service[i].size()) > u[i]) {
                    waiting[i].push_front(in_service[i].back());
                    in_service[i].pop_back();
                    ++acc.preemptions;
                }
                while (static_cast<int>(in_service[i].size()) < u[i] && !waiting[i].empty()) {
                    in_service[i].push_back(waiting[i].front());
                    waiting[i].pop_front();
                }
            }
        };

        for (;;) {
            double total = 0.0;
            for (std::size_t i = 0; i < K; ++i)
                total += w.types[i].lambda + w.types[i].mu * static_cast<double>(in_service[i].size());
            double t_next =
                total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
            double upto = std::min(t_next, cfg.horizon);
            double lo = std::max(t, warmup);
            if (upto > lo) {
                double len = upto - lo;
                acc.observed += len;
                for (std::size_t i = 0; i < K; ++i)
                    acc.queue_integral[i] += len * static_cast<double>(counts[i]);
            }
            if (t_next >= cfg.horizon) break;
            t = t_next;
            bool post = t >= warmup;
            double x = rng.uniform01() * total;
            bool handled = false;
            for (std::size_t i = 0; i < K && !handled; ++i) {
                if (x < w.types[i].lambda) {
                    waiting[i].push_back({t, -1.0, -1.0});
                    ++counts[i];
                    ++in_system;
                    log.row(r, t, "arrival", static_cast<long>(i), static_cast<long>(sched));
                    handled = true;
                    break;
                }
                x -= w.types[i].lambda;
                double svc = w.types[i].mu * static_cast<double>(in_service[i].size());
                if (x < svc) {
                    std::size_t k = rng.pick(in_service[i].size());
                    detail::SimJob job = in_service[i][k];
                    in_service[i].erase(in_service[i].begin() + static_cast<std::ptrdiff_t>(k));
                    --counts[i];
                    --in_system;
                    if (post) {
                        ++acc.completions[i];
                        ++acc.potential[i];
                        acc.response_sum[i] += t - job.arrival;
                    }
                    log.row(r, t, "completion", static_cast<long>(i), static_cast<long>(sched));
                    handled = true;
                    break;
                }
                x -= svc;
            }
            if (!handled) continue;  // numeric fall-off: no state change
            resync();
            if (in_system > cfg.max_total_jobs) {
                acc.tripped = true;
                break;
            }
        }
        reps.push_back(acc);
    }
    return detail::finalize_report(reps, K);
}

// First-Fit baseline: non-preemptive; after every arrival or completion the
// central queue is scanned in FCFS order and any job that fits the residual
// capacity starts immediately. All jobs of a type share one demand vector,
// so a skipped type stays skipped within one scan.
inline SimReport simulate_firstfit(const Workload& w, const SimConfig& cfg) {
    w.validate();
    cfg.validate();
    if (cfg.source == ArrivalSource::Trace)
        throw InvalidInput("simulate_firstfit: trace arrivals are not supported");
    const std::size_t K = w.num_types();
    const std::size_t R = w.num_resources();
    detail::EventLog log;
    log.open(cfg);

    std::vector<detail::RepAccum> reps;
    for (int r = 0; r < cfg.replications; ++r) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        detail::RepAccum acc(K);
        double t = 0.0;
        const double warmup = cfg.resolved_warmup();
        std::vector<std::deque<detail::SimJob>> waiting(K);
        std::vector<std::vector<detail::SimJob>> running(K);
        Vec used(R, 0.0);
        std::uint64_t in_system = 0;

        auto fits = [&](std::size_t i) {
            for (std::size_t rr = 0; rr < R; ++rr)
                if (used[rr] + w.types[i].demand[rr] >
                    w.capacity[rr] + 1e-9 * std::max(1.0, w.capacity[rr]))
                    return false;
            return true;
        };
        auto admit = [&]() {
            for (;;) {
                std::size_t best = K;
                double best_arrival = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < K; ++i) {
                    if (waiting[i].empty() || !fits(i)) continue;
                    if (waiting[i].front().arrival < best_arrival) {
                        best_arrival = waiting[i].front().arrival;
                        best = i;
                    }
                }
                if (best == K) break;
                running[best].push_back(waiting[best].front());
                waiting[best].pop_front();
                for (std::size_t rr = 0; rr < R; ++rr) used[rr] += w.types[best].demand[rr];
            }
        };

        for (;;) {
            double total = 0.0;
            for (std::size_t i = 0; i < K; ++i)
                total += w.types[i].lambda + w.types[i].mu * static_cast<double>(running[i].size());
            double t_next =
                total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
            double upto = std::min(t_next, cfg.horizon);
            double lo = std::max(t, warmup);
            if (upto > lo) {
                double len = upto - lo;
                acc.observed += len;
                for (std::size_t i = 0; i < K; ++i)
                    acc.queue_integral[i] +=
                        len * static_cast<double>(waiting[i].size() + running[i].size());
            }
            if (t_next >= cfg.horizon) break;
            t = t_next;
            bool post = t >= warmup;
            double x = rng.uniform01() * total;
            bool handled = false;
            for (std::size_t i = 0; i < K && !handled; ++i) {
                if (x < w.types[i].lambda) {
                    waiting[i].push_back({t, -1.0, -1.0});
                    ++in_system;
                    log.row(r, t, "arrival", static_cast<long>(i), -1);
                    handled = true;
                    break;
                }
                x -= w.types[i].lambda;
                double svc = w.types[i].mu * static_cast<double>(running[i].size());
                if (x < svc) {
                    std::size_t k = rng.pick(running[i].size());
                    detail::SimJob job = running[i][k];
                    running[i].erase(running[i].begin() + static_cast<std::ptrdiff_t>(k));
                    for (std::size_t rr = 0; rr < R; ++rr) used[rr] -= w.types[i].demand[rr];
                    --in_system;
                    if (post) {
                        ++acc.completions[i];
                        ++acc.potential[i];
                        acc.response_sum[i] += t - job.arrival;
                    }
                    log.row(r, t, "completion", static_cast<long>(i), -1);
                    handled = true;
                    break;
                }
                x -= svc;
            }
            if (!handled) continue;
            admit();
            if (in_system > cfg.max_total_jobs) {
                acc.tripped = true;
                break;
            }
        }
        reps.push_back(acc);
    }
    return detail::finalize_report(reps, K);
}

}  // namespace msr
