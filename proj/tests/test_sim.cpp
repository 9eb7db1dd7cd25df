#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fixtures.hpp"
#include "msr/analysis.hpp"
#include "msr/sim.hpp"
#include "msr/synthesis.hpp"

using namespace msr;

namespace {

ModulatingProcess single_state(const Workload& w, int slots) {
    PolicySpec s;
    s.candidates = {Schedule{slots}};
    s.pi = {1.0};
    return build_policy(w, s);
}

SimConfig quick(double horizon, int reps, std::uint64_t seed) {
    SimConfig cfg;
    cfg.horizon = horizon;
    cfg.replications = reps;
    cfg.seed = seed;
    return cfg;
}

bool reports_equal(const SimReport& a, const SimReport& b) {
    if (a.per_type.size() != b.per_type.size()) return false;
    for (std::size_t i = 0; i < a.per_type.size(); ++i) {
        const TypeStats &x = a.per_type[i], &y = b.per_type[i];
        if (x.mean_queue != y.mean_queue || x.queue_ci != y.queue_ci ||
            x.mean_response != y.mean_response || x.response_ci != y.response_ci ||
            x.completions != y.completions || x.potential != y.potential || x.unused != y.unused)
            return false;
    }
    return a.total_queue_mean == b.total_queue_mean && a.mean_response == b.mean_response &&
           a.switching_fraction == b.switching_fraction && a.throughput == b.throughput &&
           a.total_completions == b.total_completions && a.preemptions == b.preemptions;
}

}  // namespace

TEST_CASE("simulation matches the single-server queue") {
    double rho = 0.5;
    Workload w = mm1_workload(rho);
    auto mp = single_state(w, 1);
    auto rep = simulate_msr(w, mp, quick(20000, 5, 42));
    REQUIRE_FALSE(rep.unstable);
    REQUIRE(std::abs(rep.total_queue_mean - rho / (1 - rho)) <= rep.total_queue_ci);
    REQUIRE(std::abs(rep.mean_response - 1.0 / (1 - rho)) <= rep.response_ci);
    REQUIRE(std::abs(rep.throughput - rho) < 0.02);
    // Unused service happens exactly when the server idles: fraction 1 - rho.
    REQUIRE(rep.per_type[0].unused_fraction == Catch::Approx(1 - rho).margin(0.02));
}

TEST_CASE("simulation matches the multi-server queue") {
    int k = 3;
    double rho = 0.7;
    Workload w = mmk_workload(k, rho);
    auto mp = single_state(w, k);
    auto rep = simulate_msr(w, mp, quick(20000, 5, 43));
    REQUIRE(std::abs(rep.total_queue_mean - mmk_mean_jobs(k, rho)) <= rep.total_queue_ci);
}

TEST_CASE("runs are deterministic in the seed") {
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Pmsr, 2.0));
    auto a = simulate_msr(w, mp, quick(1500, 3, 9));
    auto b = simulate_msr(w, mp, quick(1500, 3, 9));
    REQUIRE(reports_equal(a, b));
    auto c = simulate_msr(w, mp, quick(1500, 3, 10));
    REQUIRE_FALSE(reports_equal(a, c));
}

TEST_CASE("potential service splits exactly into completions and unused") {
    Workload w = example_three(0.8);
    auto syn = synthesize(w);
    SimConfig cfg = quick(2000, 3, 77);
    cfg.check_invariants = true;
    for (auto mode : {PolicyMode::Pmsr, PolicyMode::Nmsr, PolicyMode::Smsr}) {
        auto mp = build_policy(
            w, to_policy_spec(syn, mode, mode == PolicyMode::Pmsr ? 2.0 : 0.1, 5.0));
        auto rep = simulate_msr(w, mp, cfg);
        for (const auto& t : rep.per_type) REQUIRE(t.completions + t.unused == t.potential);
    }
}

TEST_CASE("preemption accounting by mode") {
    Workload w = example_three(0.8);
    auto syn = synthesize(w);
    SimConfig cfg = quick(2000, 3, 5);
    auto p = simulate_msr(w, build_policy(w, to_policy_spec(syn, PolicyMode::Pmsr, 2.0)), cfg);
    REQUIRE(p.preemptions > 0);
    auto n = simulate_msr(w, build_policy(w, to_policy_spec(syn, PolicyMode::Nmsr, 0.1)), cfg);
    REQUIRE(n.preemptions == 0);  // non-preemptive by construction
    auto s = simulate_msr(w, build_policy(w, to_policy_spec(syn, PolicyMode::Smsr, 0.1, 5.0)), cfg);
    REQUIRE(s.preemptions > 0);  // jobs move into setup on every switch
}

TEST_CASE("switching fraction is zero for pMSR and positive otherwise") {
    Workload w = example_three(0.8);
    auto syn = synthesize(w);
    SimConfig cfg = quick(2000, 2, 3);
    auto p = simulate_msr(w, build_policy(w, to_policy_spec(syn, PolicyMode::Pmsr, 2.0)), cfg);
    REQUIRE(p.switching_fraction == 0.0);
    auto n = simulate_msr(w, build_policy(w, to_policy_spec(syn, PolicyMode::Nmsr, 0.1)), cfg);
    REQUIRE(n.switching_fraction > 0.0);
    REQUIRE(n.switching_fraction < 1.0);
}

TEST_CASE("proxy system brackets the real per-type queue") {
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Pmsr, 2.0));
    auto full = simulate_msr(w, mp, quick(8000, 5, 21));
    for (std::size_t i = 0; i < w.num_types(); ++i) {
        auto one = simulate_msr1(mp, i, w.types[i].lambda, w.types[i].mu, quick(8000, 5, 22));
        auto bounds = queue_bounds(mp, w, i);
        double slack = 3.0 * (full.per_type[i].queue_ci + one.per_type[0].queue_ci);
        REQUIRE(full.per_type[i].mean_queue >= one.per_type[0].mean_queue - slack);
        REQUIRE(full.per_type[i].mean_queue <=
                one.per_type[0].mean_queue + bounds.beta + slack);
    }
}

TEST_CASE("proxy queue satisfies the exact mean identity") {
    // E[Q] = (rho + E[Delta(nu)])/(1-rho) - E[Delta at unused instants].
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Pmsr, 2.0));
    std::size_t i = 1;
    Vec delta = relative_completions(mp, i, w.types[i].mu);
    auto rep = simulate_msr1(mp, i, w.types[i].lambda, w.types[i].mu, quick(30000, 6, 17), &delta);
    auto t = queue_bounds(mp, w, i);
    double identity = (t.rho + t.e_delta_nu) / (1.0 - t.rho) - rep.delta_unused_mean;
    REQUIRE(rep.delta_unused_events > 0);
    REQUIRE(std::abs(rep.per_type[0].mean_queue - identity) <= 3.0 * rep.per_type[0].queue_ci);
}

TEST_CASE("instability guard trips under overload") {
    Workload w = example_three(1.3);
    SimConfig cfg = quick(8000, 2, 1);
    cfg.max_total_jobs = 300;
    auto rep = simulate_firstfit(w, cfg);
    REQUIRE(rep.unstable);
    auto mp = build_policy(w, to_policy_spec(synthesize(example_three(1.0)), PolicyMode::Pmsr, 2.0));
    auto rep2 = simulate_msr(w, mp, cfg);
    REQUIRE(rep2.unstable);
}

TEST_CASE("maxweight chooser takes the first heaviest schedule") {
    std::vector<Schedule> cands = {{0, 2}, {1, 1}, {2, 0}};
    REQUIRE(detail::choose_maxweight(cands, {0, 0}) == 0);  // all tie: first wins
    REQUIRE(detail::choose_maxweight(cands, {5, 1}) == 2);
    REQUIRE(detail::choose_maxweight(cands, {1, 1}) == 0);  // weights 2,2,2
    REQUIRE(detail::choose_maxweight(cands, {0, 7}) == 0);
    REQUIRE(detail::choose_maxweight(cands, {3, 4}) == 0);  // 8 vs 7 vs 6
}

TEST_CASE("maxweight tracks the single-server queue on trivial workloads") {
    Workload w = mm1_workload(0.5);
    auto rep = simulate_maxweight(w, quick(20000, 5, 31));
    REQUIRE(std::abs(rep.total_queue_mean - 1.0) <= 3.0 * rep.total_queue_ci);
}

TEST_CASE("baselines hold up at high load where first-fit degrades") {
    Workload w = example_three(0.9);
    auto mw = simulate_maxweight(w, quick(4000, 3, 8));
    REQUIRE_FALSE(mw.unstable);
    REQUIRE(std::isfinite(mw.total_queue_ci));
    auto ff = simulate_firstfit(w, quick(4000, 3, 8));
    // First-fit wastes capacity scanning past big jobs; it trails maxweight.
    REQUIRE(ff.total_queue_mean > mw.total_queue_mean);
}

TEST_CASE("trace arrivals are rejected by engines without replay support") {
    Workload w = mm1_workload(0.5);
    std::vector<TraceArrival> trace = {{0.5, 0, 1.0}};
    SimConfig cfg = quick(10, 1, 1);
    cfg.source = ArrivalSource::Trace;
    cfg.trace = &trace;
    REQUIRE_THROWS_AS(simulate_maxweight(w, cfg), InvalidInput);
    REQUIRE_THROWS_AS(simulate_firstfit(w, cfg), InvalidInput);
    auto mp = single_state(w, 1);
    REQUIRE_THROWS_AS(simulate_msr1(mp, 0, 0.5, 1.0, cfg), InvalidInput);
    REQUIRE_NOTHROW(simulate_msr(w, mp, cfg));
}

TEST_CASE("replay serves deterministic job sizes FCFS") {
    Workload w = mm1_workload(0.0);  // rates unused in replay
    auto mp = single_state(w, 1);
    std::vector<TraceArrival> trace = {{0.0, 0, 2.0}, {1.0, 0, 2.0}, {2.0, 0, 2.0}};
    SimConfig cfg = quick(50, 2, 1);
    cfg.warmup = 0.0;
    cfg.source = ArrivalSource::Trace;
    cfg.trace = &trace;
    auto rep = simulate_msr(w, mp, cfg);
    // One server: completions at 2, 4, 6 -> responses 2, 3, 4.
    REQUIRE(rep.per_type[0].completions == 6);  // 3 per replication
    REQUIRE(rep.mean_response == Catch::Approx(3.0).margin(1e-9));
    REQUIRE(rep.response_ci == Catch::Approx(0.0).margin(1e-12));
    for (const auto& t : rep.per_type) REQUIRE(t.completions + t.unused == t.potential);
}

TEST_CASE("replay resumes preempted jobs with their remaining work") {
    // Two-state chain alternating one slot on/off; a size-2 job must
    // accumulate 2 units of on-time. Chain timers are random, so just check
    // every job finishes and response >= size.
    Workload w = mm1_workload(0.0);
    PolicySpec s;
    s.candidates = {{1}, {0}};
    s.pi = {0.5, 0.5};
    s.alpha = 0.5;
    auto mp = build_policy(w, s);
    std::vector<TraceArrival> trace;
    for (int j = 0; j < 20; ++j) trace.push_back({j * 4.0, 0, 2.0});
    SimConfig cfg = quick(4000, 3, 77);
    cfg.warmup = 0.0;
    cfg.check_invariants = true;
    cfg.source = ArrivalSource::Trace;
    cfg.trace = &trace;
    auto rep = simulate_msr(w, mp, cfg);
    REQUIRE(rep.per_type[0].completions == 60);  // all jobs, every replication
    REQUIRE(rep.mean_response >= 2.0);
}

TEST_CASE("event log captures arrivals, completions, and transitions") {
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Nmsr, 0.1));
    SimConfig cfg = quick(300, 2, 4);
    cfg.log_events = true;
    cfg.event_log_path = "/tmp/msr_test_events.csv";
    auto rep = simulate_msr(w, mp, cfg);
    REQUIRE(rep.total_completions > 0);
    std::ifstream in(cfg.event_log_path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line == "rep,time,event,type,state");
    std::size_t rows = 0;
    bool saw_arrival = false, saw_completion = false, saw_transition = false;
    while (std::getline(in, line)) {
        ++rows;
        saw_arrival = saw_arrival || line.find(",arrival,") != std::string::npos;
        saw_completion = saw_completion || line.find(",completion,") != std::string::npos;
        saw_transition = saw_transition || line.find(",transition,") != std::string::npos;
    }
    REQUIRE(rows > 100);
    REQUIRE(saw_arrival);
    REQUIRE(saw_completion);
    REQUIRE(saw_transition);

    SimConfig bad = cfg;
    bad.event_log_path.clear();
    REQUIRE_THROWS_AS(simulate_msr(w, mp, bad), InvalidInput);
}

TEST_CASE("config validation") {
    Workload w = mm1_workload(0.5);
    auto mp = single_state(w, 1);
    SimConfig cfg = quick(100, 1, 1);
    cfg.horizon = 0.0;
    REQUIRE_THROWS_AS(simulate_msr(w, mp, cfg), InvalidInput);
    cfg = quick(100, 1, 1);
    cfg.warmup = 100.0;
    REQUIRE_THROWS_AS(simulate_msr(w, mp, cfg), InvalidInput);
    cfg = quick(100, 0, 1);
    REQUIRE_THROWS_AS(simulate_msr(w, mp, cfg), InvalidInput);
    cfg = quick(100, 1, 1);
    cfg.source = ArrivalSource::Trace;  // no trace attached
    REQUIRE_THROWS_AS(simulate_msr(w, mp, cfg), InvalidInput);

    // Process whose schedule exceeds the server.
    PolicySpec s;
    s.candidates = {{3}};
    s.pi = {1.0};
    auto big = build_pmsr(s);
    REQUIRE_THROWS_AS(simulate_msr(w, big, quick(100, 1, 1)), InvalidInput);
}

TEST_CASE("backfilling never hurts the preemptive policy") {
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Pmsr, 2.0));
    SimConfig cfg = quick(6000, 5, 13);
    cfg.check_invariants = true;
    auto plain = simulate_msr(w, mp, cfg, false);
    auto bf = simulate_msr(w, mp, cfg, true);
    double slack = 3.0 * (plain.response_ci + bf.response_ci);
    REQUIRE(bf.mean_response <= plain.mean_response + slack);
    for (const auto& t : bf.per_type) REQUIRE(t.completions + t.unused == t.potential);
}

TEST_CASE("backfilling rescues a switching-heavy non-preemptive policy") {
    Workload w = example_three(0.8);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Nmsr, 2.0));
    SimConfig cfg = quick(4000, 3, 19);
    cfg.check_invariants = true;
    auto plain = simulate_msr(w, mp, cfg, false);
    auto bf = simulate_msr(w, mp, cfg, true);
    REQUIRE(bf.mean_response * 2.0 < plain.mean_response);
    // Backfilled jobs bypass the schedule, so unused service stays high but
    // the queue keeps draining; conservation still holds.
    for (const auto& t : bf.per_type) REQUIRE(t.completions + t.unused == t.potential);
}

TEST_CASE("setup-state jobs keep their resources until released") {
    // With invariant checking on, any double-release or capacity breach in
    // the setup protocol would throw; exercise many switches.
    Workload w = example_three(0.7);
    auto mp = build_policy(w, to_policy_spec(synthesize(w), PolicyMode::Smsr, 0.3, 2.0));
    SimConfig cfg = quick(3000, 3, 23);
    cfg.check_invariants = true;
    auto rep = simulate_msr(w, mp, cfg);
    REQUIRE(rep.total_completions > 0);
    auto bf = simulate_msr(w, mp, cfg, true);
    REQUIRE(bf.total_completions > 0);
    REQUIRE(bf.mean_response < rep.mean_response);  // virtual slots + backfill drain faster
}
