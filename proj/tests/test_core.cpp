#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "fixtures.hpp"
#include "msr/core.hpp"

using namespace msr;

TEST_CASE("feasible respects capacity with relative slack") {
    Workload w = example_three(0.8);
    REQUIRE(feasible({1, 4, 0}, w));   // (3+16, 7+4, 1+4) <= (20, 15, 50)
    REQUIRE(feasible({0, 0, 2}, w));   // (20, 2, 10)
    REQUIRE_FALSE(feasible({2, 4, 0}, w));  // cpu 3*2+4*4 = 22 > 20
    REQUIRE_FALSE(feasible({0, 0, 3}, w));  // cpu 30 > 20
    REQUIRE(feasible({0, 0, 0}, w));
    REQUIRE_THROWS_AS(feasible({1, 1}, w), InvalidInput);
}

TEST_CASE("workload validation rejects malformed inputs") {
    Workload w = example_three(0.5);
    REQUIRE_NOTHROW(w.validate());

    Workload zero_demand = w;
    zero_demand.types[1].demand = {0, 0, 0};
    REQUIRE_THROWS_AS(zero_demand.validate(), InvalidInput);

    Workload neg_lambda = w;
    neg_lambda.types[0].lambda = -1.0;
    REQUIRE_THROWS_AS(neg_lambda.validate(), InvalidInput);

    Workload bad_mu = w;
    bad_mu.types[2].mu = 0.0;
    REQUIRE_THROWS_AS(bad_mu.validate(), InvalidInput);

    Workload mismatch = w;
    mismatch.types[0].demand = {1, 2};
    REQUIRE_THROWS_AS(mismatch.validate(), InvalidInput);
}

namespace {

// Brute-force oracle: a maximal schedule is feasible and admits no +e_i.
std::set<Schedule> brute_force_maximal(const Workload& w, int box) {
    std::set<Schedule> result;
    const std::size_t k = w.num_types();
    Schedule u(k, 0);
    for (;;) {
        if (feasible(u, w)) {
            bool maximal = true;
            for (std::size_t i = 0; i < k && maximal; ++i) {
                Schedule v = u;
                ++v[i];
                if (feasible(v, w)) maximal = false;
            }
            if (maximal) result.insert(u);
        }
        std::size_t idx = 0;
        while (idx < k && u[idx] == box) u[idx++] = 0;
        if (idx == k) break;
        ++u[idx];
    }
    return result;
}

}  // namespace

TEST_CASE("enumerate_maximal_schedules matches brute force on small workloads") {
    Workload w;
    w.capacity = {4, 3};
    w.types = {{"a", {1, 1}, 1.0, 1.0}, {"b", {2, 1}, 1.0, 1.0}};
    auto got = enumerate_maximal_schedules(w);
    auto expect = brute_force_maximal(w, 5);
    REQUIRE(std::set<Schedule>(got.begin(), got.end()) == expect);

    Workload w3;
    w3.capacity = {6, 5, 7};
    w3.types = {{"a", {1, 2, 1}, 1.0, 1.0}, {"b", {3, 1, 2}, 1.0, 1.0}, {"c", {2, 1, 3}, 1.0, 1.0}};
    auto got3 = enumerate_maximal_schedules(w3);
    auto expect3 = brute_force_maximal(w3, 8);
    REQUIRE(std::set<Schedule>(got3.begin(), got3.end()) == expect3);
}

TEST_CASE("enumerate_maximal_schedules output is sorted, unique, and maximal") {
    Workload w = example_three(1.0);
    auto cands = enumerate_maximal_schedules(w);
    REQUIRE(std::is_sorted(cands.begin(), cands.end()));
    REQUIRE(std::adjacent_find(cands.begin(), cands.end()) == cands.end());
    for (const Schedule& u : cands) {
        REQUIRE(feasible(u, w));
        for (std::size_t i = 0; i < u.size(); ++i) {
            Schedule v = u;
            ++v[i];
            REQUIRE_FALSE(feasible(v, w));
        }
    }
    // Hand-picked members of the maximal set.
    auto has = [&](Schedule u) {
        return std::binary_search(cands.begin(), cands.end(), u);
    };
    REQUIRE(has({1, 4, 0}));
    REQUIRE(has({0, 0, 2}));
    REQUIRE(has({1, 1, 1}));
    REQUIRE(has({2, 1, 0}));
    REQUIRE(has({0, 2, 1}));
}

TEST_CASE("enumeration cap trips on combinatorial blowups") {
    Workload w = example_large();
    REQUIRE_THROWS_AS(enumerate_maximal_schedules(w, 10), ResourceLimit);
    REQUIRE(enumerate_maximal_schedules(w).size() == 408);
}

TEST_CASE("types with zero arrivals still get schedule slots") {
    Workload w;
    w.capacity = {4};
    w.types = {{"busy", {1}, 1.0, 1.0}, {"idle", {2}, 0.0, 1.0}};
    auto cands = enumerate_maximal_schedules(w);
    bool idle_served = false;
    for (const Schedule& u : cands) idle_served = idle_served || u[1] > 0;
    REQUIRE(idle_served);
}

TEST_CASE("system_load on a single-type pool equals lambda over total service") {
    // Capacity 4, unit demand: z* = 2 at lambda=2, mu=1 -> rho = 1/2.
    Workload w;
    w.capacity = {4};
    w.types = {{"job", {1}, 2.0, 1.0}};
    REQUIRE(system_load(w) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("system_load matches the pinned multiresource optimum") {
    REQUIRE(system_load(example_large()) == Catch::Approx(4.0 / 6.1068702).margin(1e-6));
    REQUIRE(system_load(example_three(1.0)) == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(system_load(example_three(0.8)) == Catch::Approx(0.8).margin(1e-9));
}

TEST_CASE("system_load scales linearly in the arrival rates") {
    Workload w = example_large();
    double base = system_load(w);
    for (double c : {0.25, 0.5, 2.0}) {
        Workload scaled = w;
        for (auto& t : scaled.types) t.lambda *= c;
        REQUIRE(system_load(scaled) == Catch::Approx(c * base).margin(1e-12));
    }
}

TEST_CASE("system_load error paths") {
    Workload all_zero = example_three(0.0);
    REQUIRE_THROWS_AS(system_load(all_zero), InvalidInput);

    Workload unservable;
    unservable.capacity = {4, 3};
    unservable.types = {{"ok", {1, 1}, 1.0, 1.0}, {"huge", {5, 1}, 0.5, 1.0}};
    REQUIRE_THROWS_AS(system_load(unservable), InfeasibleWorkload);
    try {
        system_load(unservable);
    } catch (const InfeasibleWorkload& e) {
        REQUIRE(std::string(e.what()).find("huge") != std::string::npos);
    }
}
