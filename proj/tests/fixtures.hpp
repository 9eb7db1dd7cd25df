#pragma once

#include <cmath>

#include "msr/core.hpp"

// Workloads used across the suite. `example_large` is a 4-resource server
// whose optimum hits every type at the same load; `example_three` is a small
// 3-type system with a two-schedule optimal mixture at base load 1.0.
inline msr::Workload example_large() {
    msr::Workload w;
    w.capacity = {128, 256, 1024, 100};
    w.types = {
        {"t1", {1, 4, 50, 1}, 4.0, 1.0},
        {"t2", {4, 1, 10, 10}, 5.0, 1.0},
        {"t3", {2, 2, 100, 5}, 2.0, 1.0},
        {"t4", {8, 4, 10, 1}, 1.5, 1.0},
    };
    return w;
}

inline msr::Workload example_three(double rho) {
    msr::Workload w;
    w.capacity = {20, 15, 50};
    w.types = {
        {"t1", {3, 7, 1}, rho * 0.5, 1.0},
        {"t2", {4, 1, 1}, rho * 2.0, 1.0},
        {"t3", {10, 1, 5}, rho * 1.0, 1.0},
    };
    return w;
}

inline msr::Workload mm1_workload(double lambda, double mu = 1.0) {
    msr::Workload w;
    w.capacity = {1};
    w.types = {{"job", {1}, lambda, mu}};
    return w;
}

inline msr::Workload mmk_workload(int k, double rho, double mu = 1.0) {
    msr::Workload w;
    w.capacity = {static_cast<double>(k)};
    w.types = {{"job", {1}, rho * k * mu, mu}};
    return w;
}

// Mean number in system for M/M/k by direct stationary summation (analytic
// geometric tail), independent of the Erlang-C formula under test.
inline double mmk_mean_jobs(int k, double rho, double /*mu*/ = 1.0) {
    double a = rho * k;  // offered load
    double q = 1.0, z = 1.0, en = 0.0;
    for (int n = 1; n <= k; ++n) {
        q *= a / n;
        z += q;
        en += n * q;
    }
    // States above k: q_k * rho^m for m >= 1.
    z += q * rho / (1.0 - rho);
    en += q * (k * rho / (1.0 - rho) + rho / ((1.0 - rho) * (1.0 - rho)));
    return en / z;
}
