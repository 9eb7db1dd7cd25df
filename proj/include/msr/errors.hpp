#pragma once

#include <stdexcept>
#include <string>

namespace msr {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: input/parse problems -> 2, analytic infeasibility/instability -> 3,
// simulation divergence -> 4.

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResourceLimit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularSystem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReducibleChain : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LpInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LpUnbounded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Workload cannot be served at all: some type with positive arrival rate can
// never be scheduled.
struct InfeasibleWorkload : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A single job type is overloaded (rho_i >= 1) under the given policy.
struct UnstableType : std::runtime_error {
    UnstableType(int type, double rho, const std::string& what)
        : std::runtime_error(what), type_index(type), rho(rho) {}
    int type_index;
    double rho;
};

struct TypeNeverServed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace msr
