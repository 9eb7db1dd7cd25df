#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msr/analysis.hpp"
#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/policy.hpp"
#include "msr/sim.hpp"
#include "msr/synthesis.hpp"
#include "msr/trace.hpp"

namespace msr {

using nlohmann::json;

// Everything cmd_synth knows: the optimization output plus the concrete
// modulating process built from it.
struct PolicyFile {
    SynthesisResult synthesis;
    PolicyMode mode = PolicyMode::Pmsr;
    double alpha = 1.0;
    double gamma = 0.0;
    ModulatingProcess process;
};

namespace detail {

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

inline void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(ctx + ": field '" + key + "': " + e.what());
    }
}

}  // namespace detail

// ---- workload ----

inline json workload_to_json(const Workload& w) {
    json types = json::array();
    for (const JobType& t : w.types)
        types.push_back(
            {{"name", t.name}, {"demand", t.demand}, {"lambda", t.lambda}, {"mu", t.mu}});
    return {{"capacity", w.capacity}, {"types", types}};
}

inline Workload workload_from_json(const json& j) {
    Workload w;
    w.capacity = detail::get_field<Vec>(j, "capacity", "workload");
    for (const json& tj : detail::get_field<json>(j, "types", "workload")) {
        JobType t;
        t.name = tj.value("name", "type" + std::to_string(w.types.size()));
        t.demand = detail::get_field<Vec>(tj, "demand", "workload type");
        t.lambda = detail::get_field<double>(tj, "lambda", "workload type");
        t.mu = detail::get_field<double>(tj, "mu", "workload type");
        w.types.push_back(t);
    }
    try {
        w.validate();
    } catch (const std::exception& e) {
        throw ParseError(std::string("workload: ") + e.what());
    }
    return w;
}

inline Workload load_workload(const std::string& path) {
    return workload_from_json(detail::load_json_file(path));
}
inline void save_workload(const std::string& path, const Workload& w) {
    detail::save_json_file(path, workload_to_json(w));
}

// ---- policy (synthesis result + modulating process) ----

inline json process_to_json(const ModulatingProcess& mp) {
    json states = json::array();
    for (const ModState& st : mp.states)
        states.push_back({{"schedule", st.schedule},
                          {"kind", st.kind == StateKind::Working ? "working" : "switching"},
                          {"setup_counts", st.setup_counts},
                          {"teardown_type", st.teardown_type}});
    json rows = json::array();
    for (std::size_t i = 0; i < mp.num_states(); ++i) {
        Vec row(mp.num_states());
        for (std::size_t k = 0; k < mp.num_states(); ++k) row[k] = mp.generator(i, k);
        rows.push_back(row);
    }
    return {{"states", states}, {"generator", rows}, {"working_states", mp.working_states}};
}

inline ModulatingProcess process_from_json(const json& j) {
    ModulatingProcess mp;
    for (const json& sj : detail::get_field<json>(j, "states", "process")) {
        ModState st;
        st.schedule = detail::get_field<Schedule>(sj, "schedule", "process state");
        std::string kind = detail::get_field<std::string>(sj, "kind", "process state");
        if (kind == "working")
            st.kind = StateKind::Working;
        else if (kind == "switching")
            st.kind = StateKind::Switching;
        else
            throw ParseError("process state: unknown kind '" + kind + "'");
        st.setup_counts = sj.value("setup_counts", Schedule{});
        st.teardown_type = sj.value("teardown_type", -1);
        mp.states.push_back(st);
    }
    auto rows = detail::get_field<std::vector<Vec>>(j, "generator", "process");
    const std::size_t n = mp.states.size();
    if (rows.size() != n) throw ParseError("process: generator row count mismatch");
    mp.generator = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw ParseError("process: generator column count mismatch");
        for (std::size_t k = 0; k < n; ++k) mp.generator(i, k) = rows[i][k];
    }
    mp.working_states = detail::get_field<std::vector<std::size_t>>(j, "working_states", "process");
    for (std::size_t s : mp.working_states)
        if (s >= n) throw ParseError("process: working state index out of range");
    return mp;
}

inline json policy_to_json(const PolicyFile& p) {
    return {{"synthesis",
             {{"candidates", p.synthesis.candidates},
              {"pi", p.synthesis.pi},
              {"rho_per_type", p.synthesis.rho_per_type},
              {"rho_max", p.synthesis.rho_max},
              {"feasible", p.synthesis.feasible}}},
            {"mode", to_string(p.mode)},
            {"alpha", p.alpha},
            {"gamma", p.gamma},
            {"process", process_to_json(p.process)}};
}

inline PolicyFile policy_from_json(const json& j) {
    PolicyFile p;
    const json& sj = detail::get_field<json>(j, "synthesis", "policy");
    p.synthesis.candidates = detail::get_field<std::vector<Schedule>>(sj, "candidates", "synthesis");
    p.synthesis.pi = detail::get_field<Vec>(sj, "pi", "synthesis");
    p.synthesis.rho_per_type = detail::get_field<Vec>(sj, "rho_per_type", "synthesis");
    p.synthesis.rho_max = detail::get_field<double>(sj, "rho_max", "synthesis");
    p.synthesis.feasible = detail::get_field<bool>(sj, "feasible", "synthesis");
    p.mode = policy_mode_from_string(detail::get_field<std::string>(j, "mode", "policy"));
    p.alpha = detail::get_field<double>(j, "alpha", "policy");
    p.gamma = j.value("gamma", 0.0);
    p.process = process_from_json(detail::get_field<json>(j, "process", "policy"));
    return p;
}

inline PolicyFile load_policy(const std::string& path) {
    return policy_from_json(detail::load_json_file(path));
}
inline void save_policy(const std::string& path, const PolicyFile& p) {
    detail::save_json_file(path, policy_to_json(p));
}

// ---- analysis report ----

inline json analysis_to_json(const AnalysisReport& r) {
    json types = json::array();
    for (const TypeAnalysis& t : r.types)
        types.push_back({{"rho", t.rho},
                         {"beta", t.beta},
                         {"e_delta_nu", t.e_delta_nu},
                         {"k_star", t.k_star},
                         {"p_queue", t.p_queue},
                         {"lower", t.lower},
                         {"upper", t.upper},
                         {"approx", t.approx},
                         {"unstable", t.unstable}});
    return {{"types", types},
            {"any_unstable", r.any_unstable},
            {"total_lower", r.total_lower},
            {"total_upper", r.total_upper},
            {"total_approx", r.total_approx},
            {"mean_response_time", r.mean_response_time},
            {"lambda_weighted_queue", r.lambda_weighted_queue}};
}

inline void save_analysis(const std::string& path, const AnalysisReport& r) {
    detail::save_json_file(path, analysis_to_json(r));
}

// ---- simulation report ----

inline json sim_to_json(const SimReport& r) {
    json types = json::array();
    for (const TypeStats& t : r.per_type)
        types.push_back({{"mean_queue", t.mean_queue},
                         {"queue_ci", t.queue_ci},
                         {"mean_response", t.mean_response},
                         {"response_ci", t.response_ci},
                         {"unused_fraction", t.unused_fraction},
                         {"completions", t.completions},
                         {"potential", t.potential},
                         {"unused", t.unused}});
    return {{"per_type", types},
            {"total_queue_mean", r.total_queue_mean},
            {"total_queue_ci", r.total_queue_ci},
            {"mean_response", r.mean_response},
            {"response_ci", r.response_ci},
            {"switching_fraction", r.switching_fraction},
            {"throughput", r.throughput},
            {"total_completions", r.total_completions},
            {"preemptions", r.preemptions},
            {"replications", r.replications},
            {"unstable", r.unstable}};
}

inline void save_sim(const std::string& path, const SimReport& r) {
    detail::save_json_file(path, sim_to_json(r));
}

// ---- typed trace summary ----

inline json typed_trace_to_json(const TypedTrace& tt) {
    double span = 0.0;
    if (!tt.records.empty())
        span = tt.records.back().arrival_time - tt.records.front().arrival_time;
    json types = json::array();
    Vec dur_sum(tt.types.size(), 0.0);
    for (std::size_t k = 0; k < tt.records.size(); ++k)
        dur_sum[tt.assignment[k]] += tt.records[k].duration;
    for (std::size_t tix = 0; tix < tt.types.size(); ++tix) {
        const auto& td = tt.types[tix];
        double lam = span > 0.0 ? static_cast<double>(td.count) / span
                                : std::numeric_limits<double>::quiet_NaN();
        double mu = td.count > 0 ? static_cast<double>(td.count) / dur_sum[tix]
                                 : std::numeric_limits<double>::quiet_NaN();
        types.push_back({{"demand", td.demand},
                         {"count", td.count},
                         {"lambda_hat", lam},
                         {"mu_hat", mu}});
    }
    return {{"types", types},
            {"record_count", tt.records.size()},
            {"timespan", span}};
}

inline void save_typed_trace(const std::string& path, const TypedTrace& tt) {
    detail::save_json_file(path, typed_trace_to_json(tt));
}

}  // namespace msr
