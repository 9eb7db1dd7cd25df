// msrtool: synthesize, analyze, simulate, sweep, and trace-drive MSR policies.
// Exit codes: 0 ok, 2 input error, 3 infeasible/unstable analytic, 4 sim guard.
#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "msr/analysis.hpp"
#include "msr/json_io.hpp"
#include "msr/policy.hpp"
#include "msr/rng.hpp"
#include "msr/sim.hpp"
#include "msr/synthesis.hpp"
#include "msr/trace.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kOk = 0, kInputError = 2, kInfeasible = 3, kSimUnstable = 4;

using msr::json;

void write_manifest(const std::string& command, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
    json m = {{"command", command},
              {"config", config},
              {"seed", seed},
              {"tool_version", kVersion},
              {"outputs", outputs}};
    msr::detail::save_json_file(outputs.front() + ".manifest.json", m);
}

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Options shared by every simulating command.
struct SimOpts {
    double horizon = 10000.0;
    double warmup = -1.0;
    int reps = 5;
    std::uint64_t seed = 1;
    std::size_t max_jobs = 1000000;
    bool backfill = false;
    std::string events;

    void attach(CLI::App* cmd, bool with_backfill = true) {
        cmd->add_option("--horizon", horizon, "simulated time per replication");
        cmd->add_option("--warmup", warmup, "warmup time discarded per replication (default 20%)");
        cmd->add_option("--reps", reps, "number of replications");
        cmd->add_option("--seed", seed, "master random seed");
        cmd->add_option("--max-jobs", max_jobs, "instability guard: abort past this backlog");
        if (with_backfill) cmd->add_flag("--backfill", backfill, "fill leftover capacity FCFS");
        cmd->add_option("--events", events, "also write a per-event CSV log to this path");
    }
    msr::SimConfig config() const {
        msr::SimConfig cfg;
        cfg.horizon = horizon;
        cfg.warmup = warmup;
        cfg.replications = reps;
        cfg.seed = seed;
        cfg.max_total_jobs = max_jobs;
        if (!events.empty()) {
            cfg.log_events = true;
            cfg.event_log_path = events;
        }
        return cfg;
    }
    json to_json() const {
        return {{"horizon", horizon}, {"warmup", warmup},     {"reps", reps},
                {"seed", seed},       {"max_jobs", max_jobs}, {"backfill", backfill}};
    }
};

int report_sim(const msr::SimReport& rep, const std::string& out) {
    msr::save_sim(out, rep);
    if (rep.unstable) {
        std::fprintf(stderr, "instability guard tripped: backlog exceeded the job cap; "
                             "results in %s are partial\n", out.c_str());
        return kSimUnstable;
    }
    std::printf("mean response %s  mean queue %s  (+-%s at 95%%)  -> %s\n",
                fmt9(rep.mean_response).c_str(), fmt9(rep.total_queue_mean).c_str(),
                fmt9(rep.total_queue_ci).c_str(), out.c_str());
    return kOk;
}

// ---- synth ----

int cmd_synth(const std::string& workload_path, const std::string& out, const std::string& mode_s,
              double alpha, double gamma, bool allow_unstable) {
    msr::Workload w = msr::load_workload(workload_path);
    msr::PolicyMode mode = msr::policy_mode_from_string(mode_s);
    if (mode == msr::PolicyMode::Smsr && !(gamma > 0.0))
        throw msr::InvalidInput("synth: smsr needs --gamma > 0");
    msr::SynthesisResult syn = msr::synthesize(w);
    if (!syn.feasible && !allow_unstable) {
        std::fprintf(stderr, "workload is infeasible: rho_max = %s >= 1 "
                             "(--allow-unstable emits the policy anyway)\n",
                     fmt9(syn.rho_max).c_str());
        return kInfeasible;
    }
    msr::PolicyFile pf;
    pf.synthesis = syn;
    pf.mode = mode;
    pf.alpha = alpha;
    pf.gamma = mode == msr::PolicyMode::Smsr ? gamma : 0.0;
    pf.process = msr::build_policy(w, msr::to_policy_spec(syn, mode, alpha, pf.gamma));
    msr::save_policy(out, pf);
    write_manifest("synth",
                   {{"workload", workload_path},
                    {"mode", mode_s},
                    {"alpha", alpha},
                    {"gamma", pf.gamma},
                    {"allow_unstable", allow_unstable}},
                   0, {out});
    std::printf("rho_max %s (%s), %zu support schedules, %zu states -> %s\n",
                fmt9(syn.rho_max).c_str(), syn.feasible ? "feasible" : "INFEASIBLE",
                syn.candidates.size(), pf.process.num_states(), out.c_str());
    return kOk;
}

// ---- analyze ----

int cmd_analyze(const std::string& policy_path, const std::string& workload_path,
                const std::string& out) {
    msr::PolicyFile pf = msr::load_policy(policy_path);
    msr::Workload w = msr::load_workload(workload_path);
    msr::AnalysisReport rep = msr::analyze(pf.process, w);
    msr::save_analysis(out, rep);
    write_manifest("analyze", {{"policy", policy_path}, {"workload", workload_path}}, 0, {out});
    if (rep.any_unstable) {
        for (std::size_t i = 0; i < rep.types.size(); ++i)
            if (rep.types[i].unstable)
                std::fprintf(stderr, "type '%s' is unstable under this policy (rho = %s)\n",
                             w.types[i].name.c_str(), fmt9(rep.types[i].rho).c_str());
        return kInfeasible;
    }
    std::printf("mean queue in [%s, %s], approx %s, mean response %s -> %s\n",
                fmt9(rep.total_lower).c_str(), fmt9(rep.total_upper).c_str(),
                fmt9(rep.total_approx).c_str(), fmt9(rep.mean_response_time).c_str(),
                out.c_str());
    return kOk;
}

// ---- simulate ----

int cmd_simulate(const std::string& policy_arg, const std::string& workload_path,
                 const std::string& out, const SimOpts& so) {
    msr::Workload w = msr::load_workload(workload_path);
    msr::SimConfig cfg = so.config();
    msr::SimReport rep;
    if (policy_arg == "maxweight" || policy_arg == "firstfit") {
        if (so.backfill)
            throw msr::InvalidInput("simulate: --backfill applies to MSR policies only");
        rep = policy_arg == "maxweight" ? msr::simulate_maxweight(w, cfg)
                                        : msr::simulate_firstfit(w, cfg);
    } else {
        msr::PolicyFile pf = msr::load_policy(policy_arg);
        rep = msr::simulate_msr(w, pf.process, cfg, so.backfill);
    }
    int rc = report_sim(rep, out);
    write_manifest("simulate",
                   {{"policy", policy_arg}, {"workload", workload_path}, {"sim", so.to_json()}},
                   so.seed, {out});
    return rc;
}

// ---- sweep ----

struct SweepRow {
    double grid_value = 0.0;
    std::string policy;
    std::string status;                   // ok | analytic_unstable | sim_unstable | error:...
    std::vector<std::string> cells;       // 5 per type: sim mean, sim ci, lower, approx, upper
};

int cmd_sweep(const std::string& workload_path, const std::string& out,
              const std::string& dimension, std::vector<double> grid,
              std::vector<std::string> policies, double alpha, double gamma, const SimOpts& so) {
    msr::Workload base = msr::load_workload(workload_path);
    if (grid.empty()) throw msr::InvalidInput("sweep: --grid must not be empty");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!(grid[g] > 0.0)) throw msr::InvalidInput("sweep: grid values must be positive");
        if (g > 0 && grid[g] <= grid[g - 1])
            throw msr::InvalidInput("sweep: grid must be strictly increasing");
    }
    if (dimension != "load" && dimension != "alpha" && dimension != "gamma")
        throw msr::InvalidInput("sweep: --dimension must be load, alpha, or gamma");
    for (const std::string& p : policies)
        if (p != "pmsr" && p != "nmsr" && p != "smsr" && p != "maxweight" && p != "firstfit")
            throw msr::InvalidInput("sweep: unknown policy '" + p + "'");
    double base_rho = msr::system_load(base);

    std::vector<SweepRow> rows;
    std::size_t ok_rows = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t p = 0; p < policies.size(); ++p) {
            SweepRow row;
            row.grid_value = grid[g];
            row.policy = policies[p];
            row.cells.assign(base.num_types() * 5, "");
            msr::SimConfig cfg = so.config();
            cfg.seed = msr::mix_seed(so.seed, rows.size());
            try {
                msr::Workload w = base;
                if (dimension == "load")
                    for (msr::JobType& t : w.types) t.lambda *= grid[g] / base_rho;
                bool analytic_unstable = false;
                msr::SimReport rep;
                if (row.policy == "maxweight" || row.policy == "firstfit") {
                    rep = row.policy == "maxweight" ? msr::simulate_maxweight(w, cfg)
                                                    : msr::simulate_firstfit(w, cfg);
                } else {
                    double a = dimension == "alpha" ? grid[g] : alpha;
                    double gm = dimension == "gamma" ? grid[g] : gamma;
                    auto mode = msr::policy_mode_from_string(row.policy);
                    auto syn = msr::synthesize(w);
                    auto mp = msr::build_policy(
                        w, msr::to_policy_spec(syn, mode, a,
                                               mode == msr::PolicyMode::Smsr ? gm : 0.0));
                    msr::AnalysisReport an = msr::analyze(mp, w);
                    analytic_unstable = an.any_unstable;
                    for (std::size_t i = 0; i < base.num_types(); ++i) {
                        row.cells[i * 5 + 2] = fmt9(an.types[i].lower);
                        row.cells[i * 5 + 3] = fmt9(an.types[i].approx);
                        row.cells[i * 5 + 4] = fmt9(an.types[i].upper);
                    }
                    rep = msr::simulate_msr(w, mp, cfg, so.backfill);
                }
                for (std::size_t i = 0; i < base.num_types(); ++i) {
                    row.cells[i * 5 + 0] = fmt9(rep.per_type[i].mean_queue);
                    row.cells[i * 5 + 1] = fmt9(rep.per_type[i].queue_ci);
                }
                row.status = rep.unstable          ? "sim_unstable"
                             : analytic_unstable   ? "analytic_unstable"
                                                   : "ok";
                if (row.status == "ok") ++ok_rows;
            } catch (const std::exception& e) {
                row.status = std::string("error:") + e.what();
                for (char& c : row.status)
                    if (c == ',' || c == '\n') c = ';';
            }
            rows.push_back(std::move(row));
        }
    }

    std::ofstream csv(out);
    if (!csv) throw msr::InvalidInput("cannot open " + out + " for writing");
    csv << "grid_value,policy,status";
    for (const msr::JobType& t : base.types)
        csv << ",sim_mean_" << t.name << ",sim_ci_" << t.name << ",lower_" << t.name
            << ",approx_" << t.name << ",upper_" << t.name;
    csv << "\n";
    for (const SweepRow& r : rows) {
        csv << fmt9(r.grid_value) << ',' << r.policy << ',' << r.status;
        for (const std::string& c : r.cells) csv << ',' << c;
        csv << "\n";
    }
    csv.close();

    json cfg_json = {{"workload", workload_path}, {"dimension", dimension},
                     {"grid", grid},              {"policies", policies},
                     {"alpha", alpha},            {"gamma", gamma},
                     {"sim", so.to_json()}};
    write_manifest("sweep", cfg_json, so.seed, {out});
    std::printf("%zu/%zu rows ok -> %s\n", ok_rows, rows.size(), out.c_str());
    return ok_rows > 0 ? kOk : kInfeasible;
}

// ---- trace ----

struct TraceOpts {
    double tolerance = 0.001;
    int top_n = 10;
    double keep = 1.0;
    std::uint64_t seed = 1;

    void attach(CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--tolerance", tolerance, "relative demand tolerance for grouping");
        cmd->add_option("--top-n", top_n, "keep only the N most frequent demand clusters");
        cmd->add_option("--keep", keep, "thinning probability (0, 1]");
        if (with_seed) cmd->add_option("--seed", seed, "seed for thinning");
    }
    msr::TypedTrace build(const std::string& path) const {
        auto records = msr::parse_trace(path);
        auto tt = msr::group_types(records, tolerance, static_cast<std::size_t>(top_n));
        if (keep < 1.0) tt = msr::downsample(tt, keep, seed);
        return tt;
    }
    json to_json() const {
        return {{"tolerance", tolerance}, {"top_n", top_n}, {"keep", keep}, {"seed", seed}};
    }
};

int cmd_trace_prep(const std::string& trace_path, const std::string& out, const TraceOpts& to) {
    msr::TypedTrace tt = to.build(trace_path);
    msr::save_typed_trace(out, tt);
    write_manifest("trace prep", {{"trace", trace_path}, {"prep", to.to_json()}}, to.seed, {out});
    std::printf("%zu records in %zu types -> %s\n", tt.records.size(), tt.types.size(),
                out.c_str());
    return kOk;
}

int cmd_trace_sim(const std::string& trace_path, const std::string& out, TraceOpts to,
                  const msr::Vec& capacity, const std::string& mode_s, double alpha, double gamma,
                  SimOpts so) {
    to.seed = so.seed;  // one seed drives both thinning and replay
    msr::TypedTrace tt = to.build(trace_path);
    msr::Workload w = msr::fit_workload(tt, capacity);
    msr::PolicyMode mode = msr::policy_mode_from_string(mode_s);
    msr::SynthesisResult syn = msr::synthesize(w);
    if (!syn.feasible) {
        std::fprintf(stderr, "fitted workload is infeasible (rho_max = %s); thin the trace "
                             "with --keep or raise --capacity\n", fmt9(syn.rho_max).c_str());
        return kInfeasible;
    }
    auto mp = msr::build_policy(
        w, msr::to_policy_spec(syn, mode, alpha, mode == msr::PolicyMode::Smsr ? gamma : 0.0));
    std::vector<msr::TraceArrival> arrivals = msr::to_trace_arrivals(tt);
    msr::SimConfig cfg = so.config();
    cfg.source = msr::ArrivalSource::Trace;
    cfg.trace = &arrivals;
    if (so.horizon == 10000.0 && !arrivals.empty())  // default: cover the whole trace
        cfg.horizon = std::max(10.0, arrivals.back().time * 1.2);
    msr::SimReport rep = msr::simulate_msr(w, mp, cfg, so.backfill);
    int rc = report_sim(rep, out);
    write_manifest("trace sim",
                   {{"trace", trace_path},
                    {"prep", to.to_json()},
                    {"capacity", capacity},
                    {"mode", mode_s},
                    {"alpha", alpha},
                    {"gamma", gamma},
                    {"fitted_rho_max", syn.rho_max},
                    {"sim", so.to_json()}},
                   so.seed, {out});
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MSR policy toolkit: synthesis, analysis, simulation, sweeps, traces"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("msrtool ") + kVersion);

    // synth
    std::string workload_path, out, mode = "pmsr";
    double alpha = 1.0, gamma = 0.0;
    bool allow_unstable = false;
    auto* synth = app.add_subcommand("synth", "optimize a schedule mixture and build a policy");
    synth->add_option("workload", workload_path, "workload JSON")->required();
    synth->add_option("--out", out, "policy JSON to write")->required();
    synth->add_option("--mode", mode, "pmsr | nmsr | smsr");
    synth->add_option("--alpha", alpha, "switching rate");
    synth->add_option("--gamma", gamma, "setup rate (smsr)");
    synth->add_flag("--allow-unstable", allow_unstable, "emit the policy even when rho_max >= 1");

    // analyze
    std::string policy_path, an_workload, an_out;
    auto* analyze = app.add_subcommand("analyze", "queue-length bounds and approximation");
    analyze->add_option("policy", policy_path, "policy JSON")->required();
    analyze->add_option("workload", an_workload, "workload JSON")->required();
    analyze->add_option("--out", an_out, "report JSON to write")->required();

    // simulate
    std::string sim_policy, sim_workload, sim_out;
    SimOpts sim_opts;
    auto* simulate = app.add_subcommand("simulate", "discrete-event simulation");
    simulate->add_option("policy", sim_policy, "policy JSON, or 'maxweight' / 'firstfit'")
        ->required();
    simulate->add_option("workload", sim_workload, "workload JSON")->required();
    simulate->add_option("--out", sim_out, "report JSON to write")->required();
    sim_opts.attach(simulate);

    // sweep
    std::string sw_workload, sw_out, sw_dim = "load";
    std::vector<double> sw_grid;
    std::vector<std::string> sw_policies = {"pmsr"};
    double sw_alpha = 2.0, sw_gamma = 10.0;
    SimOpts sw_sim;
    auto* sweep = app.add_subcommand("sweep", "grid of (policy x load/alpha/gamma) runs to CSV");
    sweep->add_option("workload", sw_workload, "workload JSON")->required();
    sweep->add_option("--out", sw_out, "CSV to write")->required();
    sweep->add_option("--dimension", sw_dim, "load | alpha | gamma");
    sweep->add_option("--grid", sw_grid, "comma-separated grid values")
        ->required()
        ->delimiter(',');
    sweep->add_option("--policies", sw_policies, "pmsr,nmsr,smsr,maxweight,firstfit")
        ->delimiter(',');
    sweep->add_option("--alpha", sw_alpha, "switching rate when not the sweep dimension");
    sweep->add_option("--gamma", sw_gamma, "setup rate when not the sweep dimension");
    sw_sim.attach(sweep);

    // trace prep / sim
    auto* trace = app.add_subcommand("trace", "cluster, thin, fit, and replay job traces");
    trace->require_subcommand(1);
    std::string tr_path, tr_out;
    TraceOpts tr_opts;
    auto* prep = trace->add_subcommand("prep", "cluster and thin a CSV trace");
    prep->add_option("trace", tr_path, "CSV with arrival_time,cpu,mem,duration")->required();
    prep->add_option("--out", tr_out, "typed-trace JSON to write")->required();
    tr_opts.attach(prep);

    std::string ts_path, ts_out, ts_mode = "pmsr";
    TraceOpts ts_opts;
    msr::Vec ts_capacity;
    double ts_alpha = 1.0, ts_gamma = 10.0;
    SimOpts ts_sim;
    auto* tsim = trace->add_subcommand("sim", "fit a workload from a trace and replay it");
    tsim->add_option("trace", ts_path, "CSV with arrival_time,cpu,mem,duration")->required();
    tsim->add_option("--out", ts_out, "sim report JSON to write")->required();
    tsim->add_option("--capacity", ts_capacity, "server capacity, e.g. 64,128")
        ->required()
        ->delimiter(',');
    ts_opts.attach(tsim, false);
    tsim->add_option("--mode", ts_mode, "pmsr | nmsr | smsr");
    tsim->add_option("--alpha", ts_alpha, "switching rate");
    tsim->add_option("--gamma", ts_gamma, "setup rate (smsr)");
    ts_sim.attach(tsim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kInputError;
    }

    try {
        if (synth->parsed())
            return cmd_synth(workload_path, out, mode, alpha, gamma, allow_unstable);
        if (analyze->parsed()) return cmd_analyze(policy_path, an_workload, an_out);
        if (simulate->parsed()) return cmd_simulate(sim_policy, sim_workload, sim_out, sim_opts);
        if (sweep->parsed())
            return cmd_sweep(sw_workload, sw_out, sw_dim, sw_grid, sw_policies, sw_alpha,
                             sw_gamma, sw_sim);
        if (prep->parsed()) return cmd_trace_prep(tr_path, tr_out, tr_opts);
        if (tsim->parsed())
            return cmd_trace_sim(ts_path, ts_out, ts_opts, ts_capacity, ts_mode, ts_alpha,
                                 ts_gamma, ts_sim);
    } catch (const msr::InfeasibleWorkload& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInfeasible;
    } catch (const msr::UnstableType& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInfeasible;
    } catch (const msr::TypeNeverServed& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInfeasible;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    }
    return kInputError;
}
