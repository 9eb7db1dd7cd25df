// Shells out to the built tool (path in $MSRTOOL) and checks the contract:
// exit codes, artifact round-trips, manifests, and byte-level determinism.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "msr/json_io.hpp"
#include "msr/trace.hpp"

using namespace msr;
namespace fs = std::filesystem;

namespace {

const std::string kDir = "/tmp/msr_cli";

std::string tool() {
    const char* t = std::getenv("MSRTOOL");
    REQUIRE(t != nullptr);
    return t;
}

int run(const std::string& args) {
    std::string cmd = tool() + " " + args + " >" + kDir + "/out.txt 2>" + kDir + "/err.txt";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Setup {
    Setup() {
        fs::create_directories(kDir);
        save_workload(kDir + "/w08.json", example_three(0.8));
        save_workload(kDir + "/w13.json", example_three(1.3));
    }
};
Setup setup_once;

}  // namespace

TEST_CASE("synth writes a loadable policy and manifest") {
    REQUIRE(run("synth " + kDir + "/w08.json --out " + kDir + "/p.json --mode pmsr --alpha 2") ==
            0);
    PolicyFile pf = load_policy(kDir + "/p.json");
    REQUIRE(pf.mode == PolicyMode::Pmsr);
    REQUIRE(pf.alpha == 2.0);
    REQUIRE(pf.synthesis.feasible);
    REQUIRE(pf.process.num_states() == pf.synthesis.candidates.size());
    json m = detail::load_json_file(kDir + "/p.json.manifest.json");
    REQUIRE(m["command"] == "synth");
    REQUIRE(m["outputs"][0] == kDir + "/p.json");
    REQUIRE(m.contains("tool_version"));
}

TEST_CASE("synth exit codes") {
    // Infeasible load refuses unless overridden.
    fs::remove(kDir + "/p13.json");
    REQUIRE(run("synth " + kDir + "/w13.json --out " + kDir + "/p13.json") == 3);
    REQUIRE_FALSE(fs::exists(kDir + "/p13.json"));
    REQUIRE(run("synth " + kDir + "/w13.json --out " + kDir + "/p13.json --allow-unstable") == 0);
    REQUIRE(fs::exists(kDir + "/p13.json"));

    // Unservable type: demand exceeds capacity outright.
    Workload bad = example_three(0.5);
    bad.types[0].demand[0] = 1000.0;
    save_workload(kDir + "/wbad.json", bad);
    REQUIRE(run("synth " + kDir + "/wbad.json --out " + kDir + "/pbad.json") == 3);

    // Missing and malformed inputs.
    REQUIRE(run("synth " + kDir + "/nope.json --out " + kDir + "/x.json") == 2);
    std::ofstream(kDir + "/garbage.json") << "{not json";
    REQUIRE(run("synth " + kDir + "/garbage.json --out " + kDir + "/x.json") == 2);
    // smsr without a setup rate.
    REQUIRE(run("synth " + kDir + "/w08.json --out " + kDir + "/x.json --mode smsr") == 2);
    // Bad flags.
    REQUIRE(run("synth") == 2);
    REQUIRE(run("frobnicate") == 2);
    REQUIRE(run("--version") == 0);
}

TEST_CASE("analyze reports bounds and flags instability") {
    REQUIRE(run("analyze " + kDir + "/p.json " + kDir + "/w08.json --out " + kDir + "/a.json") ==
            0);
    json a = detail::load_json_file(kDir + "/a.json");
    REQUIRE(a["any_unstable"] == false);
    REQUIRE(a["types"].size() == 3);
    REQUIRE(double(a["total_lower"]) <= double(a["total_approx"]));
    REQUIRE(double(a["total_approx"]) <= double(a["total_upper"]));

    // Heavy switching makes nMSR analytically unstable at this load.
    REQUIRE(run("synth " + kDir + "/w08.json --out " + kDir + "/pn2.json --mode nmsr --alpha 2") ==
            0);
    REQUIRE(run("analyze " + kDir + "/pn2.json " + kDir + "/w08.json --out " + kDir +
                "/an2.json") == 3);
    json an = detail::load_json_file(kDir + "/an2.json");  // report still written
    REQUIRE(an["any_unstable"] == true);

    REQUIRE(run("analyze " + kDir + "/nope.json " + kDir + "/w08.json --out x.json") == 2);
}

TEST_CASE("simulate covers policies and baselines") {
    std::string sim = " --horizon 400 --reps 2 --seed 7 --out " + kDir + "/s.json";
    REQUIRE(run("simulate " + kDir + "/p.json " + kDir + "/w08.json" + sim) == 0);
    json s = detail::load_json_file(kDir + "/s.json");
    REQUIRE(s["unstable"] == false);
    REQUIRE(s["per_type"].size() == 3);
    REQUIRE(double(s["mean_response"]) > 0.0);

    REQUIRE(run("simulate maxweight " + kDir + "/w08.json" + sim) == 0);
    REQUIRE(run("simulate firstfit " + kDir + "/w08.json" + sim) == 0);
    REQUIRE(run("simulate " + kDir + "/p.json " + kDir + "/w08.json" + sim + " --backfill") == 0);
    REQUIRE(run("simulate maxweight " + kDir + "/w08.json" + sim + " --backfill") == 2);

    // Overload trips the guard; the partial report is still written.
    fs::remove(kDir + "/sg.json");
    REQUIRE(run("simulate " + kDir + "/p13.json " + kDir + "/w13.json --horizon 8000 --reps 2 "
                "--max-jobs 300 --out " + kDir + "/sg.json") == 4);
    json sg = detail::load_json_file(kDir + "/sg.json");
    REQUIRE(sg["unstable"] == true);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
    std::string args = "simulate " + kDir + "/p.json " + kDir + "/w08.json --horizon 300 "
                       "--reps 2 --seed 11 --out ";
    REQUIRE(run(args + kDir + "/d1.json") == 0);
    REQUIRE(run(args + kDir + "/d2.json") == 0);
    REQUIRE(slurp(kDir + "/d1.json") == slurp(kDir + "/d2.json"));

    REQUIRE(run("synth " + kDir + "/w08.json --out " + kDir + "/e1.json --alpha 2") == 0);
    REQUIRE(run("synth " + kDir + "/w08.json --out " + kDir + "/e2.json --alpha 2") == 0);
    REQUIRE(slurp(kDir + "/e1.json") == slurp(kDir + "/e2.json"));
}

TEST_CASE("sweep emits one ordered row per grid point and policy") {
    REQUIRE(run("sweep " + kDir + "/w08.json --dimension load --grid 0.5,0.7 "
                "--policies pmsr,maxweight --horizon 300 --reps 2 --seed 3 --out " +
                kDir + "/sw.csv") == 0);
    std::ifstream in(kDir + "/sw.csv");
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line ==
            "grid_value,policy,status"
            ",sim_mean_t1,sim_ci_t1,lower_t1,approx_t1,upper_t1"
            ",sim_mean_t2,sim_ci_t2,lower_t2,approx_t2,upper_t2"
            ",sim_mean_t3,sim_ci_t3,lower_t3,approx_t3,upper_t3");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    REQUIRE(rows[0].rfind("0.5,pmsr,ok,", 0) == 0);
    REQUIRE(rows[1].rfind("0.5,maxweight,ok,", 0) == 0);
    REQUIRE(rows[2].rfind("0.7,pmsr,ok,", 0) == 0);
    REQUIRE(rows[3].rfind("0.7,maxweight,ok,", 0) == 0);
    // Baselines have no analytic columns: trailing empties after sim mean/ci.
    std::stringstream ss(rows[1]);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells[5] == "");  // lower_t1 blank for maxweight
    REQUIRE(cells[3] != "");  // sim_mean_t1 present

    REQUIRE(run("sweep " + kDir + "/w08.json --dimension load --grid 0.7,0.5 --out x.csv") == 2);
    REQUIRE(run("sweep " + kDir + "/w08.json --dimension weird --grid 0.5 --out x.csv") == 2);

    // Determinism for the whole grid.
    REQUIRE(run("sweep " + kDir + "/w08.json --dimension alpha --grid 0.5,1 --policies pmsr "
                "--horizon 200 --reps 2 --seed 5 --out " + kDir + "/sa1.csv") == 0);
    REQUIRE(run("sweep " + kDir + "/w08.json --dimension alpha --grid 0.5,1 --policies pmsr "
                "--horizon 200 --reps 2 --seed 5 --out " + kDir + "/sa2.csv") == 0);
    REQUIRE(slurp(kDir + "/sa1.csv") == slurp(kDir + "/sa2.csv"));
}

TEST_CASE("trace prep and replay") {
    SyntheticTraceSpec spec;
    spec.horizon = 600.0;
    spec.seed = 4;
    spec.types = {{2.0, 4.0, 1.0, 1.0, 0.5, 1.0}, {1.0, 1.0, 2.0, 1.0, 0.25, 0.5}};
    write_trace_csv(generate_trace(spec), kDir + "/trace.csv");

    REQUIRE(run("trace prep " + kDir + "/trace.csv --out " + kDir + "/typed.json") == 0);
    json t = detail::load_json_file(kDir + "/typed.json");
    REQUIRE(t["types"].size() == 2);
    REQUIRE(t["record_count"].get<std::size_t>() > 100);

    REQUIRE(run("trace prep " + kDir + "/trace.csv --keep 0.5 --seed 2 --out " + kDir +
                "/half.json") == 0);
    json h = detail::load_json_file(kDir + "/half.json");
    auto full_n = t["record_count"].get<double>(), half_n = h["record_count"].get<double>();
    REQUIRE(half_n > 0.3 * full_n);
    REQUIRE(half_n < 0.7 * full_n);

    std::ofstream(kDir + "/bad.csv") << "arrival_time,cpu,mem,duration\n1,1,-1,1\n";
    REQUIRE(run("trace prep " + kDir + "/bad.csv --out x.json") == 2);

    REQUIRE(run("trace sim " + kDir + "/trace.csv --capacity 16,16 --reps 2 --out " + kDir +
                "/ts1.json") == 0);
    json s = detail::load_json_file(kDir + "/ts1.json");
    REQUIRE(s["total_completions"].get<std::size_t>() > 100);
    REQUIRE(run("trace sim " + kDir + "/trace.csv --capacity 16,16 --reps 2 --out " + kDir +
                "/ts2.json") == 0);
    REQUIRE(slurp(kDir + "/ts1.json") == slurp(kDir + "/ts2.json"));

    // A server that cannot hold the biggest job at all is an analytic failure.
    REQUIRE(run("trace sim " + kDir + "/trace.csv --capacity 2,2 --out x.json") == 3);
}
