#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "msr/core.hpp"
#include "msr/errors.hpp"
#include "msr/rng.hpp"
#include "msr/sim.hpp"

namespace msr {

// One job from a cluster trace: normalized cpu/mem demand plus an observed
// duration in seconds.
struct TraceRecord {
    double arrival_time = 0.0;
    double cpu = 0.0;
    double mem = 0.0;
    double duration = 0.0;
};

// Records clustered into types by demand similarity. `assignment[k]` is the
// type of `records[k]`; dropped records are gone entirely.
struct TypedTrace {
    struct TypeDef {
        Vec demand;  // representative (cpu, mem) = demand of the founding record
        std::size_t count = 0;
    };
    std::vector<TypeDef> types;
    std::vector<TraceRecord> records;
    std::vector<std::size_t> assignment;
};

namespace detail {

inline bool parse_field(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
        return pos == tok.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

// Reads a CSV whose header starts with arrival_time,cpu,mem,duration (extra
// columns are ignored so e.g. a kill flag can ride along). Records come back
// sorted by arrival time; any malformed row aborts with its line number.
inline std::vector<TraceRecord> parse_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("trace: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("trace: " + path + " is empty (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_csv(line);
    const char* expect[] = {"arrival_time", "cpu", "mem", "duration"};
    if (header.size() < 4) throw ParseError("trace: " + path + ":1: header needs at least 4 columns");
    for (std::size_t c = 0; c < 4; ++c)
        if (detail::trim(header[c]) != expect[c])
            throw ParseError("trace: " + path + ":1: expected header column '" +
                             std::string(expect[c]) + "', got '" + detail::trim(header[c]) + "'");

    std::vector<TraceRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv(line);
        if (fields.size() < 4)
            throw ParseError("trace: " + path + ":" + std::to_string(lineno) +
                             ": expected at least 4 fields, got " + std::to_string(fields.size()));
        double v[4];
        for (std::size_t c = 0; c < 4; ++c)
            if (!detail::parse_field(detail::trim(fields[c]), v[c]))
                throw ParseError("trace: " + path + ":" + std::to_string(lineno) +
                                 ": non-numeric value '" + detail::trim(fields[c]) + "' in column " +
                                 expect[c]);
        TraceRecord rec{v[0], v[1], v[2], v[3]};
        if (rec.arrival_time < 0.0 || rec.cpu < 0.0 || rec.mem < 0.0)
            throw ParseError("trace: " + path + ":" + std::to_string(lineno) +
                             ": negative value");
        if (!(rec.duration > 0.0))
            throw ParseError("trace: " + path + ":" + std::to_string(lineno) +
                             ": duration must be positive");
        records.push_back(rec);
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const TraceRecord& a, const TraceRecord& b) {
                         return a.arrival_time < b.arrival_time;
                     });
    return records;
}

// Greedy demand clustering in arrival order: a record joins the first type
// whose representative is within `tolerance` relatively in both dimensions,
// else founds a new type. Only the top_n types by count are retained.
inline TypedTrace group_types(const std::vector<TraceRecord>& records, double tolerance = 0.001,
                              std::size_t top_n = 10) {
    if (!(tolerance > 0.0)) throw InvalidInput("group_types: tolerance must be positive");
    if (top_n < 1) throw InvalidInput("group_types: top_n must be >= 1");

    auto close = [tolerance](double x, double rep) {
        return std::abs(x - rep) <= tolerance * std::abs(rep);
    };
    std::vector<TypedTrace::TypeDef> types;
    std::vector<std::size_t> raw_assignment(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        const TraceRecord& r = records[k];
        std::size_t found = types.size();
        for (std::size_t tix = 0; tix < types.size(); ++tix)
            if (close(r.cpu, types[tix].demand[0]) && close(r.mem, types[tix].demand[1])) {
                found = tix;
                break;
            }
        if (found == types.size()) types.push_back({{r.cpu, r.mem}, 0});
        ++types[found].count;
        raw_assignment[k] = found;
    }

    // Top-n by count; ties keep the earlier-founded type.
    std::vector<std::size_t> order(types.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return types[a].count > types[b].count; });
    if (order.size() > top_n) order.resize(top_n);
    std::vector<std::size_t> remap(types.size(), types.size());
    TypedTrace tt;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        remap[order[rank]] = rank;
        tt.types.push_back(types[order[rank]]);
    }
    for (std::size_t k = 0; k < records.size(); ++k) {
        std::size_t t = remap[raw_assignment[k]];
        if (t == types.size()) continue;  // dropped type
        tt.records.push_back(records[k]);
        tt.assignment.push_back(t);
    }
    return tt;
}

// Bernoulli thinning: every record is kept independently with probability
// keep_fraction. Type definitions survive with recomputed counts.
inline TypedTrace downsample(const TypedTrace& tt, double keep_fraction, std::uint64_t seed) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
        throw InvalidInput("downsample: keep_fraction must be in (0, 1]");
    TypedTrace out;
    out.types = tt.types;
    for (auto& t : out.types) t.count = 0;
    Rng rng(mix_seed(seed, 0));
    for (std::size_t k = 0; k < tt.records.size(); ++k) {
        if (rng.uniform01() < keep_fraction) {
            out.records.push_back(tt.records[k]);
            out.assignment.push_back(tt.assignment[k]);
            ++out.types[tt.assignment[k]].count;
        }
    }
    return out;
}

// Per-type exponential fit over the observation window: lambda from the
// arrival count, mu from the mean duration, demand from the representative.
inline Workload fit_workload(const TypedTrace& tt, const Vec& capacity) {
    if (capacity.size() != 2) throw InvalidInput("fit_workload: capacity must be (cpu, mem)");
    if (tt.records.empty()) throw InvalidInput("fit_workload: no records");
    double t0 = tt.records.front().arrival_time;
    double t1 = tt.records.back().arrival_time;
    double span = t1 - t0;
    if (!(span > 0.0)) throw InvalidInput("fit_workload: trace timespan is zero");

    Workload w;
    w.capacity = capacity;
    Vec dur_sum(tt.types.size(), 0.0);
    for (std::size_t k = 0; k < tt.records.size(); ++k)
        dur_sum[tt.assignment[k]] += tt.records[k].duration;
    for (std::size_t tix = 0; tix < tt.types.size(); ++tix) {
        const auto& td = tt.types[tix];
        if (td.count < 2)
            throw InvalidInput("fit_workload: type " + std::to_string(tix) +
                               " has fewer than 2 records");
        JobType jt;
        jt.name = "type" + std::to_string(tix);
        jt.demand = td.demand;
        jt.lambda = static_cast<double>(td.count) / span;
        jt.mu = static_cast<double>(td.count) / dur_sum[tix];
        w.types.push_back(jt);
    }
    w.validate();
    return w;
}

// Replay view of a typed trace, shifted so the first arrival lands at 0.
inline std::vector<TraceArrival> to_trace_arrivals(const TypedTrace& tt) {
    std::vector<TraceArrival> out;
    if (tt.records.empty()) return out;
    out.reserve(tt.records.size());
    for (std::size_t k = 0; k < tt.records.size(); ++k)
        out.push_back({tt.records[k].arrival_time, tt.assignment[k], tt.records[k].duration});
    // The replay engine consumes arrivals in time order; records usually come
    // sorted from the parser, but grouping does not require it.
    std::stable_sort(out.begin(), out.end(),
                     [](const TraceArrival& a, const TraceArrival& b) { return a.time < b.time; });
    double t0 = out.front().time;
    for (TraceArrival& a : out) a.time -= t0;
    return out;
}

// Synthetic trace generator: bursts arrive Poisson per type, each burst holds
// a geometric number of jobs, durations are lognormal with the requested mean
// and coefficient of variation. mean_burst=1, duration_cv=1 approximates the
// plain Poisson/exponential case in rate and mean.
struct SyntheticType {
    double cpu = 0.0;
    double mem = 0.0;
    double burst_rate = 1.0;     // bursts per unit time
    double mean_burst = 1.0;     // >= 1; expected jobs per burst
    double mean_duration = 1.0;  // seconds
    double duration_cv = 1.0;    // 0 => deterministic durations
};

struct SyntheticTraceSpec {
    double horizon = 1000.0;
    std::uint64_t seed = 1;
    std::vector<SyntheticType> types;
};

inline std::vector<TraceRecord> generate_trace(const SyntheticTraceSpec& spec) {
    if (!(spec.horizon > 0.0)) throw InvalidInput("generate_trace: horizon must be positive");
    if (spec.types.empty()) throw InvalidInput("generate_trace: no types");
    std::vector<TraceRecord> out;
    for (std::size_t tix = 0; tix < spec.types.size(); ++tix) {
        const SyntheticType& ty = spec.types[tix];
        if (!(ty.burst_rate > 0.0) || ty.mean_burst < 1.0 || !(ty.mean_duration > 0.0) ||
            ty.duration_cv < 0.0)
            throw InvalidInput("generate_trace: bad parameters for type " + std::to_string(tix));
        // Lognormal(m, cv): sdlog^2 = ln(1+cv^2), meanlog = ln m - sdlog^2/2.
        double sl2 = std::log(1.0 + ty.duration_cv * ty.duration_cv);
        double meanlog = std::log(ty.mean_duration) - 0.5 * sl2;
        double sdlog = std::sqrt(sl2);
        Rng rng(mix_seed(spec.seed, tix));
        double t = 0.0;
        for (;;) {
            t += rng.exponential(ty.burst_rate);
            if (t >= spec.horizon) break;
            std::size_t n = 1;
            if (ty.mean_burst > 1.0) {
                // Geometric on {1,2,...} with mean b: success prob 1/b.
                double q = 1.0 - 1.0 / ty.mean_burst;
                double u = 1.0 - rng.uniform01();  // (0, 1]
                n = 1 + static_cast<std::size_t>(std::floor(std::log(u) / std::log(q)));
            }
            for (std::size_t j = 0; j < n; ++j) {
                double d = ty.duration_cv == 0.0 ? ty.mean_duration
                                                 : std::exp(meanlog + sdlog * rng.normal());
                out.push_back({t, ty.cpu, ty.mem, d});
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const TraceRecord& a, const TraceRecord& b) {
        return a.arrival_time < b.arrival_time;
    });
    return out;
}

inline void write_trace_csv(const std::vector<TraceRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("write_trace_csv: cannot open " + path);
    out << "arrival_time,cpu,mem,duration\n";
    char buf[160];
    for (const TraceRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g\n", r.arrival_time, r.cpu, r.mem,
                      r.duration);
        out << buf;
    }
}

}  // namespace msr
