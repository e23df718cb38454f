#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "compass/data.hpp"

namespace compass::testing {

/// PM-100-shaped jobs: run_time = 1000 / gpus + 5 * nodes, node_power = 150 * nodes + 40 * gpus.
inline std::string pm100_csv(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> nodes(1, 16), gpus(1, 64), cores(1, 48), state(0, 9);
    std::ostringstream out;
    out << "num_nodes_req,num_gpus_req,cores_per_task,job_state,run_time,node_power\n";
    for (std::size_t i = 0; i < n; ++i) {
        const int nn = nodes(rng), g = gpus(rng), c = cores(rng), s = state(rng);
        const char* js = s < 7 ? "completed" : (s < 9 ? "failed" : "timeout");
        out << nn << ',' << g << ',' << c << ',' << js << ',' << 1000.0 / g + 5.0 * nn << ',' << 150.0 * nn + 40.0 * g
            << '\n';
    }
    return out.str();
}

inline const char* pm100_hints() {
    return R"({"columns":[
        {"name":"job_state","role":"system_feature"},
        {"name":"run_time","role":"target","target_task":"regression"},
        {"name":"node_power","role":"target","target_task":"regression"}]})";
}

inline IngestOptions pm100_options(std::uint64_t seed = 7) {
    IngestOptions o;
    o.hints = parse_schema_hints(pm100_hints());
    o.seed = seed;
    o.id = "pm100";
    return o;
}

/// NPB-like runs: app and algorithm are categorical; perf_variation depends
/// mostly on algorithm (rand is noisy, spr and blk are steady).
inline std::string npb_csv(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const char* apps[] = {"CG", "FT", "MG"};
    const char* algos[] = {"blk", "rand", "spr"};
    const double algo_var[] = {0.12, 0.30, 0.10};
    const double app_var[] = {0.02, 0.05, 0.0};
    std::uniform_int_distribution<int> pick3(0, 2), nodes(1, 32);
    std::ostringstream out;
    out << "app,algorithm,nodes,perf_variation\n";
    for (std::size_t i = 0; i < n; ++i) {
        const int a = pick3(rng), g = pick3(rng), nn = nodes(rng);
        out << apps[a] << ',' << algos[g] << ',' << nn << ',' << algo_var[g] + app_var[a] + 0.001 * nn << '\n';
    }
    return out.str();
}

inline IngestOptions npb_options(std::uint64_t seed = 3) {
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[
        {"name":"app","mutable":false},
        {"name":"perf_variation","role":"target","target_task":"regression"}]})");
    o.seed = seed;
    o.id = "npb";
    return o;
}

/// Stencil runs: runtime = 3 * depth + 0.5 * width.
inline std::string stencil_csv(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> depth(1, 40), width(1, 20);
    std::ostringstream out;
    out << "depth,width,runtime\n";
    for (std::size_t i = 0; i < n; ++i) {
        const int d = depth(rng), w = width(rng);
        out << d << ',' << w << ',' << 3.0 * d + 0.5 * w << '\n';
    }
    return out.str();
}

inline IngestOptions stencil_options(std::uint64_t seed = 5) {
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"runtime","role":"target"}]})");
    o.seed = seed;
    o.id = "stencil";
    return o;
}

/// Two numeric features in a dense blob around the origin plus a sparse ring.
inline std::string blob_csv(std::size_t dense, std::size_t sparse, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 6.283185307179586);
    std::ostringstream out;
    out.precision(17);
    out << "a,b,kind,y\n";
    for (std::size_t i = 0; i < dense + sparse; ++i) {
        double a, b;
        if (i < dense) {
            a = g(rng);
            b = g(rng);
        } else {
            const double t = angle(rng), r = 6.0 + 2.0 * g(rng);
            a = r * std::cos(t);
            b = r * std::sin(t);
        }
        out << a << ',' << b << ',' << (i % 3 == 0 ? "x" : "y") << ',' << a * a + b << '\n';
    }
    return out.str();
}

inline IngestOptions blob_options(std::uint64_t seed = 11) {
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"y","role":"target"}]})");
    o.seed = seed;
    o.id = "blob";
    return o;
}

} // namespace compass::testing
