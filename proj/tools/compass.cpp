// compass: batch front end mirroring the HTTP flows.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"
#include "compass/bench.hpp"
#include "compass/error.hpp"
#include "compass/pipeline.hpp"
#include "compass/serialize.hpp"
#include "compass/server.hpp"

using namespace compass;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
    if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
    if (!out) throw Error("cannot write " + path);
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

struct DataArgs {
    std::string data;
    std::string hints;
    std::vector<std::string> drop;
    std::uint64_t seed = 0;
    bool subsample = false;
    double retention = 0.2;

    void add(CLI::App* cmd) {
        cmd->add_option("-d,--data", data, "CSV dataset")->required();
        cmd->add_option("--hints", hints, "schema hints JSON file");
        cmd->add_option("--drop", drop, "columns to drop")->delimiter(',');
        cmd->add_option("--seed", seed, "seed for split, sampling and training");
        cmd->add_flag("--subsample", subsample, "enable loss-proportional subset sampling");
        cmd->add_option("--retention", retention, "subset retention fraction");
    }

    IngestOptions options() const {
        IngestOptions o;
        if (!hints.empty()) o.hints = parse_schema_hints(read_text(hints));
        o.drop_columns = drop;
        o.seed = seed;
        o.enable_subsampling = subsample;
        o.sampling.retention = retention;
        o.id = data;
        return o;
    }
};

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"compass: constrained counterfactual configuration search"};
    app.require_subcommand(1);

    DataArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "parse, split and summarize a dataset");
    ingest_args.add(ingest_cmd);

    DataArgs train_args;
    std::string train_out;
    std::vector<std::string> families;
    auto* train_cmd = app.add_subcommand("train", "select and fit the surrogate");
    train_args.add(train_cmd);
    train_cmd->add_option("-o,--output", train_out, "write the bundle here (.cmps)");
    train_cmd->add_option("--families", families, "candidate model families")->delimiter(',');

    DataArgs query_args;
    std::string query_file = "-";
    std::string model_file;
    bool include_retained = false;
    auto* query_cmd = app.add_subcommand("query", "run a recommend / reconfigure / what_if query");
    query_args.add(query_cmd);
    query_cmd->add_option("-q,--query", query_file, "query JSON file ('-' for stdin)");
    query_cmd->add_option("-m,--model", model_file, "previously trained bundle (.cmps)");
    query_cmd->add_flag("--all", include_retained, "include every retained candidate");

    std::string bench_model;
    std::size_t bench_queries = 10, bench_rows = 0;
    std::uint64_t bench_seed = 0;
    int bench_n = 200;
    std::vector<std::string> bench_mask;
    std::string bench_csv;
    bool bench_list = false;
    auto* bench_cmd = app.add_subcommand("bench", "analytical-model reconstruction benchmark");
    bench_cmd->add_option("--model", bench_model, "analytical model name");
    bench_cmd->add_option("--queries", bench_queries, "number of queries");
    bench_cmd->add_option("--rows", bench_rows, "dataset rows (0 = model default)");
    bench_cmd->add_option("--seed", bench_seed, "seed");
    bench_cmd->add_option("-n,--candidates", bench_n, "candidates retained per query");
    bench_cmd->add_option("--mask", bench_mask, "features to mask (default: all)")->delimiter(',');
    bench_cmd->add_option("--export-csv", bench_csv, "also write the generated dataset as CSV");
    bench_cmd->add_flag("--list", bench_list, "list the registered models");

    std::string host = "127.0.0.1";
    int port = std::stoi(env_or("COMPASS_PORT", "8080"));
    std::string data_dir = env_or("COMPASS_DATA_DIR", "compass-data");
    std::uint64_t serve_seed = std::stoull(env_or("COMPASS_SEED", "0"));
    auto* serve_cmd = app.add_subcommand("serve", "HTTP API");
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "port (env COMPASS_PORT)");
    serve_cmd->add_option("--data-dir", data_dir, "storage directory (env COMPASS_DATA_DIR)");
    serve_cmd->add_option("--seed", serve_seed, "default seed (env COMPASS_SEED)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd) {
            const auto handle = ingest(read_text(ingest_args.data), ingest_args.options());
            print(dataset_summary(handle));
            return 0;
        }
        if (*train_cmd) {
            const auto handle = ingest(read_text(train_args.data), train_args.options());
            std::vector<Family> fams;
            for (const auto& f : families) fams.push_back(family_from_string(f));
            if (fams.empty()) fams = default_families();
            const auto bundle = train_select(handle, fams, handle.seed());
            if (!train_out.empty()) write_text(train_out, persist(bundle));
            print(selection_report_to_json(bundle));
            return 0;
        }
        if (*query_cmd) {
            json qj = json::parse(read_text(query_file));
            if (qj.is_object() && !qj.contains("seed")) qj["seed"] = query_args.seed;
            const Query q = parse_query(qj);
            auto handle = std::make_shared<const DatasetHandle>(ingest(read_text(query_args.data), query_args.options()));
            std::shared_ptr<const SurrogateBundle> bundle;
            if (!model_file.empty()) bundle = std::make_shared<const SurrogateBundle>(load(read_text(model_file)));
            else bundle = std::make_shared<const SurrogateBundle>(train_select(*handle, default_families(), handle->seed()));
            const Session session = open_session(handle, bundle);
            const auto outcome = run_query(q, session);
            print(candidate_set_to_json(outcome.result, handle->schema(), include_retained));
            return outcome.result.target_unmet ? 3 : 0;
        }
        if (*bench_cmd) {
            if (bench_list) {
                for (const auto& m : analytical_models()) std::cout << m.name << "\n";
                return 0;
            }
            if (bench_model.empty()) throw UnknownModel("--model is required (see --list)");
            const auto ds = generate_model_dataset(bench_model, bench_rows, bench_seed);
            const auto csv = ds.to_csv();
            if (!bench_csv.empty()) write_text(bench_csv, csv);
            IngestOptions opts;
            opts.hints = model_hints(bench_model);
            opts.seed = bench_seed;
            opts.id = bench_model;
            const auto handle = ingest(csv, opts);
            const auto bundle = train_select(handle, default_families(), bench_seed);
            ReconstructionSpec spec;
            spec.queries = bench_queries;
            spec.n = bench_n;
            spec.model = bench_model;
            if (!bench_mask.empty()) spec.masks = {bench_mask};
            const auto report = reconstruction_suite(handle, bundle, spec, bench_seed);
            json out = eval_report_to_json(report);
            out["model"] = bench_model;
            out["surrogate"] = selection_report_to_json(bundle);
            print(out);
            std::fprintf(stderr, "%-6s %-10s %-10s %-10s %-10s\n", "query", "row_id", "penalized", "ape_%", "unmet");
            for (std::size_t i = 0; i < report.queries.size(); ++i) {
                const auto& q = report.queries[i];
                std::fprintf(stderr, "%-6zu %-10zu %-10.4f %-10.4f %-10s\n", i, q.row_id, q.penalized, q.ape.value_or(-1.0),
                             q.target_unmet ? "yes" : "no");
            }
            std::fprintf(stderr, "mean penalized %.4f  ci95 [%.4f, %.4f]  ape min %.4f%%  mean %.4f%%\n", report.mean,
                         report.ci_low, report.ci_high, report.ape_min.value_or(-1.0), report.ape_mean.value_or(-1.0));
            return 0;
        }
        if (*serve_cmd) {
            ServiceConfig config;
            config.data_dir = data_dir;
            config.seed = serve_seed;
            Service service(config);
            HttpServer http(service);
            std::fprintf(stderr, "compass serving on http://%s:%d (data in %s)\n", host.c_str(), port, data_dir.c_str());
            return http.listen(host, port) ? 0 : 1;
        }
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: invalid JSON: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
