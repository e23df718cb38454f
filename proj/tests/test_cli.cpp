#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include "json.hpp"
#include "support.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(COMPASS_BIN) + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("compass-cli-" + std::to_string(rd()));
        fs::create_directories(dir);
        write("stencil.csv", compass::testing::stencil_csv(400, 2));
        write("hints.json", R"({"columns":[{"name":"runtime","role":"target"}]})");
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(dir / name) << text;
        return (dir / name).string();
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string data() const { return "-d " + path("stencil.csv") + " --hints " + path("hints.json"); }
};

} // namespace

TEST_CASE("ingest and train") {
    Workspace ws;
    const auto ing = run("ingest " + ws.data() + " --seed 7");
    REQUIRE(ing.code == 0);
    const auto summary = json::parse(ing.out);
    CHECK(summary["row_counts"]["train"] == 320);
    CHECK(summary["seed"] == 7);

    const auto tr = run("train " + ws.data() + " --seed 7 --families random_forest,ridge_linear -o " + ws.path("b.cmps"));
    REQUIRE(tr.code == 0);
    CHECK(json::parse(tr.out)["selection_report"].size() == 2);
    CHECK(fs::file_size(ws.path("b.cmps")) > 16);

    CHECK(run("ingest -d " + ws.path("missing.csv")).code != 0);
    CHECK(run("train " + ws.data() + " --families svr").code != 0);
}

TEST_CASE("query output is byte-identical across runs and exit codes follow the outcome") {
    Workspace ws;
    REQUIRE(run("train " + ws.data() + " --seed 7 -o " + ws.path("b.cmps")).code == 0);
    const auto q = ws.write("q.json", R"({"kind":"recommend","gamma":2,"n":30,
        "targets":[{"name":"runtime","objective":"range","min":40,"max":45}],
        "assignments":{"depth":"unknown","width":"unknown"},"search":{"generations":30}})");
    const std::string args = "query " + ws.data() + " --seed 7 -m " + ws.path("b.cmps") + " -q " + q;
    const auto a = run(args);
    const auto b = run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto result = json::parse(a.out);
    CHECK(result["candidates"].size() == 2);
    CHECK(result["target_unmet"] == false);
    CHECK(result["candidates"][0]["trust"]["label"].is_string());

    // Training inline (no -m) is deterministic too.
    const auto c = run("query " + ws.data() + " --seed 7 -q " + q);
    const auto d = run("query " + ws.data() + " --seed 7 -q " + q);
    REQUIRE(c.code == 0);
    CHECK(c.out == d.out);

    const auto unmet = ws.write("unmet.json", R"({"kind":"recommend","gamma":1,"n":5,
        "targets":[{"name":"runtime","objective":"range","min":5000,"max":6000}],
        "assignments":{"depth":"unknown"},"search":{"generations":5}})");
    const auto u = run("query " + ws.data() + " -m " + ws.path("b.cmps") + " -q " + unmet);
    CHECK(u.code == 3);
    CHECK(json::parse(u.out)["target_unmet"] == true);

    const auto invalid = ws.write("bad.json", R"({"kind":"what_if","baseline_row":0})");
    CHECK(run("query " + ws.data() + " -m " + ws.path("b.cmps") + " -q " + invalid).code == 1);
    const auto broken = ws.write("broken.json", "{");
    CHECK(run("query " + ws.data() + " -m " + ws.path("b.cmps") + " -q " + broken).code == 1);
}

TEST_CASE("bench emits an evaluation report") {
    Workspace ws;
    const auto list = run("bench --list");
    REQUIRE(list.code == 0);
    CHECK(std::count(list.out.begin(), list.out.end(), '\n') == 10);

    const auto r = run("bench --model amdahl --queries 3 --rows 800 -n 50 --export-csv " + ws.path("amdahl.csv"));
    REQUIRE(r.code == 0);
    const auto report = json::parse(r.out);
    CHECK(report["queries"].size() == 3);
    CHECK(report["penalized_mape"].contains("mean"));
    CHECK(report["ape"]["min"].is_number());
    CHECK(report["model"] == "amdahl");
    CHECK(fs::exists(ws.path("amdahl.csv")));

    CHECK(run("bench --model lulesh").code == 1);
}
