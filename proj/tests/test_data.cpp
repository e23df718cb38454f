#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "compass/csv.hpp"
#include "compass/data.hpp"
#include "compass/error.hpp"
#include "support.hpp"

using namespace compass;

namespace {

IngestOptions target_hint(const std::string& target, std::uint64_t seed = 0) {
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":")" + target + R"(","role":"target"}]})");
    o.seed = seed;
    return o;
}

} // namespace

TEST_CASE("csv reader handles quoting, CRLF and embedded separators") {
    const auto rows = csv::parse("a,b,c\r\n\"x,1\",\"he said \"\"hi\"\"\",\"multi\nline\"\r\n1,,3\n\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "x,1");
    CHECK(rows[1][1] == "he said \"hi\"");
    CHECK(rows[1][2] == "multi\nline");
    CHECK(rows[2][1].empty());
    CHECK_THROWS_AS(csv::parse("a,b\n\"open,1\n"), ParseError);
    CHECK(csv::join_row({"plain", "with,comma", "q\"uote"}) == "plain,\"with,comma\",\"q\"\"uote\"");
}

TEST_CASE("rows missing a value are removed before the split") {
    std::string text = "x,y\n";
    for (int i = 0; i < 10; ++i) text += std::to_string(i) + "," + (i == 3 || i == 7 ? "" : std::to_string(2 * i)) + "\n";
    const auto h = ingest(text, target_hint("y"));
    CHECK(h.train().size() + h.validation().size() == 8);
    CHECK(h.validation().size() == 2);
    CHECK(h.train().size() == 6);
    for (const auto* t : {&h.train(), &h.validation()})
        for (auto id : t->row_ids) CHECK((id != 3 && id != 7));
}

TEST_CASE("PM-100-shaped schema exposes the four power/time targets") {
    std::string text = "cores_per_task,job_state,num_cores_req,num_nodes_req,node_power,mem_power,cpu_power,run_time\n";
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const int nodes = 1 + static_cast<int>(rng() % 8);
        text += std::to_string(1 + rng() % 4) + "," + (i % 5 ? "completed" : "failed") + "," +
                std::to_string(nodes * 48) + "," + std::to_string(nodes) + "," + std::to_string(300.0 * nodes) + "," +
                std::to_string(20.0 * nodes) + "," + std::to_string(200.0 * nodes) + "," + std::to_string(100 + i) + "\n";
    }
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[
        {"name":"job_state","role":"system_feature"},
        {"name":"node_power","role":"target","target_task":"regression"},
        {"name":"mem_power","role":"target","target_task":"regression"},
        {"name":"cpu_power","role":"target","target_task":"regression"},
        {"name":"run_time","role":"target","target_task":"regression"}]})");
    const auto h = ingest(text, o);
    const auto& s = h.schema();
    std::vector<std::string> targets;
    for (auto c : s.target_columns()) {
        targets.push_back(s.column(c).name);
        CHECK(s.column(c).target_task == TargetTask::regression);
    }
    CHECK(targets == std::vector<std::string>{"node_power", "mem_power", "cpu_power", "run_time"});
    const auto& state = s.column(s.index_of("job_state"));
    CHECK(state.kind == ColumnKind::categorical);
    CHECK(state.role == ColumnRole::system_feature);
    CHECK_FALSE(state.is_mutable);
    CHECK(state.categories == std::vector<std::string>{"completed", "failed"});
    CHECK(s.column(s.index_of("num_nodes_req")).is_mutable);
}

TEST_CASE("ingestion is deterministic under a fixed seed") {
    const auto text = testing::pm100_csv(500, 2);
    const auto a = ingest(text, testing::pm100_options(7));
    const auto b = ingest(text, testing::pm100_options(7));
    CHECK(a.train().row_ids == b.train().row_ids);
    CHECK(a.validation().row_ids == b.validation().row_ids);
    CHECK(a.train_features().values == b.train_features().values);
    const auto c = ingest(text, testing::pm100_options(8));
    CHECK(a.validation().row_ids != c.validation().row_ids);
}

TEST_CASE("partitions are disjoint, cover the table and keep the 80/20 ratio") {
    const auto h = ingest(testing::pm100_csv(333, 4), testing::pm100_options());
    std::set<std::size_t> train(h.train().row_ids.begin(), h.train().row_ids.end());
    std::set<std::size_t> val(h.validation().row_ids.begin(), h.validation().row_ids.end());
    for (auto id : val) CHECK(train.count(id) == 0);
    CHECK(train.size() + val.size() == 333);
    CHECK(std::abs(static_cast<double>(val.size()) - 0.2 * 333) <= 1.0);
    CHECK(std::is_sorted(h.train().row_ids.begin(), h.train().row_ids.end()));
}

TEST_CASE("scaler is fitted on train only: standardized train columns have mean 0 and std 1") {
    const auto h = ingest(testing::pm100_csv(400, 9), testing::pm100_options());
    const auto& x = h.train_features();
    const auto cat = h.schema().categorical_mask();
    for (std::size_t j = 0; j < x.cols; ++j) {
        if (cat[j]) continue;
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
        mean /= static_cast<double>(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) sq += (x(i, j) - mean) * (x(i, j) - mean);
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(std::sqrt(sq / static_cast<double>(x.rows)) - 1.0) <= 1e-9);
    }
}

TEST_CASE("ingestion errors") {
    SUBCASE("unknown drop column") {
        auto o = target_hint("y");
        o.drop_columns = {"nope"};
        CHECK_THROWS_AS(ingest("x,y\n1,2\n", o), SchemaError);
    }
    SUBCASE("unparsable token in a declared-numeric column names row and column") {
        IngestOptions o;
        o.hints = parse_schema_hints(R"({"columns":[{"name":"x","kind":"numeric"},{"name":"y","role":"target"}]})");
        try {
            ingest("x,y\n1,2\n2,3\nabc,4\n", o);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 3") != std::string::npos);
            CHECK(msg.find("'x'") != std::string::npos);
        }
    }
    SUBCASE("everything missing") { CHECK_THROWS_AS(ingest("x,y\n1,\n,2\n", target_hint("y")), DatasetEmpty); }
    SUBCASE("hint for a column that does not exist") {
        CHECK_THROWS_AS(ingest("x,y\n1,2\n", target_hint("z")), SchemaError);
    }
    SUBCASE("no target") { CHECK_THROWS_AS(ingest("x,y\n1,2\n", IngestOptions{}), SchemaError); }
    SUBCASE("hints document must parse") { CHECK_THROWS_AS(parse_schema_hints("{not json"), SchemaError); }
}

TEST_CASE("normalize maps the train means to zero and degenerate columns to zero") {
    std::string text = "a,flat,cat,y\n";
    for (int i = 0; i < 20; ++i)
        text += std::to_string(i) + ",5," + std::string(1, "pqr"[i % 3]) + "," + std::to_string(i * 2) + "\n";
    const auto h = ingest(text, target_hint("y", 1));
    double mean = 0.0;
    for (const auto& row : h.train().rows) mean += std::get<double>(row[0]);
    mean /= static_cast<double>(h.train().size());

    const auto enc = h.normalize({mean, 5.0, std::string("q")});
    CHECK(enc[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(enc[1] == 0.0);
    CHECK(h.normalize({mean, 123.0, std::string("p")})[1] == 0.0);
    // Sorted categories p < q < r: "q" is code 1.
    CHECK(enc[2] == 1.0);
    CHECK_THROWS_AS(h.normalize({1.0, 5.0, std::string("zzz")}), UnknownCategory);
    CHECK(h.normalize_lenient({1.0, 5.0, std::string("zzz")})[2] == -1.0);
}

TEST_CASE("denormalize inverts normalize") {
    const auto h = ingest(testing::pm100_csv(300, 5), testing::pm100_options());
    const auto& schema = h.schema();
    double worst = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        const Config raw = feature_config(schema, h.train().rows[i]);
        const Config back = h.denormalize(h.normalize(raw));
        for (std::size_t p = 0; p < raw.size(); ++p) {
            if (const auto* d = std::get_if<double>(&raw[p]))
                worst = std::max(worst, std::abs(std::get<double>(back[p]) - *d) / std::max(1.0, std::abs(*d)));
            else
                CHECK(std::get<std::string>(back[p]) == std::get<std::string>(raw[p]));
        }
    }
    CHECK(worst <= 1e-9);

    const std::vector<double> zeros(schema.feature_count(), 0.0);
    const Config at_zero = h.denormalize(zeros);
    for (std::size_t p = 0; p < schema.feature_count(); ++p) {
        const auto& spec = schema.feature(p);
        if (spec.kind == ColumnKind::categorical) CHECK(std::get<std::string>(at_zero[p]) == spec.categories.front());
        else CHECK(std::get<double>(at_zero[p]) == doctest::Approx(h.scaler()[p].mean));
    }

    // Hand check: raw = mean + z * std.
    const std::size_t nodes = *schema.feature_position("num_nodes_req");
    std::vector<double> v = zeros;
    v[nodes] = 1.5;
    const double expected = h.scaler()[nodes].mean + 1.5 * h.scaler()[nodes].stddev;
    CHECK(std::get<double>(h.denormalize(v)[nodes]) == doctest::Approx(expected).epsilon(1e-12));

    std::vector<double> bad = zeros;
    bad[*schema.feature_position("job_state")] = 7.0;
    CHECK_THROWS_AS(h.denormalize(bad), UnknownCode);
    CHECK_THROWS_AS(h.denormalize(std::vector<double>(2, 0.0)), ShapeError);
}

TEST_CASE("classification targets are categorical and encode to class codes") {
    std::string text = "x,label\n";
    for (int i = 0; i < 30; ++i) text += std::to_string(i) + "," + (i < 15 ? "lo" : "hi") + "\n";
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"label","role":"target","target_task":"classification"}]})");
    const auto h = ingest(text, o);
    const auto& spec = h.schema().column(h.schema().index_of("label"));
    CHECK(spec.kind == ColumnKind::categorical);
    CHECK(encode_target(spec, std::string("lo")) == 1.0);
    CHECK(encode_target(spec, std::string("hi")) == 0.0);
}

TEST_CASE("locate finds rows in either partition") {
    const auto h = ingest(testing::pm100_csv(100, 6), testing::pm100_options());
    for (std::size_t id = 0; id < 100; ++id) {
        const auto ref = h.locate(id);
        REQUIRE(ref.has_value());
        CHECK(ref->table->row_ids[ref->index] == id);
    }
    CHECK_FALSE(h.locate(100).has_value());
}
