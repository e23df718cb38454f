#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "compass/bench.hpp"
#include "compass/error.hpp"
#include "support.hpp"

using namespace compass;

namespace {

// Second implementations written from the closed forms, kept apart from the library.
double oracle(const std::string& model, const std::vector<double>& x) {
    const double p = x[0];
    if (model == "milc") return 6.3e-6 * std::log(p) / std::log(2.0);
    if (model == "homme_small") return 0.026 + 2.53e-6 * std::pow(p, 0.5) + 1.24e-12 * std::pow(p, 3.0);
    if (model == "homme_large") return 0.026 * std::pow(p, 0.5) + 1.17e-12 * std::pow(p, 3.0);
    if (model == "vlaplace") return 0.034 + 1.33e-10 * std::pow(p, 2.0);
    if (model == "sweep3d") return std::pow(p, 0.5) / 1e6;
    if (model == "hoefler") {
        const double t_msg = 1e-6;
        return 2 * t_msg * (x[0] + x[1] - 2) + 4 * t_msg * (x[2] - 1);
    }
    if (model == "roofline") return p < 20.0 ? 5e10 * p : 1e12;
    if (model == "amdahl") {
        const double f = 0.1;
        return p / (f * p + (1 - f));
    }
    if (model == "gpu_roofline") return p * 8e10 * 2e12 / (8e10 + 2e12);
    if (model == "basic_linear") return 2 * x[13] - 1.5 * x[7] + 0.5 * x[5];
    throw std::logic_error("no oracle for " + model);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Candidate candidate(Config config, std::vector<double> prediction) {
    Candidate c;
    c.config = std::move(config);
    c.prediction.values = std::move(prediction);
    c.prediction.scores.resize(c.prediction.values.size());
    return c;
}

} // namespace

TEST_CASE("the ten registered models match independent oracles") {
    REQUIRE(analytical_models().size() == 10);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& m : analytical_models()) {
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> x;
            for (std::size_t j = 0; j < m.inputs.size(); ++j) {
                if (m.name == "basic_linear") x.push_back(20.0 * u(rng) - 10.0);
                else if (m.name == "hoefler") x.push_back(1.0 + std::floor(64.0 * u(rng)));
                else x.push_back(std::exp(std::log(1e-2) + u(rng) * (std::log(2e5) - std::log(1e-2))));
            }
            const double want = oracle(m.name, x);
            if (want == 0.0) CHECK(std::abs(evaluate_model(m.name, x)) <= 1e-15);
            else worst = std::max(worst, rel(evaluate_model(m.name, x), want));
        }
        INFO(m.name);
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("model examples") {
    CHECK(evaluate_model("amdahl", std::vector<double>{1.0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(evaluate_model("roofline", std::vector<double>{20.0}) == 1e12);
    CHECK(evaluate_model("milc", std::vector<double>{64.0}) == doctest::Approx(3.78e-5).epsilon(1e-12));
    CHECK(evaluate_model("amdahl", std::vector<double>{10.0}) == doctest::Approx(5.2631578947).epsilon(1e-9));
    CHECK_THROWS_AS(evaluate_model("lulesh", std::vector<double>{1.0}), UnknownModel);
    CHECK_THROWS_AS(analytical_model("nope"), UnknownModel);
    CHECK_THROWS_AS(generate_model_dataset("nope", 10, 1), UnknownModel);
    CHECK_THROWS_AS(evaluate_model("hoefler", std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("ape") {
    CHECK(ape(5.0, 5.0) == 0.0);
    CHECK(ape(0.0, 1e-8) == doctest::Approx(100.0));
    CHECK(ape(100.0, 99.0) == doctest::Approx(1.0));
    CHECK(ape(-50.0, -45.0) == doctest::Approx(10.0));
}

TEST_CASE("generated datasets stay inside their sampling ranges") {
    for (const auto& m : analytical_models()) {
        const auto ds = generate_model_dataset(m.name, 2000, 4);
        REQUIRE(ds.rows.size() == 2000);
        CHECK(ds.columns.back() == m.target);
        CHECK(generate_model_dataset(m.name, 0, 4).rows.size() == m.default_rows);
        for (const auto& row : ds.rows) {
            CHECK(row.back() == evaluate_model(m.name, std::span<const double>(row.data(), row.size() - 1)));
            if (m.name == "hoefler") {
                CHECK((row[0] >= 2 && row[0] <= 64 && row[1] >= 2 && row[1] <= 64 && row[2] >= 1 && row[2] <= 32));
            } else if (m.name == "roofline" || m.name == "gpu_roofline") {
                CHECK((row[0] >= 0.01 && row[0] <= 1000.0));
            } else if (m.name == "amdahl") {
                CHECK((row[0] >= 1 && row[0] <= 1024 && row[0] == std::round(row[0])));
            } else if (m.name != "basic_linear") {
                CHECK((row[0] >= 64 && row[0] <= 131072 && row[0] == std::round(row[0])));
            }
        }
        CHECK(generate_model_dataset(m.name, 50, 4).rows == generate_model_dataset(m.name, 50, 4).rows);
    }
}

TEST_CASE("exported CSV re-ingests losslessly") {
    const auto ds = generate_model_dataset("hoefler", 300, 1);
    IngestOptions o;
    o.hints = model_hints("hoefler");
    const auto h = ingest(ds.to_csv(), o);
    CHECK(h.train().size() + h.validation().size() == 300);
    const auto& schema = h.schema();
    CHECK(schema.column(schema.target_columns()[0]).name == "t_comm");
    for (std::size_t i = 0; i < h.train().size(); ++i) {
        const auto& row = h.train().rows[i];
        CHECK(std::get<double>(row[3]) == ds.rows[h.train().row_ids[i]][3]);
    }
}

TEST_CASE("penalized MAPE examples") {
    const auto h = ingest(testing::pm100_csv(200, 1), testing::pm100_options());
    const auto& schema = h.schema();
    const Config truth{4.0, 16.0, 8.0, std::string("completed")};
    const std::vector<std::size_t> mask{1};
    const ConstraintSet none({}, schema);

    const auto exact = penalized_mape(candidate(truth, {70, 1000}), truth, mask, schema, none);
    CHECK(exact.penalized == 0.0);

    Config off = truth;
    off[1] = 17.6;
    const auto ten = penalized_mape(candidate(off, {70, 1000}), truth, mask, schema, none);
    CHECK(ten.diff_norm == doctest::Approx(0.10));
    CHECK(ten.penalty_norm == 0.0);
    CHECK(ten.penalized == doctest::Approx(0.10));

    const auto rules = parse_constraints(nlohmann::json::parse(R"([
        {"feature":"num_gpus_req","op":">=","value":50},
        {"feature":"job_state","op":"==","value":"failed"},
        {"feature":"run_time","op":"<=","value":10}])"),
                                         schema);
    const auto all_bad = penalized_mape(candidate(truth, {70, 1000}), truth, mask, schema, rules);
    CHECK(all_bad.diff_norm == 0.0);
    CHECK(all_bad.penalty_norm == 1.0);
    CHECK(all_bad.penalized == 1.0);

    // Constraints see the predicted targets too.
    const auto one_bad = penalized_mape(candidate(truth, {5, 1000}), truth, mask, schema, rules);
    CHECK(one_bad.penalty_norm == doctest::Approx(2.0 / 3.0));

    Config flipped = truth;
    flipped[3] = std::string("failed");
    const std::vector<std::size_t> two{1, 3};
    CHECK(penalized_mape(candidate(flipped, {70, 1}), truth, two, schema, none).diff_norm == 0.5);

    CHECK_THROWS_AS(penalized_mape(candidate(truth, {70, 1000}), truth, {}, schema, none), MetricUndefined);

    const std::vector<Candidate> gens{candidate(truth, {70, 1000}), candidate(off, {70, 1000})};
    const std::vector<Config> truths{truth, truth};
    const std::vector<std::vector<std::size_t>> masks{mask, mask};
    const auto report = penalized_mape(gens, truths, masks, schema, none);
    CHECK(report.mean == doctest::Approx(0.05));
    CHECK(report.ci_low <= report.mean);
    CHECK(report.ci_high >= report.mean);
}

TEST_CASE("confidence interval shrinks like one over root n") {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(5.0);
    const auto width = [&](std::size_t n) {
        double total = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            EvalReport r;
            for (std::size_t i = 0; i < n; ++i) {
                QueryScore q;
                q.penalized = e(rng);
                r.queries.push_back(q);
            }
            r.summarize();
            total += r.ci_high - r.ci_low;
        }
        return total / 50.0;
    };
    const double ratio = width(100) / width(400);
    CHECK(ratio > 1.7);
    CHECK(ratio < 2.3);
}

TEST_CASE("reconstruction suite") {
    IngestOptions o;
    o.hints = model_hints("amdahl");
    const auto h = ingest(generate_model_dataset("amdahl", 1500, 2).to_csv(), o);
    const auto bundle = train_select(h, default_families(), 2);

    SUBCASE("identity queries score zero") {
        ReconstructionSpec spec;
        spec.queries = 4;
        spec.masks = {{}};
        const auto report = reconstruction_suite(h, bundle, spec, 1);
        REQUIRE(report.queries.size() == 4);
        for (const auto& q : report.queries) CHECK(q.penalized == 0.0);
        CHECK(report.mean == 0.0);
    }
    SUBCASE("masked p is recovered and the achieved speedup is close") {
        ReconstructionSpec spec;
        spec.queries = 5;
        spec.model = "amdahl";
        spec.search.generations = 80;
        int seen = 0;
        const auto report = reconstruction_suite(h, bundle, spec, 3, [&](const CandidateSet&) { ++seen; });
        CHECK(seen == 5);
        REQUIRE(report.ape_min.has_value());
        CHECK(*report.ape_min <= 2.0);
        for (const auto& q : report.queries) {
            CHECK(q.masked == std::vector<std::string>{"p"});
            CHECK(q.penalized == doctest::Approx(q.diff_norm + q.penalty_norm));
        }
        CHECK(reconstruction_suite(h, bundle, spec, 3).mean == report.mean);
    }
    SUBCASE("a constraint no candidate can meet is recorded") {
        ReconstructionSpec spec;
        spec.queries = 2;
        spec.search.generations = 10;
        spec.constraints = {constraint_from_json(nlohmann::json::parse(R"({"feature":"p","op":">=","value":5000})"))};
        const auto report = reconstruction_suite(h, bundle, spec, 1);
        for (const auto& q : report.queries) CHECK(q.penalty_norm > 0.0);
    }
    SUBCASE("unknown mask names are rejected") {
        ReconstructionSpec spec;
        spec.masks = {{"q"}};
        CHECK_THROWS_AS(reconstruction_suite(h, bundle, spec, 1), SchemaError);
    }
}
