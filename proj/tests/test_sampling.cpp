#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "compass/data.hpp"
#include "compass/error.hpp"
#include "compass/sampling.hpp"
#include "support.hpp"

using namespace compass;

namespace {

DatasetHandle step_dataset(std::size_t n) {
    // y_reg depends on a single split of x; y_cls is x > 50.
    std::ostringstream out;
    out << "x,noise,y_reg,y_cls\n";
    std::mt19937_64 rng(4);
    for (std::size_t i = 0; i < n; ++i) {
        const int x = static_cast<int>(rng() % 100);
        out << x << ',' << rng() % 7 << ',' << (x > 50 ? 10 : 2) << ',' << (x > 50 ? "big" : "small") << '\n';
    }
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[
        {"name":"y_reg","role":"target"},
        {"name":"y_cls","role":"target","target_task":"classification"}]})");
    return ingest(out.str(), o);
}

} // namespace

TEST_CASE("aggregate score is the mean of the two largest normalized losses") {
    const double three[] = {0.9, 0.5, 0.1};
    CHECK(aggregate_score(three) == doctest::Approx(0.7));
    const double shuffled[] = {0.1, 0.9, 0.5};
    CHECK(aggregate_score(shuffled) == doctest::Approx(0.7));
    const double one[] = {0.4};
    CHECK(aggregate_score(one) == 0.4);
}

TEST_CASE("learnable targets get near-zero cross-fold losses") {
    const auto h = step_dataset(300);
    const auto scores = score_subset(h.train(), h.schema(), 1);
    REQUIRE(scores.size() == h.train().size());
    double reg = 0.0, cls = 0.0;
    for (const auto& s : scores) {
        REQUIRE(s.per_target_loss.size() == 2);
        reg += s.per_target_loss[0];
        cls += s.per_target_loss[1];
        CHECK(s.score >= 0.0);
        CHECK(s.score <= 1.0);
    }
    CHECK(reg / static_cast<double>(scores.size()) <= 0.1);
    CHECK(cls / static_cast<double>(scores.size()) <= 0.05);
}

TEST_CASE("a class predicted with probability 1 costs nothing") {
    std::ostringstream out;
    out << "x,y\n";
    for (int i = 0; i < 120; ++i) out << i << ',' << (i >= 60 ? "big" : "small") << '\n';
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"y","role":"target","target_task":"classification"}]})");
    const auto h = ingest(out.str(), o);
    const auto scores = score_subset(h.train(), h.schema(), 2);
    for (std::size_t r = 0; r < scores.size(); ++r) {
        const double x = std::get<double>(h.train().rows[r][0]);
        if (std::abs(x - 59.5) > 10.0) CHECK(scores[r].per_target_loss[0] == 0.0);
    }
}

TEST_CASE("every pool row is scored exactly once and scoring is deterministic") {
    const auto h = ingest(testing::pm100_csv(400, 3), testing::pm100_options());
    const auto a = score_subset(h.train(), h.schema(), 9);
    const auto b = score_subset(h.train(), h.schema(), 9);
    std::multiset<std::size_t> ids;
    for (const auto& s : a) ids.insert(s.row_id);
    CHECK(ids.size() == h.train().size());
    CHECK(std::set<std::size_t>(ids.begin(), ids.end()).size() == ids.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].per_target_loss == b[i].per_target_loss);
    }
    // Min-max normalization puts at least one row at the top of each target.
    CHECK(std::any_of(a.begin(), a.end(), [](const SampleScore& s) { return s.score > 0.5; }));
}

TEST_CASE("score is monotone in the per-target normalized losses") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> v{u(rng), u(rng), u(rng)};
        const double base = aggregate_score(v);
        v[rng() % 3] += 0.1 * u(rng);
        CHECK(aggregate_score(v) >= base);
    }
}

TEST_CASE("pools under 30 rows are rejected") {
    const auto h = step_dataset(30);
    CHECK_THROWS_AS(score_subset(h.train(), h.schema(), 0), Error);
}

TEST_CASE("select_subset") {
    std::vector<SampleScore> scores(200);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = {i * 3, {}, static_cast<double>(i % 10) / 10.0};

    SUBCASE("retention 1 keeps every row") {
        const auto all = select_subset(scores, 1.0, 5);
        CHECK(all.size() == 200);
        CHECK(all.front() == 0);
        CHECK(all.back() == 199 * 3);
    }
    SUBCASE("size and determinism") {
        const auto a = select_subset(scores, 0.2, 5);
        CHECK(a.size() == 40);
        CHECK(a == select_subset(scores, 0.2, 5));
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == a.size());
        CHECK(std::is_sorted(a.begin(), a.end()));
    }
    SUBCASE("retention 0.05 is accepted") { CHECK(select_subset(scores, 0.05, 1).size() == 10); }
    SUBCASE("invalid retention") {
        CHECK_THROWS_AS(select_subset(scores, 0.0, 1), Error);
        CHECK_THROWS_AS(select_subset(scores, 1.5, 1), Error);
        CHECK_THROWS_AS(select_subset(scores, 0.001, 1), Error);
    }
    SUBCASE("all-zero scores degrade to uniform sampling") {
        std::vector<SampleScore> zeros(100);
        for (std::size_t i = 0; i < zeros.size(); ++i) zeros[i] = {i, {}, 0.0};
        std::vector<int> hits(100, 0);
        for (std::uint64_t seed = 0; seed < 2000; ++seed)
            for (auto id : select_subset(zeros, 0.1, seed)) ++hits[id];
        // Expected 200 hits each; binomial sd ~ 13.4.
        for (int h : hits) CHECK((h > 130 && h < 270));
    }
}

TEST_CASE("the high-score row wins a single slot in the overwhelming majority of seeds") {
    const std::vector<SampleScore> two{{0, {}, 0.9}, {1, {}, 0.0}};
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto pick = select_subset(two, 0.5, seed);
        REQUIRE(pick.size() == 1);
        wins += pick[0] == 0;
    }
    CHECK(wins >= 950);
}

TEST_CASE("higher scores are selected more often") {
    std::vector<SampleScore> scores(50);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = {i, {}, i < 25 ? 0.05 : 0.95};
    int high = 0, low = 0;
    for (std::uint64_t seed = 0; seed < 300; ++seed)
        for (auto id : select_subset(scores, 0.2, seed)) (id < 25 ? low : high) += 1;
    CHECK(high > 5 * low);
}

TEST_CASE("subsample keeps round(retention * n) rows with their original ids") {
    const auto h = ingest(testing::pm100_csv(500, 8), testing::pm100_options());
    SamplingConfig cfg;
    cfg.retention = 0.25;
    const Table out = subsample(h.train(), h.schema(), 3, cfg);
    CHECK(out.size() == static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(h.train().size()))));
    std::set<std::size_t> train(h.train().row_ids.begin(), h.train().row_ids.end());
    for (auto id : out.row_ids) CHECK(train.count(id) == 1);
    CHECK(subsample(h.train(), h.schema(), 3, cfg).row_ids == out.row_ids);
}

TEST_CASE("ingest applies subsampling only above the row threshold") {
    const auto text = testing::pm100_csv(400, 2);
    auto o = testing::pm100_options();
    o.enable_subsampling = true;
    o.sampling.retention = 0.5;
    o.sampling.threshold_rows = 1000;
    CHECK(ingest(text, o).source_rows() == 400);
    CHECK(ingest(text, o).train().size() + ingest(text, o).validation().size() == 400);
    o.sampling.threshold_rows = 100;
    const auto reduced = ingest(text, o);
    CHECK(reduced.train().size() + reduced.validation().size() == 200);
    const auto again = ingest(text, o);
    CHECK(reduced.train().row_ids == again.train().row_ids);
}
