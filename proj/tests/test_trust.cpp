#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "compass/constraints.hpp"
#include "compass/error.hpp"
#include "compass/surrogate.hpp"
#include "compass/trust.hpp"
#include "support.hpp"

using namespace compass;

namespace {

struct Fixture {
    DatasetHandle handle;
    SurrogateBundle bundle;
    std::unique_ptr<TrustIndex> index;
};

const Fixture& blob() {
    static const Fixture f = [] {
        auto h = ingest(testing::blob_csv(2000, 150, 3), testing::blob_options());
        auto b = train_select(h, std::vector<Family>{Family::random_forest}, 3);
        Fixture out{std::move(h), std::move(b), nullptr};
        return out;
    }();
    static std::once_flag once;
    std::call_once(once, [] { const_cast<Fixture&>(f).index = std::make_unique<TrustIndex>(f.handle, f.bundle); });
    return f;
}

Config point(double a, double b, const char* kind = "x") { return {a, b, std::string(kind)}; }

double brute_knn(const DatasetHandle& h, std::span<const double> q, std::size_t k) {
    const auto& x = h.train_features();
    const auto cat = h.schema().categorical_mask();
    std::vector<double> d;
    for (std::size_t i = 0; i < x.rows; ++i) d.push_back(mixed_distance(q, x.row(i), cat));
    std::sort(d.begin(), d.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += d[i];
    return sum / static_cast<double>(k);
}

double naive_rank(const std::vector<double>& sample, double v) {
    std::size_t count = 0;
    for (double s : sample) count += s <= v;
    return static_cast<double>(count) / static_cast<double>(sample.size());
}

TrustLabel expected_label(const TrustVerdict& v) {
    if (v.ood > 0.99) return TrustLabel::unsupported;
    if (v.ood > 0.95 || v.uq.value_or(0.0) > 0.95) return TrustLabel::caution;
    return TrustLabel::trusted;
}

Predictor constant(double value, std::size_t d) {
    RidgeModel m;
    m.category_counts.assign(d, 0);
    m.coefficients.assign(d, 0.0);
    m.intercepts = {value};
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d; ++i) names.push_back("x" + std::to_string(i));
    return Predictor(Family::ridge_linear, names, {HeadSpec{"y", TargetTask::regression, 0}}, {Model{m}});
}

} // namespace

TEST_CASE("mixed distance") {
    const std::vector<bool> cat{false, false, true};
    const std::vector<double> a{1.0, 2.0, 0.0};
    CHECK(mixed_distance(a, a, cat) == 0.0);
    CHECK(mixed_distance(a, std::vector<double>{1.0, 2.0, 1.0}, cat) == 1.0);
    CHECK(mixed_distance(a, std::vector<double>{4.0, 6.0, 0.0}, cat) == 5.0);
    CHECK_THROWS_AS(mixed_distance(a, std::vector<double>{1.0}, cat), ShapeError);
}

TEST_CASE("vantage-point tree matches brute force") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m;
    m.rows = 700;
    m.cols = 4;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.values.push_back(g(rng));
        m.values.push_back(g(rng));
        m.values.push_back(static_cast<double>(rng() % 3));
        // Ties on purpose: coarse grid.
        m.values.push_back(std::round(g(rng)));
    }
    const std::vector<bool> cat{false, false, true, false};
    const VpTree tree(&m, cat);
    for (int t = 0; t < 60; ++t) {
        const std::vector<double> q{2 * g(rng), 2 * g(rng), static_cast<double>(rng() % 3), std::round(g(rng))};
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < m.rows; ++i) all.emplace_back(mixed_distance(q, m.row(i), cat), i);
        std::sort(all.begin(), all.end());
        const std::size_t k = 1 + static_cast<std::size_t>(rng() % 40);
        const auto got = tree.nearest(q, k);
        REQUIRE(got.size() == k);
        for (std::size_t i = 0; i < k; ++i) CHECK(got[i] == all[i]);

        const double r = 0.3 + 0.5 * static_cast<double>(t % 4);
        std::vector<std::pair<double, std::size_t>> in;
        for (const auto& e : all)
            if (e.first <= r) in.push_back(e);
        CHECK(tree.within(q, r) == in);
    }
    CHECK(tree.nearest(std::vector<double>{0, 0, 0, 0}, 5000).size() == 700);
}

TEST_CASE("quantile is type 7") {
    CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
    CHECK(quantile({4.0, 1.0, 3.0, 2.0, 5.0}, 0.25) == 2.0);
    CHECK(quantile({10.0, 0.0}, 0.05) == doctest::Approx(0.5));
    CHECK_THROWS_AS(quantile({}, 0.5), MetricUndefined);
}

TEST_CASE("index basics") {
    const auto& f = blob();
    const auto& idx = *f.index;
    CHECK(idx.k() == 20);
    CHECK(idx.validation_distances().size() == f.handle.validation().size());
    CHECK(idx.tau_close() > 0.0);
    CHECK(idx.tau_close() == quantile(idx.validation_distances(), 0.05));
}

TEST_CASE("a duplicated dense-cluster row is in distribution") {
    const auto& f = blob();
    for (std::size_t i = 0; i < 50; ++i) {
        const auto& row = f.handle.train().rows[i];
        const double a = std::get<double>(row[0]), b = std::get<double>(row[1]);
        if (a * a + b * b > 1.0) continue;
        const auto v = assess(feature_config(f.handle.schema(), row), *f.index, f.bundle);
        CHECK(v.label != TrustLabel::unsupported);
        CHECK(v.ood <= 0.6);
    }
}

TEST_CASE("a far outlier is unsupported and gets next runs") {
    const auto& f = blob();
    const auto& sc = f.handle.scaler();
    const Config far = point(sc[0].mean + 100 * sc[0].stddev, sc[1].mean + 100 * sc[1].stddev);
    const auto v = assess(far, *f.index, f.bundle, 3);
    CHECK(v.label == TrustLabel::unsupported);
    CHECK(v.ood == 1.0);
    CHECK_FALSE(v.uq.has_value());
    CHECK(v.support.empty());
    CHECK(v.reason.find("no nearby training samples") == 0);
    REQUIRE(v.next_runs.has_value());
    CHECK(v.next_runs->size() == 4);
    CHECK(v.next_runs->front() == far);
}

TEST_CASE("heavily repeated configurations are trusted; thinly sampled ones draw caution") {
    // Job logs repeat the same few configurations many times over.
    std::mt19937_64 rng(2);
    std::ostringstream out;
    out << "nodes,gpus,runtime\n";
    const auto emit = [&](int n, int g, int times) {
        for (int i = 0; i < times; ++i) out << n << ',' << g << ',' << 1000.0 / g + 5.0 * n << '\n';
    };
    for (int n : {1, 2, 4, 8}) emit(n, 4 * n, 350);
    for (int c = 0; c < 6; ++c) emit(12 + 2 * c, 12, 17);
    for (int i = 0; i < 40; ++i) emit(30 + static_cast<int>(rng() % 34), 40 + static_cast<int>(rng() % 200), 1);
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"runtime","role":"target"}]})");
    o.seed = 4;
    const auto h = ingest(out.str(), o);
    const auto bundle = train_select(h, std::vector<Family>{Family::random_forest}, 4);
    const TrustIndex idx(h, bundle);

    const auto dense = assess(Config{4.0, 16.0}, idx, bundle);
    CHECK(dense.label == TrustLabel::trusted);
    CHECK(dense.support.size() >= 250);
    CHECK_FALSE(dense.next_runs.has_value());
    CHECK(dense.reason.find("supported by") == 0);

    std::optional<TrustVerdict> thin;
    for (int c = 0; c < 6 && !thin; ++c) {
        auto v = assess(Config{12.0 + 2 * c, 12.0}, idx, bundle);
        if (v.label == TrustLabel::caution) thin = std::move(v);
    }
    REQUIRE(thin.has_value());
    CHECK(thin->support.size() <= 17);
    CHECK(thin->support.size() >= 5);
    CHECK(thin->next_runs.has_value());
    CHECK((thin->reason.find("limited support") == 0 || thin->reason.find("high uncertainty") == 0));
}

TEST_CASE("percentile scores equal naive counting and labels follow the threshold table") {
    const auto& f = blob();
    const auto& idx = *f.index;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        const Config x = point(g(rng), g(rng), rng() % 2 ? "x" : "y");
        const auto enc = f.handle.normalize(x);
        const auto v = assess(x, idx, f.bundle, static_cast<std::uint64_t>(i));
        CHECK(v.knn_distance == brute_knn(f.handle, enc, 20));
        CHECK(v.ood == naive_rank(idx.validation_distances(), brute_knn(f.handle, enc, 20)));
        if (v.uq) CHECK(*v.uq == naive_rank(idx.validation_variances(), ensemble_variance(f.bundle, enc)));
        CHECK(v.label == expected_label(v));
        CHECK(v.next_runs.has_value() == (v.label != TrustLabel::trusted));
        for (std::size_t s = 0; s < v.support.size(); ++s) {
            CHECK(v.support[s].distance <= idx.tau_close());
            if (s > 0) CHECK(v.support[s - 1].distance <= v.support[s].distance);
            const auto ref = f.handle.locate(v.support[s].row_id);
            const auto other = f.handle.normalize(feature_config(f.handle.schema(), ref->table->rows[ref->index]));
            CHECK(mixed_distance(enc, other, f.handle.schema().categorical_mask()) == v.support[s].distance);
        }
    }
}

TEST_CASE("moving away from a train row never shrinks the kNN distance") {
    const auto& f = blob();
    const auto& sc = f.handle.scaler();
    for (std::size_t i = 0; i < 20; ++i) {
        const auto& row = f.handle.train().rows[i * 7];
        double last = -1.0;
        for (double t : {0.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0}) {
            Config x = feature_config(f.handle.schema(), row);
            x[0] = std::get<double>(x[0]) + t * sc[0].stddev;
            x[1] = std::get<double>(x[1]) + t * sc[1].stddev;
            const double d = f.index->knn_distance(f.handle.normalize(x));
            CHECK(d >= last);
            last = d;
        }
    }
}

TEST_CASE("next-run suggestions") {
    const auto& f = blob();
    const auto& idx = *f.index;
    const Config x = point(3.0, 3.0, "y");
    const auto one = suggest_next_runs(x, idx, 1, 0);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == x);

    const auto four = suggest_next_runs(x, idx, 4, 9);
    REQUIRE(four.size() == 4);
    CHECK(four[0] == x);
    const auto base = f.handle.normalize(x);
    const auto cat = f.handle.schema().categorical_mask();
    for (std::size_t i = 0; i < four.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) CHECK(four[i] != four[j]);
        CHECK(std::get<std::string>(four[i][2]) == "y");
        CHECK(mixed_distance(base, f.handle.normalize(four[i]), cat) <= 1.5 * idx.tau_close());
    }
    CHECK(suggest_next_runs(x, idx, 4, 9) == four);

    const auto bounds = parse_constraints(nlohmann::json::parse(R"([{"feature":"a","op":"<=","value":3.0},
                                                                    {"feature":"b","op":">=","value":3.0}])"),
                                          f.handle.schema());
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        for (const auto& c : suggest_next_runs(x, idx, 4, seed, &bounds)) {
            CHECK(std::get<double>(c[0]) <= 3.0);
            CHECK(std::get<double>(c[1]) >= 3.0);
        }
}

TEST_CASE("index needs validation rows") {
    std::ostringstream out;
    out << "a,y\n1,2\n2,4\n";
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"y","role":"target"}]})");
    const auto h = ingest(out.str(), o);
    REQUIRE(h.validation().empty());
    SurrogateBundle b;
    b.primary = constant(1.0, 1);
    b.ensemble = {constant(1.0, 1), constant(2.0, 1)};
    CHECK_THROWS_AS(TrustIndex(h, b), IndexUnavailable);
}

TEST_CASE("k is clamped to the train size with a warning") {
    std::ostringstream out;
    out << "a,y\n";
    for (int i = 0; i < 15; ++i) out << i << ',' << 2 * i << '\n';
    IngestOptions o;
    o.hints = parse_schema_hints(R"({"columns":[{"name":"y","role":"target"}]})");
    const auto h = ingest(out.str(), o);
    SurrogateBundle b;
    b.primary = constant(1.0, 1);
    b.ensemble = {constant(1.0, 1), constant(2.0, 1)};
    std::vector<std::string> warnings;
    set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    const TrustIndex idx(h, b);
    set_warning_sink(nullptr);
    CHECK(idx.k() == h.train().size());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("k") != std::string::npos);
}

TEST_CASE("labels have stable names") {
    CHECK(to_string(TrustLabel::trusted) == "trusted");
    CHECK(to_string(TrustLabel::caution) == "caution");
    CHECK(to_string(TrustLabel::unsupported) == "unsupported");
}
