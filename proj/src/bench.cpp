#include "compass/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

#include "compass/csv.hpp"
#include "compass/error.hpp"
#include "compass/parallel.hpp"

namespace compass {

namespace {

constexpr double kPMin = 64.0;
constexpr double kPMax = 131072.0;

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

double log_uniform_int(std::mt19937_64& rng, double lo, double hi) {
    return std::clamp(std::round(log_uniform(rng, lo, hi)), lo, hi);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

} // namespace

const std::vector<AnalyticalModel>& analytical_models() {
    static const std::vector<AnalyticalModel> models = {
        {"milc", {"p"}, "runtime", 4749},
        {"homme_small", {"p"}, "runtime", 4749},
        {"homme_large", {"p"}, "runtime", 4749},
        {"vlaplace", {"p"}, "runtime", 4749},
        {"sweep3d", {"p"}, "runtime", 4749},
        {"hoefler", {"px", "py", "n_sweep"}, "t_comm", 6174},
        {"roofline", {"intensity"}, "performance", 10000},
        {"amdahl", {"p"}, "speedup", 7287},
        {"gpu_roofline", {"intensity"}, "performance", 10000},
        {"basic_linear",
         {"X1", "X2", "X3", "X4", "X5", "X6", "X7", "X8", "X9", "X10", "X11", "X12", "X13", "X14", "X15"},
         "y",
         6000},
    };
    return models;
}

const AnalyticalModel& analytical_model(std::string_view name) {
    for (const auto& m : analytical_models())
        if (m.name == name) return m;
    throw UnknownModel("unknown analytical model '" + std::string(name) + "'");
}

double evaluate_model(std::string_view name, std::span<const double> x) {
    const auto& m = analytical_model(name);
    if (x.size() != m.inputs.size())
        throw ShapeError("model '" + m.name + "' takes " + std::to_string(m.inputs.size()) + " inputs");
    if (name == "milc") return 6.3e-6 * std::log2(x[0]);
    if (name == "homme_small") return 0.026 + 2.53e-6 * std::sqrt(x[0]) + 1.24e-12 * x[0] * x[0] * x[0];
    if (name == "homme_large") return 2.60e-2 * std::sqrt(x[0]) + 1.17e-12 * x[0] * x[0] * x[0];
    if (name == "vlaplace") return 0.034 + 1.33e-10 * x[0] * x[0];
    if (name == "sweep3d") return 1e-6 * std::sqrt(x[0]);
    if (name == "hoefler") return (2.0 * (x[0] + x[1] - 2.0) + 4.0 * (x[2] - 1.0)) * 1e-6;
    if (name == "roofline") return std::min(1e12, 5e10 * x[0]);
    if (name == "amdahl") return 1.0 / (0.1 + 0.9 / x[0]);
    if (name == "gpu_roofline") return x[0] / (1.0 / 8e10 + 1.0 / 2e12);
    // basic_linear: y = 2 X14 - 1.5 X8 + 0.5 X6
    return 2.0 * x[13] - 1.5 * x[7] + 0.5 * x[5];
}

std::string ModelDataset::to_csv() const {
    std::string out = csv::join_row(columns) + "\n";
    std::vector<std::string> fields;
    for (const auto& row : rows) {
        fields.clear();
        for (double v : row) fields.push_back(shortest(v));
        out += csv::join_row(fields) + "\n";
    }
    return out;
}

ModelDataset generate_model_dataset(std::string_view name, std::size_t n, std::uint64_t seed) {
    const auto& m = analytical_model(name);
    if (n == 0) n = m.default_rows;
    ModelDataset ds;
    ds.columns = m.inputs;
    ds.columns.push_back(m.target);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> one_to_ten(1.0, 10.0);
    ds.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x;
        if (m.name == "hoefler") {
            x = {static_cast<double>(uniform_int(rng, 2, 64)), static_cast<double>(uniform_int(rng, 2, 64)),
                 static_cast<double>(uniform_int(rng, 1, 32))};
        } else if (m.name == "roofline" || m.name == "gpu_roofline") {
            x = {log_uniform(rng, 0.01, 1000.0)};
        } else if (m.name == "amdahl") {
            x = {log_uniform_int(rng, 1.0, 1024.0)};
        } else if (m.name == "basic_linear") {
            for (int j = 1; j <= 15; ++j) x.push_back(j == 6 || j == 8 || j == 14 ? one_to_ten(rng) : normal(rng));
        } else {
            x = {log_uniform_int(rng, kPMin, kPMax)};
        }
        x.push_back(evaluate_model(m.name, x));
        ds.rows.push_back(std::move(x));
    }
    return ds;
}

SchemaHints model_hints(std::string_view name) {
    const auto& m = analytical_model(name);
    SchemaHints hints;
    ColumnHint target;
    target.name = m.target;
    target.kind = ColumnKind::numeric;
    target.role = ColumnRole::target;
    target.target_task = TargetTask::regression;
    hints.columns.push_back(target);
    return hints;
}

double ape(double actual, double forecast) {
    return std::abs(actual - forecast) / std::max(std::abs(actual), 1e-8) * 100.0;
}

void EvalReport::summarize() {
    const std::size_t n = queries.size();
    if (n == 0) {
        mean = ci_low = ci_high = 0.0;
    } else {
        double sum = 0.0;
        for (const auto& q : queries) sum += q.penalized;
        mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& q : queries) ss += (q.penalized - mean) * (q.penalized - mean);
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        const double half = 1.96 * sd / std::sqrt(static_cast<double>(n));
        ci_low = mean - half;
        ci_high = mean + half;
    }
    ape.clear();
    for (const auto& q : queries)
        if (q.ape) ape.push_back(*q.ape);
    if (ape.empty()) {
        ape_min.reset();
        ape_mean.reset();
    } else {
        ape_min = *std::min_element(ape.begin(), ape.end());
        ape_mean = std::accumulate(ape.begin(), ape.end(), 0.0) / static_cast<double>(ape.size());
    }
}

QueryScore penalized_mape(const Candidate& generated, const Config& truth, std::span<const std::size_t> masked,
                          const FeatureSchema& schema, const ConstraintSet& constraints) {
    if (masked.empty()) throw MetricUndefined("penalized MAPE needs at least one masked field");
    QueryScore s;
    double diff = 0.0;
    for (auto p : masked) {
        s.masked.push_back(schema.feature(p).name);
        const Cell& g = generated.config[p];
        const Cell& t = truth[p];
        if (const auto* tv = std::get_if<double>(&t)) {
            const double gv = std::get<double>(g);
            diff += std::abs(gv - *tv) / std::max(std::abs(*tv), 1e-8);
        } else {
            diff += format_cell(g) == format_cell(t) ? 0.0 : 1.0;
        }
    }
    s.diff_norm = diff / static_cast<double>(masked.size());

    std::vector<Cell> row(schema.size());
    const auto& features = schema.feature_columns();
    for (std::size_t p = 0; p < features.size(); ++p) row[features[p]] = generated.config[p];
    const auto& targets = schema.target_columns();
    for (std::size_t h = 0; h < targets.size(); ++h) {
        const ColumnSpec& spec = schema.column(targets[h]);
        const double v = h < generated.prediction.values.size() ? generated.prediction.values[h] : 0.0;
        if (spec.kind == ColumnKind::categorical) {
            const auto code = static_cast<std::size_t>(v);
            row[targets[h]] = code < spec.categories.size() ? spec.categories[code] : std::string();
        } else {
            row[targets[h]] = v;
        }
    }
    const auto violated = constraints.evaluate(row).violated.size();
    s.penalty_norm = static_cast<double>(violated) / static_cast<double>(std::max<std::size_t>(constraints.size(), 1));
    s.penalized = s.diff_norm + s.penalty_norm;
    return s;
}

EvalReport penalized_mape(std::span<const Candidate> generated, std::span<const Config> truths,
                          std::span<const std::vector<std::size_t>> masked, const FeatureSchema& schema,
                          const ConstraintSet& constraints) {
    if (generated.size() != truths.size() || generated.size() != masked.size())
        throw ShapeError("penalized_mape: generated, truth and mask lists differ in length");
    EvalReport report;
    for (std::size_t i = 0; i < generated.size(); ++i)
        report.queries.push_back(penalized_mape(generated[i], truths[i], masked[i], schema, constraints));
    report.summarize();
    return report;
}

EvalReport reconstruction_suite(const DatasetHandle& handle, const SurrogateBundle& bundle,
                                const ReconstructionSpec& spec, std::uint64_t seed,
                                const std::function<void(const CandidateSet&)>& observe) {
    const FeatureSchema& schema = handle.schema();
    const ConstraintSet constraints(spec.constraints, schema);
    const Table& held_out = handle.validation().empty() ? handle.train() : handle.validation();
    if (held_out.empty()) throw DatasetEmpty("no rows to reconstruct");

    std::vector<std::size_t> order(held_out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0x7265636f));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> masks;
    for (const auto& names : spec.masks) {
        std::vector<std::size_t> m;
        for (const auto& name : names) {
            const auto p = schema.feature_position(name);
            if (!p) throw SchemaError("mask names unknown feature '" + name + "'");
            m.push_back(*p);
        }
        masks.push_back(std::move(m));
    }
    if (masks.empty()) {
        std::vector<std::size_t> all(schema.feature_count());
        std::iota(all.begin(), all.end(), std::size_t{0});
        masks.push_back(std::move(all));
    }

    EvalReport report;
    for (std::size_t q = 0; q < spec.queries; ++q) {
        const std::size_t r = order[q % order.size()];
        const auto& row = held_out.rows[r];
        const Config truth = feature_config(schema, row);
        const auto& mask = masks[q % masks.size()];

        Query query;
        query.kind = QueryKind::recommend;
        query.gamma = spec.gamma;
        query.n = spec.n;
        query.lambdas = spec.lambdas;
        query.search = spec.search;
        query.seed = derive_seed(seed, q);
        query.constraints = spec.constraints;
        for (auto c : schema.target_columns()) {
            const ColumnSpec& t = schema.column(c);
            TargetObjective obj{t.name, {}};
            if (t.kind == ColumnKind::categorical) {
                obj.objective.kind = ObjectiveKind::class_label;
                obj.objective.label = std::get<std::string>(row[c]);
            } else {
                const double y = std::get<double>(row[c]);
                const double half = spec.epsilon * std::max(std::abs(y), 1e-8);
                obj.objective.kind = ObjectiveKind::range;
                obj.objective.min = y - half;
                obj.objective.max = y + half;
            }
            query.targets.push_back(obj);
        }
        std::vector<bool> is_masked(schema.feature_count(), false);
        for (auto p : mask) is_masked[p] = true;
        for (std::size_t p = 0; p < schema.feature_count(); ++p) {
            Assignment a;
            if (is_masked[p]) {
                if (!schema.feature(p).is_mutable) continue;
                a.kind = AssignmentKind::unknown;
            } else {
                a.value = truth[p];
            }
            query.assignments[schema.feature(p).name] = a;
        }

        QueryScore score;
        score.row_id = held_out.row_ids[r];
        if (mask.empty()) {
            // Nothing hidden: the truth row is its own reconstruction.
            const auto v = constraints.evaluate(row).violated.size();
            score.penalty_norm = static_cast<double>(v) / static_cast<double>(std::max<std::size_t>(constraints.size(), 1));
            score.penalized = score.penalty_norm;
            report.queries.push_back(score);
            continue;
        }

        const CandidateSet result = generate(query, handle, bundle);
        if (observe) observe(result);
        const Candidate& top = result.candidates.front();
        const auto rid = score.row_id;
        score = penalized_mape(top, truth, mask, schema, constraints);
        score.row_id = rid;
        score.target_unmet = result.target_unmet;

        const auto target_col = schema.target_columns().front();
        if (const auto* y = std::get_if<double>(&row[target_col])) {
            double achieved = top.prediction.values.front();
            if (spec.model) {
                std::vector<double> inputs;
                for (const auto& cell : top.config) inputs.push_back(std::get<double>(cell));
                achieved = evaluate_model(*spec.model, inputs);
            }
            score.ape = ape(*y, achieved);
        }
        report.queries.push_back(score);
    }
    report.summarize();
    return report;
}

} // namespace compass
