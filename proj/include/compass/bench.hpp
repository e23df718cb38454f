#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compass/constraints.hpp"
#include "compass/data.hpp"
#include "compass/generator.hpp"
#include "compass/surrogate.hpp"

namespace compass {

struct AnalyticalModel {
    std::string name;
    std::vector<std::string> inputs;
    std::string target;
    std::size_t default_rows = 0;
};

/// The ten registered models, in a fixed order.
const std::vector<AnalyticalModel>& analytical_models();
/// Throws UnknownModel.
const AnalyticalModel& analytical_model(std::string_view name);
/// Closed-form evaluator; `inputs` follow AnalyticalModel::inputs. Throws UnknownModel.
double evaluate_model(std::string_view name, std::span<const double> inputs);

struct ModelDataset {
    std::vector<std::string> columns; // inputs, then the target
    std::vector<std::vector<double>> rows;

    std::string to_csv() const;
};

/// n = 0 uses the model's default row count.
ModelDataset generate_model_dataset(std::string_view name, std::size_t n, std::uint64_t seed);
/// Marks the target column (regression) for ingestion.
SchemaHints model_hints(std::string_view name);

/// |actual - forecast| / max(|actual|, 1e-8) * 100
double ape(double actual, double forecast);

struct QueryScore {
    std::size_t row_id = 0;
    std::vector<std::string> masked;
    double diff_norm = 0.0;
    double penalty_norm = 0.0;
    double penalized = 0.0;
    std::optional<double> ape; // percent
    bool target_unmet = false;
};

struct EvalReport {
    std::vector<QueryScore> queries;
    double mean = 0.0;
    double ci_low = 0.0;  // mean -/+ 1.96 * sample std / sqrt(n)
    double ci_high = 0.0;
    std::vector<double> ape;
    std::optional<double> ape_min;
    std::optional<double> ape_mean;

    void summarize();
};

/// Scores one reconstruction. `masked` holds feature positions; throws
/// MetricUndefined when it is empty. Constraints are evaluated on the
/// generated configuration with its predicted targets.
QueryScore penalized_mape(const Candidate& generated, const Config& truth, std::span<const std::size_t> masked,
                          const FeatureSchema& schema, const ConstraintSet& constraints);

/// Aggregates per-query scores into a report.
EvalReport penalized_mape(std::span<const Candidate> generated, std::span<const Config> truths,
                          std::span<const std::vector<std::size_t>> masked, const FeatureSchema& schema,
                          const ConstraintSet& constraints);

struct ReconstructionSpec {
    std::size_t queries = 10;
    /// Masks cycled over the queries (feature names). Empty: every feature masked.
    std::vector<std::vector<std::string>> masks;
    double epsilon = 0.01;
    std::vector<Constraint> constraints;
    int n = 200;
    int gamma = 1;
    Lambdas lambdas;
    SearchConfig search;
    /// Analytical model whose evaluator scores the achieved target (APE).
    std::optional<std::string> model;
};

/// For each held-out validation row: mask fields, ask for its observed target
/// within +/- epsilon, generate, and score the top candidate against the
/// hidden values. `observe` sees every candidate set.
EvalReport reconstruction_suite(const DatasetHandle& handle, const SurrogateBundle& bundle,
                                const ReconstructionSpec& spec, std::uint64_t seed,
                                const std::function<void(const CandidateSet&)>& observe = {});

} // namespace compass
