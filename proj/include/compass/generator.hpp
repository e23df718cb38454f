#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compass/constraints.hpp"
#include "compass/data.hpp"
#include "compass/surrogate.hpp"
#include "compass/trust.hpp"
#include "json.hpp"

namespace compass {

enum class QueryKind { recommend, reconfigure, what_if };
std::string_view to_string(QueryKind kind);

enum class ObjectiveKind { minimize, maximize, range, class_label, change };

struct Objective {
    ObjectiveKind kind = ObjectiveKind::minimize;
    std::optional<double> min; // range
    std::optional<double> max;
    std::string label;         // class_label
    double percent = 0.0;      // change: relative to the baseline's observed target
};

struct TargetObjective {
    std::string name;
    Objective objective;
};

enum class AssignmentKind { value, unknown, transition };

struct Assignment {
    AssignmentKind kind = AssignmentKind::value;
    Cell value;                 // value
    std::optional<Cell> from;   // transition: expected baseline value (optional check)
    std::optional<Cell> to;     // transition: new value; empty = unknown
    std::optional<double> scale; // transition: new = scale * old (numeric)
};

struct Lambdas {
    double valid = 1.0;
    double prox = 1.0;
    double cons = 1.0;
    double div = 1.0;
};

struct SearchConfig {
    int population = 50;
    int generations = 200;
    int workers = 4; // fixed, so results do not depend on the host
    double sigma = 0.25;
    double elitism = 0.1;
    double crossover_rate = 0.9;
    int tournament = 3;
    double time_budget_seconds = 60.0;
    double quantile = 0.05; // minimize / maximize range conversion
};

struct Query {
    QueryKind kind = QueryKind::recommend;
    std::vector<TargetObjective> targets;
    std::map<std::string, Assignment> assignments;
    std::vector<Constraint> constraints;
    std::optional<std::size_t> baseline_row;
    int gamma = 5;
    int n = 1000;
    Lambdas lambdas;
    std::uint64_t seed = 0;
    std::map<std::string, double> proximity_weights;
    SearchConfig search;
};

/// Structural checks only (see validate_query for dataset-dependent rules).
/// Throws QueryError naming the violated rule.
Query parse_query(const nlohmann::json& j);
nlohmann::json query_to_json(const Query& q);
/// Throws QueryError.
void validate_query(const Query& q, const DatasetHandle& handle);

// --- Loss terms ---

struct TargetRange {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

/// Regression hinge [lo - y]+ + [y - hi]+ (infinite sides drop out).
double validity_loss(double prediction, const TargetRange& range);
/// Summed over targets.
double validity_loss(std::span<const double> predictions, std::span<const TargetRange> ranges);
/// [max_{c != target} score_c - score_target]+
double class_validity_loss(std::span<const double> scores, int target);

/// Weighted L1 in encoded space; categorical positions count a mismatch.
double proximity_loss(std::span<const double> candidate, std::span<const double> baseline,
                      const std::vector<bool>& categorical, std::span<const double> weights = {});

/// Mean mixed distance over unordered pairs; 0 for fewer than two.
double diversity_score(const std::vector<std::vector<double>>& encoded, const std::vector<bool>& categorical);
/// Mean distance from each candidate to the others (their mean is diversity_score).
std::vector<double> diversity_contributions(const std::vector<std::vector<double>>& encoded,
                                            const std::vector<bool>& categorical);

/// range -> as given; minimize -> (-inf, q]; maximize -> [q', +inf) with
/// q = quantile(observed, p), q' = quantile(observed, 1 - p);
/// change(percent) -> one-sided range from `baseline_value`.
TargetRange objective_to_range(const Objective& objective, std::span<const double> observed,
                               double quantile_p = 0.05, std::optional<double> baseline_value = std::nullopt);

// --- Generation ---

struct LossTerms {
    double valid = 0.0;
    double prox = 0.0;
    double cons = 0.0;
    double div = 0.0; // this candidate's diversity contribution
};

struct Candidate {
    Config config;
    Prediction prediction;
    LossTerms loss;
    double total_loss = 0.0;
    std::vector<std::size_t> violated;
    std::optional<TrustVerdict> trust;
};

struct ResolvedTarget {
    std::string name;
    std::size_t column = 0;
    std::size_t head = 0;
    TargetTask task = TargetTask::regression;
    TargetRange range;
    int class_code = -1;
    double scale = 1.0; // hinge divisor: train std of the target
};

struct CandidateSet {
    QueryKind kind = QueryKind::recommend;
    Config baseline;
    std::optional<std::size_t> baseline_row_id;
    Prediction baseline_prediction;
    std::vector<ResolvedTarget> targets;
    std::vector<std::string> mutable_features;
    std::vector<Candidate> candidates; // sorted; the first `gamma` are the answer
    std::size_t gamma = 0;
    bool target_unmet = false;
    double diversity = 0.0;
    std::vector<double> delta; // what-if: candidate prediction minus baseline prediction, per target head
    int generations_run = 0;
    std::size_t evaluations = 0;

    std::span<const Candidate> top() const {
        return {candidates.data(), std::min(gamma, candidates.size())};
    }
};

/// Attaches trust verdicts to the top-gamma candidates (bounds from the query's constraints).
void attach_trust(CandidateSet& set, const Query& query, const TrustIndex& index, const SurrogateBundle& bundle);

/// Runs a query. When `index` is given, every top-gamma candidate gets a trust verdict.
CandidateSet generate(const Query& query, const DatasetHandle& handle, const SurrogateBundle& bundle,
                      const TrustIndex* index = nullptr);

} // namespace compass
