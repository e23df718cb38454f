#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "compass/table.hpp"
#include "compass/tree.hpp"
#include "json.hpp"

namespace compass {

enum class Family { random_forest, gradient_boosted_trees, ridge_linear };

std::string_view to_string(Family family);
Family family_from_string(std::string_view text);

struct ForestParams {
    int trees = 100;
    int max_depth = 0;  // unlimited
    double min_leaf = 1.0;
    int max_features = -1; // -1 = floor(sqrt(d)), 0 = all
};

struct BoostingParams {
    int rounds = 200;
    double learning_rate = 0.1;
    int max_depth = 5;
    double min_leaf = 5.0;
};

struct RidgeParams {
    double alpha = 1e-3;
};

/// What a single model head predicts.
struct HeadSpec {
    std::string name;
    TargetTask task = TargetTask::regression;
    int classes = 0; // classification only
};

/// Training rows shared by every head: encoded features (with presorted
/// columns for the tree learners) and the per-feature categorical flags.
struct TrainingSet {
    const Matrix* x = nullptr;
    const SortedFeatures* sorted = nullptr;
    std::vector<bool> categorical;
};

struct ForestModel {
    int width = 1;
    std::vector<DecisionTree> trees;
};

struct BoostingModel {
    int classes = 0; // 0 = regression
    double learning_rate = 0.1;
    std::vector<double> base;        // one entry (regression) or K log-priors
    std::vector<DecisionTree> trees; // rounds x max(1, classes), class-major within a round
};

struct RidgeModel {
    bool classification = false;
    std::vector<int> category_counts;   // per input feature; 0 = numeric
    std::vector<double> coefficients;   // outputs x expanded (row-major)
    std::vector<double> intercepts;     // outputs
};

using Model = std::variant<ForestModel, BoostingModel, RidgeModel>;

/// `y` holds a regression value or a class code per row; rows with zero
/// weight do not participate. Throws TrainingFailed when fitting breaks down.
Model fit_model(Family family, const TrainingSet& data, std::span<const double> y, const HeadSpec& head,
                std::span<const double> weights, std::uint64_t seed, const ForestParams& forest,
                const BoostingParams& boosting, const RidgeParams& ridge);

/// Regression: {value}. Classification: class probabilities (sum to 1).
std::vector<double> predict_model(const Model& model, std::span<const double> x);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

} // namespace compass
