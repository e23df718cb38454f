#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compass/data.hpp"
#include "compass/models.hpp"

namespace compass {

struct SurrogateConfig {
    ForestParams forest;
    BoostingParams boosting;
    RidgeParams ridge;
    int ensemble_size = 5; // P
    int cv_folds = 5;
};

/// Per-target model outputs. values[t] is the regression value, or the
/// argmax class code for classification heads (whose probabilities are in
/// scores[t]; scores[t] is empty for regression heads).
struct Prediction {
    std::vector<double> values;
    std::vector<std::vector<double>> scores;
};

/// One family fitted to every target head over a fixed feature order.
class Predictor {
public:
    Predictor() = default;
    Predictor(Family family, std::vector<std::string> feature_order, std::vector<HeadSpec> heads,
              std::vector<Model> models);

    Family family() const { return family_; }
    const std::vector<std::string>& feature_order() const { return feature_order_; }
    const std::vector<HeadSpec>& heads() const { return heads_; }
    std::vector<std::string> target_names() const;
    const std::vector<Model>& models() const { return models_; }

    /// Pure; throws ShapeError on a dimension mismatch.
    Prediction predict(std::span<const double> x) const;

private:
    Family family_ = Family::random_forest;
    std::vector<std::string> feature_order_;
    std::vector<HeadSpec> heads_;
    std::vector<Model> models_;
};

struct SelectionEntry {
    Family family = Family::random_forest;
    std::optional<double> cv_error; // absent when the family failed
    std::string note;
};

struct SurrogateBundle {
    Predictor primary;
    std::vector<Predictor> ensemble;
    std::vector<SelectionEntry> selection_report;
    std::uint64_t seed = 0;
};

const std::vector<Family>& default_families();

/// Shared training view of a handle's train partition.
struct TrainingData {
    Matrix x;
    SortedFeatures sorted;
    std::vector<bool> categorical;
    std::vector<HeadSpec> heads;
    std::vector<std::vector<double>> targets; // per head, one value / class code per row
    std::vector<std::string> feature_order;

    TrainingSet view() const { return {&x, &sorted, categorical}; }
};

TrainingData make_training_data(const DatasetHandle& handle);

/// Fits `family` on all heads with the given row weights.
Predictor fit_predictor(Family family, const TrainingData& data, std::span<const double> weights,
                        std::uint64_t seed, const SurrogateConfig& config = {});

/// k-fold CV error of a family: mean over heads of MAPE (regression) or
/// 1 - macro-F1 (classification).
double cross_validated_error(Family family, const TrainingData& data, std::uint64_t seed,
                             const SurrogateConfig& config = {});

/// Cross-validates every family, refits the best on all of train, and fits
/// the P bootstrap ensemble members of that family.
SurrogateBundle train_select(const DatasetHandle& handle, std::span<const Family> families, std::uint64_t seed,
                             const SurrogateConfig& config = {});

Prediction predict(const SurrogateBundle& bundle, std::span<const double> x);

/// Population variance of the ensemble members' predictions: per regression
/// head the variance of the value, per classification head the variance of
/// the probability of the ensemble-mean top class; averaged over heads.
double ensemble_variance(const SurrogateBundle& bundle, std::span<const double> x);

/// Native container: "CMPS", u16 version (LE), u64 payload length (LE), CBOR payload.
std::string persist(const SurrogateBundle& bundle);
/// Throws FormatError on foreign, truncated or version-mismatched input.
SurrogateBundle load(std::string_view bytes);

inline constexpr std::uint16_t kBundleFormatVersion = 1;

// Metrics
double mean_absolute_percentage_error(std::span<const double> truth, std::span<const double> predicted);
double macro_f1(std::span<const double> truth, std::span<const double> predicted, int classes);

} // namespace compass
